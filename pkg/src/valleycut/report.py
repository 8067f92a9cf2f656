"""Aggregate simulation logs into metric tables and figure data series.

Everything here is a pure function of the record files: re-running the
report over the same directory writes identical bytes.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import metrics as met
from .errors import EmptyReportError
from .runner import read_records_csv

BACKLOG_BETA = 0.5


def _group(records):
    by_combo = defaultdict(list)
    for r in records:
        by_combo[(r.policy, r.ba, r.seed)].append(r)
    for key in by_combo:
        by_combo[key].sort(key=lambda r: r.interval)
    return by_combo


def load_directory(in_dir: Path):
    files = sorted(Path(in_dir).glob("records_*.csv"))
    if not files:
        raise EmptyReportError(f"no record files under {in_dir}")
    records = []
    for f in files:
        records.extend(read_records_csv(f))
    return records


def build_report(in_dir: Path, tolerance: float = met.DEFAULT_TOLERANCE) -> dict:
    records = load_directory(in_dir)
    by_combo = _group(records)
    tie_stats = {}
    tie_path = Path(in_dir) / "tie_stats.json"
    if tie_path.exists():
        tie_stats = json.loads(tie_path.read_text())

    per_combo = {}
    for (policy, ba, seed), rows in sorted(by_combo.items()):
        A = [r.a_up for r in rows]
        C = [r.c_target for r in rows]
        cuts = [r.cut_up for r in rows]
        B = [r.backlog for r in rows]
        adh = met.adherence_summary(A, C, tolerance)
        stab = met.stability_summary(A, cuts, [r.elasticity_up for r in rows])
        back = met.backlog_summary(B, BACKLOG_BETA, float(np.mean(C)))
        per_combo[f"{policy}|{ba}|{seed}"] = {
            "adherence": adh,
            "stability": {k: v for k, v in stab.items() if k != "jitter_series"},
            "backlog": back,
            "anchored_proportion": float(np.mean([r.anchored_up for r in rows])),
            "elasticity_median": stab["elasticity_median"],
        }

    # median / IQR over seeds per (policy, ba)
    aggregated = {}
    by_policy_ba = defaultdict(list)
    for key, stats in per_combo.items():
        policy, ba, seed = key.split("|")
        by_policy_ba[(policy, ba)].append(stats)
    for (policy, ba), stat_rows in sorted(by_policy_ba.items()):
        agg = {}
        for path, label in [
            (("adherence", "fraction_within_band"), "fraction_within_band"),
            (("adherence", "mean_rel_deviation"), "mean_rel_deviation"),
            (("stability", "jitter_median"), "jitter_median"),
            (("backlog", "exceedance_probability"), "backlog_exceedance"),
        ]:
            vals = [s[path[0]][path[1]] for s in stat_rows]
            med, q25, q75 = met.median_iqr(vals)
            agg[label] = {"median": med, "q25": q25, "q75": q75}
        covs = [s["stability"]["intake_cov"] for s in stat_rows if s["stability"]["intake_cov"] is not None]
        if covs:
            med, q25, q75 = met.median_iqr(covs)
            agg["intake_cov"] = {"median": med, "q25": q25, "q75": q75}
        else:
            agg["intake_cov"] = None
        aggregated[f"{policy}|{ba}"] = agg

    # cross-stream portability per policy
    portability = {}
    for policy in sorted({k.split("|")[0] for k in per_combo}):
        elas = defaultdict(list)
        anchored = []
        atoms = flips = 0
        for (p, ba, seed), rows in by_combo.items():
            if p != policy:
                continue
            elas[ba].extend(r.elasticity_up for r in rows if np.isfinite(r.elasticity_up))
            anchored.extend(r.anchored_up for r in rows)
            stem = f"{p}_{ba}_s{seed}"
            if stem in tie_stats:
                atoms += tie_stats[stem]["atoms"]
                flips += tie_stats[stem]["flips"]
        elas = {k: v for k, v in elas.items() if v}
        if elas:
            portability[policy] = met.portability_summary(elas, anchored, atoms, flips)
    return {
        "tolerance": tolerance,
        "backlog_beta": BACKLOG_BETA,
        "per_combo": per_combo,
        "aggregated": aggregated,
        "portability": portability,
    }


def _write_table(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_report(in_dir: Path, out_dir: Path) -> dict:
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    report = build_report(in_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(report, sort_keys=True, indent=2))

    rows = []
    for key, stats in sorted(report["per_combo"].items()):
        policy, ba, seed = key.split("|")
        adh = stats["adherence"]
        rows.append(
            [policy, ba, seed, repr(adh["mean_abs_deviation"]), repr(adh["mean_rel_deviation"]), repr(adh["fraction_within_band"])]
        )
    _write_table(
        out_dir / "adherence.csv",
        ["policy", "ba", "seed", "mean_abs_dev", "mean_rel_dev", "fraction_within_band"],
        rows,
    )

    rows = []
    for key, stats in sorted(report["per_combo"].items()):
        policy, ba, seed = key.split("|")
        st = stats["stability"]
        cov = "" if st["intake_cov"] is None else repr(st["intake_cov"])
        elast = "" if stats["elasticity_median"] is None else repr(stats["elasticity_median"])
        rows.append([policy, ba, seed, cov, repr(st["jitter_median"]), repr(st["jitter_max"]), elast])
    _write_table(
        out_dir / "stability.csv",
        ["policy", "ba", "seed", "intake_cov", "jitter_median", "jitter_max", "elasticity_median"],
        rows,
    )

    rows = []
    for key, stats in sorted(report["per_combo"].items()):
        policy, ba, seed = key.split("|")
        bk = stats["backlog"]
        mtbb = "" if bk["mean_time_between_breaches"] is None else repr(bk["mean_time_between_breaches"])
        rows.append([policy, ba, seed, repr(bk["exceedance_probability"]), mtbb])
    _write_table(
        out_dir / "backlog.csv",
        ["policy", "ba", "seed", "exceedance_probability", "mean_time_between_breaches"],
        rows,
    )

    rows = []
    for policy, stats in sorted(report["portability"].items()):
        rows.append(
            [
                policy,
                repr(stats["elasticity_dispersion_iqr"]),
                repr(stats["anchored_proportion"]),
                repr(stats["tiebreak_volatility"]),
            ]
        )
    _write_table(
        out_dir / "portability.csv",
        ["policy", "elasticity_dispersion_iqr", "anchored_proportion", "tiebreak_volatility"],
        rows,
    )

    _write_figure_series(in_dir, out_dir, report["tolerance"])
    return report


def _write_figure_series(in_dir: Path, out_dir: Path, tolerance: float) -> None:
    records = load_directory(in_dir)
    by_combo = _group(records)
    first_seed = min(seed for (_, _, seed) in by_combo)
    vol_rows, cut_rows, back_rows = [], [], []
    for (policy, ba, seed), rows in sorted(by_combo.items()):
        if seed != first_seed:
            continue
        for r in rows:
            vol_rows.append(
                [
                    r.interval,
                    ba,
                    policy,
                    repr(r.a_up),
                    repr(r.c_target),
                    repr((1.0 - tolerance) * r.c_target),
                    repr((1.0 + tolerance) * r.c_target),
                ]
            )
            cut_rows.append([r.interval, ba, policy, repr(r.cut_up), repr(r.t_star_up)])
            back_rows.append([r.interval, ba, policy, repr(r.backlog)])
    _write_table(
        out_dir / "fig_volumes.csv",
        ["interval", "ba", "policy", "a_up", "c_target", "band_lo", "band_hi"],
        vol_rows,
    )
    _write_table(out_dir / "fig_cuts.csv", ["interval", "ba", "policy", "cut_up", "t_star"], cut_rows)
    _write_table(out_dir / "fig_backlog.csv", ["interval", "ba", "policy", "backlog"], back_rows)
