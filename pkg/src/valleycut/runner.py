"""Scenario execution: policies x seeds x streams, with deterministic logs.

A scenario couples stream profiles with an interval count and capacity
schedules. Each (policy, stream, seed) combination runs an isolated policy
instance; realized intake, backlog, and threshold decisions land in interval
records (CSV) and decision logs (JSON lines). Outputs are pure functions of
the manifest: no wall-clock values are written.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import baselines as base
from . import capacity as cap
from . import metrics as met
from . import router
from . import simgen
from .engine import EngineConfig, StreamEngine
from .errors import ConfigError

POLICIES = (
    "ours",
    "ours_fixed_bw",
    "ours_noreflect",
    "ours_nosnap",
    "ours_nohyst",
    "window_quantile",
    "ewma",
    "batch_topk",
)


@dataclass(frozen=True)
class ScenarioConfig:
    intervals: int
    warmup: int
    bas: tuple[simgen.BAStreamProfile, ...]
    intervals_per_day: int = 24
    snapshot_checkpoints: tuple[int, ...] = ()
    routing_log: bool = False

    def __post_init__(self):
        if self.intervals <= self.warmup:
            raise ConfigError("intervals must exceed warmup")
        if not self.bas:
            raise ConfigError("scenario needs at least one stream")


@dataclass(frozen=True)
class RunManifest:
    scenario: ScenarioConfig
    engine: EngineConfig
    policies: tuple[str, ...]
    seeds: tuple[int, ...]
    out_dir: str

    def __post_init__(self):
        for p in self.policies:
            if p not in POLICIES:
                raise ConfigError(f"unknown policy {p!r}; expected one of {POLICIES}")
        if not self.seeds:
            raise ConfigError("at least one seed required")

    def scenario_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(manifest_to_dict(self), sort_keys=True).encode()
        ).hexdigest()[:12]


# ---------------------------------------------------------------------------
# Manifest (de)serialization -- the CLI config file format
# ---------------------------------------------------------------------------


def _components_to_list(comps):
    return [[c.alpha, c.beta, c.weight] for c in comps]


def _components_from_list(data):
    return tuple(simgen.BetaComponent(*row) for row in data)


def profile_to_dict(p: simgen.BAStreamProfile) -> dict:
    return {
        "name": p.name,
        "components": _components_to_list(p.components),
        "rate": p.rate,
        "seed": p.seed,
        "discretization_step": p.discretization_step,
        "drift_schedule": [[t, _components_to_list(c)] for t, c in p.drift_schedule],
        "regime_shifts": [[t, _components_to_list(c)] for t, c in p.regime_shifts],
        "seasonality": (
            {"amplitude": p.seasonality.amplitude, "period": p.seasonality.period}
            if p.seasonality
            else None
        ),
        "stress": [dataclasses.asdict(ev) for ev in p.stress],
        "capacity": {
            "kappa": p.capacity.kappa,
            "kappa_total": p.capacity.kappa_total,
            "bursts": [list(b) for b in p.capacity.bursts],
            "review_ratio": p.capacity.review_ratio,
        },
    }


def profile_from_dict(d: dict) -> simgen.BAStreamProfile:
    known = {
        "name",
        "components",
        "rate",
        "seed",
        "discretization_step",
        "drift_schedule",
        "regime_shifts",
        "seasonality",
        "stress",
        "capacity",
        "preset",
    }
    for key in d:
        if key not in known:
            raise ConfigError(f"unknown stream key {key!r}")
    if "preset" in d:
        preset = simgen.builtin_profiles(
            rate=d.get("rate", 6000),
            kappa=d.get("capacity", {}).get("kappa", 0.05),
            seed=d.get("seed", 0),
        )
        if d["preset"] not in preset:
            raise ConfigError(f"unknown preset {d['preset']!r}")
        prof = preset[d["preset"]]
        if "name" in d:
            prof = replace(prof, name=d["name"])
    else:
        capd = d.get("capacity", {})
        prof = simgen.BAStreamProfile(
            name=d["name"],
            components=_components_from_list(d["components"]),
            rate=int(d.get("rate", 6000)),
            capacity=simgen.CapacitySchedule(
                kappa=capd.get("kappa", 0.05),
                kappa_total=capd.get("kappa_total"),
                bursts=tuple(tuple(b) for b in capd.get("bursts", [])),
                review_ratio=capd.get("review_ratio", 1.0),
            ),
            seed=int(d.get("seed", 0)),
        )
    if d.get("discretization_step"):
        prof = replace(prof, discretization_step=float(d["discretization_step"]))
    if d.get("drift_schedule"):
        prof = replace(
            prof,
            drift_schedule=tuple(
                (int(t), _components_from_list(c)) for t, c in d["drift_schedule"]
            ),
        )
    if d.get("regime_shifts"):
        prof = replace(
            prof,
            regime_shifts=tuple(
                (int(t), _components_from_list(c)) for t, c in d["regime_shifts"]
            ),
        )
    if d.get("seasonality"):
        prof = replace(
            prof,
            seasonality=simgen.Seasonality(
                amplitude=float(d["seasonality"]["amplitude"]),
                period=float(d["seasonality"]["period"]),
            ),
        )
    for ev in d.get("stress", []):
        prof = simgen.stress_event(
            prof, ev["kind"], ev["t_start"], ev["duration"], ev.get("magnitude", 0.0)
        )
    capd = d.get("capacity")
    if capd and "preset" in d:
        prof = replace(
            prof,
            capacity=simgen.CapacitySchedule(
                kappa=capd.get("kappa", prof.capacity.kappa),
                kappa_total=capd.get("kappa_total"),
                bursts=tuple(tuple(b) for b in capd.get("bursts", [])),
                review_ratio=capd.get("review_ratio", 1.0),
            ),
        )
    return prof


def manifest_to_dict(m: RunManifest) -> dict:
    return {
        "scenario": {
            "intervals": m.scenario.intervals,
            "warmup": m.scenario.warmup,
            "intervals_per_day": m.scenario.intervals_per_day,
            "snapshot_checkpoints": list(m.scenario.snapshot_checkpoints),
            "routing_log": m.scenario.routing_log,
            "bas": [profile_to_dict(p) for p in m.scenario.bas],
        },
        "engine": dataclasses.asdict(m.engine),
        "policies": list(m.policies),
        "seeds": list(m.seeds),
    }


def manifest_from_dict(d: dict, out_dir: str) -> RunManifest:
    known = {"scenario", "engine", "policies", "seeds"}
    for key in d:
        if key not in known:
            raise ConfigError(f"unknown manifest key {key!r}")
    sc = d.get("scenario")
    if sc is None:
        raise ConfigError("manifest missing key 'scenario'")
    sc_known = {
        "intervals",
        "warmup",
        "intervals_per_day",
        "snapshot_checkpoints",
        "routing_log",
        "bas",
    }
    for key in sc:
        if key not in sc_known:
            raise ConfigError(f"unknown scenario key {key!r}")
    eng_kwargs = d.get("engine", {})
    try:
        engine = EngineConfig(**{k: _coerce_engine_value(k, v) for k, v in eng_kwargs.items()})
    except TypeError as exc:
        raise ConfigError(f"bad engine config: {exc}") from exc
    scenario = ScenarioConfig(
        intervals=int(sc["intervals"]),
        warmup=int(sc.get("warmup", 0)),
        intervals_per_day=int(sc.get("intervals_per_day", 24)),
        snapshot_checkpoints=tuple(sc.get("snapshot_checkpoints", [])),
        routing_log=bool(sc.get("routing_log", False)),
        bas=tuple(profile_from_dict(b) for b in sc["bas"]),
    )
    return RunManifest(
        scenario=scenario,
        engine=engine,
        policies=tuple(d.get("policies", ["ours"])),
        seeds=tuple(int(s) for s in d.get("seeds", [0])),
        out_dir=out_dir,
    )


def _coerce_engine_value(key, value):
    if key == "ladder":
        return tuple(value)
    return value


# ---------------------------------------------------------------------------
# Policy adapters
# ---------------------------------------------------------------------------


class _OursPolicy:
    def __init__(self, config: EngineConfig, profile: simgen.BAStreamProfile):
        cfg = replace(config, discretization_step=profile.discretization_step)
        self.engine = StreamEngine(cfg)
        self.caps_intake = True
        self.last_decision = None

    def ingest(self, scores: np.ndarray) -> None:
        self.engine.ingest_many(scores)

    def decide(self, target: cap.CapacityTarget, interval: int, realized: Optional[float] = None):
        rec = self.engine.refresh(target, interval, realized_intake=realized)
        self.last_decision = rec
        if rec.cuts:
            return rec.cuts, rec.trims, rec.anchored, rec.held
        return None, None, (), True


class _WindowQuantilePolicy:
    def __init__(self, config: EngineConfig, profile: simgen.BAStreamProfile):
        self.inner = base.WindowQuantileCut(window=config.window)
        self.caps_intake = False
        self.last_decision = None

    def ingest(self, scores: np.ndarray) -> None:
        self.inner.ingest(scores)

    def decide(self, target: cap.CapacityTarget, interval: int, realized=None):
        try:
            cut = self.inner.cut(target.kappa_up)
        except Exception:
            return None, None, (), True
        return (cut,), (cut,), (False,), False


class _EwmaPolicy:
    """Proportional-control cut with a fixed-bandwidth density for the gain."""

    def __init__(self, config: EngineConfig, profile: simgen.BAStreamProfile):
        cfg = replace(config, adaptive=False, snapping=False, hysteresis=False)
        self.engine = StreamEngine(cfg)
        self.inner = base.EwmaCut(cut=1.0 - target_guess(profile))
        self.caps_intake = False
        self._last_realized: Optional[float] = None
        self._last_target: Optional[float] = None
        self.last_decision = None

    def ingest(self, scores: np.ndarray) -> None:
        self.engine.ingest_many(scores)

    def observe_intake(self, realized: float, target_count: float, basis: float) -> None:
        snap = self.engine.snapshot()
        self.inner.update(realized, target_count, basis, snap.density_at(self.inner.cut))

    def decide(self, target: cap.CapacityTarget, interval: int, realized=None):
        if self.engine.state.n_eff < self.engine.config.min_n_eff:
            return None, None, (), True
        return (self.inner.cut,), (self.inner.cut,), (False,), False


class _BatchTopKPolicy:
    """End-of-day rule: yesterday's top-C cut applies all day."""

    def __init__(self, config: EngineConfig, profile: simgen.BAStreamProfile, intervals_per_day: int):
        self.intervals_per_day = intervals_per_day
        self.day_scores: list[np.ndarray] = []
        self.cut: Optional[float] = None
        self.caps_intake = False
        self.last_decision = None

    def ingest(self, scores: np.ndarray) -> None:
        self.day_scores.append(scores)

    def decide(self, target: cap.CapacityTarget, interval: int, realized=None):
        if interval % self.intervals_per_day == 0 and self.day_scores:
            day = np.concatenate(self.day_scores)
            c_day = target.kappa_up * day.size
            self.cut = base.baseline_batch_topk(day, int(round(c_day)))
            self.day_scores = []
        if self.cut is None:
            return None, None, (), True
        return (self.cut,), (self.cut,), (False,), False


def target_guess(profile: simgen.BAStreamProfile) -> float:
    return profile.capacity.kappa


def build_policy(name: str, config: EngineConfig, profile: simgen.BAStreamProfile, scenario: ScenarioConfig):
    if name == "ours":
        return _OursPolicy(config, profile)
    if name == "ours_fixed_bw":
        return _OursPolicy(replace(config, adaptive=False), profile)
    if name == "ours_noreflect":
        return _OursPolicy(replace(config, reflect=False), profile)
    if name == "ours_nosnap":
        return _OursPolicy(replace(config, snapping=False), profile)
    if name == "ours_nohyst":
        return _OursPolicy(replace(config, hysteresis=False), profile)
    if name == "window_quantile":
        return _WindowQuantilePolicy(config, profile)
    if name == "ewma":
        return _EwmaPolicy(config, profile)
    if name == "batch_topk":
        return _BatchTopKPolicy(config, profile, scenario.intervals_per_day)
    raise ConfigError(f"unknown policy {name!r}")


# ---------------------------------------------------------------------------
# One (policy, stream, seed) run
# ---------------------------------------------------------------------------


def _realized_intake(
    scores: np.ndarray,
    cuts: tuple[float, ...],
    trims: tuple[float, ...],
    cap_count: Optional[int],
    band_cap: Optional[int] = None,
) -> tuple[int, int, float]:
    """(escalation intake, standard intake, effective trim point).

    With a capacity count, intake is the top-C scores of the deployed region:
    the effective trim is the realized within-band percentile that matches
    the exact count (ties broken by arrival). Without a count (the plain
    baselines), intake is everything at or above the trim.
    """
    cut_up = cuts[-1]
    region = scores[scores >= cut_up]
    if cap_count is None:
        trim_up = max(trims[-1], cut_up)
        a_up = int(np.count_nonzero(region >= trim_up))
        eff_trim = trim_up
    elif cap_count <= 0:
        a_up = 0
        eff_trim = 1.0
    elif region.size > cap_count:
        kth = float(np.sort(region)[region.size - cap_count])
        a_up = cap_count
        eff_trim = max(kth, cut_up)
    else:
        a_up = int(region.size)
        eff_trim = cut_up
    a_std = 0
    if len(cuts) == 2:
        band = scores[(scores >= cuts[0]) & (scores < cut_up)]
        if band_cap is None:
            trim_std = min(max(trims[0], cuts[0]), cut_up)
            a_std = int(np.count_nonzero(band >= trim_std))
        else:
            a_std = int(min(band.size, band_cap))
    return a_up, a_std, eff_trim


def run_combo(
    manifest: RunManifest, policy_name: str, ba_index: int, seed: int
) -> tuple[list[met.IntervalRecord], list[dict], dict]:
    """Run one policy on one stream for one seed; returns records and logs."""
    scenario = manifest.scenario
    profile = replace(scenario.bas[ba_index], seed=seed * 977 + ba_index)
    policy = build_policy(policy_name, manifest.engine, profile, scenario)
    backlog = simgen.BacklogState(backlog=0.0, breach_threshold=float("inf"))
    records: list[met.IntervalRecord] = []
    decisions: list[dict] = []
    routing_rows: list[tuple] = []
    snapshots = {}
    atoms = 0
    flips = 0
    last_intake: Optional[float] = None
    prev_cuts: Optional[tuple[float, ...]] = None
    for t in range(scenario.intervals):
        scores = simgen.generate_interval(profile, t)
        policy.ingest(scores)
        kappa_t = profile.capacity.kappa_at(t)
        c_target = kappa_t * profile.rate
        kt = simgen.step_at(profile, t)
        target = cap.CapacityTarget(
            kappa_up=kappa_t,
            kappa_up_std=profile.capacity.kappa_total,
            count_basis=float(profile.rate),
        )
        cuts, trims, anchored, held = policy.decide(target, t, realized=last_intake)
        if cuts is None:
            continue
        cap_count = int(round(c_target)) if policy.caps_intake else None
        band_cap = None
        if policy.caps_intake and profile.capacity.kappa_total is not None:
            band_cap = int(round((profile.capacity.kappa_total - kappa_t) * profile.rate))
        a_up, a_std, eff_trim = _realized_intake(scores, cuts, trims, cap_count, band_cap)
        if hasattr(policy, "observe_intake"):
            policy.observe_intake(float(a_up), c_target, float(profile.rate))
        last_intake = float(a_up)
        review = profile.capacity.review_ratio * c_target
        backlog = simgen.backlog_step(backlog, float(a_up), review)
        if scenario.routing_log and t >= scenario.warmup:
            deployed = _as_deployed(cuts, trims)
            for d in router.make_decisions(scores, deployed, t, effective_trim=eff_trim):
                routing_rows.append(
                    (t, d.score, d.queue.value, int(d.taken_this_interval))
                )
        if prev_cuts is not None and kt > 0:
            n_at, n_flip = met.knife_edge_flips(scores, prev_cuts, cuts, kt)
            atoms += n_at
            flips += n_flip
        prev_cuts = cuts
        if t < scenario.warmup:
            continue
        rec = policy.last_decision
        records.append(
            met.IntervalRecord(
                interval=t,
                ba=profile.name,
                policy=policy_name,
                seed=seed,
                a_up=float(a_up),
                a_std=float(a_std),
                c_target=float(c_target),
                cut_up=float(cuts[-1]),
                cut_std=float(cuts[0]) if len(cuts) == 2 else None,
                trim_up=float(eff_trim),
                trim_std=float(trims[0]) if len(cuts) == 2 else None,
                anchored_up=bool(anchored[-1]) if anchored else False,
                anchored_std=bool(anchored[0]) if len(anchored) == 2 else False,
                elasticity_up=float(rec.elasticities[-1]) if rec and rec.elasticities else float("nan"),
                elasticity_std=float(rec.elasticities[0]) if rec and len(rec.elasticities) == 2 else float("nan"),
                t_star_up=float(rec.t_stars[-1]) if rec and rec.t_stars else float("nan"),
                backlog=float(backlog.backlog),
                held=bool(held),
                n_eff=float(rec.n_eff) if rec else 0.0,
                h0=float(rec.h0) if rec else float("nan"),
                valley_count=int(rec.valley_count) if rec else 0,
                events=int(scores.size),
            )
        )
        if rec is not None:
            d = rec.to_dict()
            d["policy"] = policy_name
            d["ba"] = profile.name
            d["seed"] = seed
            decisions.append(d)
        if t in scenario.snapshot_checkpoints and hasattr(policy, "engine"):
            snapshots[t] = policy.engine.snapshot()
    return records, decisions, {
        "snapshots": snapshots,
        "atoms": atoms,
        "flips": flips,
        "routing": routing_rows,
    }


# ---------------------------------------------------------------------------
# Simulation driver and file output
# ---------------------------------------------------------------------------

RECORD_FIELDS = [
    "interval",
    "ba",
    "policy",
    "seed",
    "a_up",
    "a_std",
    "c_target",
    "cut_up",
    "cut_std",
    "trim_up",
    "trim_std",
    "anchored_up",
    "anchored_std",
    "elasticity_up",
    "elasticity_std",
    "t_star_up",
    "backlog",
    "held",
    "n_eff",
    "h0",
    "valley_count",
    "events",
    "update_us",
]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_records_csv(path: Path, records: list[met.IntervalRecord], header_note: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {header_note}\n")
        writer = csv.writer(fh)
        writer.writerow(RECORD_FIELDS)
        for r in records:
            writer.writerow([_fmt(getattr(r, f)) for f in RECORD_FIELDS])


def read_records_csv(path: Path) -> list[met.IntervalRecord]:
    out = []
    with open(path) as fh:
        rows = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(rows)
    for row in reader:
        out.append(
            met.IntervalRecord(
                interval=int(row["interval"]),
                ba=row["ba"],
                policy=row["policy"],
                seed=int(row["seed"]),
                a_up=float(row["a_up"]),
                a_std=float(row["a_std"]) if row["a_std"] else None,
                c_target=float(row["c_target"]),
                cut_up=float(row["cut_up"]),
                cut_std=float(row["cut_std"]) if row["cut_std"] else None,
                trim_up=float(row["trim_up"]) if row["trim_up"] else None,
                trim_std=float(row["trim_std"]) if row["trim_std"] else None,
                anchored_up=row["anchored_up"] == "1",
                anchored_std=row["anchored_std"] == "1",
                elasticity_up=float(row["elasticity_up"]),
                elasticity_std=float(row["elasticity_std"]),
                t_star_up=float(row["t_star_up"]),
                backlog=float(row["backlog"]),
                held=row["held"] == "1",
                n_eff=float(row["n_eff"]),
                h0=float(row["h0"]),
                valley_count=int(row["valley_count"]),
                events=int(row["events"]),
                update_us=float(row["update_us"]) if row["update_us"] else None,
            )
        )
    return out


def _worker_count() -> int:
    raw = os.environ.get("VALLEYCUT_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"VALLEYCUT_WORKERS must be an integer, got {raw!r}")


def simulate(manifest: RunManifest) -> Path:
    """Run every (policy, stream, seed) combination and write all logs.

    Combinations are independent; VALLEYCUT_WORKERS > 1 fans them out over a
    process pool. A single collector writes files either way, so outputs are
    byte-identical regardless of worker count.
    """
    out = Path(manifest.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    shash = manifest.scenario_hash()
    from . import __version__

    note = f"scenario={shash} version={__version__}"
    (out / "manifest.json").write_text(
        json.dumps(
            {"scenario_hash": shash, "version": __version__, **manifest_to_dict(manifest)},
            sort_keys=True,
            indent=2,
        )
    )
    combos = [
        (policy, ba_index, seed)
        for policy in manifest.policies
        for ba_index in range(len(manifest.scenario.bas))
        for seed in manifest.seeds
    ]
    workers = _worker_count()
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(_run_combo_star, [(manifest, p, b, s) for p, b, s in combos])
            )
    else:
        results = [run_combo(manifest, p, b, s) for p, b, s in combos]

    tie_stats = {}
    for (policy, ba_index, seed), (records, decisions, extra) in zip(combos, results):
        stem = f"{policy}_{manifest.scenario.bas[ba_index].name}_s{seed}"
        write_records_csv(out / f"records_{stem}.csv", records, note)
        if decisions:
            with open(out / f"decisions_{stem}.jsonl", "w") as fh:
                fh.write(f'{{"note": "{note}"}}\n')
                for d in decisions:
                    fh.write(json.dumps(d, sort_keys=True) + "\n")
        for t, snap in extra["snapshots"].items():
            snap.to_csv(out / f"snapshot_{stem}_t{t}.csv")
        if extra["routing"]:
            with open(out / f"routing_{stem}.csv", "w", newline="") as fh:
                fh.write(f"# {note}\n")
                writer = csv.writer(fh)
                writer.writerow(["interval_id", "score", "queue", "taken"])
                for row in extra["routing"]:
                    writer.writerow([row[0], repr(row[1]), row[2], row[3]])
        tie_stats[stem] = {"atoms": extra["atoms"], "flips": extra["flips"]}
    (out / "tie_stats.json").write_text(json.dumps(tie_stats, sort_keys=True, indent=2))
    return out


def _run_combo_star(args):
    return run_combo(*args)


def _as_deployed(cuts: tuple[float, ...], trims: tuple[float, ...]) -> cap.DeployedCuts:
    return cap.DeployedCuts(
        cuts=tuple(cuts),
        trims=tuple(trims),
        anchored=tuple(False for _ in cuts),
        elasticity=tuple(0.0 for _ in cuts),
        t_stars=tuple(cuts),
    )
