"""Operational metrics over interval records and runtime profiling.

All metrics are pure functions of the logs. Undefined statistics (CoV with
zero mean intake, mean-time-between-breaches with fewer than two breaches)
are flagged None, never silently zeroed. Quantiles use the inclusive
linear-interpolation convention throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyReportError, InsufficientDataError

DEFAULT_TOLERANCE = 0.10


@dataclass
class IntervalRecord:
    """One (stream, interval) row of the simulation log."""

    interval: int
    ba: str
    policy: str
    seed: int
    a_up: float  # realized escalation intake
    c_target: float  # target count
    cut_up: float
    cut_std: Optional[float] = None
    a_std: Optional[float] = None
    trim_up: Optional[float] = None
    trim_std: Optional[float] = None
    anchored_up: bool = False
    anchored_std: bool = False
    elasticity_up: float = float("nan")
    elasticity_std: float = float("nan")
    t_star_up: float = float("nan")
    backlog: float = 0.0
    held: bool = False
    n_eff: float = 0.0
    h0: float = float("nan")
    valley_count: int = 0
    events: int = 0
    update_us: Optional[float] = None  # filled by the bench path only


def median_iqr(values: Sequence[float]) -> tuple[float, float, float]:
    """(median, q25, q75) with inclusive linear interpolation."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise EmptyReportError("median_iqr over empty values")
    return (
        float(np.quantile(v, 0.5, method="linear")),
        float(np.quantile(v, 0.25, method="linear")),
        float(np.quantile(v, 0.75, method="linear")),
    )


def adherence_summary(
    realized: Sequence[float], targets: Sequence[float], tolerance: float = DEFAULT_TOLERANCE
) -> dict:
    """Mean |A-C|, mean |A-C|/C, and the fraction within the tolerance band."""
    A = np.asarray(realized, dtype=float)
    C = np.asarray(targets, dtype=float)
    if A.size == 0:
        raise EmptyReportError("adherence over empty records")
    if np.any(C <= 0):
        raise EmptyReportError("adherence requires positive targets")
    dev = np.abs(A - C)
    rel = dev / C
    return {
        "mean_abs_deviation": float(dev.mean()),
        "mean_rel_deviation": float(rel.mean()),
        "fraction_within_band": float(np.mean(rel <= tolerance)),
        "tolerance": float(tolerance),
        "n": int(A.size),
    }


def stability_summary(
    realized: Sequence[float],
    cuts: Sequence[float],
    elasticities: Optional[Sequence[float]] = None,
) -> dict:
    """Intake CoV, cut jitter (median/max of |c_t - c_{t-1}|), deployment elasticity."""
    A = np.asarray(realized, dtype=float)
    c = np.asarray(cuts, dtype=float)
    if c.size < 2:
        raise EmptyReportError("stability needs at least two records")
    mean_a = A.mean()
    cov = float(A.std() / mean_a) if mean_a > 0 else None
    jitter = np.abs(np.diff(c))
    elast = None
    if elasticities is not None:
        e = np.asarray(elasticities, dtype=float)
        e = e[np.isfinite(e)]
        elast = float(np.median(e)) if e.size else None
    return {
        "intake_cov": cov,
        "jitter_median": float(np.median(jitter)),
        "jitter_max": float(jitter.max()),
        "jitter_series": jitter,
        "elasticity_median": elast,
    }


def backlog_summary(backlogs: Sequence[float], beta: float, c_ref: float) -> dict:
    """Exceedance probability of beta*C and mean time between breach onsets."""
    B = np.asarray(backlogs, dtype=float)
    if B.size == 0:
        raise EmptyReportError("backlog summary over empty records")
    threshold = beta * c_ref
    exceed = B > threshold
    onsets = np.flatnonzero(exceed & ~np.concatenate(([False], exceed[:-1])))
    mtbb = float(np.diff(onsets).mean()) if onsets.size >= 2 else None
    return {
        "exceedance_probability": float(exceed.mean()),
        "mean_time_between_breaches": mtbb,
        "breach_onsets": int(onsets.size),
    }


def portability_summary(
    elasticities_by_ba: dict[str, Sequence[float]],
    anchored_flags: Sequence[bool],
    atoms_at_cuts: int = 0,
    atom_flips: int = 0,
) -> dict:
    """Cross-stream dispersion of elasticities, anchoring rate, tie volatility."""
    if not elasticities_by_ba:
        raise EmptyReportError("portability over empty records")
    per_ba_median = [float(np.median(np.asarray(v, dtype=float))) for v in elasticities_by_ba.values()]
    if len(per_ba_median) > 1:
        q75, q25 = np.quantile(per_ba_median, [0.75, 0.25], method="linear")
        dispersion = float(q75 - q25)
    else:
        dispersion = 0.0
    anchored = np.asarray(anchored_flags, dtype=bool)
    return {
        "elasticity_dispersion_iqr": dispersion,
        "anchored_proportion": float(anchored.mean()) if anchored.size else 0.0,
        "tiebreak_volatility": (atom_flips / atoms_at_cuts) if atoms_at_cuts > 0 else 0.0,
    }


def knife_edge_flips(
    scores: np.ndarray,
    cuts_prev: Sequence[float],
    cuts_now: Sequence[float],
    step: float,
) -> tuple[int, int]:
    """(scores at cut atoms, how many changed queue) between two refreshes.

    An atom is a discretized score value within half a step of either cut set;
    queue membership is evaluated against the escalation cut only (flips in or
    out of the intake queue).
    """
    if step <= 0 or scores.size == 0:
        return 0, 0
    s = np.asarray(scores, dtype=float)
    atoms = np.round(s / step) * step
    near = np.zeros(s.shape[0], dtype=bool)
    for cut in tuple(cuts_prev) + tuple(cuts_now):
        near |= np.abs(atoms - cut) <= step / 2.0 + 1e-12
    if not near.any():
        return 0, 0
    s_near = s[near]
    was_in = s_near >= cuts_prev[-1]
    now_in = s_near >= cuts_now[-1]
    return int(near.sum()), int(np.count_nonzero(was_in != now_in))


def runtime_profile(grid_sizes: Sequence[int], per_event_times: Sequence[Sequence[float]]) -> dict:
    """Log-log least-squares slope of median per-event time versus grid size."""
    if len(grid_sizes) < 3:
        raise InsufficientDataError("runtime profile needs timings at >= 3 grid sizes")
    if len(grid_sizes) != len(per_event_times):
        raise InsufficientDataError("one timing set per grid size required")
    medians = np.array([float(np.median(np.asarray(t, dtype=float))) for t in per_event_times])
    if np.any(medians <= 0):
        raise InsufficientDataError("non-positive timing medians")
    logg = np.log(np.asarray(grid_sizes, dtype=float))
    logt = np.log(medians)
    slope, intercept = np.polyfit(logg, logt, 1)
    return {
        "slope": float(slope),
        "intercept": float(intercept),
        "grid_sizes": [int(g) for g in grid_sizes],
        "median_per_event": [float(m) for m in medians],
    }
