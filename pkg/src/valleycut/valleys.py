"""Valley detection, persistence and salience filtering, guards, tracking.

A valley is a discrete local minimum of the adaptive density estimate:
the first difference changes sign from negative to positive (flat bottoms
allowed) with positive curvature across the change. Candidates must then
survive a ladder of re-smoothing bandwidths (persistence), show enough
prominence against their bracketing maxima (salience), sit away from the
edges, and carry enough adjacent mass.

Persistence re-smooths the streaming estimate's grid mass (raw history is
unavailable under exponential forgetting) with the adaptive profile scaled
by each ladder multiplier; the probe may exceed the deployment h_max so
wide rungs genuinely widen.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._backend import active_backend, njit
from .density import BandwidthProfile, DensitySnapshot, Grid, tail_mass

DEFAULT_LADDER = (0.5, 2.0**-0.5, 1.0, 2.0**0.5, 2.0)
DEFAULT_MIN_CONSECUTIVE = 3
DEFAULT_TAU = 2.5
DEFAULT_EPS_EDGE = 0.02
DEFAULT_MIN_SUPPORT = 5.0
DEFAULT_MAX_DRIFT = 0.05
PERSISTENCE_H_CAP = 0.5
_PATTERN_WINDOW = 3  # grid points searched around a candidate for the sign pattern


@dataclass(frozen=True)
class Valley:
    location: float
    density_value: float
    salience: float
    persistence_span: tuple[float, float]
    adjacent_mass: tuple[float, float]
    grid_index: int


@dataclass(frozen=True)
class ValleySet:
    valleys: tuple[Valley, ...]
    source_snapshot_id: int = 0

    def locations(self) -> np.ndarray:
        return np.array([v.location for v in self.valleys])

    def __len__(self) -> int:
        return len(self.valleys)


@dataclass
class CandidateAudit:
    """One row of the per-refresh valley audit log."""

    location: float
    density_value: float
    salience: float = float("nan")
    span_lo: float = float("nan")
    span_hi: float = float("nan")
    accepted: bool = False
    reject_reason: str = ""

    def to_dict(self) -> dict:
        return {
            "location": self.location,
            "density_value": self.density_value,
            "salience": self.salience,
            "span_lo": self.span_lo,
            "span_hi": self.span_hi,
            "accepted": self.accepted,
            "reject_reason": self.reject_reason,
        }


# ---------------------------------------------------------------------------
# Candidate detection
# ---------------------------------------------------------------------------


def detect_candidates(values: np.ndarray, grid: Grid) -> list[tuple[int, float]]:
    """Interior local minima as (grid index, parabola-refined location)."""
    d = np.diff(values)
    out: list[tuple[int, float]] = []
    n = d.shape[0]
    i = 0
    while i < n - 1:
        if d[i] < 0.0:
            k = i + 1
            while k < n and d[k] == 0.0:
                k += 1
            if k < n and d[k] > 0.0 and d[k] - d[i] > 0.0:
                j = (i + 1 + k) // 2  # middle of a flat bottom, else i+1
                out.append((j, _refine_location(values, grid, j)))
                i = k
                continue
        i += 1
    return out


def _refine_location(values: np.ndarray, grid: Grid, j: int) -> float:
    denom = values[j - 1] - 2.0 * values[j] + values[j + 1]
    if denom <= 0.0:
        return float(grid.points[j])
    shift = 0.5 * grid.spacing * (values[j - 1] - values[j + 1]) / denom
    return float(np.clip(grid.points[j] + shift, grid.points[j - 1], grid.points[j + 1]))


def consolidate_candidates(
    candidates: list[tuple[int, float]],
    values: np.ndarray,
    grid: Grid,
    n_eff: float,
    h_profile: np.ndarray,
    tau: float,
) -> list[tuple[int, float]]:
    """Merge adjacent minima separated only by noise-scale bumps.

    Stochastic roughness in a flat basin produces several micro-minima; when
    the barrier between two neighbors is below the local standard-error scale,
    they describe one valley. The lower-density minimum represents the merged
    pair; repeats until stable.
    """
    cands = sorted(candidates, key=lambda c: c[0])
    merged = True
    while merged and len(cands) > 1:
        merged = False
        for i in range(len(cands) - 1):
            j1, _ = cands[i]
            j2, _ = cands[i + 1]
            bar = j1 + int(np.argmax(values[j1 : j2 + 1]))
            prominence = values[bar] - max(values[j1], values[j2])
            if prominence <= salience_threshold(values[bar], n_eff, h_profile[bar], tau):
                keep = cands[i] if values[j1] <= values[j2] else cands[i + 1]
                cands[i : i + 2] = [keep]
                merged = True
                break
    return cands


# ---------------------------------------------------------------------------
# Persistence across a bandwidth ladder
# ---------------------------------------------------------------------------


def _smooth_mass_np(grid_pts, mass, h_eval, reflect=True):
    h = h_eval[:, None]
    u0 = (grid_pts[:, None] - grid_pts[None, :]) / h
    k = np.where(np.abs(u0) <= 1.0, 0.75 * (1.0 - u0 * u0), 0.0)
    if reflect:
        u1 = (grid_pts[:, None] + grid_pts[None, :]) / h
        u2 = (grid_pts[:, None] - (2.0 - grid_pts[None, :])) / h
        k = k + np.where(np.abs(u1) <= 1.0, 0.75 * (1.0 - u1 * u1), 0.0)
        k = k + np.where(np.abs(u2) <= 1.0, 0.75 * (1.0 - u2 * u2), 0.0)
    return (k / h) @ mass


@njit(cache=True)
def _smooth_mass_nb(grid_pts, mass, h_eval, reflect):  # pragma: no cover - jit twin
    n = grid_pts.shape[0]
    out = np.zeros(n)
    for i in range(n):
        hi = h_eval[i]
        acc = 0.0
        for j in range(n):
            u = (grid_pts[i] - grid_pts[j]) / hi
            if -1.0 <= u <= 1.0:
                acc += mass[j] * 0.75 * (1.0 - u * u)
            if reflect:
                u = (grid_pts[i] + grid_pts[j]) / hi
                if -1.0 <= u <= 1.0:
                    acc += mass[j] * 0.75 * (1.0 - u * u)
                u = (grid_pts[i] - (2.0 - grid_pts[j])) / hi
                if -1.0 <= u <= 1.0:
                    acc += mass[j] * 0.75 * (1.0 - u * u)
        out[i] = acc / hi
    return out


def resmoothed_density(
    pilot_values: np.ndarray,
    grid: Grid,
    h_profile: np.ndarray,
    multiplier: float,
    reflect: bool = True,
    h_cap: float = PERSISTENCE_H_CAP,
) -> np.ndarray:
    """Pilot mass re-smoothed with the profile scaled by `multiplier`."""
    h_eval = np.clip(h_profile * multiplier, grid.spacing, h_cap)
    mass = grid.trapz_weights * pilot_values
    if active_backend() == "numba":
        return _smooth_mass_nb(grid.points, mass, h_eval, reflect)
    return _smooth_mass_np(grid.points, mass, h_eval, reflect)


def _has_min_pattern(values: np.ndarray, j: int, window: int = _PATTERN_WINDOW) -> bool:
    # negative difference, optional flat run, positive difference
    d = np.diff(values)
    lo = max(0, j - window - 1)
    hi = min(d.shape[0] - 1, j + window)
    k = lo
    while k <= hi:
        if d[k] < 0.0:
            m = k + 1
            while m <= hi and d[m] == 0.0:
                m += 1
            if m <= hi and d[m] > 0.0:
                return True
            k = m
        else:
            k += 1
    return False


def persistence_spans(
    indices: Sequence[int],
    source_values: np.ndarray,
    grid: Grid,
    h_profile: np.ndarray,
    ladder: Sequence[float] = DEFAULT_LADDER,
    min_consecutive: int = DEFAULT_MIN_CONSECUTIVE,
    reflect: bool = True,
) -> list[tuple[bool, float, float]]:
    """(accepted, span_lo, span_hi) per candidate over the smoothing ladder.

    `source_values` (normally the adaptive estimate itself) is re-smoothed at
    each rung; a candidate is accepted when the local-minimum sign pattern
    survives near it for at least `min_consecutive` consecutive rungs
    including the deployed bandwidth (multiplier 1.0). The search window
    widens with the rung's bandwidth, since re-smoothing shifts minima of
    asymmetric basins.
    """
    ladder = tuple(ladder)
    if not ladder or 1.0 not in ladder:
        return [(False, float("nan"), float("nan"))] * len(indices)
    order = np.argsort(ladder)
    sorted_ladder = [ladder[i] for i in order]
    one_pos = sorted_ladder.index(1.0)
    survive = np.zeros((len(indices), len(sorted_ladder)), dtype=bool)
    for col, mult in enumerate(sorted_ladder):
        fm = resmoothed_density(source_values, grid, h_profile, mult, reflect=reflect)
        for row, j in enumerate(indices):
            win = _PATTERN_WINDOW + int(round(0.25 * mult * h_profile[j] / grid.spacing))
            survive[row, col] = _has_min_pattern(fm, j, win)
    out = []
    for row in range(len(indices)):
        if not survive[row, one_pos]:
            out.append((False, float("nan"), float("nan")))
            continue
        lo = one_pos
        while lo > 0 and survive[row, lo - 1]:
            lo -= 1
        hi = one_pos
        while hi < len(sorted_ladder) - 1 and survive[row, hi + 1]:
            hi += 1
        run = hi - lo + 1
        out.append((run >= min_consecutive, sorted_ladder[lo], sorted_ladder[hi]))
    return out


def persistence_filter(
    location: float,
    source_values: np.ndarray,
    grid: Grid,
    bw: BandwidthProfile,
    ladder: Sequence[float] = DEFAULT_LADDER,
    min_consecutive: int = DEFAULT_MIN_CONSECUTIVE,
) -> tuple[bool, tuple[float, float]]:
    """Single-candidate persistence check against the smoothing ladder."""
    j = int(np.clip(round(location / grid.spacing), 1, grid.size - 2))
    (res,) = persistence_spans([j], source_values, grid, bw.per_point, ladder, min_consecutive)
    return res[0], (res[1], res[2])


# ---------------------------------------------------------------------------
# Salience and guards
# ---------------------------------------------------------------------------


def compute_salience(
    index: int,
    values: np.ndarray,
    left_bound: Optional[int] = None,
    right_bound: Optional[int] = None,
) -> tuple[float, int, int]:
    """min density drop to the bracketing maxima; (salience, left, right).

    The bracketing maxima are the highest points between the valley and its
    neighboring valley (or the domain endpoint) on each side -- noise-scale
    wiggles on the flanks do not truncate the climb. Salience <= 0 means no
    bracketing maximum on that side (candidate is rejected upstream).
    """
    n = values.shape[0]
    lb = 0 if left_bound is None else max(0, left_bound)
    rb = n - 1 if right_bound is None else min(n - 1, right_bound)
    left = lb + int(np.argmax(values[lb : index + 1]))
    right = index + int(np.argmax(values[index : rb + 1]))
    drop = min(values[left] - values[index], values[right] - values[index])
    return float(drop), left, right


def salience_threshold(density_value: float, n_eff: float, h_at: float, tau: float) -> float:
    """Local standard-error scale sqrt(f/(n_eff h)) times tau."""
    if n_eff <= 0.0 or h_at <= 0.0:
        return float("inf")
    return tau * float(np.sqrt(max(density_value, 0.0) / (n_eff * h_at)))


def apply_guards(
    candidates: Sequence[tuple[int, float]],
    values: np.ndarray,
    grid: Grid,
    eps_edge: float = DEFAULT_EPS_EDGE,
    min_support: float = DEFAULT_MIN_SUPPORT,
    n_eff: float = 0.0,
    extras: Optional[dict] = None,
    snapshot_id: int = 0,
) -> tuple[ValleySet, list[CandidateAudit]]:
    """Edge, separation, and minimum-adjacent-mass guards.

    `extras` carries per-index (salience, span) from the earlier stages so the
    audit rows and Valley records are complete.
    """
    extras = extras or {}
    audits: list[CandidateAudit] = []
    kept: list[tuple[int, float]] = []
    for j, loc in sorted(candidates, key=lambda c: c[1]):
        audit = CandidateAudit(location=loc, density_value=float(values[j]))
        sal, span = extras.get(j, (float("nan"), (float("nan"), float("nan"))))
        audit.salience = sal
        audit.span_lo, audit.span_hi = span
        if loc < eps_edge or loc > 1.0 - eps_edge:
            audit.reject_reason = "edge"
            audits.append(audit)
            continue
        kept.append((j, loc))
        audits.append(audit)

    # enforce pairwise separation >= 2 grid spacings, keeping the lower density
    deduped: list[tuple[int, float]] = []
    for j, loc in kept:
        if deduped and loc - deduped[-1][1] < 2.0 * grid.spacing:
            if values[j] < values[deduped[-1][0]]:
                _mark(audits, deduped[-1][1], "separation")
                deduped[-1] = (j, loc)
            else:
                _mark(audits, loc, "separation")
            continue
        deduped.append((j, loc))

    # adjacent mass to the neighboring valley / endpoint, single pass
    threshold = float("inf") if n_eff <= 0 else min_support / n_eff
    bounds = [0.0] + [loc for _, loc in deduped] + [1.0]
    final: list[Valley] = []
    for i, (j, loc) in enumerate(deduped):
        left_mass = tail_mass(values, bounds[i], grid) - tail_mass(values, loc, grid)
        right_mass = tail_mass(values, loc, grid) - tail_mass(values, bounds[i + 2], grid)
        if min(left_mass, right_mass) < threshold:
            _mark(audits, loc, "min_support")
            continue
        sal, span = extras.get(j, (float("nan"), (float("nan"), float("nan"))))
        _mark(audits, loc, "", accepted=True)
        final.append(
            Valley(
                location=loc,
                density_value=float(values[j]),
                salience=sal,
                persistence_span=span,
                adjacent_mass=(float(left_mass), float(right_mass)),
                grid_index=j,
            )
        )
    return ValleySet(valleys=tuple(final), source_snapshot_id=snapshot_id), audits


def _mark(audits: list[CandidateAudit], location: float, reason: str, accepted: bool = False):
    for a in audits:
        if a.location == location:
            a.reject_reason = reason
            a.accepted = accepted
            return


# ---------------------------------------------------------------------------
# Tracking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValleyMatching:
    pairs: tuple[tuple[int, int], ...]  # (prev index, curr index)
    births: tuple[int, ...]  # indices into current set
    deaths: tuple[int, ...]  # indices into previous set


def match_valleys(previous: ValleySet, current: ValleySet, max_drift: float) -> ValleyMatching:
    """Greedy nearest-neighbor identity matching with a drift cap."""
    prev = previous.locations()
    curr = current.locations()
    cand = [
        (abs(prev[i] - curr[j]), i, j)
        for i in range(prev.size)
        for j in range(curr.size)
        if abs(prev[i] - curr[j]) <= max_drift
    ]
    cand.sort()
    used_prev: set[int] = set()
    used_curr: set[int] = set()
    pairs = []
    for _, i, j in cand:
        if i in used_prev or j in used_curr:
            continue
        pairs.append((i, j))
        used_prev.add(i)
        used_curr.add(j)
    births = tuple(j for j in range(curr.size) if j not in used_curr)
    deaths = tuple(i for i in range(prev.size) if i not in used_prev)
    return ValleyMatching(pairs=tuple(pairs), births=births, deaths=deaths)


# ---------------------------------------------------------------------------
# Full per-refresh pipeline (detection -> persistence -> salience -> guards)
# ---------------------------------------------------------------------------


def find_valleys(
    snapshot: DensitySnapshot,
    ladder: Sequence[float] = DEFAULT_LADDER,
    min_consecutive: int = DEFAULT_MIN_CONSECUTIVE,
    tau: float = DEFAULT_TAU,
    eps_edge: float = DEFAULT_EPS_EDGE,
    min_support: float = DEFAULT_MIN_SUPPORT,
    reflect: bool = True,
) -> tuple[ValleySet, list[CandidateAudit]]:
    values = snapshot.values
    grid = snapshot.grid
    raw = detect_candidates(values, grid)
    raw = consolidate_candidates(
        raw, values, grid, snapshot.n_eff, snapshot.h_per_point, tau
    )
    if not raw:
        return ValleySet(valleys=(), source_snapshot_id=snapshot.snapshot_id), []
    indices = [j for j, _ in raw]
    spans = persistence_spans(
        indices, values, grid, snapshot.h_per_point, ladder, min_consecutive, reflect
    )
    audits: list[CandidateAudit] = []
    survivors: list[tuple[int, float]] = []
    extras: dict[int, tuple[float, tuple[float, float]]] = {}
    neighbor_idx = [j for j, _ in raw]
    for pos, ((j, loc), (ok, lo, hi)) in enumerate(zip(raw, spans)):
        left_bound = neighbor_idx[pos - 1] if pos > 0 else 0
        right_bound = neighbor_idx[pos + 1] if pos + 1 < len(neighbor_idx) else grid.size - 1
        if not ok:
            audits.append(
                CandidateAudit(
                    location=loc,
                    density_value=float(values[j]),
                    span_lo=lo,
                    span_hi=hi,
                    reject_reason="persistence",
                )
            )
            continue
        sal, _, _ = compute_salience(j, values, left_bound, right_bound)
        thresh = salience_threshold(values[j], snapshot.n_eff, snapshot.h_per_point[j], tau)
        if sal <= 0.0:
            audits.append(
                CandidateAudit(
                    location=loc,
                    density_value=float(values[j]),
                    salience=sal,
                    span_lo=lo,
                    span_hi=hi,
                    reject_reason="no_bracketing_maximum",
                )
            )
            continue
        if sal <= thresh:
            audits.append(
                CandidateAudit(
                    location=loc,
                    density_value=float(values[j]),
                    salience=sal,
                    span_lo=lo,
                    span_hi=hi,
                    reject_reason="salience",
                )
            )
            continue
        survivors.append((j, loc))
        extras[j] = (sal, (lo, hi))
    vset, guard_audits = apply_guards(
        survivors,
        values,
        grid,
        eps_edge=eps_edge,
        min_support=min_support,
        n_eff=snapshot.n_eff,
        extras=extras,
        snapshot_id=snapshot.snapshot_id,
    )
    return vset, audits + guard_audits
