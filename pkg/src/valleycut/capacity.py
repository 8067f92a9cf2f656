"""Capacity matching: quantile inversion, valley snapping, trims, hysteresis.

The capacity-true cut is the point whose tail mass equals the intake ratio.
Deployment snaps it to the admissible valley with the lowest density (the
quantile point itself always remains a candidate), which generically leaves
tail-mass overshoot; a within-band trim point then restores the exact target
without moving the semantic boundary. A hysteresis gate suppresses cut motion
that does not buy a real elasticity reduction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .density import DensitySnapshot, tail_mass, tail_masses_on_grid
from .errors import ConfigError, DomainError
from .valleys import ValleySet

_TIE_EPS = 1e-12


@dataclass(frozen=True)
class CapacityTarget:
    """Escalation tail ratio, optional combined ratio, tolerance, volume basis."""

    kappa_up: float
    count_basis: float
    kappa_up_std: Optional[float] = None
    delta: Optional[float] = None  # absolute count tolerance; default 10% of target

    def __post_init__(self):
        if not 0.0 < self.kappa_up <= 1.0:
            raise DomainError(f"kappa_up must lie in (0,1], got {self.kappa_up}")
        if self.count_basis <= 0.0:
            raise DomainError("count_basis must be positive")
        if self.kappa_up_std is not None and not (
            self.kappa_up <= self.kappa_up_std <= 1.0
        ):
            raise DomainError(
                f"need kappa_up <= kappa_up_std <= 1, got "
                f"({self.kappa_up}, {self.kappa_up_std})"
            )
        if self.delta is None:
            object.__setattr__(self, "delta", 0.1 * self.kappa_up * self.count_basis)

    @property
    def two_sided(self) -> bool:
        return self.kappa_up_std is not None


@dataclass(frozen=True)
class DeployedCuts:
    """Deployed boundaries plus the trim points that realize the targets."""

    cuts: tuple[float, ...]  # ascending; 1 or 2 entries
    trims: tuple[float, ...]  # absolute trim point per cut region
    anchored: tuple[bool, ...]
    elasticity: tuple[float, ...]
    t_stars: tuple[float, ...]
    empty_standard: bool = False

    @property
    def fine_tune(self) -> tuple[float, ...]:
        return tuple(t - c for c, t in zip(self.cuts, self.trims))

    @property
    def cut_up(self) -> float:
        return self.cuts[-1]

    @property
    def cut_std(self) -> Optional[float]:
        return self.cuts[0] if len(self.cuts) == 2 else None


@dataclass
class HysteresisState:
    previous: Optional[DeployedCuts] = None
    eta: float = 0.15

    def __post_init__(self):
        if not 0.0 < self.eta < 1.0:
            raise ConfigError(f"eta must lie in (0,1), got {self.eta}")


# ---------------------------------------------------------------------------
# Quantile inversion on the discrete tail-mass curve
# ---------------------------------------------------------------------------


def quantile_cut(snapshot_or_values, kappa: float, grid=None) -> float:
    """t* with tail_mass(t*) = kappa; largest such point on flat stretches."""
    if not 0.0 < kappa < 1.0:
        raise DomainError(f"kappa must lie in (0,1), got {kappa}")
    if isinstance(snapshot_or_values, np.ndarray):
        values, g = snapshot_or_values, grid
        if g is None:
            raise ConfigError("grid required with a raw value array")
    else:
        values, g = snapshot_or_values.values, snapshot_or_values.grid
    U = tail_masses_on_grid(values, g)
    if U[0] < kappa:
        return float(g.points[0])
    # largest j with U[j] >= kappa (U is nonincreasing)
    j = int(np.searchsorted(-U, -kappa, side="right")) - 1
    j = min(j, g.size - 2)
    dx = g.spacing
    slope = (values[j + 1] - values[j]) / dx
    need = kappa - U[j + 1]  # mass to recover moving left from x_{j+1}
    v_hi = values[j + 1]
    # U(x_{j+1} - t) = U[j+1] + v_hi t - slope t^2 / 2 ; smallest root t >= 0
    if abs(slope) < 1e-14:
        t = need / v_hi if v_hi > 1e-300 else 0.0
    else:
        disc = v_hi * v_hi - 2.0 * slope * need
        if disc < 0.0:
            disc = 0.0
        root = np.sqrt(disc)
        # numerically stable smaller root of (slope/2) t^2 - v_hi t + need = 0
        if slope > 0:
            t = 2.0 * need / (v_hi + root) if (v_hi + root) > 0 else 0.0
        else:
            t = (v_hi - root) / slope if need > 0 else 0.0
    t = float(np.clip(t, 0.0, dx))
    return float(g.points[j + 1] - t)


def fine_tune(cut: float, snapshot: DensitySnapshot, kappa: float) -> float:
    """Interior trim point t' >= cut with tail_mass(t') = kappa."""
    if tail_mass(snapshot.values, cut, snapshot.grid) < kappa - 1e-9:
        raise DomainError("fine_tune requires tail_mass(cut) >= kappa")
    return max(cut, quantile_cut(snapshot, kappa))


def elasticity(count_basis: float, snapshot: DensitySnapshot, c: float) -> float:
    """Local intake sensitivity: expected volume times density at the cut."""
    return float(count_basis) * snapshot.density_at(c)


# ---------------------------------------------------------------------------
# Snapping
# ---------------------------------------------------------------------------


def snap_single(
    t_star: float, valleys: ValleySet, snapshot: DensitySnapshot, kappa: float
) -> tuple[float, bool]:
    """Lowest-density candidate among admissible valleys and t* itself.

    Ties go to the candidate closest to t*, then to the larger location;
    returns (cut, anchored-at-valley flag).
    """
    cands: list[tuple[float, bool]] = [(float(t_star), False)]
    for v in valleys.valleys:
        if tail_mass(snapshot.values, v.location, snapshot.grid) >= kappa:
            cands.append((v.location, True))
    scored = [(snapshot.density_at(c), c, anch) for c, anch in cands]
    fmin = min(s[0] for s in scored)
    best = [s for s in scored if s[0] <= fmin + _TIE_EPS]
    best.sort(key=lambda s: (abs(s[1] - t_star), -s[1]))
    _, cut, anchored = best[0]
    return float(cut), bool(anchored)


@dataclass(frozen=True)
class PairSelection:
    c_std: Optional[float]
    c_up: float
    anchored: tuple[bool, bool]
    t_stars: tuple[float, float]
    empty_standard: bool
    tie_break: bool = False
    fallback: bool = False


def select_pair(
    valleys: ValleySet, snapshot: DensitySnapshot, target: CapacityTarget
) -> PairSelection:
    """Two-threshold selection minimizing summed density over feasible pairs.

    Feasible pairs satisfy tail_mass(v2) >= kappa_up, tail_mass(v1) >=
    kappa_up_std, and carry at least the Standard band's mass between them so
    the within-band trim can close the overshoot. Falls back to the two
    quantile cuts when no pair qualifies.
    """
    if not target.two_sided:
        raise ConfigError("select_pair needs both kappa targets")
    k_up = target.kappa_up
    k_tot = float(target.kappa_up_std)
    t2 = quantile_cut(snapshot, k_up)
    if abs(k_tot - k_up) < 1e-12:
        cut, anch = snap_single(t2, valleys, snapshot, k_up)
        return PairSelection(
            c_std=None,
            c_up=cut,
            anchored=(False, anch),
            t_stars=(t2, t2),
            empty_standard=True,
        )
    t1 = quantile_cut(snapshot, k_tot)
    dx = snapshot.grid.spacing
    cands = [(loc, True) for loc in valleys.locations()] + [(t1, False), (t2, False)]
    u_cache = {loc: tail_mass(snapshot.values, loc, snapshot.grid) for loc, _ in cands}
    band_target = k_tot - k_up
    feasible = []
    for lo, lo_anch in cands:
        for hi, hi_anch in cands:
            if hi - lo < dx:
                continue
            if u_cache[hi] < k_up or u_cache[lo] < k_tot:
                continue
            if u_cache[lo] - u_cache[hi] < band_target - 1e-12:
                continue
            obj = snapshot.density_at(lo) + snapshot.density_at(hi)
            feasible.append((obj, lo, hi, lo_anch, hi_anch))
    if not feasible:
        lo, hi = t1, t2
        if lo >= hi:
            lo = max(snapshot.grid.points[0], hi - dx)
        return PairSelection(
            c_std=float(lo),
            c_up=float(hi),
            anchored=(False, False),
            t_stars=(t1, t2),
            empty_standard=False,
            fallback=True,
        )
    omin = min(f[0] for f in feasible)
    best = [f for f in feasible if f[0] <= omin + _TIE_EPS]
    tie = len(best) > 1
    best.sort(key=lambda f: (-(f[1] + f[2]), -f[2]))
    _, lo, hi, lo_anch, hi_anch = best[0]
    return PairSelection(
        c_std=float(lo),
        c_up=float(hi),
        anchored=(lo_anch, hi_anch),
        t_stars=(t1, t2),
        empty_standard=False,
        tie_break=tie,
    )


def pair_trims(
    c_std: float, c_up: float, snapshot: DensitySnapshot, target: CapacityTarget
) -> tuple[float, float]:
    """Trim points for both regions, accounting for the Escalation trim.

    The Standard trim solves U(t) = band target + U(c_up) so the band's own
    intake meets kappa_up_std - kappa_up exactly once Escalation is trimmed.
    """
    k_up = target.kappa_up
    k_tot = float(target.kappa_up_std)
    trim_up = max(c_up, quantile_cut(snapshot, k_up))
    u_cup = tail_mass(snapshot.values, c_up, snapshot.grid)
    want = min(max((k_tot - k_up) + u_cup, 1e-12), 1.0 - 1e-12)
    trim_std = quantile_cut(snapshot, want)
    trim_std = float(np.clip(trim_std, c_std, c_up))
    return trim_std, float(trim_up)


# ---------------------------------------------------------------------------
# Hysteresis gating
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GateResult:
    cuts: tuple[float, ...]
    moved: tuple[bool, ...]
    reasons: tuple[str, ...]  # per cut: why it moved, or "held"
    anchored: tuple[bool, ...] = ()
    wholesale: bool = False  # structural change forced the full proposal


def _midpoint_crossed(
    prev_cut: float,
    prev_anchored: bool,
    t_star: float,
    valleys: ValleySet,
    max_drift: float,
    eps_edge: float,
) -> tuple[bool, str]:
    if not prev_anchored:
        return False, ""
    locs = valleys.locations()
    if locs.size == 0:
        return True, "anchor_died_no_valleys"
    dist = np.abs(locs - prev_cut)
    nearest = int(np.argmin(dist))
    if dist[nearest] > max_drift:
        return True, "anchor_died"
    anchor = locs[nearest]
    direction = np.sign(t_star - anchor)
    if direction == 0:
        return False, ""
    beyond = locs[locs > anchor] if direction > 0 else locs[locs < anchor]
    if not beyond.size:
        # nothing to re-anchor toward; the snap argmin already weighed t*
        return False, ""
    adj = beyond.min() if direction > 0 else beyond.max()
    midpoint = 0.5 * (anchor + adj)
    if direction > 0 and t_star > midpoint:
        return True, "midpoint_crossed"
    if direction < 0 and t_star < midpoint:
        return True, "midpoint_crossed"
    return False, ""


def hysteresis_gate(
    prev: HysteresisState,
    proposed: DeployedCuts,
    valleys: ValleySet,
    snapshot: DensitySnapshot,
    target: CapacityTarget,
    eps_edge: float = 0.02,
    max_drift: float = 0.05,
    realized_intake: Optional[float] = None,
) -> GateResult:
    """Keep each previously anchored cut unless moving is justified.

    An anchored cut moves when (a) the proposal reduces its density by at
    least eta, (b) the unconstrained quantile crossed the midpoint toward the
    adjacent valley (or the anchor valley died), or (c) the previous cut
    violates a guardrail: edge safety, capacity reachability under the
    estimate, or realized intake outside the tolerance. A previous cut that
    was not anchored is a quantile fallback and keeps tracking the quantile
    (anchoring from it still requires the eta improvement). First deployment
    always passes.
    """
    old = prev.previous
    if old is None:
        return GateResult(
            cuts=proposed.cuts,
            moved=tuple(True for _ in proposed.cuts),
            reasons=tuple("first_deployment" for _ in proposed.cuts),
            anchored=proposed.anchored,
        )
    if len(old.cuts) != len(proposed.cuts) or old.empty_standard != proposed.empty_standard:
        return GateResult(
            cuts=proposed.cuts,
            moved=tuple(True for _ in proposed.cuts),
            reasons=tuple("structure_changed" for _ in proposed.cuts),
            anchored=proposed.anchored,
            wholesale=True,
        )
    kappas = (
        (float(target.kappa_up_std), target.kappa_up)
        if len(proposed.cuts) == 2
        else (target.kappa_up,)
    )
    out_cuts: list[float] = []
    moved: list[bool] = []
    reasons: list[str] = []
    anchored_out: list[bool] = []
    for i, (c_old, c_new) in enumerate(zip(old.cuts, proposed.cuts)):
        kappa = kappas[i]
        reason = "held"
        move = False
        anchor_new = proposed.anchored[i]
        f_old = snapshot.density_at(c_old)
        f_new = snapshot.density_at(c_new)
        if not old.anchored[i]:
            # quantile fallback: keep tracking the quantile; anchoring onto a
            # valley still needs the elasticity improvement
            if anchor_new:
                f_ref = snapshot.density_at(proposed.t_stars[i])
                if f_new <= (1.0 - prev.eta) * f_ref:
                    move, reason = True, "elasticity_improved"
                else:
                    c_new = proposed.t_stars[i]
                    anchor_new = False
                    move, reason = True, "quantile_track"
            else:
                move, reason = True, "quantile_track"
        if not move and f_new <= (1.0 - prev.eta) * f_old:
            move, reason = True, "elasticity_improved"
        if not move:
            crossed, why = _midpoint_crossed(
                c_old, old.anchored[i], proposed.t_stars[i], valleys, max_drift, eps_edge
            )
            if crossed:
                move, reason = True, why
        if not move:
            if c_old < eps_edge or c_old > 1.0 - eps_edge:
                move, reason = True, "edge_guardrail"
            elif (
                tail_mass(snapshot.values, c_old, snapshot.grid)
                < kappa - target.delta / target.count_basis
            ):
                move, reason = True, "capacity_unreachable"
            elif (
                i == len(proposed.cuts) - 1
                and realized_intake is not None
                and abs(realized_intake - kappa * target.count_basis) > target.delta
            ):
                move, reason = True, "capacity_tolerance"
        out_cuts.append(c_new if move else c_old)
        moved.append(move)
        reasons.append(reason)
        anchored_out.append(anchor_new if move else old.anchored[i])
    if len(out_cuts) == 2 and out_cuts[1] - out_cuts[0] < snapshot.grid.spacing:
        return GateResult(
            cuts=proposed.cuts,
            moved=(True, True),
            reasons=("ordering_repair", "ordering_repair"),
            anchored=proposed.anchored,
            wholesale=True,
        )
    return GateResult(
        cuts=tuple(out_cuts),
        moved=tuple(moved),
        reasons=tuple(reasons),
        anchored=tuple(anchored_out),
    )


# ---------------------------------------------------------------------------
# Helpers shared with the engine
# ---------------------------------------------------------------------------


def allocate_quotas(total_capacity: float, weights: Sequence[float]) -> list[float]:
    """Split a global capacity across streams proportionally to weights."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ConfigError("weights must be nonnegative")
    s = w.sum()
    if s <= 0:
        raise ConfigError("weights must not sum to zero")
    return [float(total_capacity * wi / s) for wi in w]


def avoid_knife_edge(cut: float, step: float) -> float:
    """Move a cut off score atoms onto the midpoint between adjacent atoms."""
    if step <= 0.0:
        return cut
    return float((np.floor(cut / step) + 0.5) * step)
