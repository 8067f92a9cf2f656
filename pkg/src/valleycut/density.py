"""Per-stream online density state on a fixed unit-interval grid.

Two streaming estimators share the same machinery:

* exponential forgetting -- the grid relaxes toward each arriving score's
  reflected stencil with factor alpha;
* sliding window -- a running sum of the stencils of the last W scores, with
  eviction subtracting exactly what insertion added (each score's bandwidth
  profile is frozen at insertion time via a small epoch bank).

Each stencil is normalized by its own trapezoidal integral before entering
the state, so the discrete mass of the estimate is conserved exactly (up to
float rounding) after every update, matching the exact-mass property of the
convex recursion.

A pilot density (same recursion, fixed global bandwidth) feeds the
square-root adaptive bandwidth profile: h(x) = h0 * sqrt(g / pilot(x)),
clipped to [h_min, h_max], with g the geometric mean of the floored pilot.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._backend import active_backend, njit
from .errors import ConfigError, DomainError
from . import bandwidth as _bw

DEFAULT_GRID_SIZE = 512
DEFAULT_H_MIN = 0.005
DEFAULT_H_MAX = 0.25
DEFAULT_EPS_FLOOR = 1e-4
MIN_GRID_SIZE = 64
MIN_WINDOW = 50


@dataclass(frozen=True)
class Grid:
    """Uniform grid on [0,1] with trapezoid weights."""

    points: np.ndarray
    spacing: float
    trapz_weights: np.ndarray

    @classmethod
    def uniform(cls, size: int) -> "Grid":
        if size < MIN_GRID_SIZE:
            raise ConfigError(f"grid size must be >= {MIN_GRID_SIZE}, got {size}")
        pts = np.linspace(0.0, 1.0, size)
        dx = 1.0 / (size - 1)
        w = np.full(size, dx)
        w[0] = w[-1] = dx / 2.0
        return cls(points=pts, spacing=dx, trapz_weights=w)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def integrate(self, values: np.ndarray) -> float:
        return float(self.trapz_weights @ values)


@dataclass(frozen=True)
class EstimatorMode:
    """Sliding window of W scores or exponential forgetting with factor alpha."""

    kind: str  # "window" | "forgetting"
    window: int = 0
    alpha: float = 0.0

    @classmethod
    def sliding_window(cls, window: int) -> "EstimatorMode":
        if window < MIN_WINDOW:
            raise ConfigError(f"window must be >= {MIN_WINDOW}, got {window}")
        return cls(kind="window", window=int(window))

    @classmethod
    def exponential_forgetting(cls, alpha: float) -> "EstimatorMode":
        if not 0.0 < alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0,1), got {alpha}")
        return cls(kind="forgetting", alpha=float(alpha))

    @property
    def is_window(self) -> bool:
        return self.kind == "window"


@dataclass
class BandwidthProfile:
    """Per-grid-point bandwidth with the global scale that produced it."""

    h0: float
    per_point: np.ndarray
    h_min: float
    h_max: float
    geo_mean: float

    def __post_init__(self):
        if not (0.0 < self.h_min <= self.h_max <= 1.0):
            raise ConfigError(
                f"need 0 < h_min <= h_max <= 1, got ({self.h_min}, {self.h_max})"
            )


class PilotDensity:
    """Fixed-bandwidth auxiliary estimate feeding the adaptive profile."""

    def __init__(self, grid: Grid, mode: EstimatorMode, floor: float = DEFAULT_EPS_FLOOR):
        self.grid = grid
        self.mode = mode
        self.floor = float(floor)
        self.h0 = 0.0  # set by apply_profile / init_state
        if mode.is_window:
            self._sum = np.zeros(grid.size)
        else:
            self._vals = np.ones(grid.size)
        self._count = 0  # mirror of the owning state's window count

    @property
    def values(self) -> np.ndarray:
        if self.mode.is_window:
            if self._count == 0:
                return np.ones(self.grid.size)
            return np.maximum(self._sum, 0.0) / self._count
        return self._vals

    def floored(self) -> np.ndarray:
        return np.maximum(self.values, self.floor)


class GridDensity:
    """Streaming density estimate plus the bookkeeping its updates need."""

    def __init__(
        self,
        grid: Grid,
        mode: EstimatorMode,
        profile_slots: int = 64,
        reflect: bool = True,
    ):
        self.grid = grid
        self.mode = mode
        self.reflect = bool(reflect)
        self.event_count = 0
        self.rejected_count = 0
        self.current_epoch = 0
        self._installed: Optional[BandwidthProfile] = None
        self.active_pilot_h = 0.0
        if mode.is_window:
            w = mode.window
            self._sum = np.zeros(grid.size)
            self._ring_scores = np.zeros(w)
            self._ring_epoch = np.zeros(w, dtype=np.int64)
            self._head = 0
            self._count = 0
            slots = int(profile_slots)
            if slots < 2:
                raise ConfigError("profile_slots must be >= 2")
            self._bank = np.zeros((slots, grid.size))
            self._pilot_h_bank = np.zeros(slots)
        else:
            self._vals = np.ones(grid.size)
            # streaming first/second moments, seeded at the uniform prior
            self._m1 = 0.5
            self._m2 = 1.0 / 3.0

    # -- views ------------------------------------------------------------
    @property
    def values(self) -> np.ndarray:
        if self.mode.is_window:
            if self._count == 0:
                return np.ones(self.grid.size)
            return np.maximum(self._sum, 0.0) / self._count
        return self._vals

    @property
    def n_eff(self) -> float:
        if self.mode.is_window:
            return float(min(self.event_count, self.mode.window))
        return float(min(self.event_count, 1.0 / self.mode.alpha))

    @property
    def active_h(self) -> np.ndarray:
        if self.mode.is_window:
            return self._bank[self.current_epoch % self._bank.shape[0]]
        return self._active_h_arr

    def window_scores(self) -> np.ndarray:
        """Scores currently retained (windowed mode only), oldest first."""
        if not self.mode.is_window:
            raise ConfigError("window_scores only exists in windowed mode")
        if self._count == 0:
            return np.empty(0)
        idx = (self._head - self._count + np.arange(self._count)) % self.mode.window
        return self._ring_scores[idx].copy()

    def sample_std(self) -> float:
        if self.mode.is_window:
            scores = self.window_scores()
            if scores.size == 0:
                return float(np.sqrt(1.0 / 12.0))
            return float(np.std(scores))
        return float(np.sqrt(max(self._m2 - self._m1 * self._m1, 0.0)))

    def integral(self) -> float:
        return self.grid.integrate(self.values)


def init_state(
    grid_size: int,
    mode: EstimatorMode,
    h_min: float = DEFAULT_H_MIN,
    h_max: float = DEFAULT_H_MAX,
    eps_floor: float = DEFAULT_EPS_FLOOR,
    profile_slots: int = 64,
    reflect: bool = True,
) -> tuple[GridDensity, PilotDensity, BandwidthProfile]:
    """Uniform-density starting state with a normal-reference initial profile."""
    if not (0.0 < h_min <= h_max <= 1.0):
        raise ConfigError(f"need 0 < h_min <= h_max <= 1, got ({h_min}, {h_max})")
    grid = Grid.uniform(grid_size)
    state = GridDensity(grid, mode, profile_slots=profile_slots, reflect=reflect)
    pilot = PilotDensity(grid, mode, floor=eps_floor)
    # uniform prior: std 1/sqrt(12), n treated as 1
    h0 = _bw.h0_normal_reference(1.0, float(np.sqrt(1.0 / 12.0)), h_min=h_min, h_max=h_max)
    profile = BandwidthProfile(
        h0=h0,
        per_point=np.full(grid.size, h0),
        h_min=h_min,
        h_max=h_max,
        geo_mean=1.0,
    )
    pilot.h0 = h0
    if not mode.is_window:
        state._active_h_arr = profile.per_point.copy()
    apply_profile(state, pilot, profile)
    return state, pilot, profile


def apply_profile(state: GridDensity, pilot: PilotDensity, bw: BandwidthProfile) -> None:
    """Install a bandwidth profile for subsequent updates.

    Windowed mode snapshots the profile into the epoch bank so that eviction
    can subtract exactly the stencil that insertion added.
    """
    if state.mode.is_window:
        slots = state._bank.shape[0]
        new_epoch = state.current_epoch + 1 if state._installed is not None else 0
        if state._count > 0:
            oldest = int(state._ring_epoch[(state._head - state._count) % state.mode.window])
            if new_epoch - oldest >= slots:
                raise ConfigError(
                    "profile_slots too small for this refresh cadence; "
                    "increase profile_slots or refresh less often"
                )
        state.current_epoch = new_epoch
        state._bank[new_epoch % slots] = bw.per_point
        state._pilot_h_bank[new_epoch % slots] = pilot.h0
    else:
        state._active_h_arr = np.asarray(bw.per_point, dtype=float)
        state.current_epoch += 1
    state.active_pilot_h = float(pilot.h0)
    state._installed = bw
    pilot._count = getattr(state, "_count", 0)


# ---------------------------------------------------------------------------
# Streaming updates: numba loops with numpy fallbacks. Each event deposits a
# reflected stencil whose bandwidth is the profile evaluated at the score
# (Abramson's sample-point rule; keying the bandwidth to the evaluation point
# instead lets clip-widened kernels in empty regions scoop bulk mass into the
# tails, which wrecks the tail-mass curve the capacity matching depends on).
# Every stencil is normalized by its discrete trapezoid integral; bandwidths
# are floored at the grid spacing so that integral can never vanish.
# ---------------------------------------------------------------------------


def bandwidth_at_score(h_profile: np.ndarray, grid: Grid, score: float) -> float:
    """Profile linearly interpolated at the score location."""
    pos = score / grid.spacing
    j = min(int(pos), grid.size - 2)
    frac = pos - j
    return float(h_profile[j] * (1.0 - frac) + h_profile[j + 1] * frac)


def _norm_stencil_np(grid_pts, w, s, h, dx, reflect):
    h_eff = max(float(h), dx)
    u0 = (grid_pts - s) / h_eff
    out = np.where(np.abs(u0) <= 1.0, 0.75 * (1.0 - u0 * u0), 0.0)
    if reflect:
        u1 = (grid_pts + s) / h_eff
        u2 = (grid_pts - (2.0 - s)) / h_eff
        out = out + np.where(np.abs(u1) <= 1.0, 0.75 * (1.0 - u1 * u1), 0.0)
        out = out + np.where(np.abs(u2) <= 1.0, 0.75 * (1.0 - u2 * u2), 0.0)
    out = out / h_eff
    z = w @ out
    return out / z


@njit(cache=True)
def _h_at_score_nb(hprof, dx, s, n):  # pragma: no cover - jit twin
    pos = s / dx
    j = int(pos)
    if j > n - 2:
        j = n - 2
    frac = pos - j
    return hprof[j] * (1.0 - frac) + hprof[j + 1] * frac


@njit(cache=True)
def _fill_norm_stencil_scalar_nb(out, grid_pts, w, s, h, dx, reflect):  # pragma: no cover
    n = grid_pts.shape[0]
    hj = h if h >= dx else dx
    z = 0.0
    for j in range(n):
        acc = 0.0
        u = (grid_pts[j] - s) / hj
        if -1.0 <= u <= 1.0:
            acc += 0.75 * (1.0 - u * u)
        if reflect:
            u = (grid_pts[j] + s) / hj
            if -1.0 <= u <= 1.0:
                acc += 0.75 * (1.0 - u * u)
            u = (grid_pts[j] - (2.0 - s)) / hj
            if -1.0 <= u <= 1.0:
                acc += 0.75 * (1.0 - u * u)
        acc /= hj
        out[j] = acc
        z += w[j] * acc
    for j in range(n):
        out[j] /= z


@njit(cache=True)
def _forgetting_batch_nb(
    fvals, pvals, grid_pts, w, hprof, hpilot, alpha, scores, reflect, moments, mass_track
):  # pragma: no cover - jit twin of the numpy path
    n = grid_pts.shape[0]
    dx = grid_pts[1] - grid_pts[0]
    stencil = np.empty(n)
    pstencil = np.empty(n)
    accepted = 0
    track = mass_track.shape[0] > 0
    for i in range(scores.shape[0]):
        s = scores[i]
        if not (0.0 <= s <= 1.0):
            if track:
                mass_track[i] = np.nan
            continue
        hs = _h_at_score_nb(hprof, dx, s, n)
        _fill_norm_stencil_scalar_nb(stencil, grid_pts, w, s, hs, dx, reflect)
        _fill_norm_stencil_scalar_nb(pstencil, grid_pts, w, s, hpilot, dx, reflect)
        m = 0.0
        for j in range(n):
            fvals[j] = (1.0 - alpha) * fvals[j] + alpha * stencil[j]
            pvals[j] = (1.0 - alpha) * pvals[j] + alpha * pstencil[j]
            m += w[j] * fvals[j]
        moments[0] = (1.0 - alpha) * moments[0] + alpha * s
        moments[1] = (1.0 - alpha) * moments[1] + alpha * s * s
        if track:
            mass_track[i] = m
        accepted += 1
    return accepted


@njit(cache=True)
def _window_batch_nb(
    ksum,
    psum,
    ring_scores,
    ring_epoch,
    counters,
    bank,
    pilot_h_bank,
    grid_pts,
    w,
    scores,
    reflect,
    mass_track,
):  # pragma: no cover - jit twin of the numpy path
    n = grid_pts.shape[0]
    W = ring_scores.shape[0]
    slots = bank.shape[0]
    dx = grid_pts[1] - grid_pts[0]
    stencil = np.empty(n)
    head = counters[0]
    count = counters[1]
    cur_epoch = counters[2]
    accepted = 0
    track = mass_track.shape[0] > 0
    for i in range(scores.shape[0]):
        s = scores[i]
        if not (0.0 <= s <= 1.0):
            if track:
                mass_track[i] = np.nan
            continue
        if count == W:
            old_s = ring_scores[head]
            old_e = ring_epoch[head]
            h_old = _h_at_score_nb(bank[old_e % slots], dx, old_s, n)
            _fill_norm_stencil_scalar_nb(stencil, grid_pts, w, old_s, h_old, dx, reflect)
            for j in range(n):
                ksum[j] -= stencil[j]
            _fill_norm_stencil_scalar_nb(
                stencil, grid_pts, w, old_s, pilot_h_bank[old_e % slots], dx, reflect
            )
            for j in range(n):
                psum[j] -= stencil[j]
        else:
            count += 1
        ring_scores[head] = s
        ring_epoch[head] = cur_epoch
        head = (head + 1) % W
        hs = _h_at_score_nb(bank[cur_epoch % slots], dx, s, n)
        _fill_norm_stencil_scalar_nb(stencil, grid_pts, w, s, hs, dx, reflect)
        for j in range(n):
            ksum[j] += stencil[j]
        _fill_norm_stencil_scalar_nb(
            stencil, grid_pts, w, s, pilot_h_bank[cur_epoch % slots], dx, reflect
        )
        for j in range(n):
            psum[j] += stencil[j]
        if track:
            m = 0.0
            for j in range(n):
                v = ksum[j]
                if v < 0.0:
                    v = 0.0
                m += w[j] * v
            mass_track[i] = m / count
        accepted += 1
    counters[0] = head
    counters[1] = count
    counters[2] = cur_epoch
    return accepted


def _forgetting_batch_np(state, pilot, scores, mass_track):
    grid_pts = state.grid.points
    w = state.grid.trapz_weights
    dx = state.grid.spacing
    alpha = state.mode.alpha
    accepted = 0
    track = mass_track is not None
    for i, s in enumerate(scores):
        if not (0.0 <= s <= 1.0):
            if track:
                mass_track[i] = np.nan
            continue
        hs = bandwidth_at_score(state._active_h_arr, state.grid, s)
        stencil = _norm_stencil_np(grid_pts, w, s, hs, dx, state.reflect)
        pstencil = _norm_stencil_np(grid_pts, w, s, state.active_pilot_h, dx, state.reflect)
        state._vals *= 1.0 - alpha
        state._vals += alpha * stencil
        pilot._vals *= 1.0 - alpha
        pilot._vals += alpha * pstencil
        state._m1 = (1.0 - alpha) * state._m1 + alpha * s
        state._m2 = (1.0 - alpha) * state._m2 + alpha * s * s
        if track:
            mass_track[i] = w @ state._vals
        accepted += 1
    return accepted


def _window_batch_np(state, pilot, scores, mass_track):
    grid_pts = state.grid.points
    w = state.grid.trapz_weights
    dx = state.grid.spacing
    W = state.mode.window
    slots = state._bank.shape[0]
    accepted = 0
    track = mass_track is not None
    for i, s in enumerate(scores):
        if not (0.0 <= s <= 1.0):
            if track:
                mass_track[i] = np.nan
            continue
        if state._count == W:
            old_s = state._ring_scores[state._head]
            old_e = int(state._ring_epoch[state._head])
            h_old = bandwidth_at_score(state._bank[old_e % slots], state.grid, old_s)
            state._sum -= _norm_stencil_np(grid_pts, w, old_s, h_old, dx, state.reflect)
            pilot._sum -= _norm_stencil_np(
                grid_pts, w, old_s, state._pilot_h_bank[old_e % slots], dx, state.reflect
            )
        else:
            state._count += 1
        state._ring_scores[state._head] = s
        state._ring_epoch[state._head] = state.current_epoch
        state._head = (state._head + 1) % W
        cur = state.current_epoch % slots
        hs = bandwidth_at_score(state._bank[cur], state.grid, s)
        state._sum += _norm_stencil_np(grid_pts, w, s, hs, dx, state.reflect)
        pilot._sum += _norm_stencil_np(
            grid_pts, w, s, state._pilot_h_bank[cur], dx, state.reflect
        )
        if track:
            mass_track[i] = (w @ np.maximum(state._sum, 0.0)) / state._count
        accepted += 1
    return accepted


def ingest_batch(
    state: GridDensity,
    pilot: PilotDensity,
    scores: np.ndarray,
    track_mass: bool = False,
) -> tuple[int, Optional[np.ndarray]]:
    """Feed a batch of scores through the streaming update (hot path).

    Returns (number accepted, per-step mass integrals when track_mass). Scores
    outside [0,1] (or NaN) are dropped and counted in the rejection tally.
    """
    scores = np.ascontiguousarray(scores, dtype=float)
    mass = np.empty(scores.shape[0]) if track_mass else None
    if active_backend() == "numba":
        empty = np.empty(0)
        if state.mode.is_window:
            counters = np.array([state._head, state._count, state.current_epoch], dtype=np.int64)
            accepted = _window_batch_nb(
                state._sum,
                pilot._sum,
                state._ring_scores,
                state._ring_epoch,
                counters,
                state._bank,
                state._pilot_h_bank,
                state.grid.points,
                state.grid.trapz_weights,
                scores,
                state.reflect,
                mass if mass is not None else empty,
            )
            state._head = int(counters[0])
            state._count = int(counters[1])
        else:
            moments = np.array([state._m1, state._m2])
            accepted = _forgetting_batch_nb(
                state._vals,
                pilot._vals,
                state.grid.points,
                state.grid.trapz_weights,
                state._active_h_arr,
                state.active_pilot_h,
                state.mode.alpha,
                scores,
                state.reflect,
                moments,
                mass if mass is not None else empty,
            )
            state._m1 = float(moments[0])
            state._m2 = float(moments[1])
    else:
        if state.mode.is_window:
            accepted = _window_batch_np(state, pilot, scores, mass)
        else:
            accepted = _forgetting_batch_np(state, pilot, scores, mass)
    state.event_count += accepted
    state.rejected_count += scores.shape[0] - accepted
    pilot._count = getattr(state, "_count", 0)
    return accepted, mass


def update_forgetting(
    state: GridDensity, pilot: PilotDensity, bw: BandwidthProfile, score: float
) -> GridDensity:
    """One exponential-forgetting update; rejects scores outside [0,1]."""
    if not state.mode.kind == "forgetting":
        raise ConfigError("state is not in forgetting mode")
    if bw is not state._installed:
        apply_profile(state, pilot, bw)
    if not (0.0 <= score <= 1.0):
        state.rejected_count += 1
        raise DomainError(f"score must lie in [0,1], got {score}")
    ingest_batch(state, pilot, np.array([score]))
    return state


def update_window(
    state: GridDensity, pilot: PilotDensity, bw: BandwidthProfile, score: float
) -> GridDensity:
    """One sliding-window update (insert, evict when full)."""
    if not state.mode.is_window:
        raise ConfigError("state is not in windowed mode")
    if bw is not state._installed:
        apply_profile(state, pilot, bw)
    if not (0.0 <= score <= 1.0):
        state.rejected_count += 1
        raise DomainError(f"score must lie in [0,1], got {score}")
    ingest_batch(state, pilot, np.array([score]))
    return state


# ---------------------------------------------------------------------------
# Adaptive bandwidth plumbing
# ---------------------------------------------------------------------------


def geometric_mean(pilot: PilotDensity) -> float:
    """exp of the trapezoid integral of log(max(pilot, floor)) over [0,1]."""
    vals = np.maximum(pilot.values, pilot.floor)
    return float(np.exp(pilot.grid.trapz_weights @ np.log(vals)))


def weighted_geometric_mean(pilot: PilotDensity) -> float:
    """Geometric mean of the pilot under its own mass, exp(int f log f).

    The bandwidth profile uses this variant: weighting by the pilot itself
    keeps the mean square-root factor near 1, where the uniform-in-x integral
    collapses whenever the stream leaves part of [0,1] empty (the floored
    near-zero stretches would otherwise drag every bandwidth down).
    """
    vals = np.maximum(pilot.values, pilot.floor)
    w = pilot.grid.trapz_weights * pilot.values
    total = w.sum()
    if total <= 0.0:
        return geometric_mean(pilot)
    return float(np.exp((w @ np.log(vals)) / total))


def abramson_profile(
    pilot: PilotDensity,
    h0: float,
    h_min: float,
    h_max: float,
    adaptive: bool = True,
) -> BandwidthProfile:
    """Square-root-law profile from the pilot; `adaptive=False` gives h == h0."""
    if h0 <= 0.0:
        raise ConfigError(f"h0 must be positive, got {h0}")
    g = weighted_geometric_mean(pilot)
    if adaptive:
        ref = np.maximum(pilot.values, pilot.floor)
        per_point = np.clip(h0 * np.sqrt(g / ref), h_min, h_max)
    else:
        per_point = np.full(pilot.grid.size, float(np.clip(h0, h_min, h_max)))
    return BandwidthProfile(
        h0=float(h0), per_point=per_point, h_min=h_min, h_max=h_max, geo_mean=g
    )


# ---------------------------------------------------------------------------
# Tail mass and snapshots
# ---------------------------------------------------------------------------


def _coerce_values_grid(state, grid: Optional[Grid]):
    if isinstance(state, np.ndarray):
        if grid is None:
            raise ConfigError("grid required when passing a raw value array")
        return state, grid
    return state.values, state.grid


def tail_masses_on_grid(values: np.ndarray, grid: Grid) -> np.ndarray:
    """U_j = trapezoid integral of the density from x_j to 1, for every j."""
    cell = 0.5 * (values[:-1] + values[1:]) * grid.spacing
    out = np.zeros(grid.size)
    out[:-1] = np.cumsum(cell[::-1])[::-1]
    return out


def tail_mass(state, c: float, grid: Optional[Grid] = None) -> float:
    """Mass of the estimate above c, with linear density interpolation at c."""
    values, g = _coerce_values_grid(state, grid)
    if not 0.0 <= c <= 1.0:
        raise DomainError(f"cut must lie in [0,1], got {c}")
    if c >= 1.0:
        return 0.0
    dx = g.spacing
    j = min(int(c / dx), g.size - 2)
    x_j = g.points[j]
    frac = (c - x_j) / dx
    v_c = values[j] + (values[j + 1] - values[j]) * frac
    partial = 0.5 * (v_c + values[j + 1]) * (g.points[j + 1] - c)
    rest = tail_masses_on_grid(values, g)[j + 1]
    return float(partial + rest)


@dataclass(frozen=True)
class DensitySnapshot:
    """Immutable view of a stream's density state between updates."""

    grid: Grid
    values: np.ndarray
    pilot_values: np.ndarray
    h_per_point: np.ndarray
    h0: float
    geo_mean: float
    n_eff: float
    event_count: int
    snapshot_id: int = 0

    def to_csv(self, path) -> None:
        header = "x,f_hat,pilot,h"
        data = np.column_stack(
            [self.grid.points, self.values, self.pilot_values, self.h_per_point]
        )
        np.savetxt(path, data, delimiter=",", header=header, comments="")

    def tail_mass(self, c: float) -> float:
        return tail_mass(self.values, c, self.grid)

    def density_at(self, x: float) -> float:
        return float(np.interp(x, self.grid.points, self.values))


def take_snapshot(
    state: GridDensity, pilot: PilotDensity, bw: BandwidthProfile, snapshot_id: int = 0
) -> DensitySnapshot:
    return DensitySnapshot(
        grid=state.grid,
        values=state.values.copy(),
        pilot_values=pilot.values.copy(),
        h_per_point=bw.per_point.copy(),
        h0=bw.h0,
        geo_mean=bw.geo_mean,
        n_eff=state.n_eff,
        event_count=state.event_count,
        snapshot_id=snapshot_id,
    )
