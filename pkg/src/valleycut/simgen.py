"""Deterministic synthetic score streams and the backlog recursion.

Streams are Beta mixtures on [0,1] with optional slow drift (linear keyframe
interpolation), seasonal weight modulation, instantaneous regime shifts,
score discretization, and timed stress events. Every draw is a pure function
of (seed, interval index), so two runs of the same scenario are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DomainError

STRESS_KINDS = ("tail_explosion", "valley_vanish", "rounding_shift")


@dataclass(frozen=True)
class BetaComponent:
    alpha: float
    beta: float
    weight: float

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ConfigError(f"Beta parameters must be positive, got ({self.alpha}, {self.beta})")
        if self.weight < 0:
            raise ConfigError(f"component weight must be nonnegative, got {self.weight}")

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    @property
    def concentration(self) -> float:
        return self.alpha + self.beta


@dataclass(frozen=True)
class Seasonality:
    amplitude: float
    period: float  # in intervals


@dataclass(frozen=True)
class StressEvent:
    kind: str
    t_start: int
    duration: int
    magnitude: float = 0.0  # kind-specific: weight / unused / coarse step

    def active(self, t: int) -> bool:
        return self.t_start <= t < self.t_start + self.duration


@dataclass(frozen=True)
class CapacitySchedule:
    """Escalation intake ratio with optional short multiplicative bursts."""

    kappa: float
    kappa_total: Optional[float] = None  # combined two-cut target, when used
    bursts: tuple[tuple[int, int, float], ...] = ()  # (t_start, duration, factor)
    review_ratio: float = 1.0  # R_t = review_ratio * C_t

    def kappa_at(self, t: int) -> float:
        k = self.kappa
        for t0, dur, factor in self.bursts:
            if t0 <= t < t0 + dur:
                k = k * factor
        return float(min(max(k, 1e-6), 1.0))


@dataclass(frozen=True)
class BAStreamProfile:
    """Full specification of one synthetic business-activity stream."""

    name: str
    components: tuple[BetaComponent, ...]
    rate: int
    capacity: CapacitySchedule
    seed: int = 0
    discretization_step: float = 0.0
    drift_schedule: tuple[tuple[int, tuple[BetaComponent, ...]], ...] = ()
    regime_shifts: tuple[tuple[int, tuple[BetaComponent, ...]], ...] = ()
    seasonality: Optional[Seasonality] = None
    stress: tuple[StressEvent, ...] = ()

    def __post_init__(self):
        if self.rate <= 0:
            raise ConfigError("rate must be positive")
        if self.discretization_step < 0:
            raise ConfigError("discretization_step must be >= 0")
        if not self.components:
            raise ConfigError("profile needs at least one Beta component")


def _interp_components(
    a: Sequence[BetaComponent], b: Sequence[BetaComponent], frac: float
) -> tuple[BetaComponent, ...]:
    if len(a) != len(b):
        raise ConfigError("drift keyframes must keep the component count fixed")
    out = []
    for ca, cb in zip(a, b):
        out.append(
            BetaComponent(
                alpha=ca.alpha + (cb.alpha - ca.alpha) * frac,
                beta=ca.beta + (cb.beta - ca.beta) * frac,
                weight=ca.weight + (cb.weight - ca.weight) * frac,
            )
        )
    return tuple(out)


def effective_components(profile: BAStreamProfile, t: int) -> tuple[BetaComponent, ...]:
    """Mixture at interval t: drift, then regime shifts, seasonality, stress."""
    comps = profile.components
    if profile.drift_schedule:
        keys = sorted(profile.drift_schedule, key=lambda kv: kv[0])
        if t <= keys[0][0]:
            comps = keys[0][1]
        elif t >= keys[-1][0]:
            comps = keys[-1][1]
        else:
            for (t0, c0), (t1, c1) in zip(keys, keys[1:]):
                if t0 <= t < t1:
                    comps = _interp_components(c0, c1, (t - t0) / (t1 - t0))
                    break
    for t_shift, repl in sorted(profile.regime_shifts, key=lambda kv: kv[0]):
        if t >= t_shift:
            comps = tuple(repl)
    if profile.seasonality is not None:
        amp, period = profile.seasonality.amplitude, profile.seasonality.period
        k = len(comps)
        comps = tuple(
            replace(
                c,
                weight=c.weight
                * max(1.0 + amp * math.sin(2.0 * math.pi * (t / period) + 2.0 * math.pi * i / k), 0.05),
            )
            for i, c in enumerate(comps)
        )
    for ev in profile.stress:
        if not ev.active(t):
            continue
        if ev.kind == "tail_explosion":
            w_total = sum(c.weight for c in comps)
            comps = comps + (BetaComponent(20.0, 2.0, (ev.magnitude or 0.25) * w_total),)
        elif ev.kind == "valley_vanish":
            comps = _merge_two_heaviest(comps, (t - ev.t_start + 1) / ev.duration)
        # rounding_shift only changes discretization; handled in step_at
    return comps


def _merge_two_heaviest(comps: tuple[BetaComponent, ...], progress: float) -> tuple[BetaComponent, ...]:
    progress = min(max(progress, 0.0), 1.0)
    if len(comps) < 2:
        return comps
    order = sorted(range(len(comps)), key=lambda i: -comps[i].weight)
    i, j = sorted(order[:2])
    ci, cj = comps[i], comps[j]
    target = (ci.weight * ci.mean + cj.weight * cj.mean) / max(ci.weight + cj.weight, 1e-12)
    out = list(comps)
    for idx, c in ((i, ci), (j, cj)):
        mu = c.mean + (target - c.mean) * progress
        nu = c.concentration
        out[idx] = BetaComponent(alpha=mu * nu, beta=(1.0 - mu) * nu, weight=c.weight)
    return tuple(out)


def step_at(profile: BAStreamProfile, t: int) -> float:
    """Discretization step at interval t (rounding_shift stress applies here)."""
    step = profile.discretization_step
    for ev in profile.stress:
        if ev.kind == "rounding_shift" and ev.active(t):
            step = ev.magnitude or 0.05
    return step


def generate_interval(
    profile: BAStreamProfile, t: int, seed_override: Optional[int] = None
) -> np.ndarray:
    """Draw `rate` scores from the interval-t mixture; deterministic in (seed, t)."""
    seed = profile.seed if seed_override is None else seed_override
    rng = np.random.default_rng([int(seed) & 0x7FFFFFFF, int(t)])
    comps = effective_components(profile, t)
    w = np.array([c.weight for c in comps], dtype=float)
    w = w / w.sum()
    a = np.array([c.alpha for c in comps])
    b = np.array([c.beta for c in comps])
    idx = rng.choice(len(comps), size=profile.rate, p=w)
    scores = rng.beta(a[idx], b[idx])
    step = step_at(profile, t)
    if step > 0:
        scores = np.clip(np.round(scores / step) * step, 0.0, 1.0)
    return scores


def mixture_pdf(comps: Sequence[BetaComponent], x) -> np.ndarray:
    """Analytic mixture density (weights renormalized)."""
    x = np.asarray(x, dtype=float)
    w = np.array([c.weight for c in comps])
    w = w / w.sum()
    out = np.zeros_like(x)
    for c, wi in zip(comps, w):
        lognorm = math.lgamma(c.alpha + c.beta) - math.lgamma(c.alpha) - math.lgamma(c.beta)
        with np.errstate(divide="ignore", invalid="ignore"):
            logpdf = (
                lognorm
                + (c.alpha - 1.0) * np.log(x)
                + (c.beta - 1.0) * np.log1p(-x)
            )
        pdf = np.where((x > 0) & (x < 1), np.exp(logpdf), 0.0)
        if c.alpha >= 1.0 and c.beta >= 1.0:
            # closed endpoints where the density is finite
            pdf = np.where(x == 0.0, math.exp(lognorm) if c.alpha == 1.0 else 0.0, pdf)
            pdf = np.where(x == 1.0, math.exp(lognorm) if c.beta == 1.0 else 0.0, pdf)
        out = out + wi * pdf
    return out


# ---------------------------------------------------------------------------
# Built-in stream shapes
# ---------------------------------------------------------------------------


def builtin_profiles(
    rate: int = 6000, kappa: float = 0.05, seed: int = 0
) -> dict[str, BAStreamProfile]:
    """The three reference stream shapes.

    unimodal: single skewed mode, no interior valley (quantile-fallback path);
    bimodal: two symmetric modes with a deep narrow valley at 0.5;
    trimodal: low bulk plus two crowded high modes, two interior valleys.
    """
    cap = CapacitySchedule(kappa=kappa)
    return {
        "unimodal": BAStreamProfile(
            name="unimodal",
            components=(BetaComponent(2.0, 5.0, 1.0),),
            rate=rate,
            capacity=cap,
            seed=seed,
        ),
        "bimodal": BAStreamProfile(
            name="bimodal",
            components=(BetaComponent(22.0, 41.0, 0.5), BetaComponent(41.0, 22.0, 0.5)),
            rate=rate,
            capacity=cap,
            seed=seed,
        ),
        "trimodal": BAStreamProfile(
            name="trimodal",
            components=(
                BetaComponent(2.0, 10.0, 0.5),
                BetaComponent(24.0, 10.0, 0.3),
                BetaComponent(60.0, 5.0, 0.2),
            ),
            rate=rate,
            capacity=cap,
            seed=seed,
        ),
    }


def stress_event(
    profile: BAStreamProfile,
    kind: str,
    t_start: int,
    duration: int,
    magnitude: float = 0.0,
) -> BAStreamProfile:
    """Profile with one more timed stress event; reverts after the window."""
    if kind not in STRESS_KINDS:
        raise ConfigError(f"unknown stress kind {kind!r}; expected one of {STRESS_KINDS}")
    if duration <= 0:
        raise ConfigError("stress duration must be positive")
    ev = StressEvent(kind=kind, t_start=int(t_start), duration=int(duration), magnitude=magnitude)
    return replace(profile, stress=profile.stress + (ev,))


# ---------------------------------------------------------------------------
# Backlog recursion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BacklogState:
    backlog: float = 0.0
    breach_threshold: float = float("inf")  # beta * C
    breached: bool = False


def backlog_step(state: BacklogState, arrivals: float, review_capacity: float) -> BacklogState:
    """B <- max(0, B + A - R), flagging breaches of the threshold."""
    if arrivals < 0 or review_capacity < 0:
        raise DomainError("arrivals and review capacity must be nonnegative")
    b = max(0.0, state.backlog + arrivals - review_capacity)
    return BacklogState(
        backlog=b,
        breach_threshold=state.breach_threshold,
        breached=b > state.breach_threshold,
    )
