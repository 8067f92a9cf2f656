"""Per-stream orchestration: ingest scores, refresh thresholds on a cadence.

The refresh sequence is: snapshot -> global-bandwidth refresh when due ->
adaptive profile -> valley detection + persistence + guards -> quantile
cut(s) -> snapping / pair selection -> within-band trim -> hysteresis gate ->
deploy, with every step captured in an audit record. All failure paths
degrade to documented fallbacks (quantile cut, previous cuts, or hold).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import bandwidth as bwsel
from . import capacity as cap
from . import density as dens
from . import router as rt
from . import valleys as val
from .errors import ConfigError


@dataclass
class EngineConfig:
    grid_size: int = dens.DEFAULT_GRID_SIZE
    mode: str = "forgetting"  # "forgetting" | "window"
    alpha: float = 0.01
    window: int = 2000
    h_min: float = dens.DEFAULT_H_MIN
    h_max: float = dens.DEFAULT_H_MAX
    eps_floor: float = dens.DEFAULT_EPS_FLOOR
    h0_refresh_every: int = 500  # events between global-bandwidth refreshes
    sj_enabled: bool = True
    sj_min_samples: int = 100
    ladder: tuple[float, ...] = val.DEFAULT_LADDER
    persistence_min_consecutive: int = val.DEFAULT_MIN_CONSECUTIVE
    tau: float = val.DEFAULT_TAU
    eps_edge: float = val.DEFAULT_EPS_EDGE
    min_support: float = val.DEFAULT_MIN_SUPPORT
    max_drift: float = val.DEFAULT_MAX_DRIFT
    eta: float = 0.15
    min_n_eff: float = 50.0
    discretization_step: float = 0.0  # knife-edge avoidance when > 0
    # ablation toggles
    adaptive: bool = True
    reflect: bool = True
    snapping: bool = True
    hysteresis: bool = True

    def __post_init__(self):
        if self.h0_refresh_every < 1:
            raise ConfigError("h0_refresh_every must be >= 1")
        if self.mode not in ("forgetting", "window"):
            raise ConfigError(f"unknown estimator mode {self.mode!r}")
        if 1.0 not in self.ladder:
            raise ConfigError("persistence ladder must include 1.0")
        if not 0.0 <= self.eps_edge < 0.5:
            raise ConfigError(f"eps_edge must lie in [0, 0.5), got {self.eps_edge}")
        if self.tau < 0 or self.min_support < 0 or self.min_n_eff < 0:
            raise ConfigError("tau, min_support and min_n_eff must be nonnegative")
        if self.max_drift <= 0:
            raise ConfigError(f"max_drift must be positive, got {self.max_drift}")
        if not 0.0 < self.eta < 1.0:
            raise ConfigError(f"eta must lie in (0,1), got {self.eta}")

    def estimator_mode(self) -> dens.EstimatorMode:
        if self.mode == "window":
            return dens.EstimatorMode.sliding_window(self.window)
        return dens.EstimatorMode.exponential_forgetting(self.alpha)


@dataclass
class DecisionRecord:
    """Audit record for one threshold refresh."""

    interval_id: int
    held: bool
    hold_reason: str
    cuts: tuple[float, ...]
    trims: tuple[float, ...]
    anchored: tuple[bool, ...]
    elasticities: tuple[float, ...]
    t_stars: tuple[float, ...]
    t_star_elasticities: tuple[float, ...]
    empty_standard: bool
    candidates: list[dict]
    guardrails: tuple[str, ...]
    hysteresis_moved: tuple[bool, ...]
    hysteresis_reasons: tuple[str, ...]
    n_eff: float
    h0: float
    valley_count: int
    births: int
    deaths: int
    tie_break: bool
    expected_intake: float
    expected_counts: dict

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["cuts"] = list(self.cuts)
        d["trims"] = list(self.trims)
        d["anchored"] = list(self.anchored)
        d["elasticities"] = list(self.elasticities)
        d["t_stars"] = list(self.t_stars)
        d["t_star_elasticities"] = list(self.t_star_elasticities)
        d["guardrails"] = list(self.guardrails)
        d["hysteresis_moved"] = list(self.hysteresis_moved)
        d["hysteresis_reasons"] = list(self.hysteresis_reasons)
        return d


class StreamEngine:
    """One scored stream: density state, valley tracker, deployed cuts."""

    def __init__(self, config: EngineConfig):
        self.config = config
        mode = config.estimator_mode()
        slots = 8
        if config.mode == "window":
            slots = int(np.ceil(config.window / config.h0_refresh_every)) + 4
        self.state, self.pilot, self.profile = dens.init_state(
            config.grid_size,
            mode,
            h_min=config.h_min,
            h_max=config.h_max,
            eps_floor=config.eps_floor,
            profile_slots=slots,
            reflect=config.reflect,
        )
        self.hysteresis = cap.HysteresisState(previous=None, eta=config.eta)
        self.previous_valleys: Optional[val.ValleySet] = None
        self.deployed: Optional[cap.DeployedCuts] = None
        self._events_since_h0 = 0
        self._snapshot_seq = 0

    # -- ingest ------------------------------------------------------------
    def ingest(self, score: float) -> bool:
        """Feed one score; returns True when accepted."""
        accepted, _ = self.ingest_many(np.array([score], dtype=float))
        return accepted == 1

    def ingest_many(self, scores: np.ndarray) -> tuple[int, int]:
        """Feed a batch, refreshing the global bandwidth on its event cadence.

        Returns (accepted, rejected).
        """
        scores = np.asarray(scores, dtype=float)
        total_acc = 0
        total_rej = 0
        pos = 0
        while pos < scores.shape[0]:
            room = self.config.h0_refresh_every - self._events_since_h0
            chunk = scores[pos : pos + room]
            acc, _ = dens.ingest_batch(self.state, self.pilot, chunk)
            total_acc += acc
            total_rej += chunk.shape[0] - acc
            self._events_since_h0 += acc
            pos += chunk.shape[0]
            if self._events_since_h0 >= self.config.h0_refresh_every:
                self.refresh_bandwidth()
        return total_acc, total_rej

    def refresh_bandwidth(self) -> None:
        """Re-select h0, rebuild the adaptive profile, and install it."""
        self._events_since_h0 = 0
        n_eff = self.state.n_eff
        if n_eff < 1.0:
            return
        cfg = self.config
        std = self.state.sample_std()
        h0 = None
        if cfg.mode == "window" and cfg.sj_enabled:
            scores = self.state.window_scores()
            if scores.size >= cfg.sj_min_samples:
                h0 = bwsel.h0_sheather_jones(scores, h_min=cfg.h_min, h_max=cfg.h_max)
        if h0 is None:
            h0 = bwsel.h0_normal_reference(n_eff, std, h_min=cfg.h_min, h_max=cfg.h_max)
        self.pilot.h0 = bwsel.h0_normal_reference(n_eff, std, h_min=cfg.h_min, h_max=cfg.h_max)
        self.profile = dens.abramson_profile(
            self.pilot, h0, cfg.h_min, cfg.h_max, adaptive=cfg.adaptive
        )
        dens.apply_profile(self.state, self.pilot, self.profile)

    def snapshot(self) -> dens.DensitySnapshot:
        self._snapshot_seq += 1
        return dens.take_snapshot(self.state, self.pilot, self.profile, self._snapshot_seq)

    # -- refresh -----------------------------------------------------------
    def refresh(
        self,
        target: cap.CapacityTarget,
        interval_id: int = 0,
        realized_intake: Optional[float] = None,
    ) -> DecisionRecord:
        cfg = self.config
        if self.state.n_eff < cfg.min_n_eff:
            return self._hold_record(interval_id, "min_n_eff")
        snap = self.snapshot()
        guardrails: list[str] = []

        if cfg.snapping:
            vset, audits = val.find_valleys(
                snap,
                ladder=cfg.ladder,
                min_consecutive=cfg.persistence_min_consecutive,
                tau=cfg.tau,
                eps_edge=cfg.eps_edge,
                min_support=cfg.min_support,
                reflect=cfg.reflect,
            )
        else:
            vset, audits = val.ValleySet(valleys=(), source_snapshot_id=snap.snapshot_id), []

        births = deaths = 0
        if self.previous_valleys is not None:
            matching = val.match_valleys(self.previous_valleys, vset, cfg.max_drift)
            births, deaths = len(matching.births), len(matching.deaths)
        self.previous_valleys = vset

        tie_break = False
        if target.two_sided:
            sel = cap.select_pair(vset, snap, target)
            tie_break = sel.tie_break
            if sel.fallback:
                guardrails.append("pair_fallback_quantiles")
            if sel.empty_standard:
                cuts = (sel.c_up,)
                anchored = (sel.anchored[1],)
                t_stars = (sel.t_stars[1],)
            else:
                cuts = (sel.c_std, sel.c_up)
                anchored = sel.anchored
                t_stars = sel.t_stars
            empty_std = sel.empty_standard
        else:
            t_star = cap.quantile_cut(snap, target.kappa_up)
            if cfg.snapping:
                cut, anch = cap.snap_single(t_star, vset, snap, target.kappa_up)
            else:
                cut, anch = t_star, False
            cuts = (cut,)
            anchored = (anch,)
            t_stars = (t_star,)
            empty_std = False

        cuts, anchored, clamped = self._apply_cut_guards(cuts, anchored)
        guardrails.extend(clamped)

        proposed = cap.DeployedCuts(
            cuts=cuts,
            trims=cuts,  # placeholder, recomputed after gating
            anchored=anchored,
            elasticity=tuple(cap.elasticity(target.count_basis, snap, c) for c in cuts),
            t_stars=t_stars,
            empty_standard=empty_std,
        )

        if cfg.hysteresis:
            gate = cap.hysteresis_gate(
                self.hysteresis,
                proposed,
                vset,
                snap,
                target,
                eps_edge=cfg.eps_edge,
                max_drift=cfg.max_drift,
                realized_intake=realized_intake,
            )
            final_cuts = gate.cuts
            moved, reasons = gate.moved, gate.reasons
            anchored = gate.anchored
        else:
            final_cuts = cuts
            moved = tuple(True for _ in cuts)
            reasons = tuple("hysteresis_disabled" for _ in cuts)

        trims = self._compute_trims(final_cuts, snap, target, empty_std)
        deployed = cap.DeployedCuts(
            cuts=final_cuts,
            trims=trims,
            anchored=anchored,
            elasticity=tuple(cap.elasticity(target.count_basis, snap, c) for c in final_cuts),
            t_stars=t_stars,
            empty_standard=empty_std,
        )
        self.deployed = deployed
        self.hysteresis.previous = deployed

        expected = target.count_basis * snap.tail_mass(trims[-1])
        queue_counts = {
            label.value: count
            for label, count in rt.expected_counts(snap, deployed, target.count_basis).items()
        }
        return DecisionRecord(
            interval_id=interval_id,
            held=False,
            hold_reason="",
            cuts=deployed.cuts,
            trims=deployed.trims,
            anchored=deployed.anchored,
            elasticities=deployed.elasticity,
            t_stars=deployed.t_stars,
            t_star_elasticities=tuple(
                cap.elasticity(target.count_basis, snap, t) for t in t_stars
            ),
            empty_standard=empty_std,
            candidates=[a.to_dict() for a in audits],
            guardrails=tuple(guardrails),
            hysteresis_moved=moved,
            hysteresis_reasons=reasons,
            n_eff=snap.n_eff,
            h0=snap.h0,
            valley_count=len(vset),
            births=births,
            deaths=deaths,
            tie_break=tie_break,
            expected_intake=float(expected),
            expected_counts=queue_counts,
        )

    # -- internals ----------------------------------------------------------
    def _apply_cut_guards(
        self, cuts: tuple[float, ...], anchored: tuple[bool, ...]
    ) -> tuple[tuple[float, ...], tuple[bool, ...], list[str]]:
        cfg = self.config
        notes: list[str] = []
        adj = []
        for c in cuts:
            c2 = c
            if cfg.discretization_step > 0:
                c2 = cap.avoid_knife_edge(c2, cfg.discretization_step)
                if c2 != c:
                    notes.append("knife_edge_shift")
            clamped = float(np.clip(c2, cfg.eps_edge, 1.0 - cfg.eps_edge))
            if clamped != c2:
                notes.append("edge_clamp")
            adj.append(clamped)
        dx = self.state.grid.spacing
        if len(adj) == 2 and adj[1] - adj[0] < dx:
            adj[0] = max(cfg.eps_edge, adj[1] - dx)
            if adj[1] - adj[0] < dx:  # both pinned at the lower edge
                adj[1] = min(1.0 - cfg.eps_edge, adj[0] + dx)
            notes.append("ordering_repair")
        return tuple(adj), anchored, notes

    def _compute_trims(
        self,
        cuts: tuple[float, ...],
        snap: dens.DensitySnapshot,
        target: cap.CapacityTarget,
        empty_std: bool,
    ) -> tuple[float, ...]:
        if len(cuts) == 2 and not empty_std:
            return cap.pair_trims(cuts[0], cuts[1], snap, target)
        cut = cuts[-1]
        if snap.tail_mass(cut) >= target.kappa_up:
            return (cap.fine_tune(cut, snap, target.kappa_up),)
        return (cut,)  # capacity unreachable from here; take the whole region

    def _hold_record(self, interval_id: int, reason: str) -> DecisionRecord:
        prev = self.deployed
        cuts = prev.cuts if prev else ()
        return DecisionRecord(
            interval_id=interval_id,
            held=True,
            hold_reason=reason,
            cuts=cuts,
            trims=prev.trims if prev else (),
            anchored=prev.anchored if prev else (),
            elasticities=prev.elasticity if prev else (),
            t_stars=prev.t_stars if prev else (),
            t_star_elasticities=(),
            empty_standard=prev.empty_standard if prev else False,
            candidates=[],
            guardrails=("hold",),
            hysteresis_moved=(),
            hysteresis_reasons=(),
            n_eff=self.state.n_eff,
            h0=self.profile.h0,
            valley_count=0,
            births=0,
            deaths=0,
            tie_break=False,
            expected_intake=0.0,
            expected_counts={},
        )
