import numpy as np
import pytest

from valleycut import capacity as cap
from valleycut import simgen
from valleycut.engine import EngineConfig, StreamEngine
from valleycut.errors import ConfigError


def quick_config(**kw):
    defaults = dict(
        grid_size=256,
        mode="forgetting",
        alpha=0.005,
        min_n_eff=150.0,
        h0_refresh_every=200,
    )
    defaults.update(kw)
    return EngineConfig(**defaults)


class TestIngest:
    def test_valid_score_counts(self):
        e = StreamEngine(quick_config())
        assert e.ingest(0.5)
        assert e.state.event_count == 1
        assert e.state.rejected_count == 0

    def test_invalid_score_rejected(self):
        e = StreamEngine(quick_config())
        before = e.state.values.copy()
        assert not e.ingest(1.5)
        assert e.state.rejected_count == 1
        np.testing.assert_array_equal(e.state.values, before)

    def test_first_score_blends_from_uniform(self):
        e = StreamEngine(quick_config(alpha=0.5))
        e.ingest(0.5)
        # convex blend: below 1 far from the score, above 1 at it
        snap = e.snapshot()
        assert snap.density_at(0.5) > 1.0
        assert snap.density_at(0.05) < 1.0

    def test_bandwidth_refresh_cadence(self):
        e = StreamEngine(quick_config(h0_refresh_every=100))
        start_epoch = e.state.current_epoch
        rng = np.random.default_rng(0)
        e.ingest_many(rng.random(350))
        assert e.state.current_epoch == start_epoch + 3


class TestRefresh:
    def test_hold_below_min_n_eff(self):
        e = StreamEngine(quick_config(min_n_eff=1000))
        e.ingest_many(np.random.default_rng(0).random(100))
        rec = e.refresh(cap.CapacityTarget(kappa_up=0.05, count_basis=1000), 1)
        assert rec.held
        assert rec.hold_reason == "min_n_eff"
        assert rec.cuts == ()

    def test_uniform_stream_quantile_fallback(self):
        e = StreamEngine(quick_config())
        rng = np.random.default_rng(1)
        e.ingest_many(rng.random(3000))
        rec = e.refresh(cap.CapacityTarget(kappa_up=0.05, count_basis=1000), 1)
        assert not rec.held
        assert rec.cuts[0] == pytest.approx(0.95, abs=0.02)
        assert rec.anchored == (False,)

    def test_bimodal_anchors_when_tstar_on_shoulder(self):
        prof = simgen.builtin_profiles(rate=6000, seed=5)["bimodal"]
        e = StreamEngine(
            EngineConfig(mode="window", window=40000, min_n_eff=30000, h0_refresh_every=2000)
        )
        # kappa=0.25 puts t* on the right mode's shoulder where density is high
        target = cap.CapacityTarget(kappa_up=0.25, count_basis=6000)
        cuts = []
        for t in range(12):
            e.ingest_many(simgen.generate_interval(prof, t))
            if t >= 7:
                rec = e.refresh(target, t)
                cuts.append(rec.cuts[0])
                assert rec.anchored == (True,)
        assert cuts[0] == pytest.approx(0.5, abs=0.01)
        assert np.ptp(cuts) == 0.0  # zero jitter across consecutive refreshes

    def test_audit_record_complete(self):
        e = StreamEngine(quick_config())
        e.ingest_many(np.random.default_rng(2).random(2000))
        rec = e.refresh(cap.CapacityTarget(kappa_up=0.1, count_basis=1000), 3)
        d = rec.to_dict()
        for key in (
            "cuts",
            "trims",
            "anchored",
            "elasticities",
            "t_stars",
            "candidates",
            "guardrails",
            "hysteresis_moved",
            "hysteresis_reasons",
            "n_eff",
            "h0",
            "valley_count",
            "expected_intake",
            "expected_counts",
        ):
            assert key in d
        assert set(d["expected_counts"]) == {"escalation", "standard", "hibernation"}
        assert sum(d["expected_counts"].values()) == pytest.approx(1000.0, rel=1e-5)

    def test_cuts_respect_edge_guard(self):
        e = StreamEngine(quick_config(eps_edge=0.05))
        rng = np.random.default_rng(3)
        # everything piled near 1.0 pushes t* toward the edge
        e.ingest_many(np.clip(rng.beta(30, 1, 4000), 0, 1))
        rec = e.refresh(cap.CapacityTarget(kappa_up=0.05, count_basis=1000), 1)
        assert 0.05 <= rec.cuts[0] <= 0.95

    def test_cuts_strictly_increasing_two_cut(self):
        prof = simgen.builtin_profiles(rate=6000, seed=5)["trimodal"]
        e = StreamEngine(
            EngineConfig(mode="window", window=24000, min_n_eff=20000, h0_refresh_every=2000)
        )
        target = cap.CapacityTarget(kappa_up=0.05, kappa_up_std=0.3, count_basis=6000)
        for t in range(6):
            e.ingest_many(simgen.generate_interval(prof, t))
        rec = e.refresh(target, 6)
        assert len(rec.cuts) == 2
        assert rec.cuts[0] < rec.cuts[1]
        assert rec.trims[0] >= rec.cuts[0]
        assert rec.trims[1] >= rec.cuts[1]

    def test_between_refreshes_cuts_stable(self):
        e = StreamEngine(quick_config())
        rng = np.random.default_rng(4)
        e.ingest_many(rng.random(2000))
        rec1 = e.refresh(cap.CapacityTarget(kappa_up=0.1, count_basis=1000), 1)
        deployed_before = e.deployed
        e.ingest_many(rng.random(500))
        assert e.deployed is deployed_before  # no refresh, no movement

    def test_snapping_disabled_uses_quantile(self):
        prof = simgen.builtin_profiles(rate=6000, seed=5)["bimodal"]
        e = StreamEngine(
            EngineConfig(
                mode="window",
                window=24000,
                min_n_eff=20000,
                h0_refresh_every=2000,
                snapping=False,
            )
        )
        target = cap.CapacityTarget(kappa_up=0.25, count_basis=6000)
        for t in range(6):
            e.ingest_many(simgen.generate_interval(prof, t))
        rec = e.refresh(target, 6)
        assert rec.anchored == (False,)
        assert rec.valley_count == 0
        assert rec.cuts[0] == pytest.approx(rec.t_stars[0])

    def test_knife_edge_shift_applied(self):
        e = StreamEngine(quick_config(discretization_step=0.01, snapping=False))
        rng = np.random.default_rng(5)
        e.ingest_many(rng.random(3000))
        rec = e.refresh(cap.CapacityTarget(kappa_up=0.1, count_basis=1000), 1)
        frac = (rec.cuts[0] / 0.01) % 1.0
        assert frac == pytest.approx(0.5, abs=1e-6)


class TestConfig:
    def test_ladder_must_include_one(self):
        with pytest.raises(ConfigError):
            EngineConfig(ladder=(0.5, 2.0))

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            EngineConfig(mode="sorcery")

    def test_window_slots_scale_with_cadence(self):
        e = StreamEngine(
            EngineConfig(mode="window", window=10000, h0_refresh_every=500)
        )
        assert e.state._bank.shape[0] >= 10000 // 500 + 2


class TestCapacityFeasibility:
    def test_trim_meets_target_within_cell_mass(self):
        """|N * U(trim) - N * kappa| <= delta*N + one grid-cell mass."""
        prof = simgen.builtin_profiles(rate=6000, seed=9)["trimodal"]
        e = StreamEngine(
            EngineConfig(mode="window", window=24000, min_n_eff=20000, h0_refresh_every=2000)
        )
        target = cap.CapacityTarget(kappa_up=0.05, count_basis=6000.0)
        for t in range(10):
            e.ingest_many(simgen.generate_interval(prof, t))
            if t < 5:
                continue
            rec = e.refresh(target, t)
            snap = e.snapshot()
            cell_mass = snap.density_at(rec.trims[-1]) * snap.grid.spacing
            gap = abs(6000.0 * snap.tail_mass(rec.trims[-1]) - 6000.0 * 0.05)
            assert gap <= target.delta + 6000.0 * cell_mass + 1e-6

    def test_guard_values_validated(self):
        with pytest.raises(ConfigError):
            EngineConfig(eps_edge=0.6)
        with pytest.raises(ConfigError):
            EngineConfig(eta=1.5)
        with pytest.raises(ConfigError):
            EngineConfig(max_drift=0.0)
        with pytest.raises(ConfigError):
            EngineConfig(tau=-1.0)


class TestAdversarialStreams:
    @pytest.mark.parametrize("maker", [
        lambda rng, n: np.zeros(n),                       # all at the left edge
        lambda rng, n: np.ones(n),                        # all at the right edge
        lambda rng, n: np.full(n, 0.5),                   # single atom
        lambda rng, n: np.where(rng.random(n) < 0.5, 0.0, 1.0),  # two extreme atoms
        lambda rng, n: np.round(rng.random(n) * 10) / 10,  # coarse rounding
        lambda rng, n: np.clip(rng.normal(0.99, 0.001, n), 0, 1),  # knife edge at 1
    ])
    def test_cuts_always_valid(self, maker):
        rng = np.random.default_rng(12)
        e = StreamEngine(
            EngineConfig(grid_size=256, mode="forgetting", alpha=0.002,
                         min_n_eff=300, h0_refresh_every=500)
        )
        target_single = cap.CapacityTarget(kappa_up=0.05, count_basis=1000.0)
        target_double = cap.CapacityTarget(kappa_up=0.05, kappa_up_std=0.3, count_basis=1000.0)
        for t in range(4):
            e.ingest_many(maker(rng, 1000))
            for target in (target_single, target_double):
                rec = e.refresh(target, t)
                if rec.held or not rec.cuts:
                    continue
                for c in rec.cuts:
                    assert e.config.eps_edge <= c <= 1.0 - e.config.eps_edge
                if len(rec.cuts) == 2:
                    assert rec.cuts[0] < rec.cuts[1]
                assert e.state.integral() == pytest.approx(1.0, abs=1e-6)
