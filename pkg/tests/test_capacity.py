import numpy as np
import pytest
from scipy import stats

from valleycut import capacity as cap
from valleycut import density as dens
from valleycut import valleys as val
from valleycut.errors import ConfigError, DomainError


def make_snapshot(values, grid=None, h=0.05, n_eff=10000.0):
    grid = grid or dens.Grid.uniform(512)
    values = np.asarray(values, dtype=float)
    return dens.DensitySnapshot(
        grid=grid,
        values=values,
        pilot_values=values.copy(),
        h_per_point=np.full(grid.size, h),
        h0=h,
        geo_mean=1.0,
        n_eff=n_eff,
        event_count=int(n_eff),
        snapshot_id=1,
    )


def uniform_snapshot():
    g = dens.Grid.uniform(512)
    return make_snapshot(np.ones(g.size), g)


def bimodal_snapshot(comps=((2, 8, 0.5), (8, 2, 0.5))):
    g = dens.Grid.uniform(512)
    pdf = np.zeros(g.size)
    for a, b, w in comps:
        pdf += w * stats.beta(a, b).pdf(g.points)
    pdf = np.nan_to_num(pdf, posinf=0.0)
    pdf /= g.integrate(pdf)
    return make_snapshot(pdf, g)


def valley_set(locs, values, grid):
    return val.ValleySet(
        valleys=tuple(
            val.Valley(
                location=l,
                density_value=float(np.interp(l, grid.points, values)),
                salience=1.0,
                persistence_span=(0.5, 2.0),
                adjacent_mass=(0.2, 0.2),
                grid_index=int(round(l / grid.spacing)),
            )
            for l in locs
        )
    )


class TestCapacityTarget:
    def test_valid(self):
        t = cap.CapacityTarget(kappa_up=0.05, count_basis=1000.0)
        assert t.delta == pytest.approx(0.1 * 0.05 * 1000)

    def test_ordering_enforced(self):
        with pytest.raises(DomainError):
            cap.CapacityTarget(kappa_up=0.4, count_basis=100.0, kappa_up_std=0.2)

    def test_kappa_domain(self):
        with pytest.raises(DomainError):
            cap.CapacityTarget(kappa_up=0.0, count_basis=100.0)
        with pytest.raises(DomainError):
            cap.CapacityTarget(kappa_up=1.2, count_basis=100.0)


class TestQuantileCut:
    def test_uniform_small_kappa(self):
        assert cap.quantile_cut(uniform_snapshot(), 0.05) == pytest.approx(0.95, abs=1e-9)

    def test_uniform_median(self):
        assert cap.quantile_cut(uniform_snapshot(), 0.5) == pytest.approx(0.5, abs=1e-9)

    def test_symmetric_bimodal_median(self):
        assert cap.quantile_cut(bimodal_snapshot(), 0.5) == pytest.approx(0.5, abs=2e-3)

    def test_domain(self):
        with pytest.raises(DomainError):
            cap.quantile_cut(uniform_snapshot(), 0.0)
        with pytest.raises(DomainError):
            cap.quantile_cut(uniform_snapshot(), 1.0)

    def test_inverse_consistency(self):
        snap = bimodal_snapshot()
        for kappa in (0.03, 0.1, 0.4, 0.75):
            t = cap.quantile_cut(snap, kappa)
            assert dens.tail_mass(snap.values, t, snap.grid) == pytest.approx(kappa, abs=1e-6)

    def test_flat_stretch_takes_largest(self):
        g = dens.Grid.uniform(512)
        values = np.zeros(g.size)
        values[:100] = 1.0
        values[-100:] = 1.0
        values /= g.integrate(values)
        snap = make_snapshot(values, g)
        t = cap.quantile_cut(snap, 0.5)
        # half the mass sits in the right block; largest valid point is its start
        assert t == pytest.approx(g.points[-100], abs=2 * g.spacing)


class TestSnapSingle:
    def test_uniform_fallback(self):
        snap = uniform_snapshot()
        t_star = cap.quantile_cut(snap, 0.05)
        cut, anchored = cap.snap_single(t_star, val.ValleySet(valleys=()), snap, 0.05)
        assert cut == pytest.approx(0.95, abs=1e-9)
        assert not anchored

    def test_anchors_to_feasible_valley(self):
        snap = bimodal_snapshot()
        t_star = cap.quantile_cut(snap, 0.4)
        # example preconditions: t* right of the valley and denser than it
        assert t_star > 0.5
        assert snap.density_at(t_star) > snap.density_at(0.5)
        assert dens.tail_mass(snap.values, 0.5, snap.grid) >= 0.4
        vs = valley_set([0.5], snap.values, snap.grid)
        cut, anchored = cap.snap_single(t_star, vs, snap, 0.4)
        assert cut == pytest.approx(0.5)
        assert anchored

    def test_infeasible_valley_excluded(self):
        snap = bimodal_snapshot()
        vs = valley_set([0.5], snap.values, snap.grid)
        t_star = cap.quantile_cut(snap, 0.05)
        cut, anchored = cap.snap_single(t_star, vs, snap, 0.6)  # U(0.5)=0.5 < 0.6
        assert cut == pytest.approx(t_star)
        assert not anchored

    def test_never_increases_elasticity(self):
        snap = bimodal_snapshot()
        vs = valley_set([0.5], snap.values, snap.grid)
        for kappa in (0.05, 0.2, 0.4, 0.49):
            t_star = cap.quantile_cut(snap, kappa)
            cut, anchored = cap.snap_single(t_star, vs, snap, kappa)
            if anchored:
                assert snap.density_at(cut) <= snap.density_at(t_star) + 1e-12


class TestFineTune:
    def test_exact_target_no_offset(self):
        snap = uniform_snapshot()
        assert cap.fine_tune(0.95, snap, 0.05) == pytest.approx(0.95, abs=1e-9)

    def test_uniform_overshoot_trims(self):
        snap = uniform_snapshot()
        assert cap.fine_tune(0.9, snap, 0.05) == pytest.approx(0.95, abs=1e-9)

    def test_precondition(self):
        snap = uniform_snapshot()
        with pytest.raises(DomainError):
            cap.fine_tune(0.97, snap, 0.05)


class TestElasticity:
    def test_product(self):
        snap = uniform_snapshot()
        assert cap.elasticity(1000, snap, 0.3) == pytest.approx(1000.0)

    def test_zero_density(self):
        g = dens.Grid.uniform(512)
        values = np.ones(g.size)
        values[-200:] = 0.0
        snap = make_snapshot(values, g)
        assert cap.elasticity(500, snap, 0.95) == 0.0

    def test_uniform_any_cut(self):
        snap = uniform_snapshot()
        for c in (0.1, 0.5, 0.9):
            assert cap.elasticity(500, snap, c) == pytest.approx(500.0)


class TestSelectPair:
    def trimodal(self):
        return bimodal_snapshot(((2, 10, 0.5), (24, 10, 0.3), (60, 5, 0.2)))

    def test_two_valleys_feasible(self):
        snap = self.trimodal()
        vs = valley_set([0.48, 0.844], snap.values, snap.grid)
        target = cap.CapacityTarget(kappa_up=0.05, kappa_up_std=0.3, count_basis=1000)
        sel = cap.select_pair(vs, snap, target)
        assert not sel.fallback and not sel.empty_standard
        assert sel.c_std == pytest.approx(0.48)
        assert sel.c_up == pytest.approx(0.844)
        assert sel.anchored == (True, True)

    def test_uniform_falls_back_to_quantiles(self):
        snap = uniform_snapshot()
        target = cap.CapacityTarget(kappa_up=0.05, kappa_up_std=0.3, count_basis=1000)
        sel = cap.select_pair(val.ValleySet(valleys=()), snap, target)
        assert sel.c_std == pytest.approx(0.7, abs=1e-6)
        assert sel.c_up == pytest.approx(0.95, abs=1e-6)
        assert sel.anchored == (False, False)

    def test_degenerate_targets_collapse(self):
        snap = self.trimodal()
        vs = valley_set([0.48, 0.844], snap.values, snap.grid)
        target = cap.CapacityTarget(kappa_up=0.05, kappa_up_std=0.05, count_basis=1000)
        sel = cap.select_pair(vs, snap, target)
        assert sel.empty_standard
        assert sel.c_std is None

    def test_band_mass_feasibility(self):
        # two high valleys close together cannot host a wide standard band
        snap = self.trimodal()
        vs = valley_set([0.8, 0.844], snap.values, snap.grid)
        target = cap.CapacityTarget(kappa_up=0.05, kappa_up_std=0.6, count_basis=1000)
        sel = cap.select_pair(vs, snap, target)
        u = lambda c: dens.tail_mass(snap.values, c, snap.grid)
        assert u(sel.c_std) - u(sel.c_up) >= (0.6 - 0.05) - 1e-9

    def test_pair_trims_meet_band_targets(self):
        snap = self.trimodal()
        vs = valley_set([0.48, 0.844], snap.values, snap.grid)
        target = cap.CapacityTarget(kappa_up=0.05, kappa_up_std=0.3, count_basis=1000)
        sel = cap.select_pair(vs, snap, target)
        trim_std, trim_up = cap.pair_trims(sel.c_std, sel.c_up, snap, target)
        u = lambda c: dens.tail_mass(snap.values, c, snap.grid)
        assert u(trim_up) == pytest.approx(0.05, abs=1e-6)
        assert u(trim_std) - u(sel.c_up) == pytest.approx(0.25, abs=1e-6)
        assert sel.c_std <= trim_std <= sel.c_up
        assert trim_up >= sel.c_up


class TestHysteresis:
    def _deployed(self, cuts, anchored, t_stars=None):
        return cap.DeployedCuts(
            cuts=tuple(cuts),
            trims=tuple(cuts),
            anchored=tuple(anchored),
            elasticity=tuple(0.0 for _ in cuts),
            t_stars=tuple(t_stars or cuts),
        )

    def snapshot_with_density(self, at_old, at_new, c_old=0.4, c_new=0.6):
        g = dens.Grid.uniform(512)
        values = np.ones(g.size)
        j_old = int(round(c_old / g.spacing))
        j_new = int(round(c_new / g.spacing))
        values[j_old - 3 : j_old + 4] = at_old
        values[j_new - 3 : j_new + 4] = at_new
        return make_snapshot(values, g)

    def test_small_improvement_held(self):
        snap = self.snapshot_with_density(0.30, 0.29)
        target = cap.CapacityTarget(kappa_up=0.3, count_basis=1000)
        state = cap.HysteresisState(previous=self._deployed([0.4], [True]), eta=0.1)
        vs = valley_set([0.4, 0.6], snap.values, snap.grid)
        gate = cap.hysteresis_gate(
            state, self._deployed([0.6], [True], [0.45]), vs, snap, target
        )
        assert gate.cuts == (0.4,)
        assert gate.reasons == ("held",)

    def test_large_improvement_moves(self):
        snap = self.snapshot_with_density(0.30, 0.20)
        target = cap.CapacityTarget(kappa_up=0.3, count_basis=1000)
        state = cap.HysteresisState(previous=self._deployed([0.4], [True]), eta=0.1)
        vs = valley_set([0.4, 0.6], snap.values, snap.grid)
        gate = cap.hysteresis_gate(
            state, self._deployed([0.6], [True], [0.45]), vs, snap, target
        )
        assert gate.cuts == (0.6,)
        assert gate.reasons == ("elasticity_improved",)

    def test_first_deployment_accepts(self):
        snap = uniform_snapshot()
        target = cap.CapacityTarget(kappa_up=0.3, count_basis=1000)
        state = cap.HysteresisState(previous=None, eta=0.15)
        gate = cap.hysteresis_gate(
            state, self._deployed([0.7], [False]), val.ValleySet(valleys=()), snap, target
        )
        assert gate.cuts == (0.7,)
        assert gate.reasons == ("first_deployment",)

    def test_midpoint_crossing_moves(self):
        snap = self.snapshot_with_density(0.30, 0.29)
        target = cap.CapacityTarget(kappa_up=0.3, count_basis=1000)
        state = cap.HysteresisState(previous=self._deployed([0.4], [True]), eta=0.1)
        vs = valley_set([0.4, 0.6], snap.values, snap.grid)
        # t* beyond the midpoint (0.5) toward the next valley
        gate = cap.hysteresis_gate(
            state, self._deployed([0.6], [True], [0.55]), vs, snap, target
        )
        assert gate.cuts == (0.6,)
        assert gate.reasons == ("midpoint_crossed",)

    def test_unanchored_previous_tracks_quantile(self):
        snap = uniform_snapshot()
        target = cap.CapacityTarget(kappa_up=0.3, count_basis=1000)
        state = cap.HysteresisState(previous=self._deployed([0.68], [False]), eta=0.15)
        gate = cap.hysteresis_gate(
            state,
            self._deployed([0.7], [False], [0.7]),
            val.ValleySet(valleys=()),
            snap,
            target,
        )
        assert gate.cuts == (0.7,)
        assert gate.reasons == ("quantile_track",)

    def test_realized_intake_violation_moves(self):
        snap = self.snapshot_with_density(0.30, 0.29)
        target = cap.CapacityTarget(kappa_up=0.3, count_basis=1000)
        state = cap.HysteresisState(previous=self._deployed([0.4], [True]), eta=0.1)
        vs = valley_set([0.4, 0.6], snap.values, snap.grid)
        gate = cap.hysteresis_gate(
            state,
            self._deployed([0.6], [True], [0.45]),
            vs,
            snap,
            target,
            realized_intake=200.0,  # |200 - 300| > delta = 30
        )
        assert gate.cuts == (0.6,)
        assert gate.reasons == ("capacity_tolerance",)

    def test_suppression_only_removes_moves(self):
        """Gated cut sequence is a subsequence of the eta->0 sequence."""
        snap = bimodal_snapshot()
        target = cap.CapacityTarget(kappa_up=0.3, count_basis=1000)
        vs = valley_set([0.5], snap.values, snap.grid)
        proposals = [0.50, 0.502, 0.498, 0.55, 0.501]
        gated = []
        state = cap.HysteresisState(previous=None, eta=0.3)
        for p in proposals:
            prop = self._deployed([p], [True], [p + 0.05])
            gate = cap.hysteresis_gate(state, prop, vs, snap, target)
            state.previous = self._deployed(gate.cuts, gate.anchored)
            gated.append(gate.cuts[0])
        assert set(gated) <= set(proposals)


class TestQuotas:
    def test_even_split(self):
        assert cap.allocate_quotas(100, [1, 1]) == [50.0, 50.0]

    def test_weighted_split(self):
        assert cap.allocate_quotas(100, [3, 1]) == [75.0, 25.0]

    def test_zero_weights_error(self):
        with pytest.raises(ConfigError):
            cap.allocate_quotas(100, [0, 0])


class TestKnifeEdge:
    def test_shifts_to_midpoint(self):
        assert cap.avoid_knife_edge(0.8, 0.01) == pytest.approx(0.805)
        assert cap.avoid_knife_edge(0.804, 0.01) == pytest.approx(0.805)

    def test_idempotent(self):
        once = cap.avoid_knife_edge(0.52, 0.05)
        assert cap.avoid_knife_edge(once, 0.05) == pytest.approx(once)

    def test_zero_step_noop(self):
        assert cap.avoid_knife_edge(0.8, 0.0) == 0.8


def test_determinism():
    snap = bimodal_snapshot()
    vs = valley_set([0.5], snap.values, snap.grid)
    target = cap.CapacityTarget(kappa_up=0.3, count_basis=1000)
    a = cap.select_pair(
        vs, snap, cap.CapacityTarget(kappa_up=0.05, kappa_up_std=0.3, count_basis=1000)
    )
    b = cap.select_pair(
        vs, snap, cap.CapacityTarget(kappa_up=0.05, kappa_up_std=0.3, count_basis=1000)
    )
    assert a == b
    assert cap.snap_single(0.8, vs, snap, 0.3) == cap.snap_single(0.8, vs, snap, 0.3)


from hypothesis import given, settings
from hypothesis import strategies as st


@given(
    st.lists(st.floats(0.0, 5.0), min_size=64, max_size=64),
    st.floats(0.02, 0.95),
)
@settings(max_examples=40)
def test_quantile_inverts_tail_mass_on_random_densities(raw, kappa):
    g = dens.Grid.uniform(128)
    values = np.repeat(np.asarray(raw), 2)[: g.size]
    total = g.integrate(values)
    if total < 1e-6:
        values = np.ones(g.size)
        total = 1.0
    snap = make_snapshot(values / total, g)
    t = cap.quantile_cut(snap, kappa)
    assert 0.0 <= t <= 1.0
    assert dens.tail_mass(snap.values, t, snap.grid) == pytest.approx(kappa, abs=1e-6)
