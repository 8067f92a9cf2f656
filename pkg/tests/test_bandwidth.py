import math

import numpy as np
import pytest
from scipy import stats

from valleycut import bandwidth as bw
from valleycut.errors import InsufficientDataError


class TestNormalReference:
    def test_matches_closed_form(self):
        # oracle: (40 sqrt(pi))^(1/5) * sigma * n^(-1/5)
        expected = (40.0 * math.sqrt(math.pi)) ** 0.2 * 0.2
        assert bw.h0_normal_reference(1.0, 0.2) == pytest.approx(expected, abs=1e-12)
        assert bw.h0_normal_reference(1.0, 0.2) == pytest.approx(0.469, abs=1e-3)

    def test_std_capped_at_half(self):
        # no distribution on [0,1] has sigma > 0.5
        assert bw.h0_normal_reference(1e5, 1.3) == bw.h0_normal_reference(1e5, 0.5)

    def test_insufficient_sample(self):
        with pytest.raises(InsufficientDataError):
            bw.h0_normal_reference(0.5, 0.2)

    def test_clipping(self):
        assert bw.h0_normal_reference(1.0, 0.4, h_min=0.01, h_max=0.25) == 0.25

    def test_scaling_law(self):
        h1 = bw.h0_normal_reference(1000, 0.3)
        h2 = bw.h0_normal_reference(2000, 0.3)
        assert h2 / h1 == pytest.approx(2 ** (-0.2), rel=1e-9)


def _ise_oracle_bandwidth(scores, pdf, h_grid):
    """Brute-force oracle: reflected Epanechnikov KDE vs the known truth."""
    grid = np.linspace(0, 1, 512)
    dx = grid[1] - grid[0]
    w = np.full(512, dx)
    w[0] = w[-1] = dx / 2
    truth = pdf(grid)
    best_h, best_ise = None, np.inf
    for h in h_grid:
        u0 = (grid[:, None] - scores[None, :]) / h
        k = np.where(np.abs(u0) <= 1, 0.75 * (1 - u0**2), 0.0)
        u1 = (grid[:, None] + scores[None, :]) / h
        k += np.where(np.abs(u1) <= 1, 0.75 * (1 - u1**2), 0.0)
        u2 = (grid[:, None] - (2 - scores[None, :])) / h
        k += np.where(np.abs(u2) <= 1, 0.75 * (1 - u2**2), 0.0)
        est = k.mean(axis=1) / h
        ise = w @ (est - truth) ** 2
        if ise < best_ise:
            best_h, best_ise = h, ise
    return best_h


class TestSheatherJones:
    def test_within_band_of_ise_optimum(self):
        rng = np.random.default_rng(42)
        a, b = (0 - 0.5) / 0.1, (1 - 0.5) / 0.1
        dist = stats.truncnorm(a, b, loc=0.5, scale=0.1)
        scores = dist.rvs(10000, random_state=rng)
        h_sj = bw.h0_sheather_jones(scores)
        h_star = _ise_oracle_bandwidth(scores[:4000], dist.pdf, np.linspace(0.01, 0.12, 45))
        assert abs(h_sj - h_star) / h_star <= 0.25

    def test_doubling_n_scales_by_fifth_root(self):
        rng = np.random.default_rng(7)
        scores = rng.beta(3, 5, size=2000)
        h1 = bw.h0_sheather_jones(scores, max_pairwise=10000)
        h2 = bw.h0_sheather_jones(np.concatenate([scores, scores]), max_pairwise=10000)
        assert h2 / h1 == pytest.approx(2 ** (-0.2), rel=0.05)

    def test_too_few_scores(self):
        with pytest.raises(InsufficientDataError):
            bw.h0_sheather_jones(np.linspace(0, 1, 50))

    def test_degenerate_sample_falls_back(self):
        h = bw.h0_sheather_jones(np.full(200, 0.5), h_min=0.005, h_max=0.25)
        assert 0.005 <= h <= 0.25

    def test_clipped(self):
        rng = np.random.default_rng(3)
        scores = rng.beta(2, 2, size=500)
        assert bw.h0_sheather_jones(scores, h_min=0.2, h_max=0.25) >= 0.2

    def test_subsampled_matches_full_reasonably(self):
        rng = np.random.default_rng(11)
        scores = rng.beta(2, 8, size=6000)
        h_full = bw.h0_sheather_jones(scores, max_pairwise=6000)
        h_sub = bw.h0_sheather_jones(scores, max_pairwise=1000)
        assert abs(h_sub - h_full) / h_full < 0.15
