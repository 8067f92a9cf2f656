import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260808)


def batch_window_density(scores, profiles, pilot_hs, grid, reflect=True):
    """Independent oracle: average of normalized reflected stencils.

    Recomputes the windowed estimate from scratch: for each retained score,
    the stencil bandwidth is its insertion-time profile interpolated at the
    score, the stencil is divided by its own trapezoid integral, and the
    results are averaged. Returns (density values, pilot values).
    """
    w = grid.trapz_weights
    dx = grid.spacing
    dens_sum = np.zeros(grid.size)
    pilot_sum = np.zeros(grid.size)

    def stencil(s, h):
        h = max(h, dx)
        u0 = (grid.points - s) / h
        out = np.where(np.abs(u0) <= 1, 0.75 * (1 - u0**2), 0.0)
        if reflect:
            u1 = (grid.points + s) / h
            u2 = (grid.points - (2 - s)) / h
            out = out + np.where(np.abs(u1) <= 1, 0.75 * (1 - u1**2), 0.0)
            out = out + np.where(np.abs(u2) <= 1, 0.75 * (1 - u2**2), 0.0)
        out = out / h
        return out / (w @ out)

    for s, prof, ph in zip(scores, profiles, pilot_hs):
        hs = np.interp(s, grid.points, prof)
        dens_sum += stencil(s, hs)
        pilot_sum += stencil(s, ph)
    n = len(scores)
    return dens_sum / n, pilot_sum / n
