"""Per-event update cost versus grid size, for one or both backends.

The ingest loop is timed in batches (one call per interval-sized chunk), so
numba call overhead does not pollute the per-event figure. The log-log slope
of median per-event time against grid size is the linearity check.
"""

from __future__ import annotations

import time

import numpy as np

from . import metrics as met
from ._backend import HAS_NUMBA, active_backend, set_backend
from .density import EstimatorMode, ingest_batch, init_state
from .errors import ConfigError, InsufficientDataError


def time_ingest(
    grid_size: int, events: int, repeats: int = 5, batch: int = 2000, seed: int = 0
) -> list[float]:
    """Median-friendly list of per-event times (seconds) over `repeats` runs."""
    if events < batch:
        batch = events
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(repeats):
        state, pilot, bw = init_state(grid_size, EstimatorMode.exponential_forgetting(0.01))
        scores = rng.random(events)
        ingest_batch(state, pilot, scores[:batch])  # warm the jit path
        t0 = time.perf_counter()
        done = 0
        while done < events:
            chunk = scores[done : done + batch]
            ingest_batch(state, pilot, chunk)
            done += chunk.shape[0]
        out.append((time.perf_counter() - t0) / events)
    return out


def run_bench(
    grid_sizes: list[int],
    events: int,
    backends: list[str] | None = None,
    repeats: int = 5,
) -> dict:
    """Timings and the grid-size scaling slope per backend."""
    if events <= 0:
        raise ConfigError("events must be positive")
    if len(grid_sizes) < 3:
        raise InsufficientDataError("bench needs at least 3 grid sizes")
    if backends is None:
        backends = [active_backend()]
    for b in backends:
        if b == "numba" and not HAS_NUMBA:
            raise ConfigError("numba backend requested but numba is unavailable")
    previous = active_backend()
    results = {}
    try:
        for backend in backends:
            set_backend(backend)
            timings = [time_ingest(g, events, repeats=repeats) for g in grid_sizes]
            profile = met.runtime_profile(grid_sizes, timings)
            results[backend] = profile
    finally:
        set_backend(previous)
    return results


def format_bench(results: dict) -> str:
    lines = []
    for backend, profile in results.items():
        lines.append(f"backend={backend}  slope={profile['slope']:.3f}")
        for g, t in zip(profile["grid_sizes"], profile["median_per_event"]):
            lines.append(f"  G={g:<6d} median {t * 1e6:9.3f} us/event")
    return "\n".join(lines)
