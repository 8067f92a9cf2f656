"""Baseline thresholding policies and the Greenwald-Khanna quantile sketch.

The streaming-policy protocol here mirrors the engine's: feed an interval of
scores, then ask for a cut. Baselines are deliberately plain -- they take
everything above their cut, with no valley anchoring, trims, or hysteresis.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InsufficientDataError


class GKSketch:
    """Greenwald-Khanna epsilon-approximate streaming quantiles.

    query(q) returns a value whose true rank differs from q*n by at most
    eps*n. Summary entries are (value, g, delta), sorted by value; adjacent
    entries merge whenever g_i + g_{i+1} + delta_{i+1} <= 2*eps*n.
    """

    def __init__(self, eps: float = 0.005):
        if not 0.0 < eps < 1.0:
            raise ConfigError(f"eps must lie in (0,1), got {eps}")
        self.eps = float(eps)
        self.n = 0
        self._entries: list[list] = []  # [value, g, delta]
        self._compress_every = max(1, int(1.0 / (2.0 * eps)))

    def insert(self, value: float) -> None:
        v = float(value)
        self.n += 1
        entries = self._entries
        keys = [e[0] for e in entries]
        i = bisect_left(keys, v)
        if i == 0 or i == len(entries):
            entries.insert(i, [v, 1, 0])
        else:
            delta = max(0, int(math.floor(2.0 * self.eps * self.n)) - 1)
            entries.insert(i, [v, 1, delta])
        if self.n % self._compress_every == 0:
            self._compress()

    @classmethod
    def from_sorted(cls, values: np.ndarray, eps: float = 0.005) -> "GKSketch":
        """Build directly from a sorted array (used for per-window rebuilds)."""
        sk = cls(eps)
        sk.n = int(values.shape[0])
        sk._entries = [[float(v), 1, 0] for v in values]
        sk._compress()
        return sk

    def _compress(self) -> None:
        entries = self._entries
        if len(entries) < 3:
            return
        cap = math.floor(2.0 * self.eps * self.n)
        out = [entries[0]]
        for e in entries[1:-1]:
            prev = out[-1]
            if prev is not entries[0] and prev[1] + e[1] + e[2] <= cap:
                e[1] += prev[1]
                out[-1] = e
            else:
                out.append(e)
        out.append(entries[-1])
        self._entries = out

    def query(self, q: float) -> float:
        if not 0.0 <= q <= 1.0:
            raise ConfigError(f"quantile must lie in [0,1], got {q}")
        if not self._entries:
            raise InsufficientDataError("query on an empty sketch")
        target = q * self.n
        bound = self.eps * self.n
        r_min = 0
        best = self._entries[0][0]
        for value, g, delta in self._entries:
            # stop before the max possible rank leaves the tolerance band
            if r_min + g + delta > target + bound:
                return best
            r_min += g
            best = value
        return best

    def summary_size(self) -> int:
        return len(self._entries)


def baseline_gk_quantile(sketch: GKSketch, q: float) -> float:
    """Approximate quantile cut from a populated sketch."""
    return sketch.query(q)


def baseline_batch_topk(scores: np.ndarray, capacity: int) -> float:
    """C-th largest score; ties land on the intake side.

    capacity 0 yields a cut above the maximum (empty intake); capacity beyond
    the count takes everything (cut at the minimum).
    """
    s = np.asarray(scores, dtype=float)
    if s.size == 0:
        raise InsufficientDataError("no scores to rank")
    c = int(capacity)
    if c <= 0:
        return float(np.nextafter(s.max(), np.inf))
    if c >= s.size:
        return float(s.min())
    return float(np.partition(s, s.size - c)[s.size - c])


@dataclass
class WindowQuantileCut:
    """Sliding-window quantile policy backed by a GK sketch.

    Keeps a ring of the last `window` scores and rebuilds the sketch from the
    sorted window at each refresh (GK summaries do not support deletion).
    """

    window: int
    eps: float = 0.005

    def __post_init__(self):
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        self._ring = np.zeros(self.window)
        self._head = 0
        self._count = 0

    def ingest(self, scores: np.ndarray) -> None:
        for s in np.asarray(scores, dtype=float):
            if 0.0 <= s <= 1.0:
                self._ring[self._head] = s
                self._head = (self._head + 1) % self.window
                self._count = min(self._count + 1, self.window)

    def cut(self, kappa: float) -> float:
        if self._count == 0:
            raise InsufficientDataError("window is empty")
        live = self._ring[: self._count] if self._count < self.window else self._ring
        sketch = GKSketch.from_sorted(np.sort(live), self.eps)
        return sketch.query(1.0 - kappa)


@dataclass
class EwmaCut:
    """Rolling proportional-control cut on intake error.

    cut <- cut + gain * (A - C) / (N * max(f(cut), floor)); the local density
    f comes from whatever estimate the caller maintains (a fixed-bandwidth
    pipeline in the shipped runner). Zero intake error leaves the cut fixed.
    """

    gain: float = 0.5
    floor: float = 1e-4
    cut: float = 0.9

    def update(self, realized: float, target: float, count_basis: float, density_at_cut: float) -> float:
        denom = count_basis * max(density_at_cut, self.floor)
        self.cut = float(np.clip(self.cut + self.gain * (realized - target) / denom, 0.0, 1.0))
        return self.cut
