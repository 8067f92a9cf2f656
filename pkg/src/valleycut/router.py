"""Score routing against deployed cuts and per-queue accounting.

Boundary convention: a score exactly at a cut goes to the higher-priority
queue. Trim points never change queue membership -- they only decide which
in-region cases are taken this interval.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .capacity import DeployedCuts
from .density import DensitySnapshot, tail_mass
from .errors import DomainError


class QueueLabel(Enum):
    ESCALATION = "escalation"
    STANDARD = "standard"
    HIBERNATION = "hibernation"


_PRIORITY = {QueueLabel.ESCALATION: 2, QueueLabel.STANDARD: 1, QueueLabel.HIBERNATION: 0}


@dataclass(frozen=True)
class RoutingDecision:
    score: float
    queue: QueueLabel
    taken_this_interval: bool
    interval_id: int


def route(score: float, cuts: DeployedCuts) -> QueueLabel:
    """Deterministic queue assignment for one score."""
    if not 0.0 <= score <= 1.0:
        raise DomainError(f"score must lie in [0,1], got {score}")
    if len(cuts.cuts) == 1 or cuts.empty_standard:
        return QueueLabel.ESCALATION if score >= cuts.cut_up else QueueLabel.HIBERNATION
    if score >= cuts.cut_up:
        return QueueLabel.ESCALATION
    if score >= cuts.cuts[0]:
        return QueueLabel.STANDARD
    return QueueLabel.HIBERNATION


def route_many(scores: np.ndarray, cuts: DeployedCuts) -> np.ndarray:
    """Vectorized routing; returns priority codes (2=esc, 1=std, 0=hib)."""
    s = np.asarray(scores, dtype=float)
    out = np.zeros(s.shape[0], dtype=np.int8)
    if len(cuts.cuts) == 2 and not cuts.empty_standard:
        out[s >= cuts.cuts[0]] = 1
    out[s >= cuts.cut_up] = 2
    return out


def queue_priority(label: QueueLabel) -> int:
    return _PRIORITY[label]


def expected_counts(
    snapshot: DensitySnapshot, cuts: DeployedCuts, count_basis: float
) -> dict[QueueLabel, float]:
    """Expected per-queue volumes from the current density estimate."""
    u_up = tail_mass(snapshot.values, cuts.cut_up, snapshot.grid)
    esc = count_basis * u_up
    if len(cuts.cuts) == 2 and not cuts.empty_standard:
        u_std = tail_mass(snapshot.values, cuts.cuts[0], snapshot.grid)
        std = count_basis * (u_std - u_up)
        hib = count_basis * (1.0 - u_std)
    else:
        std = 0.0
        hib = count_basis * (1.0 - u_up)
    return {QueueLabel.ESCALATION: esc, QueueLabel.STANDARD: std, QueueLabel.HIBERNATION: hib}


def within_queue_order(scores: Sequence[float]) -> np.ndarray:
    """Stable descending order by score; arrival order breaks ties."""
    s = np.asarray(scores, dtype=float)
    return np.argsort(-s, kind="stable")


def make_decisions(
    scores: np.ndarray,
    cuts: DeployedCuts,
    interval_id: int,
    effective_trim: Optional[float] = None,
) -> list[RoutingDecision]:
    """Routing log rows for one interval.

    `effective_trim` overrides the deployed trim for the taken flag (the
    runner passes the count-capped trim when capacity binds).
    """
    trim = cuts.trims[-1] if effective_trim is None else effective_trim
    labels = route_many(scores, cuts)
    out = []
    for i, s in enumerate(scores):
        lab = (
            QueueLabel.ESCALATION
            if labels[i] == 2
            else QueueLabel.STANDARD
            if labels[i] == 1
            else QueueLabel.HIBERNATION
        )
        taken = labels[i] == 2 and s >= trim
        out.append(
            RoutingDecision(
                score=float(s), queue=lab, taken_this_interval=bool(taken), interval_id=interval_id
            )
        )
    return out
