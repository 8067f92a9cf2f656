"""Streaming density-anchored thresholding for scored event streams."""

from ._backend import active_backend, set_backend
from .capacity import CapacityTarget, DeployedCuts, allocate_quotas
from .density import DensitySnapshot, EstimatorMode, Grid, init_state
from .engine import DecisionRecord, EngineConfig, StreamEngine
from .router import QueueLabel, route
from .simgen import BAStreamProfile, builtin_profiles, generate_interval, stress_event
from .valleys import Valley, ValleySet

__version__ = "0.1.0"

__all__ = [
    "active_backend",
    "set_backend",
    "CapacityTarget",
    "DeployedCuts",
    "allocate_quotas",
    "DensitySnapshot",
    "EstimatorMode",
    "Grid",
    "init_state",
    "DecisionRecord",
    "EngineConfig",
    "StreamEngine",
    "QueueLabel",
    "route",
    "BAStreamProfile",
    "builtin_profiles",
    "generate_interval",
    "stress_event",
    "Valley",
    "ValleySet",
    "__version__",
]
