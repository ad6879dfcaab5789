"""Gated-service M/G/1 queues with single vacations, solved by branching transforms."""

from .branching import DEFAULT_POLICY, InitialState, ModelParams, TruncationPolicy
from .errors import ConfigError, NonConvergence, UnstableModel
from .rv_models import (
    Deterministic,
    Erlang,
    Exponential,
    HyperExponential,
    UniformInterval,
    dist_from_dict,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_POLICY",
    "ConfigError",
    "Deterministic",
    "Erlang",
    "Exponential",
    "HyperExponential",
    "InitialState",
    "ModelParams",
    "NonConvergence",
    "TruncationPolicy",
    "UniformInterval",
    "UnstableModel",
    "dist_from_dict",
]
