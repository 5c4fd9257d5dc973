"""Topology tuning for small regression networks with particle swarms."""

from .pso import Bounds, OptimizationResult, SwarmConfig, run
from .topology import NetworkTopology, TopologySpace, decode, encode, rule_of_thumb_hidden_size

__version__ = "0.1.0"

__all__ = [
    "Bounds",
    "NetworkTopology",
    "OptimizationResult",
    "SwarmConfig",
    "TopologySpace",
    "decode",
    "encode",
    "rule_of_thumb_hidden_size",
    "run",
]
