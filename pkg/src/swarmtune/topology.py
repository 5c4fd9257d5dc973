"""Integer network topologies and their continuous encoding."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .pso import Bounds


@dataclass(frozen=True, order=True)
class NetworkTopology:
    num_hidden_layers: int
    neurons_per_layer: int

    def __str__(self):
        return f"{self.num_hidden_layers}x{self.neurons_per_layer}"


@dataclass(frozen=True)
class TopologySpace:
    # Defaults cover every configuration discussed for the occupancy models
    # (up to 10 layers, up to 200 neurons per layer).
    min_layers: int = 1
    max_layers: int = 10
    min_neurons: int = 1
    max_neurons: int = 200

    def __post_init__(self):
        if self.min_layers < 1 or self.min_neurons < 1:
            raise ValueError("minimum layers and neurons must be >= 1")
        if self.min_layers > self.max_layers or self.min_neurons > self.max_neurons:
            raise ValueError("min must not exceed max")

    def contains(self, topology: NetworkTopology) -> bool:
        return (self.min_layers <= topology.num_hidden_layers <= self.max_layers
                and self.min_neurons <= topology.neurons_per_layer <= self.max_neurons)

    def bounds(self) -> Bounds:
        """Continuous search box.

        A degenerate integer range (min == max) is widened by half a unit on
        each side so the box stays valid; decoding maps it back.
        """
        pairs = []
        for lo, hi in ((self.min_layers, self.max_layers), (self.min_neurons, self.max_neurons)):
            pairs.append((lo - 0.5, hi + 0.5) if lo == hi else (lo, hi))
        return Bounds.from_pairs(pairs)

    def size(self) -> int:
        return ((self.max_layers - self.min_layers + 1)
                * (self.max_neurons - self.min_neurons + 1))


def round_half_up(x: float) -> int:
    # x - floor(x) is exact in binary floating point; x + 0.5 is not
    x = float(x)
    base = math.floor(x)
    return base + (x - base >= 0.5)


def decode(position: Sequence[float], space: TopologySpace) -> NetworkTopology:
    """Round each coordinate half-up and clamp it into ``space``.

    Raises ValueError on NaN or infinite coordinates.
    """
    pos = np.asarray(position, dtype=float).ravel()
    if pos.size != 2:
        raise ValueError(f"expected a 2-D position, got {pos.size} components")
    if not np.all(np.isfinite(pos)):
        raise ValueError(f"non-finite position {pos.tolist()}")
    layers = min(max(round_half_up(pos[0]), space.min_layers), space.max_layers)
    neurons = min(max(round_half_up(pos[1]), space.min_neurons), space.max_neurons)
    return NetworkTopology(layers, neurons)


def encode(topology: NetworkTopology) -> np.ndarray:
    return np.array([float(topology.num_hidden_layers), float(topology.neurons_per_layer)])


def rule_of_thumb_hidden_size(input_dim: int, output_dim: int) -> int:
    """Hidden size ``(I + O) * 2/3`` rounded half-up, at least 1."""
    if input_dim < 1 or output_dim < 1:
        raise ValueError("dimensions must be positive")
    # floor(2s/3 + 1/2) in exact integer arithmetic
    s = input_dim + output_dim
    return max(1, (4 * s + 3) // 6)
