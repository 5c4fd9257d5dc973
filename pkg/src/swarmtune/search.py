"""Grid search baseline, PSO topology search, and their comparison."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import pso
from .fitness import FitnessCache, TopologyEvaluator
from .topology import NetworkTopology, TopologySpace, decode

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridSpec:
    layer_values: tuple[int, ...]
    neuron_values: tuple[int, ...]

    def __post_init__(self):
        for name in ("layer_values", "neuron_values"):
            values = tuple(int(v) for v in getattr(self, name))
            if not values:
                raise ValueError(f"{name} must be non-empty")
            if any(b <= a for a, b in zip(values, values[1:])):
                raise ValueError(f"{name} must be strictly increasing")
            object.__setattr__(self, name, values)

    @classmethod
    def default(cls) -> "GridSpec":
        """Layers 1..10 by neurons 10, 20, .., 200: 200 configurations."""
        return cls(tuple(range(1, 11)), tuple(range(10, 201, 10)))

    def check(self, space: TopologySpace) -> None:
        corners = (NetworkTopology(self.layer_values[0], self.neuron_values[0]),
                   NetworkTopology(self.layer_values[-1], self.neuron_values[-1]))
        if not all(space.contains(t) for t in corners):
            raise ValueError("grid reaches outside the topology space")

    def topologies(self) -> list[NetworkTopology]:
        return [NetworkTopology(L, N) for L in self.layer_values for N in self.neuron_values]

    def __len__(self):
        return len(self.layer_values) * len(self.neuron_values)


@dataclass
class SearchResult:
    method: Literal["pso", "grid"]
    best_topology: NetworkTopology
    best_accuracy: float
    unique_configurations: int
    total_evaluations: int
    wall_seconds: float
    # grid: one entry per evaluation; pso: one per iteration (0 = initial swarm)
    history: list[dict]
    settings: dict = field(default_factory=dict)
    cache: FitnessCache | None = field(default=None, repr=False, compare=False)

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "method": self.method,
            "best_topology": {"layers": self.best_topology.num_hidden_layers,
                              "neurons": self.best_topology.neurons_per_layer},
            "best_accuracy": self.best_accuracy,
            "unique_configurations": self.unique_configurations,
            "total_evaluations": self.total_evaluations,
            "history": self.history,
            "settings": self.settings,
        }
        if include_timing:
            out["wall_seconds"] = self.wall_seconds
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SearchResult":
        best = data["best_topology"]
        return cls(method=data["method"],
                   best_topology=NetworkTopology(best["layers"], best["neurons"]),
                   best_accuracy=float(data["best_accuracy"]),
                   unique_configurations=int(data["unique_configurations"]),
                   total_evaluations=int(data["total_evaluations"]),
                   wall_seconds=float(data.get("wall_seconds", float("nan"))),
                   history=list(data.get("history", [])),
                   settings=dict(data.get("settings", {})))

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True) + "\n"


def grid_search(grid: GridSpec, evaluator: TopologyEvaluator, *, workers: int = 1,
                cache: FitnessCache | None = None) -> SearchResult:
    """Train every grid entry once; the first best entry in grid order wins ties."""
    cache = FitnessCache() if cache is None else cache
    start = time.perf_counter()
    topologies = grid.topologies()
    scores = evaluator.evaluate_many(topologies, cache, workers=workers)
    history = []
    best_i = 0
    for i, (t, acc) in enumerate(zip(topologies, scores)):
        if acc > scores[best_i]:
            best_i = i
        history.append({"evaluation": i, "layers": t.num_hidden_layers,
                        "neurons": t.neurons_per_layer, "accuracy": acc,
                        "best_accuracy": scores[best_i]})
    return SearchResult(
        method="grid",
        best_topology=topologies[best_i],
        best_accuracy=scores[best_i],
        unique_configurations=len(cache),
        total_evaluations=cache.total_evaluations,
        wall_seconds=time.perf_counter() - start,
        history=history,
        settings={"layer_values": list(grid.layer_values),
                  "neuron_values": list(grid.neuron_values)},
        cache=cache,
    )


def pso_search(config: pso.SwarmConfig, space: TopologySpace, evaluator: TopologyEvaluator,
               *, workers: int = 1, cache: FitnessCache | None = None) -> SearchResult:
    """Swarm search over the continuous (layers, neurons) box.

    Positions are decoded to integer topologies before scoring, so repeated
    visits to a topology cost nothing after the first.
    """
    cache = FitnessCache() if cache is None else cache
    bounds = space.bounds()
    start = time.perf_counter()

    def fitness(positions: np.ndarray) -> list[float]:
        topologies = [decode(x, space) for x in positions]
        return evaluator.evaluate_many(topologies, cache, workers=workers)

    history = []

    def record(state: pso.SwarmState) -> None:
        best = decode(state.gbest_position, space)
        history.append({"iteration": state.iteration,
                        "gbest_accuracy": state.gbest_fitness,
                        "layers": best.num_hidden_layers,
                        "neurons": best.neurons_per_layer,
                        "unique_configurations": len(cache),
                        "total_evaluations": cache.total_evaluations})

    result = pso.run(config, bounds, fitness, vectorized=True, callback=record)
    return SearchResult(
        method="pso",
        best_topology=decode(result.best_position, space),
        best_accuracy=result.best_fitness,
        unique_configurations=len(cache),
        total_evaluations=cache.total_evaluations,
        wall_seconds=time.perf_counter() - start,
        history=history,
        settings={"population_size": config.population_size,
                  "max_iterations": config.max_iterations,
                  "iterations_run": result.iterations_run,
                  "seed": config.seed, "w": config.w, "c1": result.c1, "c2": result.c2,
                  "coefficient_mode": config.coefficient_mode,
                  "velocity_clamp_fraction": config.velocity_clamp_fraction},
        cache=cache,
    )


@dataclass
class ComparisonRow:
    dataset: str
    horizon_minutes: int
    pso: SearchResult
    grid: SearchResult
    reduction: float
    accuracy_delta: float

    def as_record(self) -> dict:
        return {
            "dataset": self.dataset,
            "horizon": self.horizon_minutes,
            "pso_population": self.pso.settings.get("population_size"),
            "pso_unique": self.pso.unique_configurations,
            "pso_total": self.pso.total_evaluations,
            "pso_accuracy": self.pso.best_accuracy,
            "pso_layers": self.pso.best_topology.num_hidden_layers,
            "pso_neurons": self.pso.best_topology.neurons_per_layer,
            "grid_unique": self.grid.unique_configurations,
            "grid_accuracy": self.grid.best_accuracy,
            "grid_layers": self.grid.best_topology.num_hidden_layers,
            "grid_neurons": self.grid.best_topology.neurons_per_layer,
            "reduction": self.reduction,
            "accuracy_delta": self.accuracy_delta,
        }


COMPARISON_COLUMNS = [
    "dataset", "horizon", "pso_population", "pso_unique", "pso_total", "pso_accuracy",
    "pso_layers", "pso_neurons", "grid_unique", "grid_accuracy", "grid_layers",
    "grid_neurons", "reduction", "accuracy_delta"]


def compare(pso_result: SearchResult, grid_result: SearchResult, *, dataset: str = "",
            horizon_minutes: int = 0) -> ComparisonRow:
    """``reduction = 1 - pso_unique / grid_unique``; negative values are kept."""
    if grid_result.unique_configurations < 1:
        raise ValueError("grid result has no evaluated configurations")
    reduction = 1.0 - pso_result.unique_configurations / grid_result.unique_configurations
    return ComparisonRow(dataset, horizon_minutes, pso_result, grid_result, reduction,
                         pso_result.best_accuracy - grid_result.best_accuracy)


def write_comparison_csv(rows: list[ComparisonRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=COMPARISON_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.as_record().items()})


def _fmt(value):
    return repr(value) if isinstance(value, float) else value
