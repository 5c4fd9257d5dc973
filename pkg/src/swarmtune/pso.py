"""Particle swarm optimizer over a bounded real box.

Maximizes ``fitness_fn``. Positions are clamped to the box and velocities to
``clamp_fraction * (upper - lower)`` per dimension after every update.

All random draws of an iteration happen in particle order before any fitness
call is dispatched, and results are folded back in particle order, so the
outcome does not depend on the number of evaluation workers.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "Bounds",
    "SwarmConfig",
    "Particle",
    "SwarmState",
    "OptimizationResult",
    "FitnessError",
    "velocity_limits",
    "init_swarm",
    "evaluate_swarm",
    "update_velocity",
    "update_position",
    "step",
    "run",
]

CoefficientMode = Literal["fixed", "sampled_once"]
VelocityForm = Literal["standard", "velocity_difference"]

# c1/c2 range for sampled_once mode
COEFFICIENT_RANGE = (0.0, 4.0)


class FitnessError(RuntimeError):
    """Raised when the fitness function fails or returns NaN."""


@dataclass(frozen=True)
class Bounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).ravel()
        upper = np.asarray(self.upper, dtype=float).ravel()
        if lower.size == 0:
            raise ValueError("bounds need at least one dimension")
        if lower.shape != upper.shape:
            raise ValueError("lower and upper have different size")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ValueError("bounds must be finite")
        if np.any(lower >= upper):
            raise ValueError("every dimension needs min < max")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[float, float]]) -> "Bounds":
        pairs = list(pairs)
        return cls(np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs]))

    @property
    def dim(self) -> int:
        return self.lower.size

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.minimum(np.maximum(x, self.lower), self.upper)


@dataclass(frozen=True)
class SwarmConfig:
    """Swarm hyperparameters.

    ``coefficient_mode="sampled_once"`` draws c1 and c2 uniformly from [0, 4]
    at initialization and holds them for the whole run; the ``c1``/``c2``
    fields are then ignored. ``early_stop`` stops the run once gbest fitness
    is unchanged (within ``early_stop_tol``) between two consecutive
    iterations, never comparing iteration 1 against the initial swarm.

    ``velocity_form="velocity_difference"`` reproduces the variant whose
    attraction terms pull toward ``pbest - v`` instead of ``pbest - x``.
    It exists for experimentation only.
    """

    population_size: int = 10
    c1: float = 2.0
    c2: float = 2.0
    w: float = 0.729
    max_iterations: int = 10
    velocity_clamp_fraction: float = 0.1
    seed: int = 0
    coefficient_mode: CoefficientMode = "fixed"
    early_stop: bool = True
    early_stop_tol: float = 0.0
    velocity_form: VelocityForm = "standard"

    def __post_init__(self):
        if self.population_size < 1:
            raise ValueError("population_size must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.c1 < 0 or self.c2 < 0 or self.w < 0:
            raise ValueError("c1, c2 and w must be non-negative")
        if not 0 < self.velocity_clamp_fraction <= 1:
            raise ValueError("velocity_clamp_fraction must lie in (0, 1]")
        if self.coefficient_mode not in ("fixed", "sampled_once"):
            raise ValueError(f"unknown coefficient_mode {self.coefficient_mode!r}")
        if self.velocity_form not in ("standard", "velocity_difference"):
            raise ValueError(f"unknown velocity_form {self.velocity_form!r}")
        if self.early_stop_tol < 0:
            raise ValueError("early_stop_tol must be non-negative")


@dataclass
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    pbest_position: np.ndarray
    pbest_fitness: float = -math.inf
    fitness: float = -math.inf


@dataclass
class SwarmState:
    particles: list[Particle]
    gbest_position: np.ndarray
    gbest_fitness: float
    c1: float
    c2: float
    iteration: int = 0
    evaluations: int = 0
    unique_evaluations: int = 0
    _seen: set = field(default_factory=set, repr=False)


@dataclass
class OptimizationResult:
    best_position: np.ndarray
    best_fitness: float
    iterations_run: int
    evaluations: int
    unique_evaluations: int
    c1: float
    c2: float
    # (gbest_fitness, unique_evaluations) after initialization and each iteration
    history: list[tuple[float, int]]


def velocity_limits(bounds: Bounds, clamp_fraction: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension ``(vmin, vmax)`` with ``vmax = fraction * (max - min)``."""
    if not 0 < clamp_fraction <= 1:
        raise ValueError("clamp_fraction must lie in (0, 1]")
    vmax = clamp_fraction * (bounds.upper - bounds.lower)
    return -vmax, vmax


def init_swarm(config: SwarmConfig, bounds: Bounds, rng: np.random.Generator) -> SwarmState:
    """Random initial swarm; nothing is evaluated yet."""
    if config.coefficient_mode == "sampled_once":
        c1, c2 = rng.uniform(*COEFFICIENT_RANGE, size=2)
    else:
        c1, c2 = config.c1, config.c2
    vmin, vmax = velocity_limits(bounds, config.velocity_clamp_fraction)
    n, d = config.population_size, bounds.dim
    positions = bounds.lower + rng.random((n, d)) * (bounds.upper - bounds.lower)
    positions = bounds.clip(positions)
    velocities = vmin + rng.random((n, d)) * (vmax - vmin)
    particles = [
        Particle(position=positions[i].copy(), velocity=velocities[i].copy(),
                 pbest_position=positions[i].copy())
        for i in range(n)
    ]
    return SwarmState(particles=particles, gbest_position=positions[0].copy(),
                      gbest_fitness=-math.inf, c1=float(c1), c2=float(c2))


def update_velocity(particle: Particle, gbest_position: np.ndarray, *, w: float,
                    c1: float, c2: float, vmax: np.ndarray, rng: np.random.Generator,
                    form: VelocityForm = "standard") -> np.ndarray:
    """New velocity, clamped to ``[-vmax, vmax]``.

    ``r1`` and ``r2`` are drawn fresh per dimension, r1 first.
    """
    d = particle.position.size
    r1 = rng.random(d)
    r2 = rng.random(d)
    anchor = particle.position if form == "standard" else particle.velocity
    v = (w * particle.velocity
         + c1 * r1 * (particle.pbest_position - anchor)
         + c2 * r2 * (gbest_position - anchor))
    return np.clip(v, -vmax, vmax)


def update_position(particle: Particle, bounds: Bounds) -> np.ndarray:
    return bounds.clip(particle.position + particle.velocity)


def _evaluate(positions: np.ndarray, fitness_fn: Callable, vectorized: bool,
              workers: int) -> np.ndarray:
    if vectorized:
        try:
            values = np.asarray(fitness_fn(positions.copy()), dtype=float).ravel()
        except Exception as exc:
            raise FitnessError(f"batch fitness evaluation failed: {exc}") from exc
        if values.size != len(positions):
            raise FitnessError(
                f"vectorized fitness returned {values.size} values for {len(positions)} positions")
        bad = np.flatnonzero(np.isnan(values))
        if bad.size:
            raise FitnessError(f"fitness is NaN at position {positions[bad[0]].tolist()}")
        return values

    def call(x):
        try:
            value = float(fitness_fn(x.copy()))
        except Exception as exc:
            raise FitnessError(f"fitness evaluation failed at position {x.tolist()}: {exc}") from exc
        if math.isnan(value):
            raise FitnessError(f"fitness is NaN at position {x.tolist()}")
        return value

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return np.array(list(pool.map(call, positions)))
    return np.array([call(x) for x in positions])


def evaluate_swarm(state: SwarmState, fitness_fn: Callable, *, vectorized: bool = False,
                   workers: int = 1) -> SwarmState:
    """Evaluate every particle, then fold pbest and gbest in particle order."""
    positions = np.array([p.position for p in state.particles])
    values = _evaluate(positions, fitness_fn, vectorized, workers)
    state.evaluations += len(values)
    for x in positions:
        state._seen.add(x.tobytes())
    state.unique_evaluations = len(state._seen)

    for p, value in zip(state.particles, values):
        p.fitness = float(value)
        if p.fitness > p.pbest_fitness:
            p.pbest_fitness = p.fitness
            p.pbest_position = p.position.copy()

    pbest = np.array([p.pbest_fitness for p in state.particles])
    i = int(np.argmax(pbest))  # first particle wins ties
    if pbest[i] > state.gbest_fitness:
        state.gbest_fitness = float(pbest[i])
        state.gbest_position = state.particles[i].pbest_position.copy()
    return state


def step(state: SwarmState, fitness_fn: Callable, config: SwarmConfig, bounds: Bounds,
         rng: np.random.Generator, *, vectorized: bool = False, workers: int = 1) -> SwarmState:
    """Move every particle once, re-evaluate, update bests."""
    _, vmax = velocity_limits(bounds, config.velocity_clamp_fraction)
    for p in state.particles:
        p.velocity = update_velocity(p, state.gbest_position, w=config.w, c1=state.c1,
                                     c2=state.c2, vmax=vmax, rng=rng,
                                     form=config.velocity_form)
        p.position = update_position(p, bounds)
    evaluate_swarm(state, fitness_fn, vectorized=vectorized, workers=workers)
    state.iteration += 1
    return state


def run(config: SwarmConfig, bounds: Bounds, fitness_fn: Callable, *, vectorized: bool = False,
        workers: int = 1, callback: Callable[[SwarmState], None] | None = None
        ) -> OptimizationResult:
    """Full optimization loop.

    If ``vectorized`` is true, ``fitness_fn`` receives the whole
    ``(population_size, dim)`` position array and returns one value per row;
    otherwise it is called once per particle, on up to ``workers`` threads.
    ``callback`` is invoked with the state after initialization and after
    every iteration.
    """
    rng = np.random.default_rng(config.seed)
    state = init_swarm(config, bounds, rng)
    evaluate_swarm(state, fitness_fn, vectorized=vectorized, workers=workers)
    history = [(state.gbest_fitness, state.unique_evaluations)]
    if callback is not None:
        callback(state)

    while state.iteration < config.max_iterations:
        previous = state.gbest_fitness
        step(state, fitness_fn, config, bounds, rng, vectorized=vectorized, workers=workers)
        history.append((state.gbest_fitness, state.unique_evaluations))
        if callback is not None:
            callback(state)
        logger.debug("iteration %d gbest %.6g", state.iteration, state.gbest_fitness)
        if (config.early_stop and state.iteration >= 2
                and abs(state.gbest_fitness - previous) <= config.early_stop_tol):
            break

    return OptimizationResult(
        best_position=state.gbest_position.copy(),
        best_fitness=state.gbest_fitness,
        iterations_run=state.iteration,
        evaluations=state.evaluations,
        unique_evaluations=state.unique_evaluations,
        c1=state.c1,
        c2=state.c2,
        history=history,
    )
