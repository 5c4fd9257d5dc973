"""Topology fitness: train a model, score it by tolerance-window accuracy.

Every distinct topology is trained at most once per :class:`FitnessCache`,
which is what makes "number of different configurations" a well-defined
cost for a search.
"""

from __future__ import annotations

import csv
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import mlp
from .data import SupervisedSet
from .topology import NetworkTopology

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ToleranceWindow:
    n: int = 20

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("window size must be non-negative")


def window_accuracy(predictions, actuals, window: ToleranceWindow | int) -> float:
    """Fraction of rows where the rounded prediction is within ``n`` of the actual count.

    Predictions are rounded half-up. Non-finite predictions count as misses.
    """
    n = window.n if isinstance(window, ToleranceWindow) else int(window)
    if n < 0:
        raise ValueError("window size must be non-negative")
    p = np.asarray(predictions, dtype=float).ravel()
    a = np.asarray(actuals, dtype=float).ravel()
    if p.size == 0 or a.size == 0:
        raise ValueError("empty input")
    if p.size != a.size:
        raise ValueError(f"length mismatch: {p.size} predictions vs {a.size} actuals")
    with np.errstate(invalid="ignore"):
        base = np.floor(p)
        rounded = base + (p - base >= 0.5)
        hits = np.abs(rounded - a) <= n
    return float(np.count_nonzero(hits)) / p.size


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, values) -> "Standardizer":
        v = np.asarray(values, dtype=float)
        mean = v.mean(axis=0)
        scale = v.std(axis=0)
        # constant columns (e.g. the day code of a single-day set) pass through centred
        scale = np.where(scale > 0, scale, 1.0)
        return cls(mean, scale)

    def transform(self, values) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.mean) / self.scale

    def inverse(self, values) -> np.ndarray:
        return np.asarray(values, dtype=float) * self.scale + self.mean


@dataclass
class PreparedTask:
    """Standardized train/test arrays; statistics come from the train split only."""

    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    features: Standardizer
    target: Standardizer

    @classmethod
    def from_sets(cls, train: SupervisedSet, test: SupervisedSet) -> "PreparedTask":
        if len(train) == 0 or len(test) == 0:
            raise ValueError("train and test sets must be non-empty")
        if train.feature_names != test.feature_names:
            raise ValueError("train and test sets have different feature schemas")
        fs = Standardizer.fit(train.X)
        ts = Standardizer.fit(train.y.astype(float))
        return cls(fs.transform(train.X), ts.transform(train.y.astype(float)),
                   fs.transform(test.X), test.y.astype(float), fs, ts)

    @property
    def input_dim(self) -> int:
        return self.X_train.shape[1]


@dataclass(frozen=True)
class CacheEntry:
    accuracy: float
    train_seconds: float
    diverged: bool = False


@dataclass(frozen=True)
class LogRecord:
    topology: NetworkTopology
    accuracy: float
    train_seconds: float
    hit: bool
    diverged: bool


class FitnessCache:
    """Per-search memo from topology to score, with an ordered request log.

    ``get_or_compute`` is safe to call from several threads and trains each
    topology at most once; concurrent callers of the same topology wait for
    the first one.
    """

    def __init__(self):
        self._entries: dict[NetworkTopology, CacheEntry] = {}
        self._pending: dict[NetworkTopology, threading.Event] = {}
        self._lock = threading.Lock()
        self.log: list[LogRecord] = []

    def __len__(self):
        return len(self._entries)

    def __contains__(self, topology):
        return topology in self._entries

    def get(self, topology: NetworkTopology) -> CacheEntry | None:
        return self._entries.get(topology)

    @property
    def unique_evaluations(self) -> int:
        return len(self._entries)

    @property
    def total_evaluations(self) -> int:
        return len(self.log)

    def topologies(self) -> list[NetworkTopology]:
        return list(self._entries)

    def record(self, topology: NetworkTopology, entry: CacheEntry | None = None) -> CacheEntry:
        """Log one request; ``entry`` is inserted if the topology is new."""
        with self._lock:
            return self._record_locked(topology, entry)

    def _record_locked(self, topology, entry):
        stored = self._entries.get(topology)
        hit = stored is not None
        if not hit:
            if entry is None:
                raise KeyError(f"{topology} is not cached and no entry was given")
            self._entries[topology] = stored = entry
        self.log.append(LogRecord(topology, stored.accuracy, stored.train_seconds, hit,
                                  stored.diverged))
        return stored

    def get_or_compute(self, topology: NetworkTopology, compute) -> CacheEntry:
        while True:
            with self._lock:
                if topology in self._entries:
                    return self._record_locked(topology, None)
                event = self._pending.get(topology)
                if event is None:
                    event = self._pending[topology] = threading.Event()
                    break
            event.wait()
        try:
            entry = compute(topology)
            with self._lock:
                return self._record_locked(topology, entry)
        finally:
            with self._lock:
                del self._pending[topology]
            event.set()

    def write_csv(self, path, include_timing: bool = True) -> None:
        header = ["index", "layers", "neurons", "accuracy", "status"]
        if include_timing:
            header.insert(4, "train_seconds")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for i, rec in enumerate(self.log):
                status = "hit" if rec.hit else ("miss-diverged" if rec.diverged else "miss")
                row = [i, rec.topology.num_hidden_layers, rec.topology.neurons_per_layer,
                       repr(rec.accuracy), status]
                if include_timing:
                    row.insert(4, f"{rec.train_seconds:.6f}")
                writer.writerow(row)


def derive_seed(seed: int, topology: NetworkTopology) -> int:
    """Model seed as a pure function of (global seed, topology)."""
    ss = np.random.SeedSequence([seed % 2**64, topology.num_hidden_layers,
                                 topology.neurons_per_layer])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def score_topology(topology: NetworkTopology, task: PreparedTask,
                   train_config: mlp.TrainConfig, window: ToleranceWindow,
                   seed: int) -> CacheEntry:
    """Build, train and test one model; divergence scores 0 and is flagged."""
    model_seed = derive_seed(seed, topology)
    start = time.perf_counter()
    model = mlp.build(topology, task.input_dim, 1, model_seed, train_config.activation)
    config = mlp.TrainConfig(
        learning_rate=train_config.learning_rate, epochs=train_config.epochs,
        batch_size=train_config.batch_size, seed=model_seed,
        init_scale_mode=train_config.init_scale_mode, activation=train_config.activation,
        dtype=train_config.dtype)
    try:
        model, _ = mlp.train(model, task.X_train, task.y_train, config)
    except mlp.TrainingDivergence as exc:
        logger.warning("topology %s diverged: %s", topology, exc)
        return CacheEntry(0.0, time.perf_counter() - start, diverged=True)
    predictions = task.target.inverse(mlp.predict(model, task.X_test))
    accuracy = window_accuracy(predictions, task.y_test, window)
    return CacheEntry(accuracy, time.perf_counter() - start, diverged=False)


@dataclass
class TopologyEvaluator:
    """Scores topologies on one prepared task.

    ``store`` is an optional memo shared between evaluators of the same task
    and settings; it avoids retraining across searches without affecting
    any per-search :class:`FitnessCache` counts, since scores are a pure
    function of (seed, topology).
    """

    task: PreparedTask
    train_config: mlp.TrainConfig = field(default_factory=mlp.TrainConfig)
    window: ToleranceWindow = field(default_factory=ToleranceWindow)
    seed: int = 0
    store: dict | None = None

    def score(self, topology: NetworkTopology) -> CacheEntry:
        if self.store is not None:
            hit = self.store.get(topology)
            if hit is not None:
                return hit
        entry = score_topology(topology, self.task, self.train_config, self.window, self.seed)
        if self.store is not None:
            self.store.setdefault(topology, entry)
        return entry

    def evaluate(self, topology: NetworkTopology, cache: FitnessCache) -> float:
        return cache.get_or_compute(topology, self.score).accuracy

    def evaluate_many(self, topologies: Sequence[NetworkTopology], cache: FitnessCache,
                      workers: int = 1) -> list[float]:
        """Score a batch; the cache log follows input order for any worker count."""
        missing = [t for t in dict.fromkeys(topologies) if t not in cache]
        if workers > 1 and len(missing) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                computed = dict(zip(missing, pool.map(self.score, missing)))
        else:
            computed = {t: self.score(t) for t in missing}
        return [cache.record(t, computed.get(t)).accuracy for t in topologies]


def evaluate_topology(topology: NetworkTopology, train_set: SupervisedSet,
                      test_set: SupervisedSet, train_config: mlp.TrainConfig,
                      window: ToleranceWindow, cache: FitnessCache, seed: int = 0) -> float:
    """One-shot convenience wrapper around :class:`TopologyEvaluator`."""
    task = PreparedTask.from_sets(train_set, test_set)
    return TopologyEvaluator(task, train_config, window, seed).evaluate(topology, cache)
