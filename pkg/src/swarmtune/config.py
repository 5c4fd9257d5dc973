"""Experiment configuration (JSON, versioned)."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import mlp, pso
from .data import DAY_NAMES, HORIZONS, SynthConfig
from .fitness import ToleranceWindow
from .search import GridSpec
from .topology import TopologySpace

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    seed: int = 0
    dataset_path: str | None = None
    synth: dict = field(default_factory=dict)
    days: list[str] = field(default_factory=lambda: list(DAY_NAMES))
    horizons: list[int] = field(default_factory=lambda: list(HORIZONS))
    bucket_minutes: int = 15
    window: int = 20
    space: dict = field(default_factory=dict)
    swarms: list[dict] = field(default_factory=lambda: [{"population_size": 10}])
    grid: dict = field(default_factory=lambda: {
        "layer_values": list(GridSpec.default().layer_values),
        "neuron_values": list(GridSpec.default().neuron_values)})
    train: dict = field(default_factory=dict)
    output_dir: str = "results"

    def __post_init__(self):
        # building every component runs its own invariant checks
        try:
            self.synth_config()
            self.topology_space()
            self.grid_spec().check(self.topology_space())
            self.swarm_configs()
            self.train_config()
            ToleranceWindow(self.window)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        bad_days = [d for d in self.days if d not in DAY_NAMES]
        if bad_days or not self.days:
            raise ConfigError(f"days must be a non-empty subset of {DAY_NAMES}")
        if not self.horizons or any(h not in HORIZONS for h in self.horizons):
            raise ConfigError(f"horizons must be a non-empty subset of {HORIZONS}")
        if self.bucket_minutes < 1 or 60 % self.bucket_minutes:
            raise ConfigError("bucket_minutes must divide 60")
        if any(h % self.bucket_minutes for h in self.horizons):
            raise ConfigError("bucket_minutes must divide every horizon")

    def synth_config(self) -> SynthConfig:
        values = {"seed": self.seed, **self.synth}
        for key in ("weekly_profile", "ap_scale_range"):
            if key in values:
                values[key] = tuple(values[key])
        return SynthConfig(**values)

    def topology_space(self) -> TopologySpace:
        return TopologySpace(**self.space)

    def grid_spec(self) -> GridSpec:
        return GridSpec(tuple(self.grid["layer_values"]), tuple(self.grid["neuron_values"]))

    def swarm_configs(self) -> list[pso.SwarmConfig]:
        if not self.swarms:
            raise ValueError("at least one swarm configuration is required")
        return [pso.SwarmConfig(**{"seed": self.seed, **s}) for s in self.swarms]

    def train_config(self) -> mlp.TrainConfig:
        return mlp.TrainConfig(**{"seed": self.seed, **self.train})

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, **dataclasses.asdict(self)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        version = raw.pop("schema_version", None)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r}, expected {SCHEMA_VERSION}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        return cls(**raw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(raw)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return dataclasses.replace(self, seed=seed)
