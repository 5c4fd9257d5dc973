import json
from pathlib import Path

import pytest

from swarmtune.config import ConfigError, ExperimentConfig

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


class TestExperimentConfig:
    def test_defaults_valid(self):
        cfg = ExperimentConfig()
        assert len(cfg.grid_spec()) == 200
        assert [s.population_size for s in cfg.swarm_configs()] == [10]

    def test_round_trip(self):
        cfg = ExperimentConfig(seed=9, synth={"base_rate": 3.0, "weekly_profile": [1] * 7},
                               swarms=[{"population_size": 10}, {"population_size": 50}])
        back = ExperimentConfig.from_dict(json.loads(cfg.to_json()))
        assert back == cfg
        assert back.to_json() == cfg.to_json()

    def test_seed_flows_to_components(self):
        cfg = ExperimentConfig(seed=42, swarms=[{"population_size": 5, "seed": 1}, {}])
        assert [s.seed for s in cfg.swarm_configs()] == [1, 42]
        assert cfg.train_config().seed == 42
        assert cfg.synth_config().seed == 42
        assert cfg.with_seed(7).synth_config().seed == 7

    @pytest.mark.parametrize("override", [
        {"days": ["monday"]},
        {"days": []},
        {"horizons": [45]},
        {"window": -1},
        {"bucket_minutes": 7},
        {"swarms": []},
        {"swarms": [{"population_size": 0}]},
        {"space": {"max_layers": 0}},
        {"grid": {"layer_values": [1, 20], "neuron_values": [10]}},
        {"train": {"epochs": 0}},
        {"train": {"nonsense": 1}},
        {"synth": {"weeks": 0}},
    ])
    def test_invalid(self, override):
        with pytest.raises(ConfigError):
            ExperimentConfig(**override)

    def test_schema_checks(self):
        raw = ExperimentConfig().to_dict()
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({**raw, "schema_version": 99})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({**raw, "extra": 1})
        without = dict(raw)
        del without["schema_version"]
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(without)

    def test_bad_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError):
            ExperimentConfig.load(p)

    @pytest.mark.parametrize("name", ["default.json", "smoke.json"])
    def test_shipped_configs_load(self, name):
        cfg = ExperimentConfig.load(CONFIGS / name)
        assert cfg.to_dict()["schema_version"] == 1
