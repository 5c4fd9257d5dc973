import csv
import json

import numpy as np
import pytest

from swarmtune import pso, search
from swarmtune.fitness import CacheEntry, TopologyEvaluator
from swarmtune.search import GridSpec, SearchResult
from swarmtune.topology import NetworkTopology, TopologySpace


class FnEvaluator(TopologyEvaluator):
    """Evaluator backed by a plain function of the topology; counts real scorings."""

    def __init__(self, fn):
        super().__init__(task=None)
        self.fn = fn
        self.scored = []

    def score(self, topology):
        self.scored.append(topology)
        return CacheEntry(float(self.fn(topology)), 0.0)


def bowl(t: NetworkTopology) -> float:
    return 1.0 - ((t.num_hidden_layers - 7) / 10) ** 2 - ((t.neurons_per_layer - 130) / 200) ** 2


def fake_result(method, unique, acc=0.5):
    return SearchResult(method, NetworkTopology(1, 1), acc, unique, unique, 0.0, [])


class TestGridSpec:
    def test_default_size(self):
        grid = GridSpec.default()
        assert len(grid) == 200 == len(grid.topologies())
        assert grid.topologies()[0] == NetworkTopology(1, 10)
        assert grid.topologies()[-1] == NetworkTopology(10, 200)
        grid.check(TopologySpace())

    @pytest.mark.parametrize("layers,neurons", [((), (1,)), ((2, 1), (1,)), ((1,), (3, 3))])
    def test_invalid(self, layers, neurons):
        with pytest.raises(ValueError):
            GridSpec(layers, neurons)

    def test_outside_space(self):
        with pytest.raises(ValueError):
            GridSpec((1, 11), (10,)).check(TopologySpace())


class TestGridSearch:
    def test_three_by_four(self):
        ev = FnEvaluator(bowl)
        res = search.grid_search(GridSpec((1, 5, 9), (10, 50, 100, 150)), ev)
        assert res.unique_configurations == res.total_evaluations == 12
        # independent loop over the same entries
        best = max(((l, n) for l in (1, 5, 9) for n in (10, 50, 100, 150)),
                   key=lambda ln: bowl(NetworkTopology(*ln)))
        assert res.best_topology == NetworkTopology(*best)
        assert res.best_accuracy == bowl(NetworkTopology(*best))
        assert [h["evaluation"] for h in res.history] == list(range(12))
        assert all(np.diff([h["best_accuracy"] for h in res.history]) >= 0)

    def test_singleton(self):
        res = search.grid_search(GridSpec((3,), (30,)), FnEvaluator(bowl))
        assert res.best_topology == NetworkTopology(3, 30)
        assert res.unique_configurations == 1

    def test_first_best_wins_ties(self):
        res = search.grid_search(GridSpec((1, 2), (1, 2)), FnEvaluator(lambda t: 0.5))
        assert res.best_topology == NetworkTopology(1, 1)

    def test_workers_do_not_change_result(self):
        grid = GridSpec((1, 2, 3), (5, 10))
        a = search.grid_search(grid, FnEvaluator(bowl), workers=1)
        b = search.grid_search(grid, FnEvaluator(bowl), workers=4)
        assert a.to_json() == b.to_json()


class TestPsoSearch:
    SPACE = TopologySpace()

    def test_budget(self):
        cfg = pso.SwarmConfig(population_size=10, max_iterations=10, early_stop=False, seed=3)
        ev = FnEvaluator(bowl)
        res = search.pso_search(cfg, self.SPACE, ev)
        assert res.total_evaluations == 110
        assert res.unique_configurations <= 110
        assert res.unique_configurations == len(ev.scored) == len(set(ev.scored))
        assert [h["iteration"] for h in res.history] == list(range(11))

    def test_stays_in_space(self):
        space = TopologySpace(2, 4, 8, 32)
        ev = FnEvaluator(lambda t: -abs(t.neurons_per_layer - 100))  # optimum outside
        search.pso_search(pso.SwarmConfig(seed=1, early_stop=False), space, ev)
        assert all(space.contains(t) for t in ev.scored)

    def test_constant_landscape_stops_after_two(self):
        res = search.pso_search(pso.SwarmConfig(seed=0), self.SPACE, FnEvaluator(lambda t: 0.3))
        assert res.settings["iterations_run"] == 2
        assert res.total_evaluations == 30

    def test_unimodal_landscape_top_percent(self):
        scan = np.array([bowl(NetworkTopology(l, n)) for l in range(1, 11) for n in range(1, 201)])
        threshold = np.quantile(scan, 0.99)
        for seed in range(5):
            res = search.pso_search(pso.SwarmConfig(seed=seed), self.SPACE, FnEvaluator(bowl))
            assert res.best_accuracy >= threshold, seed
            assert res.unique_configurations <= 110

    def test_deterministic(self):
        cfg = pso.SwarmConfig(seed=11)
        a = search.pso_search(cfg, self.SPACE, FnEvaluator(bowl), workers=1)
        b = search.pso_search(cfg, self.SPACE, FnEvaluator(bowl), workers=4)
        assert a.to_json() == b.to_json()
        log_a = [(r.topology, r.hit) for r in a.cache.log]
        assert log_a == [(r.topology, r.hit) for r in b.cache.log]

    def test_history_is_running_best(self):
        res = search.pso_search(pso.SwarmConfig(seed=2, early_stop=False), self.SPACE,
                                FnEvaluator(bowl))
        best = [h["gbest_accuracy"] for h in res.history]
        assert all(np.diff(best) >= 0)
        assert best[-1] == res.best_accuracy
        assert [h["unique_configurations"] for h in res.history][-1] == res.unique_configurations


class TestSerialization:
    def test_json_round_trip(self):
        res = search.pso_search(pso.SwarmConfig(seed=4), TopologySpace(), FnEvaluator(bowl))
        text = res.to_json()
        assert "wall_seconds" not in json.loads(text)
        back = SearchResult.from_dict(json.loads(res.to_json(include_timing=True)))
        assert back.to_json() == text
        assert back.wall_seconds == res.wall_seconds


class TestCompare:
    @pytest.mark.parametrize("unique,expected", [(46, 0.77), (30, 0.85), (200, 0.0),
                                                 (250, -0.25)])
    def test_reduction(self, unique, expected):
        row = search.compare(fake_result("pso", unique, 0.8), fake_result("grid", 200, 0.9))
        assert row.reduction == pytest.approx(expected)
        assert row.accuracy_delta == pytest.approx(-0.1)

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            search.compare(fake_result("pso", 3), fake_result("grid", 0))

    def test_csv_recomputable(self, tmp_path):
        rows = [search.compare(fake_result("pso", u), fake_result("grid", 200),
                               dataset=d, horizon_minutes=60)
                for d, u in [("mon", 31), ("tue", 47)]]
        path = tmp_path / "cmp.csv"
        search.write_comparison_csv(rows, path)
        with open(path, newline="") as fh:
            got = list(csv.DictReader(fh))
        assert list(got[0]) == search.COMPARISON_COLUMNS
        for r in got:
            recomputed = 1 - int(r["pso_unique"]) / int(r["grid_unique"])
            assert float(r["reduction"]) == recomputed
