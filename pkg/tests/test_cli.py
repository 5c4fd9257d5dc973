import csv
import hashlib
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from swarmtune import cli, data
from swarmtune.config import ExperimentConfig

SMOKE = Path(__file__).resolve().parents[1] / "configs" / "smoke.json"


def sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def tree(root: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(root.iterdir())}


def run(*argv) -> int:
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert run("synth", "--config", SMOKE, "--out", out) == 0
    return out / "dataset.csv"


class TestSynth:
    def test_identical_hash(self, dataset, tmp_path):
        assert run("synth", "--config", SMOKE, "--out", tmp_path) == 0
        assert sha(tmp_path / "dataset.csv") == sha(dataset)

    def test_seed_flag_changes_output(self, dataset, tmp_path):
        assert run("synth", "--config", SMOKE, "--seed", 8, "--out", tmp_path) == 0
        assert sha(tmp_path / "dataset.csv") != sha(dataset)

    def test_volume(self, dataset):
        frame = pd.read_csv(dataset)
        cfg = ExperimentConfig.load(SMOKE).synth_config()
        assert len(frame) == pytest.approx(data.intensity(cfg).sum(), rel=0.05)
        dow = pd.to_datetime(frame["date"]).dt.dayofweek
        per_day = dow.value_counts()
        assert per_day[[0, 1, 2, 3]].min() > per_day[[5, 6]].max()


class TestPrepare:
    def test_seven_day_files(self, dataset, tmp_path):
        assert run("prepare", dataset, "--config", SMOKE, "--out", tmp_path) == 0
        names = sorted(p.name for p in tmp_path.iterdir())
        assert names == sorted(f"supervised_{d}_h60.csv" for d in data.DAY_NAMES)
        wed = pd.read_csv(tmp_path / "supervised_wed_h60.csv")
        assert (wed["day_of_week"] == 2).all() and len(wed) > 0

    def test_all_horizons(self, dataset, tmp_path):
        cfg = ExperimentConfig.load(SMOKE)
        cfg.horizons = [15, 30, 60]
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(cfg.to_json(), encoding="utf-8")
        out = tmp_path / "out"
        assert run("prepare", dataset, "--config", cfg_path, "--out", out) == 0
        assert len(list(out.iterdir())) == 21

    def test_empty_day_has_header(self, tmp_path):
        log = tmp_path / "log.csv"
        log.write_text("ap_id,date,time,mac,building\n"
                       "A1,2016-01-18,08:00,m1,B1\n"
                       "A1,2016-01-18,09:05,m2,B1\n", encoding="utf-8")
        out = tmp_path / "out"
        assert run("prepare", log, "--horizon", 60, "--out", out) == 0
        mon = (out / "supervised_mon_h60.csv").read_text().splitlines()
        tue = (out / "supervised_tue_h60.csv").read_text().splitlines()
        assert len(mon) == 1 + 96 - 4
        assert tue == [mon[0]]

    def test_targets_match_raw_recount(self, dataset, tmp_path):
        assert run("prepare", dataset, "--config", SMOKE, "--out", tmp_path) == 0
        rows = pd.read_csv(tmp_path / "supervised_thu_h60.csv")
        raw = pd.read_csv(dataset)
        raw_ts = pd.to_datetime(raw["date"] + " " + raw["time"])
        rng = np.random.default_rng(0)
        for i in rng.choice(len(rows), 40, replace=False):
            row = rows.iloc[i]
            t = pd.Timestamp(row["timestamp"]) + pd.Timedelta(minutes=60)
            sel = ((raw["ap_id"] == row["ap_id"]) & (raw_ts >= t)
                   & (raw_ts < t + pd.Timedelta(minutes=15)))
            assert row["target"] == raw.loc[sel, "mac"].nunique()


@pytest.fixture(scope="module")
def outputs(tmp_path_factory):
    roots = {}
    for workers in (1, 8):
        root = tmp_path_factory.mktemp(f"w{workers}")
        for method in ("pso", "grid"):
            assert run("tune", "--config", SMOKE, "--method", method,
                       "--workers", workers, "--out", root) == 0
        roots[workers] = root
    return roots


class TestTune:
    def test_file_names(self, outputs):
        assert sorted(tree(outputs[1])) == [
            "evals_grid_wed_h60.csv", "evals_pso-p4_wed_h60.csv",
            "tune_grid_wed_h60.json", "tune_pso-p4_wed_h60.json"]

    def test_workers_byte_identical(self, outputs):
        assert tree(outputs[1]) == tree(outputs[8])

    def test_rerun_identical(self, outputs, tmp_path):
        assert run("tune", "--config", SMOKE, "--out", tmp_path) == 0
        pso_files = {k: v for k, v in tree(outputs[1]).items() if "pso" in k}
        assert tree(tmp_path) == pso_files

    def test_budget_and_log(self, outputs):
        res = json.loads((outputs[1] / "tune_pso-p4_wed_h60.json").read_text())
        assert res["total_evaluations"] <= 4 * (3 + 1)
        with open(outputs[1] / "evals_pso-p4_wed_h60.csv", newline="") as fh:
            log = list(csv.DictReader(fh))
        assert len(log) == res["total_evaluations"]
        assert sum(r["status"] != "hit" for r in log) == res["unique_configurations"]
        assert max(float(r["accuracy"]) for r in log) == res["best_accuracy"]

    def test_grid_equals_log_max(self, outputs):
        res = json.loads((outputs[1] / "tune_grid_wed_h60.json").read_text())
        assert res["unique_configurations"] == 9
        best = max(res["history"], key=lambda h: h["accuracy"])  # first max wins
        assert (best["layers"], best["neurons"]) == (res["best_topology"]["layers"],
                                                      res["best_topology"]["neurons"])

    def test_timing_is_separate(self, tmp_path):
        assert run("tune", "--config", SMOKE, "--method", "grid", "--timing",
                   "--out", tmp_path) == 0
        header = (tmp_path / "timing_grid_wed_h60.csv").read_text().splitlines()[0]
        assert "train_seconds" in header
        assert "train_seconds" not in (tmp_path / "evals_grid_wed_h60.csv").read_text()

    def test_compare(self, outputs, tmp_path):
        files = sorted(outputs[1].glob("tune_*.json"))
        assert run("compare", *files, "--out", tmp_path) == 0
        with open(tmp_path / "comparison.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 1
        pso_res = json.loads((outputs[1] / "tune_pso-p4_wed_h60.json").read_text())
        grid_res = json.loads((outputs[1] / "tune_grid_wed_h60.json").read_text())
        row = rows[0]
        assert int(row["pso_unique"]) == pso_res["unique_configurations"]
        assert float(row["reduction"]) == 1 - int(row["pso_unique"]) / int(row["grid_unique"])
        assert float(row["accuracy_delta"]) == (pso_res["best_accuracy"]
                                                - grid_res["best_accuracy"])
        plot = pd.read_csv(tmp_path / "plot_configurations_vs_model.csv")
        assert plot["method"].tolist() == ["grid", "pso"]
        assert plot["unique_configurations"].tolist() == [9, pso_res["unique_configurations"]]


class TestCompareReport:
    def _result(self, root, method, day, unique, pop=None):
        payload = {"method": method, "model": day, "horizon": 60,
                   "best_topology": {"layers": 1, "neurons": 1}, "best_accuracy": 0.5,
                   "unique_configurations": unique, "total_evaluations": unique,
                   "history": [], "settings": {"population_size": pop} if pop else {}}
        tag = f"pso-p{pop}" if pop else "grid"
        path = root / f"tune_{tag}_{day}_h60.json"
        path.write_text(json.dumps(payload), encoding="utf-8")
        return path

    def test_seven_models_per_horizon(self, tmp_path):
        for i, day in enumerate(data.DAY_NAMES):
            self._result(tmp_path, "grid", day, 200)
            for pop in (10, 25, 50):
                self._result(tmp_path, "pso", day, 30 + i + pop, pop)
        assert run("compare", "--out", tmp_path) == 0
        cmp = pd.read_csv(tmp_path / "comparison.csv")
        assert len(cmp) == 21
        for pop, group in cmp.groupby("pso_population"):
            assert group["dataset"].tolist() == data.DAY_NAMES
        np.testing.assert_allclose(cmp["reduction"], 1 - cmp["pso_unique"] / cmp["grid_unique"])
        acc = pd.read_csv(tmp_path / "plot_accuracy_vs_model.csv")
        assert len(acc) == 28

    def test_missing_grid_fails_cleanly(self, tmp_path):
        self._result(tmp_path, "pso", "mon", 30, 10)
        before = sorted(p.name for p in tmp_path.iterdir())
        assert run("compare", "--out", tmp_path) == 1
        assert sorted(p.name for p in tmp_path.iterdir()) == before


class TestErrors:
    def test_missing_config(self, tmp_path):
        assert run("tune", "--config", tmp_path / "nope.json", "--out", tmp_path) != 0

    def test_no_results(self, tmp_path):
        assert run("compare", "--out", tmp_path) == 1

    def test_rollback_on_failure(self, dataset, tmp_path, monkeypatch):
        real = data.build_supervised

        def flaky(series, horizon):
            if horizon == 60:
                raise ValueError("boom")
            return real(series, horizon)

        monkeypatch.setattr(data, "build_supervised", flaky)
        cfg = ExperimentConfig.load(SMOKE)
        cfg.horizons = [15, 60]
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(cfg.to_json(), encoding="utf-8")
        out = tmp_path / "out"
        assert run("prepare", dataset, "--config", cfg_path, "--out", out) == 1
        assert list(out.iterdir()) == []

    def test_subprocess_exit_status(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "swarmtune.cli", "compare", "--out",
                               str(tmp_path)], capture_output=True, text=True)
        assert proc.returncode == 1
        assert "compare failed" in proc.stderr
