"""Command-line experiment harness.

Subcommands and the files they write under ``--out``:

``synth``
    ``dataset.csv``: synthetic connection log in the documented CSV layout.
``prepare``
    ``supervised_<day>_h<H>.csv`` for every weekday and horizon. A weekday
    without records still gets a file holding only the header.
``tune``
    ``tune_<tag>_<day>_h<H>.json`` (search result) and
    ``evals_<tag>_<day>_h<H>.csv`` (ordered evaluation log), where ``<tag>``
    is ``grid`` or ``pso-p<population>``. With ``--timing`` the wall-clock
    figures go to ``timing_<tag>_<day>_h<H>.csv``; every other file is a pure
    function of the config and seed.
``compare``
    ``comparison.csv``, ``plot_accuracy_vs_model.csv`` and
    ``plot_configurations_vs_model.csv`` built from ``tune`` JSON files.

Outputs are written atomically. If a command fails, files it already
wrote are removed and the exit status is nonzero.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

from . import data, fitness, search
from .config import ConfigError, ExperimentConfig

logger = logging.getLogger("swarmtune")

MODEL_ORDER = {name: i for i, name in enumerate(data.DAY_NAMES)}
PLOT_ACCURACY_COLUMNS = ["horizon", "model", "method", "population", "accuracy"]
PLOT_CONFIG_COLUMNS = ["horizon", "model", "method", "population",
                       "unique_configurations", "total_evaluations"]


def _current_umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


_UMASK = _current_umask()


class CommandError(RuntimeError):
    pass


class OutputSet:
    """Tracks files written by one command so a failure can roll them back."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.written: list[Path] = []

    def write(self, name: str, writer) -> Path:
        """``writer(tmp_path)`` fills a temp file that then replaces ``name``."""
        self.root.mkdir(parents=True, exist_ok=True)
        target = self.root / name
        fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=self.root)
        os.close(fd)
        try:
            os.chmod(tmp, 0o666 & ~_UMASK)
            writer(tmp)
            os.replace(tmp, target)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
        self.written.append(target)
        logger.info("wrote %s", target)
        return target

    def write_text(self, name: str, text: str) -> Path:
        return self.write(name, lambda p: Path(p).write_text(text, encoding="utf-8"))

    def rollback(self) -> None:
        for path in self.written:
            path.unlink(missing_ok=True)
        self.written.clear()


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def load_frame(cfg: ExperimentConfig, input_path=None):
    path = input_path or cfg.dataset_path
    if path:
        result = data.ingest_csv(path)
        if result.skipped:
            logger.warning("%s: skipped %d malformed rows", path, result.skipped_count)
        return result.records
    return data.synth_generate(cfg.synth_config())


def selected(values, override):
    if override is None:
        return list(values)
    return [override]


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------

def cmd_synth(args, out: OutputSet) -> None:
    cfg = load_config(args)
    frame = data.synth_generate(cfg.synth_config())
    logger.info("generated %d records", len(frame))
    out.write("dataset.csv", lambda p: data.write_csv(frame, p))


def cmd_prepare(args, out: OutputSet) -> None:
    cfg = load_config(args)
    frame = load_frame(cfg, args.input)
    series = data.bucket_counts(frame, cfg.bucket_minutes)
    if not series:
        raise CommandError("no usable records in the input")
    for horizon in selected(cfg.horizons, args.horizon):
        full = data.build_supervised(series, horizon)
        dow = full.timestamps.astype("datetime64[D]").view("int64")
        dow = (dow + 3) % 7  # 1970-01-01 was a Thursday
        for d, name in enumerate(data.DAY_NAMES):
            part = full.subset(dow == d)
            out.write(f"supervised_{name}_h{horizon}.csv", part.write_csv)


def result_stem(tag: str, day: str, horizon: int) -> str:
    return f"{tag}_{day}_h{horizon}"


def cmd_tune(args, out: OutputSet) -> None:
    cfg = load_config(args)
    days = selected(cfg.days, args.day)
    frame = load_frame(cfg)
    series = data.bucket_counts(frame, cfg.bucket_minutes)
    if not series:
        raise CommandError("no usable records in the dataset")
    space = cfg.topology_space()
    train_config = cfg.train_config()
    window = fitness.ToleranceWindow(cfg.window)

    for horizon in selected(cfg.horizons, args.horizon):
        full = data.build_supervised(series, horizon)
        for day in days:
            spec = data.SplitSpec(day_of_week=data.DAY_NAMES.index(day))
            task = fitness.PreparedTask.from_sets(*data.split_train_test(full, spec))
            # one memo per task: scores are a pure function of (seed, topology)
            store: dict = {}
            evaluator = fitness.TopologyEvaluator(task, train_config, window, cfg.seed, store)
            runs = []
            if args.method == "grid":
                runs.append(("grid", lambda: search.grid_search(
                    cfg.grid_spec(), evaluator, workers=args.workers)))
            else:
                for swarm in cfg.swarm_configs():
                    runs.append((f"pso-p{swarm.population_size}",
                                 lambda s=swarm: search.pso_search(
                                     s, space, evaluator, workers=args.workers)))
            for tag, run in runs:
                result = run()
                stem = result_stem(tag, day, horizon)
                logger.info("%s: best %s acc=%.4f unique=%d total=%d (%.1fs)", stem,
                            result.best_topology, result.best_accuracy,
                            result.unique_configurations, result.total_evaluations,
                            result.wall_seconds)
                payload = result.to_dict()
                payload.update(model=day, horizon=horizon, seed=cfg.seed,
                               window=cfg.window)
                out.write_text(f"tune_{stem}.json",
                               json.dumps(payload, indent=2, sort_keys=True) + "\n")
                out.write(f"evals_{stem}.csv",
                          lambda p: result.cache.write_csv(p, include_timing=False))
                if args.timing:
                    out.write(f"timing_{stem}.csv",
                              lambda p: result.cache.write_csv(p, include_timing=True))


def read_results(paths) -> list[dict]:
    results = []
    for path in paths:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        for key in ("method", "model", "horizon", "best_accuracy", "unique_configurations"):
            if key not in raw:
                raise CommandError(f"{path}: not a tune result (missing {key!r})")
        results.append(raw)
    return results


def _population(raw: dict):
    return raw.get("settings", {}).get("population_size", "")


def cmd_compare(args, out: OutputSet) -> None:
    paths = args.results or sorted(Path(args.out).glob("tune_*.json"))
    if not paths:
        raise CommandError("no tune result files given or found under --out")
    raws = read_results(paths)

    grids, swarms = {}, []
    for raw in raws:
        key = (raw["horizon"], raw["model"])
        if raw["method"] == "grid":
            if key in grids:
                raise CommandError(f"two grid results for model {key[1]} horizon {key[0]}")
            grids[key] = raw
        else:
            swarms.append(raw)

    def order(raw):
        return (raw["horizon"], MODEL_ORDER.get(raw["model"], 99), raw["model"],
                raw["method"] != "grid", _population(raw) or 0)

    rows = []
    for raw in sorted(swarms, key=order):
        key = (raw["horizon"], raw["model"])
        if key not in grids:
            raise CommandError(f"no grid result for model {key[1]} horizon {key[0]}")
        rows.append(search.compare(search.SearchResult.from_dict(raw),
                                   search.SearchResult.from_dict(grids[key]),
                                   dataset=raw["model"], horizon_minutes=raw["horizon"]))
    if not rows:
        raise CommandError("no PSO results to compare")
    out.write("comparison.csv", lambda p: search.write_comparison_csv(rows, p))

    ordered = sorted(raws, key=order)
    acc_rows = [{"horizon": r["horizon"], "model": r["model"], "method": r["method"],
                 "population": _population(r), "accuracy": repr(float(r["best_accuracy"]))}
                for r in ordered]
    cfg_rows = [{"horizon": r["horizon"], "model": r["model"], "method": r["method"],
                 "population": _population(r),
                 "unique_configurations": r["unique_configurations"],
                 "total_evaluations": r["total_evaluations"]} for r in ordered]
    out.write("plot_accuracy_vs_model.csv",
              lambda p: _write_rows(p, PLOT_ACCURACY_COLUMNS, acc_rows))
    out.write("plot_configurations_vs_model.csv",
              lambda p: _write_rows(p, PLOT_CONFIG_COLUMNS, cfg_rows))


def _write_rows(path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------

def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config JSON")
    common.add_argument("--seed", type=_seed, help="override the config seed")
    common.add_argument("--out", help="output directory (default: config output_dir)")

    parser = argparse.ArgumentParser(prog="swarmtune",
                                     description="PSO topology search for occupancy models")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", parents=[common], help="write a synthetic connection log")

    p = sub.add_parser("prepare", parents=[common], help="write per-day supervised CSVs")
    p.add_argument("input", nargs="?", help="connection log CSV (default: config dataset)")
    p.add_argument("--horizon", type=int, choices=data.HORIZONS)

    p = sub.add_parser("tune", parents=[common], help="run a topology search")
    p.add_argument("--method", choices=["pso", "grid"], default="pso")
    p.add_argument("--horizon", type=int, choices=data.HORIZONS)
    p.add_argument("--day", choices=data.DAY_NAMES, help="restrict to one weekday model")
    p.add_argument("--workers", type=_positive, default=1)
    p.add_argument("--timing", action="store_true", help="also write wall-clock timings")

    p = sub.add_parser("compare", parents=[common], help="build comparison and plot CSVs")
    p.add_argument("results", nargs="*", help="tune JSON files (default: tune_*.json in --out)")
    return parser


COMMANDS = {"synth": cmd_synth, "prepare": cmd_prepare, "tune": cmd_tune,
            "compare": cmd_compare}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = os.environ.get("SWARMTUNE_LOG", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    if args.out is None:
        try:
            args.out = load_config(args).output_dir
        except (ConfigError, OSError) as exc:
            logger.error("%s", exc)
            return 2
    out = OutputSet(Path(args.out))
    start = time.perf_counter()
    try:
        COMMANDS[args.command](args, out)
    except (CommandError, ConfigError, data.DataFormatError, ValueError, OSError,
            KeyError) as exc:
        out.rollback()
        logger.error("%s failed: %s", args.command, exc)
        return 1
    except BaseException:
        out.rollback()
        raise
    logger.info("%s finished in %.1fs", args.command, time.perf_counter() - start)
    return 0


if __name__ == "__main__":
    sys.exit(main())
