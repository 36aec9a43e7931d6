"""Command line entry point: train, evaluate, sweep, ablate and gates.

Exit codes: 0 success, 1 usage or configuration error, 2 data or I/O error,
3 training failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .data.census import DataError
from .data.encoding import FeatureEncoder
from .gates import capture_weights, export_heatmap_data
from .models.base import ConfigError, UnsupportedArchitectureError
from .models.checkpoint import CheckpointError, load_checkpoint
from .models.registry import ARCHITECTURES
from .plotting import plot_ablation, plot_sweep, plot_validation_curves
from .runconfig import (
    DEPTH_DIMS,
    build_arch_config,
    dump_config,
    input_dim_of,
    load_config_file,
    load_data,
    resolve,
    set_path,
    train_config,
)
from .training.experiment import (
    ExperimentResult,
    degradation,
    fingerprint,
    read_results,
    run_experiment,
    write_results,
)
from .training.trainer import TrainingError, evaluate

log = logging.getLogger("adatt")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAIN = 0, 1, 2, 3
SWEEP_VALUES = {"experts": [1, 2, 3, 4], "levels": [2, 3, 4, 5]}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML run configuration (flags override it)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted config override, e.g. train.learning_rate=3e-4 (repeatable)")
    p.add_argument("--arch", help=f"architecture: {', '.join(ARCHITECTURES)}")
    p.add_argument("--out", required=True, help="output directory")
    g = p.add_argument_group("model")
    g.add_argument("--experts-per-task", type=int)
    g.add_argument("--shared-experts", type=int)
    g.add_argument("--total-experts", type=int, help="expert count for mmoe / ml_mmoe")
    g.add_argument("--levels", type=int, help="number of expert levels (must match --dims)")
    g.add_argument("--dims", type=_int_list, help="expert hidden sizes per level, e.g. 128,64")
    g.add_argument("--tower-dim", type=int)
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int)
    g.add_argument("--lr", type=float)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--patience", type=int)
    s = g.add_mutually_exclusive_group()
    s.add_argument("--seed", type=int)
    s.add_argument("--seeds", type=_int_list, help="comma-separated seeds")
    s.add_argument("--n-seeds", type=int, help="use seeds 0..N-1")
    g.add_argument("--workers", type=int, help="parallel seed processes")
    _data_options(p)


def _data_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("data")
    g.add_argument("--dataset", choices=["census", "synthetic"])
    g.add_argument("--data-dir", help="directory with census-income.data/.test (or $ADATT_DATA_DIR)")
    g.add_argument("--allow-partial-data", action="store_true",
                   help="accept census files whose record counts differ from the standard release")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adatt", description="Multi-task fusion networks on census and synthetic data.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train one architecture over one or more seeds")
    _run_options(p)
    p.add_argument("--ablate-native", action="store_true", help="drop the native-expert term")

    p = sub.add_parser("evaluate", help="test-split metrics of a saved checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["valid", "test"], default="test")
    p.add_argument("--out", required=True)
    _data_options(p)

    p = sub.add_parser("sweep", help="vary expert count or depth and report the trend")
    _run_options(p)
    p.add_argument("--param", choices=sorted(SWEEP_VALUES))
    p.add_argument("--values", type=_int_list, help="swept values (default 1-4 experts or 2-5 levels)")
    p.add_argument("--dim-divisor", type=int, help="divide the depth-study hidden sizes by this factor")

    p = sub.add_parser("ablate", help="full vs. gate-only fusion on paired seeds")
    _run_options(p)

    p = sub.add_parser("gates", help="export dataset-mean fusion weights of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["valid", "test"], default="test")
    p.add_argument("--out", required=True)
    p.add_argument("--components", action="store_true", help="also write the gate and native parts")
    p.add_argument("--include-shared", action="store_true", help="add the shared unit's row")
    p.add_argument("--batch-size", type=int, default=4096)
    _data_options(p)
    return parser


def _flags(args) -> dict[str, Any]:
    seeds = args.seeds
    if args.seed is not None:
        seeds = [args.seed]
    elif args.n_seeds is not None:
        seeds = list(range(args.n_seeds))
    flags = {
        "arch": args.arch,
        "model.experts_per_task": args.experts_per_task,
        "model.shared_experts": args.shared_experts,
        "model.total_experts": args.total_experts,
        "model.levels": args.levels,
        "model.dims": args.dims,
        "model.tower_hidden_dim": args.tower_dim,
        "train.max_epochs": args.epochs,
        "train.learning_rate": args.lr,
        "train.batch_size": args.batch_size,
        "train.patience": args.patience,
        "seeds": seeds,
        "workers": args.workers,
    }
    flags.update(_data_flags(args))
    if getattr(args, "ablate_native", False):
        flags["model.ablate_native_fusion"] = True
    if args.command == "sweep":
        flags.update({"sweep.param": args.param, "sweep.values": args.values, "sweep.dim_divisor": args.dim_divisor})
    return flags


def _data_flags(args) -> dict[str, Any]:
    return {
        "data.dataset": args.dataset,
        "data.data_dir": args.data_dir,
        "data.allow_partial": True if args.allow_partial_data else None,
    }


def _resolve(args, default_arch: str) -> dict[str, Any]:
    file_cfg = load_config_file(args.config) if args.config else {}
    cfg = resolve(file_cfg, args.overrides, _flags(args))
    if cfg["arch"] is None:
        cfg["arch"] = default_arch
    return cfg


def _prepare(cfg: dict[str, Any], out: Path):
    splits, encoder = load_data(cfg["data"])
    arch_cfg = build_arch_config(cfg, splits.train.num_tasks, input_dim_of(splits), splits.train.task_kinds)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "resolved_config.yaml")
    extra = {"data": cfg["data"], "encoder": encoder.to_dict() if encoder else None}
    return splits, encoder, arch_cfg, extra


def _summary_rows(result: ExperimentResult) -> list[list[Any]]:
    rows = []
    for task, metrics in result.summary.items():
        for metric, st in metrics.items():
            rows.append([result.arch, task, metric, _fmt(st["mean"]), _fmt(st["std"]), st["n"]])
    return rows


def _fmt(v: float) -> str:
    return "nan" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.6f}"


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _print_table(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) if rows else len(str(h)) for i, h in enumerate(header)]
    print("  ".join(str(h).ljust(w) for h, w in zip(header, widths)))
    for r in rows:
        print("  ".join(str(v).ljust(w) for v, w in zip(r, widths)))


def cmd_train(args) -> int:
    out = Path(args.out)
    cfg = _resolve(args, "adatt")
    splits, _, arch_cfg, extra = _prepare(cfg, out)
    result = run_experiment(
        cfg["arch"], arch_cfg, train_config(cfg), len(cfg["seeds"]), splits,
        seeds=cfg["seeds"], workers=int(cfg["workers"]),
        results_path=out / "results.jsonl", checkpoint_dir=out, checkpoint_extra=extra,
    )
    header = ["arch", "task", "metric", "mean", "std", "n"]
    rows = _summary_rows(result)
    _write_csv(out / "summary.csv", header, rows)
    plot_validation_curves({r["seed"]: r["valid_curve"] for r in result.runs}, out / "validation_curves.png")
    _print_table(header, rows)
    return EXIT_OK


def _load_for_checkpoint(args):
    model, extra = load_checkpoint(args.checkpoint)
    data_cfg = extra.get("data")
    if data_cfg is None:
        raise CheckpointError(f"{args.checkpoint}: no data configuration stored in the checkpoint")
    for dotted, value in _data_flags(args).items():
        if value is not None:
            set_path(data_cfg, dotted.split(".")[1:], value)
    encoder = FeatureEncoder.from_dict(extra["encoder"]) if extra.get("encoder") else None
    splits, _ = load_data(data_cfg, encoder)
    return model, extra, getattr(splits, args.split)


def cmd_evaluate(args) -> int:
    model, _, data = _load_for_checkpoint(args)
    metrics = evaluate(model, data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.json", "w") as fh:
        json.dump({"checkpoint": str(args.checkpoint), "split": args.split, "kind": model.kind, "metrics": metrics},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    header = ["task", "metric", "value"]
    rows = [[t, k, _fmt(v)] for t, m in metrics.items() for k, v in m.items()]
    _write_csv(out / "metrics.csv", header, rows)
    _print_table(header, rows)
    return EXIT_OK


def _cell_dims(param: str, value: int, base_dims: list[int], divisor: int) -> list[int]:
    if param != "levels":
        return base_dims
    if value not in DEPTH_DIMS:
        raise ConfigError(f"no hidden sizes defined for {value} levels; choose from {sorted(DEPTH_DIMS)}")
    if divisor < 1 or any(d % divisor for d in DEPTH_DIMS[value]):
        raise ConfigError(f"dim divisor {divisor} does not divide {DEPTH_DIMS[value]}")
    return [d // divisor for d in DEPTH_DIMS[value]]


def _valid_loss(run: dict[str, Any]) -> float:
    return float(sum(m["loss"] for m in run["valid"].values())) if run.get("valid") else float("nan")


def trend_report(values: Sequence[int], cells: dict[int, dict[str, Any]], tasks: Sequence[str]) -> dict[str, Any]:
    """Whether test AUC rises and validation loss falls with the swept value.
    Reported only; the direction is an observation, not a requirement."""
    report: dict[str, Any] = {"values": list(values), "tasks": {}}
    for task in tasks:
        means = [cells[v]["metrics"][task]["auc"]["mean"] for v in values]
        report["tasks"][task] = {
            "auc_means": means,
            "non_decreasing": all(b >= a for a, b in zip(means, means[1:])),
        }
    vl = [cells[v]["valid_loss"]["mean"] for v in values]
    report["valid_loss_means"] = vl
    report["valid_loss_non_increasing"] = all(b <= a for a, b in zip(vl, vl[1:]))
    return report


def cmd_sweep(args) -> int:
    out = Path(args.out)
    cfg = _resolve(args, "adatt_sp")
    sw = cfg["sweep"]
    param = sw["param"]
    if param not in SWEEP_VALUES:
        raise ConfigError(f"sweep parameter must be one of {sorted(SWEEP_VALUES)}")
    values = [int(v) for v in (sw["values"] or SWEEP_VALUES[param])]
    splits, _, _, _ = _prepare(cfg, out)
    tcfg = train_config(cfg)
    cells: dict[int, dict[str, Any]] = {}
    for value in values:
        cell_cfg = json.loads(json.dumps(cfg))
        cell_cfg["model"]["dims"] = _cell_dims(param, value, cfg["model"]["dims"], int(sw["dim_divisor"]))
        cell_cfg["model"].pop("levels", None)
        if param == "experts":
            cell_cfg["model"]["experts_per_task"] = value
        arch_cfg = build_arch_config(cell_cfg, splits.train.num_tasks, input_dim_of(splits), splits.train.task_kinds)
        fp = fingerprint(cfg["arch"], arch_cfg, tcfg)
        path = out / "cells" / f"{param}{value}.jsonl"
        done = _completed_cell(path, fp, cfg["seeds"])
        if done is not None:
            log.info("sweep %s=%d already complete, skipping", param, value)
            cells[value] = done
            continue
        res = run_experiment(cfg["arch"], arch_cfg, tcfg, len(cfg["seeds"]), splits,
                             seeds=cfg["seeds"], workers=int(cfg["workers"]))
        vl = [_valid_loss(r) for r in res.runs]
        extra = {"cell": {"param": param, "value": value, "dims": cell_cfg["model"]["dims"]},
                 "valid_loss": _mean_std(vl)}
        write_results(res, path, extra)
        cells[value] = read_results(path)[-1]
    tasks = list(cells[values[0]]["metrics"])
    header = ["param", "value", "split", "task", "metric", "mean", "std", "n"]
    rows = []
    for v in values:
        c = cells[v]
        for task in tasks:
            for metric, st in c["metrics"][task].items():
                rows.append([param, v, "test", task, metric, _fmt(st["mean"]), _fmt(st["std"]), st["n"]])
        rows.append([param, v, "valid", "all", "loss", _fmt(c["valid_loss"]["mean"]), _fmt(c["valid_loss"]["std"]),
                     c["valid_loss"]["n"]])
    _write_csv(out / "sweep.csv", header, rows)
    report = trend_report(values, cells, tasks)
    with open(out / "trend.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    plot_sweep(
        values,
        {t: [cells[v]["metrics"][t]["auc"]["mean"] for v in values] for t in tasks},
        {t: [cells[v]["metrics"][t]["auc"]["std"] for v in values] for t in tasks},
        out / "sweep.png",
        xlabel="experts per task" if param == "experts" else "levels",
    )
    _print_table(header, rows)
    for task, t in report["tasks"].items():
        print(f"trend {task}: AUC non-decreasing = {t['non_decreasing']}")
    print(f"trend validation loss non-increasing = {report['valid_loss_non_increasing']}")
    return EXIT_OK


def _mean_std(vals: Sequence[float]) -> dict[str, float]:
    a = np.asarray(vals, dtype=float)
    return {"mean": float(a.mean()), "std": float(a.std(ddof=1)) if len(a) > 1 else 0.0, "n": int(len(a))}


def _completed_cell(path: Path, fp: str, seeds: Sequence[int]) -> dict[str, Any] | None:
    if not path.exists():
        return None
    try:
        last = read_results(path)[-1]
    except (OSError, ValueError, IndexError):
        return None
    if last.get("type") == "summary" and last.get("fingerprint") == fp and last.get("seeds") == list(seeds):
        return last
    return None


def cmd_ablate(args) -> int:
    out = Path(args.out)
    cfg = _resolve(args, "adatt")
    if cfg["arch"] not in ("adatt", "adatt_sp"):
        raise ConfigError(f"native-fusion ablation needs adatt or adatt_sp, not {cfg['arch']!r}")
    splits, _, _, _ = _prepare(cfg, out)
    tcfg = train_config(cfg)
    results = {}
    for name, flag in (("full", False), ("ablated", True)):
        c = json.loads(json.dumps(cfg))
        c["model"]["ablate_native_fusion"] = flag
        arch_cfg = build_arch_config(c, splits.train.num_tasks, input_dim_of(splits), splits.train.task_kinds)
        results[name] = run_experiment(cfg["arch"], arch_cfg, tcfg, len(cfg["seeds"]), splits,
                                       seeds=cfg["seeds"], workers=int(cfg["workers"]),
                                       results_path=out / f"results_{name}.jsonl")
    full, abl = results["full"], results["ablated"]
    deg = degradation(full.summary, abl.summary)
    header = ["task", "metric", "full_mean", "full_std", "ablated_mean", "ablated_std", "degradation_pct"]
    rows = []
    for task, metrics in full.summary.items():
        for metric, st in metrics.items():
            a = abl.summary[task][metric]
            rows.append([task, metric, _fmt(st["mean"]), _fmt(st["std"]), _fmt(a["mean"]), _fmt(a["std"]),
                         _fmt(deg[task].get(metric, float("nan")))])
    _write_csv(out / "ablation.csv", header, rows)
    # per-seed deltas; positive = ablated run worse
    paired = []
    for rf, ra in zip(full.runs, abl.runs):
        for task in rf["test"]:
            for metric, fv in rf["test"][task].items():
                av = ra["test"][task][metric]
                sign = 1.0 if metric == "auc" else -1.0
                paired.append([rf["seed"], task, metric, _fmt(fv), _fmt(av), _fmt(sign * (fv - av))])
    _write_csv(out / "ablation_paired.csv", ["seed", "task", "metric", "full", "ablated", "delta"], paired)
    plot_ablation({t: deg[t].get("auc", float("nan")) for t in deg}, out / "ablation.png")
    _print_table(header, rows)
    return EXIT_OK


def cmd_gates(args) -> int:
    model, _, data = _load_for_checkpoint(args)
    snaps = capture_weights(model, data, batch_size=args.batch_size, include_shared=args.include_shared)
    for p in export_heatmap_data(snaps, args.out, components=args.components):
        print(p)
    return EXIT_OK


COMMANDS = {"train": cmd_train, "evaluate": cmd_evaluate, "sweep": cmd_sweep, "ablate": cmd_ablate, "gates": cmd_gates}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAIN
    except (DataError, CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, UnsupportedArchitectureError, UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
