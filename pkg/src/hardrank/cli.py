"""Experiment runner: seeded end-to-end runs, grid sweeps, analysis.

Configuration is a flat dotted-key table (``train.lr = 0.005``), loadable
from a key-value text file and overridable by command-line flags of the
same meaning. Every report path writes delimited output and a rendered
figure side by side.

Subcommands: run, sweep, analyze, curve, datastats.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, data, evaluation, plotting, prefcurve
from .errors import ConfigError, HardrankError
from .model import GraphPropagation, ScoringModel, init_embeddings, save_checkpoint, load_checkpoint
from .prefcurve import PreferenceCurve
from .sampling import SamplerConfig
from .training import LossConfig, TrainConfig, train

__all__ = ["main", "run", "sweep", "resolve_config", "DEFAULTS"]

DEFAULTS = {
    "data.source": "synthetic",      # synthetic | file | presplit
    "data.path": "",
    "data.format": "tsv",
    "data.kcore": 0,
    "data.train": "",
    "data.val": "",
    "data.test": "",
    "synthetic.n_users": 200,
    "synthetic.n_items": 500,
    "synthetic.latent_dim": 8,
    "synthetic.per_user": 30,
    "synthetic.fn_fraction": 0.2,
    "synthetic.noise": 0.1,
    "model.kind": "mf",              # mf | lightgcn
    "model.dim": 16,
    "model.layers": 2,
    "sampler.kind": "dns",           # rns | dns
    "sampler.pool_size": 16,
    "loss.kind": "hardbpr",          # bpr | hardbpr
    "loss.a": 1.0,
    "loss.b": 0.0,
    "loss.c": 1.0,
    "loss.l2": 0.0,
    "train.epochs": 30,
    "train.batch_size": 2048,
    "train.eval_every": 1,
    "train.patience": 10,
    "train.k": 50,
    "train.lr": 0.01,
    "seed": 0,
    "out": "runs/run",
}

_CHOICES = {
    "data.source": ("synthetic", "file", "presplit"),
    "data.format": ("tsv", "csv"),
    "model.kind": ("mf", "lightgcn"),
    "sampler.kind": ("rns", "dns"),
    "loss.kind": ("bpr", "hardbpr"),
}


def _convert(key: str, raw):
    default = DEFAULTS[key]
    try:
        if isinstance(default, bool):
            return str(raw).lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return str(raw)
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for key {key}") from None


def parse_config_file(path) -> dict:
    """Flat `key = value` lines; '#' starts a comment; unknown keys rejected."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in DEFAULTS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _convert(key, raw)
    return values


def resolve_config(file_values=None, overrides=None) -> dict:
    """Defaults <- config file <- explicit overrides; validates choices."""
    cfg = dict(DEFAULTS)
    for source in (file_values or {}), (overrides or {}):
        for key, value in source.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown key {key!r}")
            cfg[key] = _convert(key, value)
    for key, allowed in _CHOICES.items():
        if cfg[key] not in allowed:
            raise ConfigError(f"{key}: {cfg[key]!r} is not one of {allowed}")
    return cfg


def _build_dataset(cfg):
    """Returns (dataset, planted false negatives or None)."""
    source = cfg["data.source"]
    if source == "synthetic":
        spec = data.SyntheticSpec(
            n_users=cfg["synthetic.n_users"],
            n_items=cfg["synthetic.n_items"],
            latent_dim=cfg["synthetic.latent_dim"],
            interactions_per_user=cfg["synthetic.per_user"],
            false_negative_fraction=cfg["synthetic.fn_fraction"],
            noise_level=cfg["synthetic.noise"],
            seed=cfg["seed"],
        )
        return data.generate_synthetic(spec)
    if source == "file":
        rows = data.load_interactions(cfg["data.path"], cfg["data.format"])
        if cfg["data.kcore"] > 0:
            rows = data.k_core_filter(rows, cfg["data.kcore"])
        return data.temporal_split(rows), None
    return data.load_presplit(cfg["data.train"], cfg["data.val"], cfg["data.test"],
                              cfg["data.format"]), None


def _build_model(cfg, dataset) -> ScoringModel:
    table = init_embeddings(dataset.n_users, dataset.n_items,
                            cfg["model.dim"], cfg["seed"])
    graph = None
    if cfg["model.kind"] == "lightgcn":
        graph = GraphPropagation(dataset, n_layers=cfg["model.layers"])
    return ScoringModel(table, kind=cfg["model.kind"], graph=graph)


def _loss_config(cfg) -> LossConfig:
    if cfg["loss.kind"] == "bpr":
        return LossConfig(kind="bpr", l2=cfg["loss.l2"])
    curve = PreferenceCurve(cfg["loss.a"], cfg["loss.b"], cfg["loss.c"])
    return LossConfig(kind="hardbpr", curve=curve, l2=cfg["loss.l2"])


RUN_MANIFEST = ("config.json", "metrics.csv", "checkpoint.npz", "training_curves.png")


def check_manifest(out_dir) -> list:
    """Names from the run manifest missing in ``out_dir``."""
    out = Path(out_dir)
    return [name for name in RUN_MANIFEST if not (out / name).exists()]


def run(cfg: dict, quiet: bool = False) -> int:
    """Train, select the best-validation checkpoint, report test metrics."""
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    dataset, planted = _build_dataset(cfg)
    model = _build_model(cfg, dataset)
    sampler = SamplerConfig(kind=cfg["sampler.kind"],
                            pool_size=cfg["sampler.pool_size"], seed=cfg["seed"])
    loss = _loss_config(cfg)
    tcfg = TrainConfig(
        epochs=cfg["train.epochs"],
        batch_size=cfg["train.batch_size"],
        eval_every=cfg["train.eval_every"],
        early_stop_patience=cfg["train.patience"],
        k=cfg["train.k"],
        seed=cfg["seed"],
        learning_rate=cfg["train.lr"],
    )

    with open(out / "config.json", "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)

    result = train(dataset, model, sampler, loss, tcfg)

    with open(out / "metrics.csv", "w") as fh:
        fh.write(evaluation.METRIC_CSV_HEADER + "\n")
        for report in result.reports:
            fh.write(evaluation.metric_csv_row(report) + "\n")
    plotting.save_training_curves(result.reports, out / "training_curves.png", k=tcfg.k)

    best = ScoringModel(result.best_table, kind=model.kind, graph=model.graph)
    test_report = evaluation.evaluate(best, dataset, "test", tcfg.k,
                                      exclusion="train+val", epoch=result.best_epoch)
    save_checkpoint(out / "checkpoint.npz", result.best_table, model.kind,
                    cfg["seed"], dataset.user_ids, dataset.item_ids)

    if planted is not None:
        with open(out / "planted_false_negatives.csv", "w") as fh:
            fh.write("user_idx,item_idx\n")
            for u, i in planted:
                fh.write(f"{u},{i}\n")

    summary = (f"test_recall@{tcfg.k}={test_report.recall:.6f} "
               f"test_ndcg@{tcfg.k}={test_report.ndcg:.6f}")
    with open(out / "summary.txt", "w") as fh:
        fh.write(summary + "\n")
    if not quiet:
        print(summary)
    missing = check_manifest(out)
    if missing:
        raise HardrankError(f"run outputs incomplete, missing: {missing}")
    return 0


# --- sweeps -----------------------------------------------------------------

# Reported axis of the translation study: vary b with a = c = 1.
PRESET_B = {"loss.kind": ["hardbpr"], "loss.a": [1.0], "loss.c": [1.0],
            "loss.b": [-3.0, 0.0, 0.9, 3.0]}


def _c_preset_cells():
    # Shape study: fix a, widen the curve by shrinking c while moving b to
    # keep the magnitude peak at the same margin.
    a, x0 = 0.1, 0.0
    peak_term = float(np.log(np.sqrt(a) / np.sqrt(1.0 + a)))
    cells = {"loss.kind": ["hardbpr"], "loss.a": [a], "loss.c": [], "loss.b": []}
    for c in (2.0, 1.0, 0.4, 0.24):
        cells["loss.c"].append(c)
        cells["loss.b"].append(peak_term - c * x0)
    return cells


def _grid_cells(grid: dict, paired: bool):
    keys = sorted(grid)
    if paired:
        length = max(len(grid[k]) for k in keys)
        if any(len(grid[k]) not in (1, length) for k in keys):
            raise ConfigError("paired grid lists must share one length (or be singletons)")
        cols = [grid[k] * length if len(grid[k]) == 1 else grid[k] for k in keys]
        for row in zip(*cols):
            yield dict(zip(keys, row))
    else:
        for combo in itertools.product(*(grid[k] for k in keys)):
            yield dict(zip(keys, combo))


def _cell_id(cell: dict) -> str:
    return "_".join(f"{k.split('.')[-1]}={cell[k]}" for k in sorted(cell))


def _run_cell(args):
    base_cfg, cell, out_dir = args
    cfg = dict(base_cfg)
    cfg.update(cell)
    cfg["out"] = str(Path(out_dir) / f"cell_{_cell_id(cell)}")
    try:
        run(cfg, quiet=True)
        with open(Path(cfg["out"]) / "summary.txt") as fh:
            summary = fh.read().strip()
        parts = dict(p.split("=") for p in summary.split())
        recall = float(next(v for k, v in parts.items() if k.startswith("test_recall")))
        ndcg = float(next(v for k, v in parts.items() if k.startswith("test_ndcg")))
        with open(Path(cfg["out"]) / "metrics.csv") as fh:
            rows = list(csv.DictReader(fh))
        best_val = max((float(r["recall_at_K"]) for r in rows if r["split"] == "val"),
                       default=float("nan"))
        return _cell_id(cell), cell, "ok", best_val, recall, ndcg
    except HardrankError as exc:
        return _cell_id(cell), cell, f"error: {exc}", float("nan"), float("nan"), float("nan")


def sweep(base_cfg: dict, grid: dict, out_dir, paired: bool = False,
          quiet: bool = False) -> int:
    """Run every grid cell; append a results row per cell; resumable.

    Completed cells (present in results.csv) are skipped. Worker count is
    bounded by HARDRANK_THREADS; unset means sequential. Per-cell seeding
    is independent of scheduling, so parallel results equal sequential.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results_path = out / "results.csv"
    done = set()
    if results_path.exists():
        with open(results_path) as fh:
            done = {row["cell"] for row in csv.DictReader(fh)}
    else:
        with open(results_path, "w") as fh:
            fh.write("cell,params,status,best_val_recall,test_recall,test_ndcg\n")

    cells = [c for c in _grid_cells(grid, paired) if _cell_id(c) not in done]
    jobs = [(base_cfg, cell, str(out)) for cell in cells]
    workers = int(os.environ.get("HARDRANK_THREADS", "1"))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_cell, jobs))
    else:
        outcomes = [_run_cell(job) for job in jobs]

    with open(results_path, "a") as fh:
        for cell_id, cell, status, best_val, recall, ndcg in outcomes:
            params = ";".join(f"{k}={cell[k]}" for k in sorted(cell))
            fh.write(f"{cell_id},{params},{status},{best_val:.6f},{recall:.6f},{ndcg:.6f}\n")
            if not quiet:
                print(f"{cell_id}: {status} best_val={best_val:.4f} test={recall:.4f}")

    curve_cells = [c for c in _grid_cells(grid, paired)
                   if c.get("loss.kind", base_cfg["loss.kind"]) == "hardbpr"]
    if curve_cells:
        sweeps = []
        for cell in curve_cells:
            merged = dict(base_cfg)
            merged.update(cell)
            curve = PreferenceCurve(merged["loss.a"], merged["loss.b"], merged["loss.c"])
            sweeps.append((_cell_id(cell), analysis.delta_curve_sweep(curve, (-10, 10), 400)))
        plotting.save_sweep_curves(sweeps, out / "sweep_curves.png")
    return 0


# --- secondary subcommands --------------------------------------------------

def _cmd_curve(args) -> int:
    curve = PreferenceCurve(args.a, args.b, args.c)
    table = prefcurve.curve_sweep(curve, args.x_min, args.x_max, args.steps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "curve.csv", "w") as fh:
        fh.write(",".join(prefcurve.SWEEP_COLUMNS) + "\n")
        for row in table:
            fh.write(",".join(f"{v:.10g}" for v in row) + "\n")
    plotting.save_curve_figure(table, curve, out / "curve.png")
    print(f"wrote {out / 'curve.csv'}")
    return 0


def _cmd_datastats(cfg) -> int:
    dataset, _ = _build_dataset(cfg)
    print(data.SUMMARY_HEADER)
    print(data.summary_line(dataset))
    return 0


def _cmd_analyze(args, cfg) -> int:
    dataset, planted = _build_dataset(cfg)
    table, kind, _seed = load_checkpoint(args.checkpoint)
    graph = GraphPropagation(dataset, cfg["model.layers"]) if kind == "lightgcn" else None
    model = ScoringModel(table, kind=kind, graph=graph)
    samples = analysis.collect_scores(
        model, dataset, planted_false_negatives=planted,
        tn_per_user=None if args.all_true_negatives else args.tn_per_user,
        seed=cfg["seed"])
    tn = analysis.scores_by_label(samples, analysis.TRUE_NEGATIVE)
    fn = analysis.scores_by_label(samples, analysis.FALSE_NEGATIVE)
    tn_density = analysis.kde(tn)
    fn_density = analysis.kde(fn)
    kl = analysis.kl_divergence(fn_density, tn_density)

    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "samples.csv", "w") as fh:
        fh.write("label,score\n")
        for s in samples:
            fh.write(f"{s.label},{s.score:.8g}\n")
    grid = np.linspace(min(tn_density.grid[0], fn_density.grid[0]),
                       max(tn_density.grid[-1], fn_density.grid[-1]), 512)
    with open(out / "densities.csv", "w") as fh:
        fh.write("x,density_tn,density_fn\n")
        dtn = analysis._eval_kernels(tn_density.samples, tn_density.bandwidth, grid)
        dfn = analysis._eval_kernels(fn_density.samples, fn_density.bandwidth, grid)
        for x, a, b in zip(grid, dtn, dfn):
            fh.write(f"{x:.8g},{a:.8g},{b:.8g}\n")
    with open(out / "kl.txt", "w") as fh:
        fh.write(f"kl_divergence={kl:.6f}\n")
    plotting.save_density_figure(tn_density, fn_density, kl, out / "densities.png")
    print(f"kl_divergence={kl:.6f}")
    return 0


# --- argument parsing -------------------------------------------------------

_FLAG_KEYS = {
    "dataset": "data.path",
    "format": "data.format",
    "kcore": "data.kcore",
    "model": "model.kind",
    "dim": "model.dim",
    "layers": "model.layers",
    "sampler": "sampler.kind",
    "pool_size": "sampler.pool_size",
    "loss": "loss.kind",
    "a": "loss.a",
    "b": "loss.b",
    "c": "loss.c",
    "l2": "loss.l2",
    "lr": "train.lr",
    "epochs": "train.epochs",
    "batch_size": "train.batch_size",
    "eval_every": "train.eval_every",
    "patience": "train.patience",
    "k": "train.k",
    "seed": "seed",
    "out": "out",
}


def _add_common_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--dataset", help="raw interaction file (temporal split applied)")
    p.add_argument("--presplit", nargs=3, metavar=("TRAIN", "VAL", "TEST"),
                   help="pre-split user/item files")
    p.add_argument("--synthetic", help="synthetic spec, e.g. "
                   "'n_users=200,n_items=500,latent_dim=8,per_user=30,fn_fraction=0.2,noise=0.1'")
    p.add_argument("--format", choices=("tsv", "csv"))
    p.add_argument("--kcore", type=int)
    p.add_argument("--model", choices=("mf", "lightgcn"))
    p.add_argument("--dim", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--sampler", choices=("rns", "dns"))
    p.add_argument("--pool-size", dest="pool_size", type=int, metavar="H")
    p.add_argument("--loss", choices=("bpr", "hardbpr"))
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--eval-every", dest="eval_every", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")


def _config_from_args(args) -> dict:
    file_values = parse_config_file(args.config) if args.config else {}
    overrides = {}
    for flag, key in _FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "dataset", None):
        overrides["data.source"] = "file"
    if getattr(args, "presplit", None):
        overrides["data.source"] = "presplit"
        overrides["data.train"], overrides["data.val"], overrides["data.test"] = args.presplit
    if getattr(args, "synthetic", None):
        overrides["data.source"] = "synthetic"
        for part in args.synthetic.split(","):
            if "=" not in part:
                raise ConfigError(f"bad synthetic spec fragment {part!r}")
            k, v = part.split("=", 1)
            overrides[f"synthetic.{k.strip()}"] = v.strip()
    return resolve_config(file_values, overrides)


def _parse_grid(specs) -> dict:
    grid = {}
    for spec in specs or []:
        if "=" not in spec:
            raise ConfigError(f"bad grid spec {spec!r}; expected key=v1,v2,...")
        key, raw = spec.split("=", 1)
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"unknown grid key {key!r}")
        grid[key] = [_convert(key, v.strip()) for v in raw.split(",")]
    return grid


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hardrank",
        description="Pairwise-ranking training engine with hard negative sampling.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="single end-to-end training run")
    _add_common_flags(p_run)

    p_sweep = sub.add_parser("sweep", help="grid sweep over config keys")
    _add_common_flags(p_sweep)
    p_sweep.add_argument("--grid", action="append", metavar="key=v1,v2",
                         help="repeatable; Cartesian product over keys")
    p_sweep.add_argument("--preset", choices=("b", "c"),
                         help="built-in translation (b) or shape (c) study")

    p_an = sub.add_parser("analyze", help="false-negative analysis on a checkpoint")
    _add_common_flags(p_an)
    p_an.add_argument("--checkpoint", required=True)
    p_an.add_argument("--tn-per-user", dest="tn_per_user", type=int, default=200)
    p_an.add_argument("--all-true-negatives", action="store_true",
                      help="disable true-negative subsampling")

    p_curve = sub.add_parser("curve", help="tabulate and plot a preference curve")
    p_curve.add_argument("--a", type=float, default=1.0)
    p_curve.add_argument("--b", type=float, default=-1.0)
    p_curve.add_argument("--c", type=float, default=0.8)
    p_curve.add_argument("--x-min", dest="x_min", type=float, default=-10.0)
    p_curve.add_argument("--x-max", dest="x_max", type=float, default=10.0)
    p_curve.add_argument("--steps", type=int, default=400)
    p_curve.add_argument("--out", default="runs/curve")

    p_stats = sub.add_parser("datastats", help="dataset summary statistics")
    _add_common_flags(p_stats)

    args = parser.parse_args(argv)
    try:
        if args.command == "curve":
            return _cmd_curve(args)
        cfg = _config_from_args(args)
        if args.command == "run":
            return run(cfg)
        if args.command == "datastats":
            return _cmd_datastats(cfg)
        if args.command == "analyze":
            return _cmd_analyze(args, cfg)
        if args.command == "sweep":
            if args.preset == "b":
                grid, paired = PRESET_B, False
            elif args.preset == "c":
                grid, paired = _c_preset_cells(), True
            else:
                grid, paired = _parse_grid(args.grid), False
            if not grid:
                raise ConfigError("sweep needs --grid or --preset")
            return sweep(cfg, grid, cfg["out"], paired=paired)
        raise ConfigError(f"unknown command {args.command!r}")
    except (HardrankError, OSError) as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
