"""Command-line entry point: ``gtcnn synth|train|eval|ablate|inspect-graph``.

Configs are YAML mappings; every section is validated strictly, so a typo
in a key is an error rather than a silently ignored setting. Each command
writes plain CSV plus a ``metadata.json`` sidecar echoing the resolved
config.

Exit codes: 0 success, 2 configuration error, 3 data/checkpoint error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import itertools
import json
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import config as cfg
from .datasets import (
    SampleSet,
    gen_diffusion_series,
    gen_source_localization,
    load_dataset,
    load_timeseries_csv,
    persistence_forecast,
    save_dataset,
    window_series,
)
from .errors import CheckpointError, ConfigError, DataError, InvalidSizeError, SamplingError, SizeMismatchError
from .graphs import SpatialGraph, build_geometric_graph, build_temporal_graph, is_connected, load_coordinates_csv, sample_sbm
from .model import GTCNN, ModelConfig, load_checkpoint, save_checkpoint
from .product import PRESETS as PRODUCT_PRESETS
from .product import ProductParams, build_product_shift, edge_count_formula, product_edge_count
from .sparse import SparseMatrix, read_edge_list, spectral_radius
from .training import TrainConfig, metric_accuracy, metric_rnmse, multistep_rnmse, train, write_history_csv

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3
WORKERS_ENV = "GTCNN_WORKERS"

# -- presets -------------------------------------------------------------------------

_SOURCE_LOC_SYNTH = {
    "graph": {"kind": "sbm", "N": 100, "communities": 5, "p_in": 0.8, "p_out": 0.2},
    "dataset": {"kind": "source-localization", "n_samples": 1200, "T": 2, "t_max": 25, "ratios": [0.8, 0.1, 0.1]},
}
_SOURCE_LOC_RUN = {
    "model": {
        "layers": [{"features": 2, "order": 2}, {"features": 2, "order": 2}],
        "product": "parametric",
    },
    "train": {"epochs": 8000, "batch_size": 100, "lr": 3e-3},
}
_FORECAST_SYNTH = {
    "graph": {"kind": "sbm", "N": 32, "communities": 4, "p_in": 0.3, "p_out": 0.02},
    "dataset": {"kind": "diffusion-series", "n_steps": 2000, "T": 4, "decay": 0.95, "noise": 1.0, "ratios": [0.7, 0.15, 0.15]},
}
_FORECAST_RUN = {
    "model": {
        "layers": [{"features": 4, "order": 2, "nonlinearity": "identity"}],
        "product": "parametric",
    },
    "train": {"epochs": 200, "batch_size": 50, "lr": 1e-3, "l1_coupling": 1e-3, "patience": 20},
}

SYNTH_PRESETS = {
    "source-localization": _SOURCE_LOC_SYNTH,
    "paper": _SOURCE_LOC_SYNTH,
    "diffusion-forecast": _FORECAST_SYNTH,
}
RUN_PRESETS = {
    "source-localization": _SOURCE_LOC_RUN,
    "paper": _SOURCE_LOC_RUN,
    "diffusion-forecast": _FORECAST_RUN,
}


def deep_merge(base: dict, override: dict) -> dict:
    """Recursive dict merge; lists and scalars in ``override`` replace ``base``."""
    out = copy.deepcopy(base)
    for key, val in (override or {}).items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _apply_preset(raw: dict, presets: dict, where: str) -> dict:
    raw = dict(raw or {})
    name = raw.pop("preset", None)
    if name is None:
        return raw
    if name not in presets:
        raise ConfigError(f"{where}.preset: unknown preset {name!r} (known: {', '.join(sorted(presets))})")
    return deep_merge(presets[name], raw)


def load_yaml(path) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


# -- synth -------------------------------------------------------------------------


@dataclass
class GraphSpec:
    kind: str = "sbm"
    N: int = 100
    communities: int = 5
    p_in: float = 0.8
    p_out: float = 0.2
    path: str | None = None
    threshold: float | None = None

    def __post_init__(self):
        if self.kind not in ("sbm", "edge-list", "geometric"):
            raise ConfigError(f"graph.kind must be sbm, edge-list or geometric, got {self.kind!r}")
        if self.kind != "sbm" and not self.path:
            raise ConfigError(f"graph.path is required for {self.kind} graphs")
        if self.kind == "geometric" and self.threshold is None:
            raise ConfigError("graph.threshold (km) is required for geometric graphs")


@dataclass
class DataSpec:
    kind: str = "source-localization"
    T: int = 2
    ratios: list = field(default_factory=lambda: [0.8, 0.1, 0.1])
    n_samples: int = 1200
    t_max: int = 25
    noise: float | None = None
    label: str = "community"
    rescale: bool = False
    n_steps: int = 1000
    decay: float = 0.9
    path: str | None = None
    node_ids: list | None = None

    def __post_init__(self):
        if self.kind not in ("source-localization", "diffusion-series", "csv"):
            raise ConfigError(f"dataset.kind must be source-localization, diffusion-series or csv, got {self.kind!r}")
        if self.T < 1:
            raise ConfigError("dataset.T must be >= 1")
        if len(self.ratios) != 3 or any(r < 0 for r in self.ratios) or abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ConfigError("dataset.ratios must be three non-negative numbers summing to 1")
        if self.kind == "csv" and not self.path:
            raise ConfigError("dataset.path is required for csv datasets")


@dataclass
class SynthConfig:
    graph: dict = field(default_factory=dict)
    dataset: dict = field(default_factory=dict)
    seed: int = 0
    output: str | None = None


def resolve_synth(raw: dict) -> dict:
    """Preset-expanded synth config as a plain dict (validated)."""
    raw = _apply_preset(raw, SYNTH_PRESETS, "synth")
    parsed = cfg.build(SynthConfig, raw, "synth")
    cfg.build(GraphSpec, parsed.graph, "graph")
    cfg.build(DataSpec, parsed.dataset, "dataset")
    return raw


def _derived_seeds(seed: int) -> tuple[int, int]:
    """Independent graph and data seeds from one user seed."""
    a, b = np.random.SeedSequence(int(seed)).generate_state(2)
    return int(a), int(b)


def build_graph(spec: GraphSpec, seed: int) -> SpatialGraph:
    if spec.kind == "sbm":
        return sample_sbm(spec.N, spec.communities, spec.p_in, spec.p_out, seed=seed)
    if spec.kind == "edge-list":
        shift = read_edge_list(spec.path)
        return SpatialGraph(shift, undirected=shift.is_symmetric())
    ids, coords = load_coordinates_csv(spec.path)
    graph = build_geometric_graph(coords, spec.threshold)
    return SpatialGraph(graph.shift, labels=None, coords=coords, meta={"station_ids": ids})


def synthesize(raw: dict) -> tuple[SampleSet, SpatialGraph, dict]:
    """Build graph and dataset from a synth config; returns them with the resolved config."""
    resolved = resolve_synth(raw)
    conf = cfg.build(SynthConfig, resolved, "synth")
    gspec = cfg.build(GraphSpec, conf.graph, "graph")
    dspec = cfg.build(DataSpec, conf.dataset, "dataset")
    graph_seed, data_seed = _derived_seeds(conf.seed)
    graph = build_graph(gspec, graph_seed)
    if dspec.kind == "source-localization":
        ds = gen_source_localization(
            graph, dspec.n_samples, dspec.T, seed=data_seed, t_max=dspec.t_max, noise=0.0 if dspec.noise is None else dspec.noise,
            ratios=tuple(dspec.ratios), label=dspec.label, rescale=dspec.rescale,
        )
    elif dspec.kind == "diffusion-series":
        series = gen_diffusion_series(graph, dspec.n_steps, seed=data_seed, decay=dspec.decay,
            noise=1.0 if dspec.noise is None else dspec.noise,
        )
        ds = window_series(series, dspec.T, tuple(dspec.ratios), {"kind": "diffusion_series", "seed": data_seed})
    else:
        ds = load_timeseries_csv(dspec.path, graph, dspec.T, dspec.node_ids, tuple(dspec.ratios))
    ds.meta["synth_config"] = resolved
    return ds, graph, resolved


def cmd_synth(args) -> int:
    raw = load_yaml(args.config) if args.config else {}
    if args.preset:
        raw.setdefault("preset", args.preset)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.output:
        raw["output"] = args.output
    out = raw.get("output")
    if not out:
        raise ConfigError("synth: an output directory is required (output: key or --output)")
    ds, graph, resolved = synthesize(raw)
    path = save_dataset(ds, graph, out)
    print(f"wrote {len(ds)} samples ({ds.task}) to {path} [dataset {ds.digest()[:12]}, graph {graph.digest()[:12]}]")
    return EXIT_OK


# -- train -----------------------------------------------------------------------


@dataclass
class RunConfig:
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    variant: str = "gtcnn"
    no_pooling: bool = False
    seed: int | None = None
    dataset: str | None = None
    output: str | None = None

    def __post_init__(self):
        if self.variant not in ("gtcnn", "gcnn"):
            raise ConfigError(f"variant must be 'gtcnn' or 'gcnn', got {self.variant!r}")


def resolve_run(raw: dict) -> dict:
    raw = _apply_preset(raw, RUN_PRESETS, "run")
    cfg.build(RunConfig, raw, "run")
    return raw


def model_config_for(run: RunConfig, ds: SampleSet) -> ModelConfig:
    """Complete a model section with the sizes implied by the dataset and run flags."""
    model = copy.deepcopy(run.model)
    n, N, T = ds.inputs.shape
    for key, val in (("N", N), ("T", T)):
        if key in model and model[key] != val:
            raise SizeMismatchError(f"model.{key}={model[key]} but the dataset has {key}={val}")
        model[key] = val
    model.setdefault("task", ds.task)
    if model["task"] != ds.task:
        raise ConfigError(f"model.task={model['task']!r} but the dataset is a {ds.task} dataset")
    if ds.task == "classify" and "num_classes" not in model:
        model["num_classes"] = int(ds.targets.max()) + 1
    if run.seed is not None:
        model["seed"] = run.seed
    if run.no_pooling:
        model["layers"] = [
            {k: v for k, v in dict(layer).items() if k not in ("alpha", "ratio", "active")} for layer in model.get("layers", [])
        ]
    if run.variant == "gcnn":
        model["time_as_features"] = True
        model["product"] = "cartesian"
        model.pop("learn_coupling", None)
        model.pop("per_pair_coupling", None)
    return ModelConfig.from_dict(model)


def train_config_for(run: RunConfig) -> TrainConfig:
    data = dict(run.train)
    if run.seed is not None:
        data["seed"] = run.seed
    return TrainConfig.from_dict(data)


def evaluate(model: GTCNN, ds: SampleSet, split: str = "test", steps: int = 1) -> list:
    """Metric rows ``{split, predictor, metric, step, value}`` for a trained model."""
    X, y = ds.split(split)
    if len(X) == 0:
        raise DataError(f"the {split} split is empty")
    if ds.task == "classify":
        acc = metric_accuracy(model(X).argmax(axis=1), y)
        return [{"split": split, "predictor": "model", "metric": "accuracy", "step": 1, "value": acc}]
    rows = []
    predictors = {
        "model": model,
        "persistence": persistence_forecast,
        "mean": lambda W: np.zeros(W.shape[:-1]),
    }
    for name, fn in predictors.items():
        scores = multistep_rnmse(fn, ds, steps, split)
        rows += [{"split": split, "predictor": name, "metric": "rnmse", "step": k + 1, "value": v} for k, v in enumerate(scores)]
    return rows


def write_rows(rows: list, path, fields=None) -> None:
    fields = fields or list(rows[0])
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(float(v)) if isinstance(v, float) else v for k, v in row.items()})


def _environment() -> dict:
    import scipy

    return {"gtcnn": __version__, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}


def run_training(run_raw: dict, ds: SampleSet, graph: SpatialGraph, out_dir, log=None) -> dict:
    """Train one model on ``ds`` and write checkpoint, history, metrics and sidecar to ``out_dir``."""
    run = cfg.build(RunConfig, run_raw, "run")
    mconf = model_config_for(run, ds)
    tconf = train_config_for(run)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = GTCNN(mconf, graph)
    t0 = time.perf_counter()
    result = train(model, ds, tconf, log=log)
    elapsed = time.perf_counter() - t0
    write_history_csv(result.history, out / "history.csv", with_wall_time=tconf.record_wall_time)
    meta = {
        "command": "train",
        "run_config": run_raw,
        "model_config": mconf.to_dict(),
        "train_config": tconf.__dict__,
        "dataset_digest": ds.digest(),
        "graph_digest": graph.digest(),
        "best_epoch": result.best_epoch,
        "best_val_loss": result.best_val_loss,
    }
    save_checkpoint(model, out / "checkpoint.npz", metadata={k: meta[k] for k in ("dataset_digest", "best_epoch")})
    rows = evaluate(model, ds, "test")
    write_rows(rows, out / "metrics.csv")
    meta["test_metrics"] = rows
    meta["environment"] = _environment()
    meta["wall_time"] = elapsed
    meta["wall_time_per_epoch"] = [h["wall_time"] for h in result.history]
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")
    return meta


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def cmd_train(args) -> int:
    raw = load_yaml(args.config) if args.config else {}
    if args.preset:
        raw.setdefault("preset", args.preset)
    raw = resolve_run(raw)
    if args.dataset:
        raw["dataset"] = args.dataset
    if args.output:
        raw["output"] = args.output
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.epochs is not None:
        raw.setdefault("train", {})["epochs"] = args.epochs
    if args.product:
        raw.setdefault("model", {})["product"] = args.product
        raw["model"].pop("learn_coupling", None)
    if args.no_pooling:
        raw["no_pooling"] = True
    if args.gcnn:
        raw["variant"] = "gcnn"
    if not raw.get("dataset") or not raw.get("output"):
        raise ConfigError("train: both a dataset directory and an output directory are required")
    # config errors are reported before any data is touched
    train_config_for(cfg.build(RunConfig, raw, "run"))
    ds, graph = load_dataset(raw["dataset"])
    log = None
    if args.verbose:
        log = lambda row: print(
            f"epoch {row['epoch']:5d}  train {row['train_loss']:.5f}  val {row['val_loss']:.5f}  metric {row['val_metric']:.4f}",
            flush=True,
        )
    meta = run_training(raw, ds, graph, raw["output"], log=log)
    for row in meta["test_metrics"]:
        print(f"{row['split']} {row['metric']}: {row['value']:.4f} (best epoch {meta['best_epoch']})")
    return EXIT_OK


# -- eval --------------------------------------------------------------------------


def cmd_eval(args) -> int:
    ds, graph = load_dataset(args.dataset)
    model = load_checkpoint(args.checkpoint, graph)
    if model.config.N != ds.inputs.shape[1] or model.config.T != ds.inputs.shape[2]:
        raise DataError(
            f"checkpoint expects (N, T) = ({model.config.N}, {model.config.T}), dataset has {ds.inputs.shape[1:]}"
        )
    if model.config.task != ds.task:
        raise DataError(f"checkpoint is a {model.config.task} model but the dataset is {ds.task}")
    if args.steps > 1 and ds.task == "classify":
        raise ConfigError("--steps applies to forecasting datasets only")
    rows = evaluate(model, ds, args.split, args.steps)
    if args.output:
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        write_rows(rows, args.output)
        sidecar = Path(args.output).with_suffix(".json")
        sidecar.write_text(
            json.dumps(
                {
                    "command": "eval",
                    "checkpoint": str(args.checkpoint),
                    "dataset": str(args.dataset),
                    "split": args.split,
                    "steps": args.steps,
                    "graph_digest": graph.digest(),
                    "dataset_digest": ds.digest(),
                    "model_config": model.config.to_dict(),
                },
                indent=2,
                sort_keys=True,
            )
            + "\n"
        )
    else:
        writer = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return EXIT_OK


# -- ablate ------------------------------------------------------------------------


@dataclass
class AblateConfig:
    grid: dict
    synth: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    seeds: list = field(default_factory=lambda: [0])
    output: str | None = None


def set_path(tree: dict, path: str, value) -> None:
    """Assign ``value`` at a dotted path; integer parts index lists."""
    parts = path.split(".")
    node = tree
    for i, part in enumerate(parts[:-1]):
        nxt = parts[i + 1]
        if isinstance(node, list):
            try:
                node = node[int(part)]
            except (ValueError, IndexError):
                raise ConfigError(f"grid path {path!r}: no list element {part!r}") from None
            continue
        if part not in node:
            node[part] = [] if nxt.isdigit() else {}
        node = node[part]
    last = parts[-1]
    if isinstance(node, list):
        try:
            node[int(last)] = value
        except (ValueError, IndexError):
            raise ConfigError(f"grid path {path!r}: no list element {last!r}") from None
    else:
        node[last] = value


def grid_cells(grid: dict) -> list:
    """Cartesian product of the grid axes, in declaration order."""
    if not grid:
        raise ConfigError("ablate: the grid is empty")
    keys = list(grid)
    values = []
    for key in keys:
        if not key.startswith(("synth.", "run.")):
            raise ConfigError(f"grid key {key!r} must start with 'synth.' or 'run.'")
        vals = grid[key]
        if not isinstance(vals, list) or not vals:
            raise ConfigError(f"grid key {key!r} needs a non-empty list of values")
        values.append(vals)
    return [dict(zip(keys, combo)) for combo in itertools.product(*values)]


def _ablation_task(task: tuple) -> dict:
    index, seed, cell, synth_raw, run_raw, out_dir = task
    tree = {"synth": copy.deepcopy(synth_raw), "run": copy.deepcopy(run_raw)}
    for key, val in cell.items():
        set_path(tree, key, val)
    tree["synth"]["seed"] = seed
    tree["run"]["seed"] = seed
    ds, graph, _ = synthesize(tree["synth"])
    meta = run_training(tree["run"], ds, graph, out_dir)
    (Path(out_dir) / "cell.json").write_text(json.dumps({"cell": cell, "seed": seed, "synth": tree["synth"]}, indent=2, sort_keys=True, default=_json_default) + "\n")
    metric = meta["test_metrics"][0]
    return {
        "cell": index,
        "seed": seed,
        **{k: json.dumps(v) if isinstance(v, (list, dict)) else v for k, v in cell.items()},
        "metric": metric["metric"],
        "value": metric["value"],
        "best_epoch": meta["best_epoch"],
    }


def aggregate(rows: list, keys: list) -> list:
    """Mean and (population) standard deviation of ``value`` per cell."""
    out = []
    by_cell: dict = {}
    for row in rows:
        by_cell.setdefault(row["cell"], []).append(row)
    for cell, group in sorted(by_cell.items()):
        vals = np.array([r["value"] for r in group], dtype=np.float64)
        out.append(
            {"cell": cell, **{k: group[0][k] for k in keys}, "metric": group[0]["metric"], "mean": float(vals.mean()), "std": float(vals.std()), "n": len(vals)}
        )
    return out


def worker_count(override: int | None = None) -> int:
    if override is not None:
        return max(1, override)
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def run_ablation(raw: dict, output=None, workers: int | None = None) -> tuple[list, list]:
    conf = cfg.build(AblateConfig, raw, "ablate")
    out = Path(output or conf.output or "")
    if not str(out):
        raise ConfigError("ablate: an output directory is required")
    synth_raw = _apply_preset(conf.synth, SYNTH_PRESETS, "synth")
    run_raw = _apply_preset(conf.run, RUN_PRESETS, "run")
    cells = grid_cells(conf.grid)
    if not conf.seeds:
        raise ConfigError("ablate: seeds must be a non-empty list")
    # validate every cell up front so a typo fails before any training starts
    for cell in cells:
        tree = {"synth": copy.deepcopy(synth_raw), "run": copy.deepcopy(run_raw)}
        for key, val in cell.items():
            set_path(tree, key, val)
        resolve_synth(tree["synth"])
        cfg.build(RunConfig, tree["run"], "run")
    tasks = [
        (i, int(seed), cell, synth_raw, run_raw, out / f"cell_{i:03d}" / f"seed_{int(seed)}")
        for i, cell in enumerate(cells)
        for seed in conf.seeds
    ]
    n_workers = worker_count(workers)
    if n_workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            rows = list(pool.map(_ablation_task, tasks))
    else:
        rows = [_ablation_task(t) for t in tasks]
    keys = list(conf.grid)
    out.mkdir(parents=True, exist_ok=True)
    write_rows(rows, out / "results.csv")
    summary = aggregate(rows, keys)
    write_rows(summary, out / "summary.csv")
    (out / "metadata.json").write_text(
        json.dumps({"command": "ablate", "config": raw, "cells": cells, "environment": _environment()}, indent=2, sort_keys=True, default=_json_default) + "\n"
    )
    return rows, summary


def cmd_ablate(args) -> int:
    raw = load_yaml(args.config)
    _, summary = run_ablation(raw, args.output, args.workers)
    for row in summary:
        print(f"cell {row['cell']}: {row['metric']} {row['mean']:.4f} +/- {row['std']:.4f} (n={row['n']})")
    return EXIT_OK


# -- inspect-graph --------------------------------------------------------------


def graph_summary(shift: SparseMatrix, T: int | None = None, product: str | None = None, temporal_kind: str = "directed-line") -> dict:
    deg = np.asarray(abs(shift.csr).sum(axis=1)).ravel()
    info = {
        "nodes": shift.n_rows,
        "nonzeros": shift.nnz,
        "symmetric": shift.is_symmetric(),
        "connected": is_connected(shift),
        "self_loops": int(np.count_nonzero(shift.csr.diagonal())),
        "spectral_radius": spectral_radius(shift),
        "degree_min": float(deg.min()) if deg.size else 0.0,
        "degree_max": float(deg.max()) if deg.size else 0.0,
        "degree_mean": float(deg.mean()) if deg.size else 0.0,
        "digest": shift.digest(),
    }
    if T is not None:
        temporal = build_temporal_graph(temporal_kind, T)
        params = ProductParams.preset(product or "parametric")
        S_p = build_product_shift(temporal.shift, shift, params)
        info["product"] = {
            "kind": product or "parametric",
            "T": T,
            "nodes": S_p.n_rows,
            "edges": product_edge_count(temporal.shift, shift, params),
        }
        if np.all(params.as_array() != 0):
            info["product"]["edges_formula"] = edge_count_formula(shift.n_rows, T, temporal.shift.nnz, shift.nnz)
    return info


def cmd_inspect(args) -> int:
    if args.dataset:
        _, graph = load_dataset(args.dataset)
        shift = graph.shift
    elif args.graph:
        try:
            shift = read_edge_list(args.graph)
        except (OSError, ValueError) as exc:
            raise DataError(f"{args.graph}: {exc}") from exc
    else:
        raise ConfigError("inspect-graph needs an edge-list path or --dataset")
    if args.product and args.T is None:
        raise ConfigError("--product needs --T")
    print(json.dumps(graph_summary(shift, args.T, args.product), indent=2, default=_json_default))
    return EXIT_OK


# -- entry point --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gtcnn", description="Graph-time convolutional networks on product graphs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a dataset directory")
    p.add_argument("config", nargs="?", help="YAML synth config")
    p.add_argument("--preset", choices=sorted(SYNTH_PRESETS))
    p.add_argument("--seed", type=int)
    p.add_argument("--output", help="dataset directory (created if missing)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("config", nargs="?", help="YAML run config")
    p.add_argument("--preset", choices=sorted(RUN_PRESETS))
    p.add_argument("--dataset")
    p.add_argument("--output")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--product", choices=sorted(PRODUCT_PRESETS))
    p.add_argument("--no-pooling", action="store_true", help="keep all nodes and instants in every layer")
    p.add_argument("--gcnn", action="store_true", help="graph-only baseline: time steps as input features")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.add_argument("--steps", type=int, default=1, help="forecast horizon (rNMSE per step)")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--output", help="metrics CSV (stdout if omitted)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train over a grid of configs and seeds")
    p.add_argument("config")
    p.add_argument("--output")
    p.add_argument("--workers", type=int, help=f"parallel workers (default ${WORKERS_ENV} or 1)")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("inspect-graph", help="summarize a graph and its product with a temporal graph")
    p.add_argument("graph", nargs="?", help="edge-list file")
    p.add_argument("--dataset")
    p.add_argument("--T", type=int)
    p.add_argument("--product", choices=sorted(PRODUCT_PRESETS))
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "steps", 1) < 1:
        print("config error: --steps must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, InvalidSizeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CheckpointError, SizeMismatchError, SamplingError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
