"""Synthetic source localization and windowed time-series datasets."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, SamplingError, SizeMismatchError
from .graphs import SpatialGraph
from .sparse import read_edge_list, write_edge_list

SPLITS = ("train", "val", "test")


@dataclass
class SampleSet:
    """Inputs ``(n, N, T)``, targets and disjoint train/val/test index sets.

    For forecasting sets ``series`` holds the standardized series the windows
    were cut from (``(steps, N)``) and ``starts`` the first step of each
    window; ``mean``/``std`` undo the per-node standardization.
    """

    inputs: np.ndarray
    targets: np.ndarray
    splits: dict
    meta: dict = field(default_factory=dict)
    series: np.ndarray | None = None
    starts: np.ndarray | None = None
    mean: np.ndarray | None = None
    std: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.inputs)
        if len(self.targets) != n:
            raise SizeMismatchError("one target per input required")
        seen = np.concatenate([np.asarray(self.splits.get(s, []), dtype=np.int64) for s in SPLITS])
        if seen.size != n or not np.array_equal(np.sort(seen), np.arange(n)):
            raise DataError("splits must be disjoint and cover every sample")
        self.splits = {s: np.asarray(self.splits.get(s, []), dtype=np.int64) for s in SPLITS}

    def __len__(self) -> int:
        return len(self.inputs)

    @property
    def task(self) -> str:
        return "classify" if self.targets.ndim == 1 else "forecast"

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        idx = self.splits[name]
        return self.inputs[idx], self.targets[idx]

    def destandardize(self, values: np.ndarray) -> np.ndarray:
        if self.mean is None:
            return values
        return values * self.std + self.mean

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.inputs, self.targets):
            h.update(np.ascontiguousarray(arr).astype("<f8").tobytes())
        for s in SPLITS:
            h.update(self.splits[s].astype("<i8").tobytes())
        return h.hexdigest()


def split_sizes(n: int, ratios=(0.8, 0.1, 0.1)) -> tuple[int, int, int]:
    if len(ratios) != 3 or min(ratios) < 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("split ratios must be three non-negative numbers summing to 1")
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    n_val = min(n_val, n - n_train)
    return n_train, n_val, n - n_train - n_val


# -- source localization ------------------------------------------------------------


def gen_source_localization(
    graph: SpatialGraph,
    n_samples: int,
    T: int,
    seed=None,
    t_max: int = 25,
    noise: float = 0.0,
    ratios=(0.8, 0.1, 0.1),
    label: str = "community",
    rescale: bool = False,
) -> SampleSet:
    """Windows of a diffusion started at a random node.

    Each sample picks a source ``s`` and start ``t`` uniformly (``t < t_max``)
    and observes ``x_tau = S^tau delta_s + noise`` for ``tau = t..t+T-1``, with
    ``S`` the spectrally normalized shift. Repeated ``(s, t)`` pairs are
    redrawn. The label is the source's community (or the node itself).

    With ``rescale`` the inputs are divided by one scalar, the RMS of the
    training inputs, so ReLU layers see unit-scale activations. The scale is
    kept in ``meta["input_scale"]``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if label == "community" and graph.labels is None:
        raise DataError("community labels required for community targets")
    if label not in ("community", "node"):
        raise ValueError(f"unknown label kind {label!r}")
    N = graph.N
    if n_samples > N * t_max:
        raise SamplingError(f"only {N * t_max} distinct (source, start) pairs for {n_samples} samples")
    rng = np.random.default_rng(seed)
    seen = set()
    sources = np.empty(n_samples, dtype=np.int64)
    starts = np.empty(n_samples, dtype=np.int64)
    budget = 100 * n_samples
    i = 0
    while i < n_samples:
        if budget == 0:
            raise SamplingError("duplicate avoidance exhausted its draw budget")
        budget -= 1
        s, t = int(rng.integers(N)), int(rng.integers(t_max))
        if (s, t) in seen:
            continue
        seen.add((s, t))
        sources[i], starts[i] = s, t
        i += 1
    S = graph.normalized_shift.to_dense()
    powers = np.empty((t_max + T, N, N))
    powers[0] = np.eye(N)
    for k in range(1, t_max + T):
        powers[k] = S @ powers[k - 1]
    tau = starts[:, None] + np.arange(T)[None, :]  # (n, T)
    inputs = powers[tau, :, sources[:, None]]  # (n, T, N)
    inputs = np.ascontiguousarray(inputs.transpose(0, 2, 1))
    if noise > 0:
        inputs = inputs + noise * rng.standard_normal(inputs.shape)
    targets = graph.labels[sources].astype(np.int64) if label == "community" else sources.copy()
    perm = rng.permutation(n_samples)
    n_tr, n_va, _ = split_sizes(n_samples, ratios)
    splits = {"train": np.sort(perm[:n_tr]), "val": np.sort(perm[n_tr : n_tr + n_va]), "test": np.sort(perm[n_tr + n_va :])}
    scale = 1.0
    if rescale:
        rms = float(np.sqrt(np.mean(inputs[splits["train"]] ** 2)))
        scale = rms if rms > 0 else 1.0
        inputs = inputs / scale
    meta = {
        "kind": "source_localization",
        "seed": seed,
        "n_samples": n_samples,
        "T": T,
        "t_max": t_max,
        "noise": noise,
        "label": label,
        "input_scale": scale,
        "graph_digest": graph.digest(),
        "sources": sources.tolist(),
        "starts": starts.tolist(),
    }
    return SampleSet(inputs, targets, splits, meta)


# -- forecasting -------------------------------------------------------------------


def gen_diffusion_series(graph: SpatialGraph, n_steps: int, seed=None, decay: float = 0.9, noise: float = 1.0, burn_in: int = 100) -> np.ndarray:
    """``x_{t+1} = decay * S x_t + w_t`` with Gaussian ``w_t``; returns ``(n_steps, N)``."""
    rng = np.random.default_rng(seed)
    S = graph.normalized_shift
    x = np.zeros(graph.N)
    out = np.empty((n_steps, graph.N))
    for t in range(burn_in + n_steps):
        x = decay * S.matvec(x) + noise * rng.standard_normal(graph.N)
        if t >= burn_in:
            out[t - burn_in] = x
    return out


def window_series(series: np.ndarray, T: int, ratios=(0.8, 0.1, 0.1), meta: dict | None = None) -> SampleSet:
    """Sliding windows of ``T`` steps with the next step as target.

    Windows are split chronologically by the time of their target, so a
    window that straddles a boundary belongs to the later split. The series
    is z-scored per node with statistics of the steps before the first
    validation target.
    """
    series = np.asarray(series, dtype=np.float64)
    steps, N = series.shape
    if steps < T + 1:
        raise DataError(f"need at least T+1 = {T + 1} rows, got {steps}")
    n = steps - T
    n_tr, n_va, _ = split_sizes(n, ratios)
    train_end = T + n_tr  # first step that is a non-train target
    mean = series[:train_end].mean(axis=0)
    std = series[:train_end].std(axis=0)
    std[std == 0] = 1.0
    z = (series - mean) / std
    starts = np.arange(n)
    inputs = np.stack([z[s : s + T].T for s in starts])
    targets = z[starts + T]
    splits = {"train": starts[:n_tr], "val": starts[n_tr : n_tr + n_va], "test": starts[n_tr + n_va :]}
    meta = dict(meta or {}, kind="forecast", T=T, steps=steps)
    return SampleSet(inputs, targets, splits, meta, series=z, starts=starts, mean=mean, std=std)


def load_timeseries_csv(path, graph: SpatialGraph | None = None, T: int = 3, node_ids=None, ratios=(0.8, 0.1, 0.1)) -> SampleSet:
    """Read a CSV (header = node ids, rows = time steps) and window it.

    ``node_ids`` fixes the column order expected by the graph; by default
    the header order is used as-is.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if node_ids is not None:
        missing = [str(i) for i in node_ids if str(i) not in header]
        if missing:
            raise DataError(f"{path}: missing node column(s) {missing}")
        cols = [header.index(str(i)) for i in node_ids]
    else:
        cols = list(range(len(header)))
    if graph is not None and len(cols) != graph.N:
        raise DataError(f"{path}: {len(cols)} node columns but the graph has {graph.N} nodes")
    data = np.empty((len(rows) - 1, len(cols)))
    for r, row in enumerate(rows[1:]):
        try:
            data[r] = [float(row[c]) for c in cols]
        except (ValueError, IndexError) as exc:
            raise DataError(f"{path}: non-numeric or missing cell in data row {r + 1}") from exc
    meta = {"source": str(path)}
    if graph is not None:
        meta["graph_digest"] = graph.digest()
    return window_series(data, T, ratios, meta)


def persistence_forecast(inputs: np.ndarray) -> np.ndarray:
    """Repeat the last observed step: ``x_hat_{t+1} = x_t``."""
    return inputs[..., -1]


# -- persistence ---------------------------------------------------------------------


def save_dataset(ds: SampleSet, graph: SpatialGraph, directory) -> Path:
    """Write a dataset as CSV files plus ``metadata.json`` and the graph edge list."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    n, N, T = ds.inputs.shape
    np.savetxt(d / "inputs.csv", ds.inputs.transpose(0, 2, 1).reshape(n, N * T), delimiter=",", fmt="%.17g")
    np.savetxt(d / "targets.csv", ds.targets.reshape(n, -1), delimiter=",", fmt="%.17g")
    with open(d / "splits.csv", "w", newline="") as fh:
        fh.write("index,split\n")
        owner = np.empty(n, dtype=object)
        for s in SPLITS:
            owner[ds.splits[s]] = s
        for i in range(n):
            fh.write(f"{i},{owner[i]}\n")
    extra = {}
    if ds.series is not None:
        np.savetxt(d / "series.csv", ds.series, delimiter=",", fmt="%.17g")
        np.savetxt(d / "scaler.csv", np.stack([ds.mean, ds.std]), delimiter=",", fmt="%.17g")
        extra["starts"] = ds.starts.tolist()
    write_edge_list(graph.shift, d / "graph.txt")
    if graph.labels is not None:
        np.savetxt(d / "communities.csv", graph.labels, fmt="%d")
    meta = dict(ds.meta, N=N, T=T, n=n, task=ds.task, dataset_digest=ds.digest(), graph_digest=graph.digest(), **extra)
    (d / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return d


def load_dataset(directory) -> tuple[SampleSet, SpatialGraph]:
    d = Path(directory)
    try:
        meta = json.loads((d / "metadata.json").read_text())
        N, T, n = meta["N"], meta["T"], meta["n"]
        flat = np.loadtxt(d / "inputs.csv", delimiter=",", ndmin=2)
        inputs = flat.reshape(n, T, N).transpose(0, 2, 1).copy()
        targets = np.loadtxt(d / "targets.csv", delimiter=",", ndmin=2)
        targets = targets[:, 0].astype(np.int64) if meta["task"] == "classify" else targets.reshape(n, N)
        splits = {s: [] for s in SPLITS}
        with open(d / "splits.csv") as fh:
            next(fh)
            for line in fh:
                i, s = line.strip().split(",")
                splits[s].append(int(i))
        shift = read_edge_list(d / "graph.txt")
        labels = np.loadtxt(d / "communities.csv", dtype=np.int64, ndmin=1) if (d / "communities.csv").exists() else None
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"{d}: cannot read dataset ({exc})") from exc
    graph = SpatialGraph(shift, labels=labels, undirected=shift.is_symmetric())
    if graph.digest() != meta["graph_digest"]:
        raise DataError(f"{d}: graph file does not match the recorded digest")
    kwargs = {}
    if (d / "series.csv").exists():
        kwargs["series"] = np.loadtxt(d / "series.csv", delimiter=",", ndmin=2)
        mean, std = np.loadtxt(d / "scaler.csv", delimiter=",", ndmin=2)
        kwargs.update(mean=mean, std=std, starts=np.asarray(meta["starts"], dtype=np.int64))
    ds = SampleSet(inputs, targets, splits, {k: v for k, v in meta.items() if k not in ("starts",)}, **kwargs)
    return ds, graph
