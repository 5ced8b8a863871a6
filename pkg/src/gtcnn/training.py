"""Losses, metrics, ADAM and the mini-batch training loop."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import config as cfg
from .errors import ConfigError, DataError, SizeMismatchError, UndefinedMetricError
from .model import GTCNN


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 100
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    l1_coupling: float = 0.0
    patience: int | None = None
    seed: int = 0
    clip_norm: float | None = None
    record_wall_time: bool = False

    def __post_init__(self):
        if not self.lr >= 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("ADAM decay factors must lie in [0, 1)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.l1_coupling < 0:
            raise ConfigError("l1_coupling must be >= 0")

    @classmethod
    def from_dict(cls, data: dict, where: str = "train") -> "TrainConfig":
        return cfg.build(cls, data, where)


# -- losses --------------------------------------------------------------------------


def softmax_cross_entropy(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over a batch and its gradient w.r.t. the logits."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels))
    B, C = logits.shape
    if labels.shape != (B,):
        raise SizeMismatchError("one label per row of logits required")
    if np.any(labels < 0) or np.any(labels >= C):
        raise ValueError(f"label out of range [0, {C})")
    labels = labels.astype(np.int64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    log_prob = shifted - log_norm[:, None]
    loss = -log_prob[np.arange(B), labels].mean()
    grad = np.exp(log_prob)
    grad[np.arange(B), labels] -= 1.0
    return float(loss), grad / B


def loss_classification(logits, label) -> tuple[float, np.ndarray]:
    """``-log softmax(logits)[label]`` for a single sample; gradient ``softmax - onehot``."""
    loss, grad = softmax_cross_entropy(np.asarray(logits, dtype=np.float64)[None], [label])
    return loss, grad[0]


def loss_forecast(pred, target, coupling=(), beta: float = 0.0):
    """``MSE(pred, target) + beta * ||s||_1``.

    The squared error is averaged over nodes (and over the batch when ``pred``
    is 2-D). ``coupling`` is a sequence of coupling arrays. Returns the loss,
    ``dL/dpred`` and a list of ``dL/ds`` (subgradient 0 at 0).
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise SizeMismatchError(f"prediction {pred.shape} vs target {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff**2))
    dpred = 2.0 * diff / diff.size
    ds = []
    for s in coupling:
        s = np.asarray(s, dtype=np.float64)
        loss += beta * float(np.abs(s).sum())
        ds.append(beta * np.sign(s))
    return loss, dpred, ds


# -- metrics -------------------------------------------------------------------------


def metric_accuracy(preds, labels) -> float:
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape:
        raise SizeMismatchError("predictions and labels differ in length")
    if preds.size == 0:
        raise UndefinedMetricError("accuracy of an empty set")
    return float(np.mean(preds == labels))


def metric_rnmse(pred, target) -> float:
    """``sqrt(sum ||pred - target||^2 / sum ||target||^2)``; 1 for the zero predictor."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise SizeMismatchError(f"prediction {pred.shape} vs target {target.shape}")
    ref = float(np.sum(target**2))
    if ref == 0.0:
        raise UndefinedMetricError("rNMSE is undefined for an all-zero reference")
    return float(np.sqrt(np.sum((pred - target) ** 2) / ref))


# -- gradients -----------------------------------------------------------------------


def loss_and_grads(model: GTCNN, X, y, l1_coupling: float = 0.0) -> tuple[float, dict]:
    """Task loss on a batch and reverse-mode gradients for every parameter."""
    out, cache = model.forward(X, keep_cache=True)
    if model.config.task == "classify":
        loss, dout = softmax_cross_entropy(out, y)
        grads = model.backward(dout, cache)
        return loss, grads
    names = [k for k in sorted(model.params) if k.endswith(".coupling")]
    loss, dout, ds = loss_forecast(out, y, [model.params[k] for k in names], l1_coupling)
    grads = model.backward(dout, cache)
    for name, g in zip(names, ds):
        grads[name] = grads[name] + g * model.masks[name]
    return loss, grads


def backward(model: GTCNN, batch, l1_coupling: float = 0.0) -> dict:
    """Gradients for all parameters on ``batch = (X, y)``."""
    X, y = batch
    return loss_and_grads(model, X, y, l1_coupling)[1]


def evaluate_loss(model: GTCNN, X, y, l1_coupling: float = 0.0) -> float:
    out = model(X)
    if model.config.task == "classify":
        return softmax_cross_entropy(out, y)[0]
    coupling = [model.params[k] for k in sorted(model.params) if k.endswith(".coupling")]
    return loss_forecast(out, y, coupling, l1_coupling)[0]


# -- optimizer -----------------------------------------------------------------------


@dataclass
class OptimizerState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def adam_step(params: dict, grads: dict, state: OptimizerState, config: TrainConfig) -> tuple[dict, OptimizerState]:
    """Bias-corrected ADAM update, in place on ``params`` and ``state``."""
    state.step += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise SizeMismatchError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= config.lr * (m / c1) / (np.sqrt(v / c2) + config.eps)
    return params, state


def _clip(grads: dict, max_norm: float) -> dict:
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total <= max_norm or total == 0.0:
        return grads
    return {k: g * (max_norm / total) for k, g in grads.items()}


# -- loop ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    history: list
    best_params: dict
    best_epoch: int
    best_val_loss: float


HISTORY_FIELDS = ("epoch", "train_loss", "val_loss", "val_metric", "wall_time")


def validation_metric(model: GTCNN, X, y, dataset=None) -> float:
    """Accuracy, or rNMSE on de-standardized values (NaN when undefined)."""
    out = model(X)
    if model.config.task == "classify":
        return metric_accuracy(out.argmax(axis=1), y)
    if dataset is not None:
        out, y = dataset.destandardize(out), dataset.destandardize(y)
    try:
        return metric_rnmse(out, y)
    except UndefinedMetricError:
        return float("nan")


def train(model: GTCNN, dataset, config: TrainConfig, log=None) -> TrainResult:
    """Mini-batch ADAM with early stopping on validation loss.

    The model ends up holding the best-validation parameters. Epoch 0 in
    the history is the untrained model.
    """
    Xtr, ytr = dataset.split("train")
    Xva, yva = dataset.split("val")
    if len(Xtr) == 0 or len(Xva) == 0:
        raise DataError("training needs non-empty train and val splits")
    rng = np.random.default_rng(config.seed)
    state = OptimizerState()
    start = time.perf_counter()
    history = []

    def record(epoch, train_loss):
        val_loss = evaluate_loss(model, Xva, yva, config.l1_coupling)
        row = {
            "epoch": epoch,
            "train_loss": train_loss,
            "val_loss": val_loss,
            "val_metric": validation_metric(model, Xva, yva, dataset),
            "wall_time": time.perf_counter() - start,
        }
        history.append(row)
        if log is not None:
            log(row)
        return val_loss

    best_val = record(0, evaluate_loss(model, Xtr, ytr, config.l1_coupling))
    best_params, best_epoch, stale = model.copy_params(), 0, 0
    n = len(Xtr)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            loss, grads = loss_and_grads(model, Xtr[idx], ytr[idx], config.l1_coupling)
            if config.clip_norm:
                grads = _clip(grads, config.clip_norm)
            adam_step(model.params, grads, state, config)
            total += loss * idx.size
        val = record(epoch, total / n)
        if val < best_val:
            best_val, best_params, best_epoch, stale = val, model.copy_params(), epoch, 0
        else:
            stale += 1
            if config.patience is not None and stale >= config.patience:
                break
    model.params = best_params
    return TrainResult(history, {k: v.copy() for k, v in best_params.items()}, best_epoch, best_val)


def write_history_csv(history: list, path, with_wall_time: bool = False) -> None:
    """History rows as CSV; floats written with ``repr`` so reruns compare byte-for-byte."""
    fields = HISTORY_FIELDS if with_wall_time else HISTORY_FIELDS[:-1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for row in history:
            writer.writerow([row["epoch"]] + [repr(float(row[f])) for f in fields[1:]])


def multistep_forecast(predict, windows: np.ndarray, steps: int) -> np.ndarray:
    """Recursive multi-step forecasts, feeding each prediction back as the newest step.

    ``predict`` maps ``(B, N, T)`` windows to ``(B, N)``. Returns ``(steps, B, N)``.
    """
    cur = np.array(windows, dtype=np.float64)
    out = []
    for _ in range(steps):
        nxt = predict(cur)
        out.append(nxt)
        cur = np.concatenate([cur[..., 1:], nxt[..., None]], axis=-1)
    return np.stack(out)


def multistep_rnmse(predict, dataset, steps: int, split: str = "test") -> list:
    """rNMSE per horizon ``1..steps`` on de-standardized values.

    Only windows whose ``steps``-ahead target exists are used, so every
    horizon is scored on the same windows.
    """
    if dataset.series is None:
        raise DataError("multi-step evaluation needs the underlying series")
    T = dataset.inputs.shape[2]
    starts = dataset.starts[dataset.splits[split]]
    starts = starts[starts + T + steps - 1 < len(dataset.series)]
    if starts.size == 0:
        raise DataError(f"no {split} windows leave room for {steps} steps")
    windows = np.stack([dataset.series[s : s + T].T for s in starts])
    preds = multistep_forecast(predict, windows, steps)
    scores = []
    for k in range(steps):
        truth = dataset.destandardize(dataset.series[starts + T + k])
        scores.append(metric_rnmse(dataset.destandardize(preds[k]), truth))
    return scores
