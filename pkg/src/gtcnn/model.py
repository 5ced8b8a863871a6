"""Graph-time convolutional network: filter banks, pooling, nonlinearity, readout.

Activations are laid out ``(time, node, batch, feature)``; nodes keep their
full count at every layer and inactive ones hold zeros.
"""

from __future__ import annotations

import dataclasses
import json
import warnings
import zipfile
from dataclasses import dataclass, field

import numpy as np

from . import config as cfg
from .errors import CheckpointError, ConfigError, SizeMismatchError
from .filters import FactorShifts, bank_backward, bank_forward
from .graphs import SpatialGraph, build_temporal_graph
from .pooling import SUMMARIZERS, PoolingPlan
from .product import PRESETS, expand_parametric_backward, expand_parametric_to_grid

FORMAT_VERSION = (1, 1)
NONLINEARITIES = ("relu", "identity")
TASKS = ("classify", "forecast")


@dataclass
class LayerConfig:
    features: int
    mode: str = "parametric"
    order: int = 2
    spatial_order: int | None = None
    temporal_order: int | None = None
    alpha: int = 0
    ratio: int = 1
    active: int | None = None
    summarizer: str = "max"
    nonlinearity: str = "relu"

    def __post_init__(self):
        if self.features < 1:
            raise ConfigError(f"features must be >= 1, got {self.features}")
        if self.mode not in ("parametric", "grid"):
            raise ConfigError(f"mode must be 'parametric' or 'grid', got {self.mode!r}")
        if self.mode == "grid":
            if self.spatial_order is None:
                self.spatial_order = self.order
            if self.temporal_order is None:
                self.temporal_order = self.order
        for name in ("order", "spatial_order", "temporal_order", "alpha"):
            val = getattr(self, name)
            if val is not None and val < 0:
                raise ConfigError(f"{name} must be >= 0, got {val}")
        if self.ratio < 1:
            raise ConfigError(f"ratio must be >= 1, got {self.ratio}")
        if self.summarizer not in SUMMARIZERS:
            raise ConfigError(f"summarizer must be one of {SUMMARIZERS}")
        if self.nonlinearity not in NONLINEARITIES:
            raise ConfigError(f"nonlinearity must be one of {NONLINEARITIES}")

    @property
    def orders(self) -> tuple[int, int]:
        if self.mode == "parametric":
            return self.order, self.order
        return self.spatial_order, self.temporal_order


@dataclass
class ModelConfig:
    N: int
    T: int
    layers: list = field(default_factory=list)
    task: str = "classify"
    num_classes: int = 5
    product: str = "parametric"
    learn_coupling: list | None = None
    per_pair_coupling: bool = False
    time_as_features: bool = False
    temporal_kind: str = "directed-line"
    shift_kind: str = "adjacency"
    slice_phase: str = "first"
    seed: int = 0

    def __post_init__(self):
        self.layers = [
            layer if isinstance(layer, LayerConfig) else cfg.build(LayerConfig, layer, f"model.layers[{i}]")
            for i, layer in enumerate(self.layers)
        ]
        if not self.layers:
            raise ConfigError("model needs at least one layer")
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.product not in PRESETS:
            raise ConfigError(f"product must be one of {sorted(PRESETS)}, got {self.product!r}")
        if self.learn_coupling is None:
            self.learn_coupling = [self.product == "parametric"] * 4
        if len(self.learn_coupling) != 4:
            raise ConfigError("learn_coupling needs four booleans (s00, s01, s10, s11)")
        self.learn_coupling = [bool(b) for b in self.learn_coupling]
        if self.task == "classify" and self.num_classes < 2:
            raise ConfigError("classification needs num_classes >= 2")
        if self.N < 1 or self.T < 1:
            raise ConfigError("N and T must be >= 1")

    @property
    def input_features(self) -> int:
        return self.T if self.time_as_features else 1

    @property
    def graph_T(self) -> int:
        """Temporal graph size seen by the first layer."""
        return 1 if self.time_as_features else self.T

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict, where: str = "model") -> "ModelConfig":
        return cfg.build(cls, data, where)


# -- parameter initialization ---------------------------------------------------


def init_params(config: ModelConfig, rng: np.random.Generator) -> dict:
    params = {}
    f_in = config.input_features
    plan_shapes = _layer_shapes(config)
    for idx, layer in enumerate(config.layers):
        K1, K2 = layer.orders
        bound = 1.0 / np.sqrt(f_in * (K1 + 1) * (K2 + 1))
        pre = f"layers.{idx}."
        if layer.mode == "parametric":
            params[pre + "taps"] = rng.uniform(-bound, bound, size=(layer.features, f_in, layer.order + 1))
            shape = (layer.features, f_in, 4) if config.per_pair_coupling else (4,)
            params[pre + "coupling"] = _init_coupling(config, shape, rng)
        else:
            params[pre + "grid"] = rng.uniform(-bound, bound, size=(layer.features, f_in, K1 + 1, K2 + 1))
        params[pre + "bias"] = np.zeros(layer.features)
        f_in = layer.features
    n_out, t_out = plan_shapes[-1]
    d_in = f_in * n_out * t_out
    d_out = config.num_classes if config.task == "classify" else config.N
    bound = 1.0 / np.sqrt(d_in)
    params["readout.weight"] = rng.uniform(-bound, bound, size=(d_out, d_in))
    params["readout.bias"] = np.zeros(d_out)
    return params


def _init_coupling(config: ModelConfig, shape, rng) -> np.ndarray:
    learn = np.asarray(config.learn_coupling)
    base = np.array(PRESETS["cartesian"] if config.product == "parametric" else PRESETS[config.product])
    s = np.broadcast_to(base, shape).copy()
    noise = rng.uniform(-0.05, 0.05, size=shape)
    s = s + noise * learn
    return s


def _layer_shapes(config: ModelConfig) -> list:
    """(active nodes, instants) after each layer."""
    shapes = []
    n, t = config.N, config.graph_T
    for layer in config.layers:
        n = layer.active if layer.active is not None else n
        t = -(-t // layer.ratio)
        shapes.append((n, t))
    return shapes


def coupling_mask(config: ModelConfig, shape) -> np.ndarray:
    return np.broadcast_to(np.asarray(config.learn_coupling, dtype=np.float64), shape).copy()


# -- the network -------------------------------------------------------------------


class GTCNN:
    """An L-layer graph-time convolutional network with an affine readout."""

    def __init__(self, config: ModelConfig, graph: SpatialGraph, params: dict | None = None):
        if graph.N != config.N:
            raise SizeMismatchError(f"graph has {graph.N} nodes but config says N={config.N}")
        self.config = config
        self.graph = graph
        self.S = graph.operator(config.shift_kind)
        specs = []
        prev_active = config.N
        for idx, layer in enumerate(config.layers):
            n_act = layer.active if layer.active is not None else prev_active
            if n_act > prev_active:
                raise ConfigError(f"layer {idx}: {n_act} active nodes exceed previous {prev_active}")
            specs.append((layer.alpha, layer.ratio, n_act, layer.summarizer))
            prev_active = n_act
        self.plan = PoolingPlan.build(graph.shift, config.graph_T, specs, config.temporal_kind, config.slice_phase)
        self.temporal_shifts = [build_temporal_graph(config.temporal_kind, st.T_in).shift for st in self.plan.layers]
        self.factor_shifts = [FactorShifts(self.S, S_T) for S_T in self.temporal_shifts]
        if params is None:
            params = init_params(config, np.random.default_rng(config.seed))
        self.params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
        self._check_params()
        self.masks = {
            k: coupling_mask(config, v.shape) for k, v in self.params.items() if k.endswith(".coupling")
        }

    def _check_params(self) -> None:
        expected = init_params(self.config, np.random.default_rng(0))
        if set(expected) != set(self.params):
            missing = sorted(set(expected) - set(self.params))
            extra = sorted(set(self.params) - set(expected))
            raise SizeMismatchError(f"parameter set mismatch: missing {missing}, unexpected {extra}")
        for name, ref in expected.items():
            if self.params[name].shape != ref.shape:
                layer = name.split(".")[1] if name.startswith("layers.") else "readout"
                raise SizeMismatchError(
                    f"layer {layer}: parameter {name} has shape {self.params[name].shape}, expected {ref.shape}"
                )
            if not np.all(np.isfinite(self.params[name])):
                raise ValueError(f"parameter {name} is not finite")
        for name, val in self.params.items():
            if name.endswith(".coupling"):
                flat = val.reshape(-1, 4)
                if np.any(~flat.any(axis=1)):
                    raise ConfigError(f"{name}: all-zero coupling scalars define no product graph")

    # -- helpers ----------------------------------------------------------
    @property
    def trainable(self) -> list:
        return sorted(self.params)

    def coupling_scalars(self) -> list:
        return [self.params[k] for k in sorted(self.params) if k.endswith(".coupling")]

    def layer_grid(self, idx: int) -> np.ndarray:
        layer = self.config.layers[idx]
        pre = f"layers.{idx}."
        if layer.mode == "grid":
            return self.params[pre + "grid"]
        return expand_parametric_to_grid(self.params[pre + "taps"], self.params[pre + "coupling"])

    def prepare_input(self, X) -> np.ndarray:
        """``(B, N, T)`` (or ``(N, T)``) raw windows to ``(T0, N, B, F0)`` activations."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            X = X[None]
        if X.ndim != 3 or X.shape[1:] != (self.config.N, self.config.T):
            raise SizeMismatchError(f"input of shape {X.shape} does not match (N, T) = ({self.config.N}, {self.config.T})")
        if self.config.time_as_features:
            return np.ascontiguousarray(X.transpose(1, 0, 2))[None]
        return np.ascontiguousarray(X.transpose(2, 1, 0))[..., None]

    # -- forward/backward -------------------------------------------------
    def layer_forward(self, idx: int, x: np.ndarray, keep_cache: bool = False):
        layer = self.config.layers[idx]
        stage = self.plan.layers[idx]
        if x.shape[0] != stage.T_in:
            raise SizeMismatchError(f"layer {idx}: input has {x.shape[0]} instants, expected {stage.T_in}")
        grid = self.layer_grid(idx)
        u, tab = bank_forward(self.factor_shifts[idx], grid, x)
        z, pool_cache = stage.forward(u)
        z = z + stage.mask[None, :, None, None] * self.params[f"layers.{idx}.bias"]
        out = np.maximum(z, 0.0) if layer.nonlinearity == "relu" else z
        cache = (grid, tab, pool_cache, z) if keep_cache else None
        return out, cache

    def layer_backward(self, idx: int, dout: np.ndarray, cache, grads: dict, need_input_grad: bool) -> np.ndarray | None:
        layer = self.config.layers[idx]
        stage = self.plan.layers[idx]
        grid, tab, pool_cache, z = cache
        dz = dout * (z > 0) if layer.nonlinearity == "relu" else dout
        pre = f"layers.{idx}."
        grads[pre + "bias"] = np.sum(dz[:, stage.active], axis=(0, 1, 2))
        du = stage.backward(dz, pool_cache)
        dgrid, dx = bank_backward(self.factor_shifts[idx], grid, tab, du, need_input_grad)
        if layer.mode == "grid":
            grads[pre + "grid"] = dgrid
        else:
            dtaps, dcoup = expand_parametric_backward(self.params[pre + "taps"], self.params[pre + "coupling"], dgrid)
            grads[pre + "taps"] = dtaps
            grads[pre + "coupling"] = dcoup * self.masks[pre + "coupling"]
        return dx

    def readout_input(self, x: np.ndarray) -> np.ndarray:
        """Active-node features flattened per sample in (feature, node, time) order."""
        active = self.plan.layers[-1].active
        return x[:, active].transpose(2, 3, 1, 0).reshape(x.shape[2], -1)

    def forward(self, X, keep_cache: bool = False):
        """Network output for a batch of ``N x T`` windows.

        Returns logits ``(B, num_classes)`` or forecasts ``(B, N)``, plus the
        cache consumed by :meth:`backward` (``None`` unless ``keep_cache``).
        """
        x = self.prepare_input(X)
        caches = []
        for idx in range(len(self.config.layers)):
            x, c = self.layer_forward(idx, x, keep_cache)
            caches.append(c)
        flat = self.readout_input(x)
        out = readout_forward(flat, self.params["readout.weight"], self.params["readout.bias"])
        return out, ((caches, x.shape, flat) if keep_cache else None)

    def __call__(self, X) -> np.ndarray:
        return self.forward(X)[0]

    def backward(self, dout: np.ndarray, cache) -> dict:
        """Gradients of a scalar loss for every parameter, given ``dL/d output``."""
        caches, x_shape, flat = cache
        grads = {}
        grads["readout.weight"] = dout.T @ flat
        grads["readout.bias"] = dout.sum(axis=0)
        dflat = dout @ self.params["readout.weight"]
        active = self.plan.layers[-1].active
        T_L, _, B, F = x_shape
        dx = np.zeros(x_shape)
        dx[:, active] = dflat.reshape(B, F, active.size, T_L).transpose(3, 2, 0, 1)
        for idx in reversed(range(len(self.config.layers))):
            dx = self.layer_backward(idx, dx, caches[idx], grads, need_input_grad=idx > 0)
        return grads

    def output_shapes(self) -> list:
        """(features, active nodes, instants) after each layer."""
        return [(layer.features, st.n_active, st.T_out) for layer, st in zip(self.config.layers, self.plan.layers)]

    def copy_params(self) -> dict:
        return {k: v.copy() for k, v in self.params.items()}


def readout_forward(z: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine readout ``z W^T + b`` over flattened active features."""
    return z @ weight.T + bias


def layer_forward(model: GTCNN, idx: int, x: np.ndarray) -> np.ndarray:
    return model.layer_forward(idx, x)[0]


def model_forward(model: GTCNN, X) -> np.ndarray:
    return model.forward(X)[0]


# -- checkpoints -------------------------------------------------------------------


def save_checkpoint(model: GTCNN, path, metadata: dict | None = None) -> None:
    """Write a versioned ``.npz`` with little-endian float64 parameters.

    The ``__meta__`` entry holds a JSON document with the format version,
    the model config, the graph digest and free-form training metadata.
    """
    meta = {
        "format_version": "%d.%d" % FORMAT_VERSION,
        "config": model.config.to_dict(),
        "graph_digest": model.graph.digest(),
        "metadata": metadata or {},
    }
    arrays = {f"param/{k}": np.ascontiguousarray(v, dtype="<f8") for k, v in model.params.items()}
    arrays["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def read_checkpoint(path) -> tuple[dict, dict]:
    """Parameters and metadata of a checkpoint, without building a model."""
    try:
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(bytes(data["__meta__"]).decode())
            params = {k[len("param/"):]: np.array(data[k], dtype=np.float64) for k in data.files if k.startswith("param/")}
    except (zipfile.BadZipFile, OSError, KeyError, ValueError, EOFError) as exc:
        raise CheckpointError(f"{path}: corrupt or unreadable checkpoint ({exc})") from exc
    version = meta.get("format_version", "")
    try:
        major, minor = (int(p) for p in version.split("."))
    except ValueError:
        raise CheckpointError(f"{path}: bad format version {version!r}") from None
    if major != FORMAT_VERSION[0] or minor > FORMAT_VERSION[1]:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}, this build reads {FORMAT_VERSION[0]}.x up to {FORMAT_VERSION[0]}.{FORMAT_VERSION[1]}")
    if minor < FORMAT_VERSION[1]:
        warnings.warn(f"{path}: loading older checkpoint version {version}", stacklevel=2)
    return params, meta


def load_checkpoint(path, graph: SpatialGraph) -> GTCNN:
    params, meta = read_checkpoint(path)
    if meta.get("graph_digest") != graph.digest():
        raise CheckpointError(f"{path}: checkpoint was trained on a different graph")
    config = ModelConfig.from_dict(meta["config"], "checkpoint.config")
    model = GTCNN(config, graph, params)
    model.checkpoint_meta = meta
    return model
