"""Zero-pad graph-time pooling: summarize, slice, downsample.

Signals keep their full spatial size at every layer; nodes outside the
active set hold zeros. Summarization neighborhoods are always taken on the
Cartesian product of the spatial and temporal graphs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InvalidSizeError, SizeMismatchError
from .graphs import build_temporal_graph
from .sparse import SparseMatrix, degrees

SUMMARIZERS = ("max", "mean")


# -- neighborhoods -----------------------------------------------------------


def _cartesian_support(S: SparseMatrix, S_T: SparseMatrix) -> sp.csr_matrix:
    """0/1 Cartesian product pattern with node ``(i, t)`` at index ``t*N + i``."""
    N, T = S.n_rows, S_T.n_rows
    A = sp.kron(sp.identity(T), S.support().csr, format="csr") + sp.kron(S_T.support().csr, sp.identity(N), format="csr")
    A.data[:] = 1.0
    return A.tocsr()


def reach_matrix(S: SparseMatrix, S_T: SparseMatrix, alpha: int) -> sp.csr_matrix:
    """Pattern of all ``(p, q)`` with ``q`` at most ``alpha`` hops from ``p``.

    Row ``p`` lists nodes ``q`` with ``[A^k]_pq != 0`` for some ``k <= alpha``,
    ``A`` being the Cartesian product pattern. Indexing is ``t*N + i``.
    """
    A = _cartesian_support(S, S_T)
    reach = sp.identity(A.shape[0], format="csr")
    frontier = reach
    for _ in range(alpha):
        frontier = frontier @ A
        frontier.data[:] = 1.0
        new = reach + frontier
        new.data[:] = 1.0
        if new.nnz == reach.nnz:
            break
        reach = new.tocsr()
    reach.sort_indices()
    return reach


@dataclass(frozen=True, eq=False)
class Neighborhoods:
    """Padded neighbor table and averaging operator for one (graph, T, alpha)."""

    table: np.ndarray  # (N*T, width) ascending neighbor ids, padded by repetition
    average: sp.csr_matrix  # row-normalized reach pattern

    @classmethod
    def build(cls, S: SparseMatrix, S_T: SparseMatrix, alpha: int) -> "Neighborhoods":
        reach = reach_matrix(S, S_T, alpha)
        counts = np.diff(reach.indptr)
        width = int(counts.max())
        table = np.empty((reach.shape[0], width), dtype=np.int64)
        for p in range(reach.shape[0]):
            nb = reach.indices[reach.indptr[p] : reach.indptr[p + 1]]
            table[p, : nb.size] = nb
            table[p, nb.size :] = nb[-1]
        avg = reach.multiply(1.0 / counts[:, None]).tocsr()
        return cls(table, avg)


_NEIGHBORHOOD_CACHE: dict = {}


def neighborhoods(S: SparseMatrix, S_T: SparseMatrix, alpha: int) -> Neighborhoods:
    key = (S.digest(), S_T.digest(), alpha)
    hit = _NEIGHBORHOOD_CACHE.get(key)
    if hit is None:
        hit = _NEIGHBORHOOD_CACHE[key] = Neighborhoods.build(S, S_T, alpha)
    return hit


def summarize_forward(u: np.ndarray, nb: Neighborhoods, mode: str):
    """Summarize a ``(T, N, ...)`` array; returns output and backward cache.

    For ``max`` the cache holds, per output entry, the space-time index of the
    first neighbor attaining the maximum.
    """
    shape = u.shape
    flat = u.reshape(shape[0] * shape[1], -1)
    if mode == "max":
        table = nb.table
        best = flat[table[:, 0]]
        arg = np.broadcast_to(table[:, :1], best.shape).copy()
        for d in range(1, table.shape[1]):
            cand = flat[table[:, d]]
            better = cand > best
            np.copyto(best, cand, where=better)
            np.copyto(arg, table[:, d : d + 1], where=better)
        return best.reshape(shape), arg
    if mode == "mean":
        return (nb.average @ flat).reshape(shape), None
    raise ValueError(f"unknown summarizer {mode!r}")


def summarize_backward(dv: np.ndarray, nb: Neighborhoods, mode: str, cache) -> np.ndarray:
    shape = dv.shape
    flat = dv.reshape(shape[0] * shape[1], -1)
    if mode == "max":
        M = flat.shape[1]
        idx = cache * M + np.arange(M)
        du = np.bincount(idx.ravel(), weights=flat.ravel(), minlength=flat.size)
        return du.reshape(shape)
    return (nb.average.T @ flat).reshape(shape)


def summarize(U, S: SparseMatrix, S_T: SparseMatrix, alpha: int, mode: str = "max") -> np.ndarray:
    """Summarize an ``N x T x F`` signal over ``alpha``-hop Cartesian neighborhoods."""
    if alpha < 0:
        raise InvalidSizeError("alpha must be >= 0")
    U = np.asarray(U, dtype=np.float64)
    squeeze = U.ndim == 2
    if squeeze:
        U = U[:, :, None]
    if U.shape[:2] != (S.n_rows, S_T.n_rows):
        raise SizeMismatchError(f"signal {U.shape} does not match graphs ({S.n_rows}, {S_T.n_rows})")
    if alpha == 0:
        out = U.copy()
    else:
        out, _ = summarize_forward(np.ascontiguousarray(U.transpose(1, 0, 2)), neighborhoods(S, S_T, alpha), mode)
        out = out.transpose(1, 0, 2)
    return out[:, :, 0] if squeeze else out


# -- slicing and downsampling ---------------------------------------------------


def sliced_length(T: int, R: int) -> int:
    return math.ceil(T / R)


def slice_indices(T: int, R: int, phase: str = "first") -> np.ndarray:
    """Instants kept when keeping one slice every ``R``.

    ``phase="first"`` keeps ``0, R, 2R, ...``; ``phase="last"`` keeps the same
    number of slices aligned to ``T-1``.
    """
    if R < 1:
        raise InvalidSizeError("slicing ratio must be >= 1")
    keep = np.arange(0, T, R)
    if phase == "last":
        keep = keep + (T - 1 - keep[-1])
    elif phase != "first":
        raise ValueError(f"unknown slice phase {phase!r}")
    return keep


def slice_time(V, R: int, axis: int = 1, phase: str = "first") -> np.ndarray:
    """Keep one temporal slice every ``R`` along ``axis`` (time axis of ``N x T x F``)."""
    V = np.asarray(V)
    return np.take(V, slice_indices(V.shape[axis], R, phase), axis=axis)


def select_active_nodes(S: SparseMatrix, prev_active, n_keep: int) -> np.ndarray:
    """The ``n_keep`` highest-degree nodes of ``prev_active``, ties to lower index.

    Returned ascending.
    """
    prev = np.asarray(sorted(set(int(i) for i in prev_active)), dtype=np.int64)
    if n_keep > prev.size:
        raise InvalidSizeError(f"cannot keep {n_keep} of {prev.size} active nodes")
    if n_keep < 0:
        raise InvalidSizeError("n_keep must be >= 0")
    deg = degrees(S)[prev]
    order = np.lexsort((prev, -deg))
    return np.sort(prev[order[:n_keep]])


def downsample_zero_pad(W, active, axis: int = 0) -> np.ndarray:
    """Zero every node outside ``active`` along ``axis`` (nodes of ``N x T x F``)."""
    W = np.asarray(W, dtype=np.float64)
    mask = np.zeros(W.shape[axis], dtype=bool)
    active = np.asarray(list(active), dtype=np.int64)
    if active.size and (active.min() < 0 or active.max() >= W.shape[axis]):
        raise SizeMismatchError("active node out of range")
    mask[active] = True
    shape = [1] * W.ndim
    shape[axis] = -1
    return W * mask.reshape(shape)


def sampling_matrix(active, prev_active) -> np.ndarray:
    """Binary selection ``C`` with ``C 1 = 1`` and ``C^T 1 <= 1``.

    Row ``r`` picks the position of ``active[r]`` within ``prev_active``.
    """
    prev = list(prev_active)
    pos = {node: i for i, node in enumerate(prev)}
    C = np.zeros((len(active), len(prev)))
    for r, node in enumerate(active):
        C[r, pos[int(node)]] = 1.0
    return C


# -- per-layer plan ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PoolingPlan:
    """Per-layer pooling settings with nested active sets.

    ``layers[l].active`` is a subset of ``layers[l].prev_active`` and
    ``layers[l].prev_active`` equals ``layers[l-1].active``.
    """

    N: int
    T: int
    layers: tuple
    temporal_kind: str = "directed-line"

    @classmethod
    def build(cls, S: SparseMatrix, T: int, specs, temporal_kind: str = "directed-line", phase: str = "first") -> "PoolingPlan":
        """``specs`` is a sequence of ``(alpha, ratio, n_active, summarizer)``."""
        N = S.n_rows
        prev = np.arange(N)
        T_cur = T
        layers = []
        for idx, (alpha, ratio, n_active, summ) in enumerate(specs):
            if alpha < 0:
                raise InvalidSizeError(f"layer {idx}: alpha must be >= 0")
            if ratio < 1:
                raise InvalidSizeError(f"layer {idx}: slicing ratio must be >= 1")
            if summ not in SUMMARIZERS:
                raise ValueError(f"layer {idx}: unknown summarizer {summ!r}")
            if n_active < 1:
                raise InvalidSizeError(f"layer {idx}: active set must be non-empty")
            if n_active > prev.size:
                raise InvalidSizeError(f"layer {idx}: {n_active} active nodes exceed the previous {prev.size}")
            active = select_active_nodes(S, prev, n_active)
            T_out = sliced_length(T_cur, ratio)
            nb = None
            if alpha > 0:
                nb = neighborhoods(S, build_temporal_graph(temporal_kind, T_cur).shift, alpha)
            layers.append(
                PoolingStage(
                    alpha=int(alpha),
                    ratio=int(ratio),
                    n_active=int(n_active),
                    summarizer=summ,
                    T_in=int(T_cur),
                    T_out=int(T_out),
                    active=active,
                    prev_active=prev,
                    phase=phase,
                    N=N,
                    neighborhoods=nb,
                )
            )
            prev, T_cur = active, T_out
        return cls(N, T, tuple(layers), temporal_kind)

    def nested_sampling(self, layer: int) -> np.ndarray:
        """``D_l = C_l ... C_1``: rows select the original nodes still active."""
        D = np.eye(self.N)
        for entry in self.layers[: layer + 1]:
            D = sampling_matrix(entry.active, entry.prev_active) @ D
        return D

    @property
    def output_shape(self) -> tuple[int, int]:
        """(active nodes, instants) after the last layer."""
        if not self.layers:
            return self.N, self.T
        return self.layers[-1].n_active, self.layers[-1].T_out


@dataclass(frozen=True, eq=False)
class PoolingStage:
    """One layer of zero-pad pooling over full-size ``(T, N, ...)`` arrays."""

    alpha: int
    ratio: int
    n_active: int
    summarizer: str
    T_in: int
    T_out: int
    active: np.ndarray
    prev_active: np.ndarray
    phase: str
    N: int
    neighborhoods: Neighborhoods | None = None

    def is_identity(self) -> bool:
        return self.alpha == 0 and self.ratio == 1 and self.n_active == self.prev_active.size

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.N, dtype=bool)
        m[self.active] = True
        return m

    @property
    def prev_mask(self) -> np.ndarray:
        m = np.zeros(self.N, dtype=bool)
        m[self.prev_active] = True
        return m

    @property
    def kept_instants(self) -> np.ndarray:
        return slice_indices(self.T_in, self.ratio, self.phase)

    def _node_mask(self, m: np.ndarray, ndim: int) -> np.ndarray:
        return m.reshape((1, -1) + (1,) * (ndim - 2))

    def forward(self, u: np.ndarray):
        """Pool ``u`` of shape ``(T_in, N, ...)``; returns ``(T_out, N, ...)`` and a cache.

        Entries at nodes outside the incoming active set are zeroed first, so
        only the signal on active nodes is summarized.
        """
        v = u * self._node_mask(self.prev_mask, u.ndim)
        cache = None
        if self.alpha > 0:
            v, cache = summarize_forward(v, self.neighborhoods, self.summarizer)
        if self.ratio > 1:
            v = v[self.kept_instants]
        z = v * self._node_mask(self.mask, v.ndim)
        return z, cache

    def backward(self, dz: np.ndarray, cache) -> np.ndarray:
        dw = dz * self._node_mask(self.mask, dz.ndim)
        if self.ratio > 1:
            dv = np.zeros((self.T_in,) + dz.shape[1:])
            dv[self.kept_instants] = dw
        else:
            dv = dw
        if self.alpha > 0:
            dv = summarize_backward(dv, self.neighborhoods, self.summarizer, cache)
        return dv * self._node_mask(self.prev_mask, dv.ndim)
