"""Graph-time convolutional filters.

Two evaluation paths:

* :func:`gt_filter_dense` shifts the vectorized signal over an explicit
  product shift (``u = sum_k h_k S_p^k x``). Kept as the reference path and
  for tiny graphs.
* :func:`gt_filter_recursive` works on the ``N x T`` matrix directly, using
  ``(S_T^l kron S^k) vec(X) = vec(S^k X (S_T^T)^l)``. The product shift is
  never formed.

Batched kernels operate on arrays laid out ``(time, node, batch, feature)``,
whose flattened leading axes are exactly the vectorized product signal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import SizeMismatchError
from .product import ProductParams, expand_parametric_backward, expand_parametric_to_grid
from .sparse import SparseMatrix, spmv



def gt_filter_dense(S_prod: SparseMatrix, h, x) -> np.ndarray:
    """``sum_k h_k S_prod^k x`` by repeated sparse shifts."""
    h = np.asarray(h, dtype=np.float64).ravel()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != S_prod.n_cols:
        raise SizeMismatchError(f"signal of shape {x.shape} does not match {S_prod.shape} shift")
    out = h[0] * x
    shifted = x
    for hk in h[1:]:
        shifted = spmv(S_prod, shifted)
        out = out + hk * shifted
    return out


class FactorShifts:
    """The two factor shifts lifted to the vectorized product signal.

    ``spatial = I_T kron S`` and ``temporal = S_T kron I_N`` act on arrays whose
    leading axis enumerates space-time nodes in ``t*N + i`` order, so one
    sparse product shifts every column (batch element, feature) at once.
    """

    def __init__(self, S: SparseMatrix, S_T: SparseMatrix):
        if not (S.is_square() and S_T.is_square()):
            raise SizeMismatchError("factor shifts must be square")
        self.N, self.T = S.n_rows, S_T.n_rows
        self.spatial = sp.kron(sp.identity(self.T, format="csr"), S.csr, format="csr")
        self.temporal = sp.kron(S_T.csr, sp.identity(self.N, format="csr"), format="csr")
        self.spatial_t = self.spatial.T.tocsr()
        self.temporal_t = self.temporal.T.tocsr()


def _tabulate(ops: FactorShifts, x: np.ndarray, K1: int, K2: int) -> list:
    """Shift table ``tab[k][l] = S^k X (S_T^T)^l`` as ``(NT, B*G)`` arrays.

    ``x`` is ``(T, N, B, G)``. Spatial shifts are applied first, then temporal
    ones; the factors commute so the order does not change the result. Each
    entry is a fresh contiguous array, so nothing is copied into a table.
    """
    T, N, B, G = x.shape
    cur = x.reshape(N * T, B * G)
    tab = []
    for k in range(K1):
        if k:
            cur = ops.spatial @ cur
        row = [cur]
        for _ in range(1, K2):
            row.append(ops.temporal @ row[-1])
        tab.append(row)
    return tab


def bank_forward(ops: FactorShifts, grid: np.ndarray, x: np.ndarray):
    """Filter bank ``u^f = sum_g H^{fg} x^g`` on ``(T, N, B, G)`` activations.

    ``grid`` is ``(F, G, K1, K2)``. Returns ``(T, N, B, F)`` and the shift
    table consumed by :func:`bank_backward`.
    """
    F, G, K1, K2 = grid.shape
    if x.ndim != 4 or x.shape[3] != G:
        raise SizeMismatchError(f"input of shape {x.shape} does not carry {G} features")
    if x.shape[:2] != (ops.T, ops.N):
        raise SizeMismatchError(f"input with {x.shape[1]} nodes x {x.shape[0]} instants does not match ({ops.N}, {ops.T}) graphs")
    T, N, B, _ = x.shape
    M = N * T * B
    tab = _tabulate(ops, np.ascontiguousarray(x), K1, K2)
    u = np.zeros((M, F))
    for k in range(K1):
        for l in range(K2):
            u += tab[k][l].reshape(M, G) @ grid[:, :, k, l].T
    return u.reshape(T, N, B, F), tab


def bank_backward(ops: FactorShifts, grid: np.ndarray, tab: list, du: np.ndarray, need_input_grad: bool = True):
    """Gradients of :func:`bank_forward` w.r.t. the grid and the input.

    The input gradient ``sum_kl (S^T)^k D_kl S_T^l`` is evaluated by Horner's
    rule in both orders.
    """
    F, G, K1, K2 = grid.shape
    T, N, B, _ = du.shape
    NT, M = N * T, N * T * B
    du2 = np.ascontiguousarray(du).reshape(M, F)
    dgrid = np.empty_like(grid)
    for k in range(K1):
        for l in range(K2):
            dgrid[:, :, k, l] = du2.T @ tab[k][l].reshape(M, G)
    if not need_input_grad:
        return dgrid, None
    dtab = lambda k, l: (du2 @ grid[:, :, k, l]).reshape(NT, B * G)
    dx = None
    for k in reversed(range(K1)):
        acc = dtab(k, K2 - 1)
        for l in reversed(range(K2 - 1)):
            acc = ops.temporal_t @ acc + dtab(k, l)
        dx = acc if dx is None else ops.spatial_t @ dx + acc
    return dgrid, dx.reshape(T, N, B, G)


def gt_filter_recursive(S: SparseMatrix, S_T: SparseMatrix, grid, X, ops: FactorShifts | None = None) -> np.ndarray:
    """``U = sum_kl grid[k, l] S^k X (S_T^T)^l`` for an ``N x T`` signal.

    Costs one sparse shift per grid entry; the ``NT x NT`` product shift is
    never formed.
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=np.float64))
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise SizeMismatchError(f"expected an N x T signal, got shape {X.shape}")
    if X.shape != (S.n_rows, S_T.n_rows):
        raise SizeMismatchError(f"signal {X.shape} does not match spatial {S.shape} / temporal {S_T.shape} shifts")
    ops = ops or FactorShifts(S, S_T)
    u, _ = bank_forward(ops, grid[None, None], X.T[:, :, None, None])
    return u[:, :, 0, 0].T


@dataclass
class GTFilterBank:
    """Bank of ``F_out x F_in`` graph-time filters.

    In ``parametric`` mode the learnable objects are the taps
    ``taps[f, g, k]`` (``k <= K``) and the couplings (shape ``(4,)`` shared,
    or ``(F_out, F_in, 4)`` per filter pair). In ``grid`` mode the
    coefficients ``grid[f, g, k, l]`` are learned directly.
    """

    f_in: int
    f_out: int
    mode: str
    taps: np.ndarray | None = None
    coupling: np.ndarray | None = None
    coefficients: np.ndarray | None = None

    def __post_init__(self):
        if self.mode == "parametric":
            self.taps = np.asarray(self.taps, dtype=np.float64)
            if isinstance(self.coupling, ProductParams):
                self.coupling = self.coupling.as_array()
            self.coupling = np.asarray(self.coupling, dtype=np.float64)
            if self.taps.ndim != 3 or self.taps.shape[:2] != (self.f_out, self.f_in):
                raise SizeMismatchError(f"taps must be ({self.f_out}, {self.f_in}, K+1), got {self.taps.shape}")
            if self.coupling.shape not in ((4,), (self.f_out, self.f_in, 4)):
                raise SizeMismatchError(f"coupling must be (4,) or ({self.f_out}, {self.f_in}, 4)")
            arrays = (self.taps, self.coupling)
        elif self.mode == "grid":
            self.coefficients = np.asarray(self.coefficients, dtype=np.float64)
            if self.coefficients.ndim != 4 or self.coefficients.shape[:2] != (self.f_out, self.f_in):
                raise SizeMismatchError(f"grid must be ({self.f_out}, {self.f_in}, K1, K2), got {self.coefficients.shape}")
            arrays = (self.coefficients,)
        else:
            raise ValueError(f"unknown filter mode {self.mode!r}")
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise ValueError("filter coefficients must be finite")

    @property
    def orders(self) -> tuple[int, int]:
        if self.mode == "parametric":
            K = self.taps.shape[-1] - 1
            return K, K
        return self.coefficients.shape[2] - 1, self.coefficients.shape[3] - 1

    def grid(self) -> np.ndarray:
        """Coefficients as a ``(F_out, F_in, K1, K2)`` grid."""
        if self.mode == "grid":
            return self.coefficients
        return expand_parametric_to_grid(self.taps, self.coupling)

    def grid_backward(self, dgrid: np.ndarray) -> dict:
        if self.mode == "grid":
            return {"grid": dgrid}
        dtaps, dcoupling = expand_parametric_backward(self.taps, self.coupling, dgrid)
        return {"taps": dtaps, "coupling": dcoupling}


def filter_bank_forward(inputs, bank: GTFilterBank, S: SparseMatrix, S_T: SparseMatrix) -> np.ndarray:
    """``u^f = sum_g H^{fg} x^g`` on an ``N x T x F_in`` signal; returns ``N x T x F_out``."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim == 2:
        inputs = inputs[:, :, None]
    if inputs.ndim != 3 or inputs.shape[2] != bank.f_in:
        raise SizeMismatchError(f"signal of shape {inputs.shape} does not carry {bank.f_in} features")
    x = inputs.transpose(1, 0, 2)[:, :, None, :]
    u, _ = bank_forward(FactorShifts(S, S_T), bank.grid(), x)
    return u[:, :, 0, :].transpose(1, 0, 2)
