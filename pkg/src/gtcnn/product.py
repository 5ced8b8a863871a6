"""Parametric product graphs and their filter expansions.

The product shift is ``S_p = s00 I + s01 (I_T kron S) + s10 (S_T kron I_N)
+ s11 (S_T kron S)``. A space-time node ``(i, t)`` sits at index ``t*N + i``
of the vectorized signal, i.e. column stacking of the ``N x T`` matrix.

Filter grids are indexed ``grid[k, l]`` with ``k`` the spatial power and
``l`` the temporal power, so ``grid[k, l]`` multiplies ``S_T^l kron S^k``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import SizeMismatchError
from .sparse import SparseMatrix

# (temporal power, spatial power) of each coupling scalar, in s00, s01, s10, s11 order
COUPLING_POWERS = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass(frozen=True)
class ProductParams:
    s00: float = 0.0
    s01: float = 0.0
    s10: float = 0.0
    s11: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_array())):
            raise ValueError("coupling scalars must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.s00, self.s01, self.s10, self.s11], dtype=np.float64)

    @classmethod
    def from_array(cls, s) -> "ProductParams":
        s = np.asarray(s, dtype=np.float64).ravel()
        if s.shape != (4,):
            raise SizeMismatchError("need exactly four coupling scalars")
        return cls(*map(float, s))

    @classmethod
    def preset(cls, name: str) -> "ProductParams":
        try:
            return cls(*PRESETS[name])
        except KeyError:
            raise ValueError(f"unknown product preset {name!r}; choose from {sorted(PRESETS)}") from None

    def is_zero(self) -> bool:
        return not np.any(self.as_array())


PRESETS = {
    "kronecker": (0.0, 0.0, 0.0, 1.0),
    "cartesian": (0.0, 1.0, 1.0, 0.0),
    "strong": (0.0, 1.0, 1.0, 1.0),
    "parametric": (1.0, 1.0, 1.0, 1.0),
}


def build_product_shift(S_T: SparseMatrix, S: SparseMatrix, p: ProductParams) -> SparseMatrix:
    """Sparse ``NT x NT`` parametric product shift."""
    if not (S_T.is_square() and S.is_square()):
        raise SizeMismatchError("factor shifts must be square")
    T, N = S_T.n_rows, S.n_rows
    I_T = sp.identity(T, format="csr")
    I_N = sp.identity(N, format="csr")
    s00, s01, s10, s11 = p.as_array()
    total = sp.csr_matrix((N * T, N * T))
    if s00:
        total = total + s00 * sp.identity(N * T, format="csr")
    if s01:
        total = total + s01 * sp.kron(I_T, S.csr, format="csr")
    if s10:
        total = total + s10 * sp.kron(S_T.csr, I_N, format="csr")
    if s11:
        total = total + s11 * sp.kron(S_T.csr, S.csr, format="csr")
    return SparseMatrix(total)


def product_edge_count(S_T: SparseMatrix, S: SparseMatrix, p: ProductParams) -> int:
    """Nonzeros of the built product shift (cancellations included)."""
    return build_product_shift(S_T, S, p).nnz


def edge_count_formula(N: int, T: int, n_edges_temporal: int, n_edges_spatial: int) -> int:
    """Nonzero count when all four couplings are active and nothing cancels."""
    return N * T + N * n_edges_temporal + T * n_edges_spatial + n_edges_temporal * n_edges_spatial


def vectorize(X) -> np.ndarray:
    """Column-stack an ``N x T`` (or ``N x T x F``) signal into length ``NT`` (x ``F``)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        return X.reshape(-1, order="F")
    if X.ndim == 3:
        N, T, F = X.shape
        return X.transpose(1, 0, 2).reshape(N * T, F)
    raise SizeMismatchError(f"expected an N x T or N x T x F signal, got shape {X.shape}")


def devectorize(x, N: int, T: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != N * T:
        raise SizeMismatchError(f"length {x.shape[0]} is not N*T = {N * T}")
    if x.ndim == 1:
        return x.reshape(T, N).T.copy()
    if x.ndim == 2:
        return x.reshape(T, N, x.shape[1]).transpose(1, 0, 2).copy()
    raise SizeMismatchError(f"expected a vector or NT x F array, got shape {x.shape}")


# -- coefficient-grid algebra ----------------------------------------------
#
# Because (S_T^a kron S^b)(S_T^c kron S^d) = S_T^(a+c) kron S^(b+d), products of
# polynomials in the two commuting factors reduce to 2-D convolutions of their
# coefficient grids.


def grid_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Full 2-D convolution of coefficient grids ``a`` and ``b`` (last two axes)."""
    ka, la = a.shape[-2:]
    kb, lb = b.shape[-2:]
    batch = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    out = np.zeros(batch + (ka + kb - 1, la + lb - 1))
    for i in range(kb):
        for j in range(lb):
            out[..., i : i + ka, j : j + la] += a * b[..., i : i + 1, j : j + 1]
    return out


def base_grid(s) -> np.ndarray:
    """2x2 grid of the product shift itself; ``s`` has shape ``(..., 4)``."""
    s = np.asarray(s, dtype=np.float64)
    g = np.zeros(s.shape[:-1] + (2, 2))
    for idx, (tp, spw) in enumerate(COUPLING_POWERS):
        g[..., spw, tp] = s[..., idx]
    return g


def coupling_powers(s, K: int) -> np.ndarray:
    """Grids of ``S_p^k`` for ``k = 0..K``, each padded to ``(K+1, K+1)``.

    Returns shape ``(K+1,) + s.shape[:-1] + (K+1, K+1)``.
    """
    s = np.asarray(s, dtype=np.float64)
    lead = s.shape[:-1]
    out = np.zeros((K + 1,) + lead + (K + 1, K + 1))
    out[(0,) + (Ellipsis,) + (0, 0)] = 1.0
    for k in range(1, K + 1):
        out[k] = _times_base(out[k - 1], s)
    return out


def _times_base(g: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Multiply a (K+1)x(K+1) grid by the base grid, truncating overflow.

    Callers only pass grids of degree < K per axis, so nothing is lost.
    """
    out = s[..., 0, None, None] * g
    out[..., 1:, :] += s[..., 1, None, None] * g[..., :-1, :]
    out[..., :, 1:] += s[..., 2, None, None] * g[..., :, :-1]
    out[..., 1:, 1:] += s[..., 3, None, None] * g[..., :-1, :-1]
    return out


def _shift_grid(g: np.ndarray, tp: int, spw: int) -> np.ndarray:
    out = np.zeros_like(g)
    K1, K2 = g.shape[-2:]
    out[..., spw:, tp:] = g[..., : K1 - spw, : K2 - tp]
    return out


def expand_parametric_to_grid(h, p, K: int | None = None) -> np.ndarray:
    """Grid ``h_kl`` with ``sum_k h_k S_p^k = sum_kl h_kl (S_T^l kron S^k)``.

    ``h`` may carry leading axes (filter banks): ``h[..., k]`` with matching
    couplings ``p`` of shape ``(..., 4)`` or a single :class:`ProductParams`.
    """
    h = np.asarray(h, dtype=np.float64)
    if K is None:
        K = h.shape[-1] - 1
    if h.shape[-1] != K + 1:
        raise SizeMismatchError(f"need K+1 = {K + 1} taps, got {h.shape[-1]}")
    s = p.as_array() if isinstance(p, ProductParams) else np.asarray(p, dtype=np.float64)
    powers = coupling_powers(s, K)  # (K+1, *s_lead, K+1, K+1)
    powers = np.moveaxis(powers, 0, -3)  # (*s_lead, K+1, K+1, K+1)
    return np.einsum("...k,...kab->...ab", h, powers)


def expand_parametric_backward(h, s, dgrid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of a scalar loss w.r.t. taps and couplings given ``dL/dgrid``.

    ``h`` has shape ``(..., K+1)``, ``s`` shape ``(..., 4)`` broadcastable to
    ``h``'s leading axes, ``dgrid`` shape ``(..., K+1, K+1)``. The coupling
    gradient is reduced back to ``s``'s shape.

    Uses ``d(B^k)/d s_ij = k * B^(k-1) * E_ij`` (the grid product commutes),
    where ``E_ij`` is the unit grid at the position of ``s_ij``.
    """
    h = np.asarray(h, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    K = h.shape[-1] - 1
    powers = np.moveaxis(coupling_powers(s, K), 0, -3)  # (*s_lead, K+1, K+1, K+1)
    dh = np.einsum("...ab,...kab->...k", dgrid, powers)
    ds = np.zeros(np.broadcast_shapes(h.shape[:-1], s.shape[:-1]) + (4,))
    if K >= 1:
        # weighted sum over k of k * h_k * B^(k-1)
        ks = np.arange(1, K + 1, dtype=np.float64)
        weighted = np.einsum("...k,k,...kab->...ab", h[..., 1:], ks, powers[..., :-1, :, :])
        for idx, (tp, spw) in enumerate(COUPLING_POWERS):
            ds[..., idx] = np.sum(dgrid * _shift_grid(weighted, tp, spw), axis=(-2, -1))
    extra = ds.ndim - 1 - (s.ndim - 1)
    ds = ds.sum(axis=tuple(range(extra))) if extra > 0 else ds
    for ax, n in enumerate(s.shape[:-1]):
        if n == 1 and ds.shape[ax] != 1:
            ds = ds.sum(axis=ax, keepdims=True)
    return dh, ds
