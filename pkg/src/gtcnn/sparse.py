"""Row-compressed sparse matrices used as graph shift operators."""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import SizeMismatchError

ZERO_TOL = 1e-15


class SparseMatrix:
    """Immutable CSR matrix with sorted column indices and no stored zeros.

    Storage is delegated to ``scipy.sparse.csr_matrix``; construction
    canonicalizes the layout (duplicates summed, indices sorted, entries with
    magnitude below ``ZERO_TOL`` dropped) and rejects non-finite values.
    """

    __slots__ = ("_csr", "_csr_t")

    def __init__(self, matrix):
        csr = sp.csr_matrix(matrix, dtype=np.float64, copy=True)
        csr.sum_duplicates()
        csr.data[np.abs(csr.data) < ZERO_TOL] = 0.0
        csr.eliminate_zeros()
        csr.sort_indices()
        if not np.all(np.isfinite(csr.data)):
            raise ValueError("sparse matrix contains non-finite values")
        csr.data.flags.writeable = False
        self._csr = csr
        self._csr_t = None

    # -- construction -----------------------------------------------------
    @classmethod
    def from_dense(cls, dense) -> "SparseMatrix":
        return cls(np.asarray(dense, dtype=np.float64))

    @classmethod
    def from_triplets(cls, rows, cols, vals, shape) -> "SparseMatrix":
        return cls(sp.coo_matrix((vals, (rows, cols)), shape=shape))

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls(sp.identity(n, format="csr"))

    @classmethod
    def zeros(cls, n_rows: int, n_cols: int) -> "SparseMatrix":
        return cls(sp.csr_matrix((n_rows, n_cols)))

    # -- views ------------------------------------------------------------
    @property
    def shape(self) -> tuple[int, int]:
        return self._csr.shape

    @property
    def n_rows(self) -> int:
        return self._csr.shape[0]

    @property
    def n_cols(self) -> int:
        return self._csr.shape[1]

    @property
    def nnz(self) -> int:
        return self._csr.nnz

    @property
    def indptr(self) -> np.ndarray:
        return self._csr.indptr

    @property
    def indices(self) -> np.ndarray:
        return self._csr.indices

    @property
    def data(self) -> np.ndarray:
        return self._csr.data

    @property
    def csr(self) -> sp.csr_matrix:
        """Underlying scipy matrix. Treat as read-only."""
        return self._csr

    @property
    def T(self) -> "SparseMatrix":
        return SparseMatrix(self._csr.T)

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def is_square(self) -> bool:
        return self.n_rows == self.n_cols

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        if not self.is_square():
            return False
        diff = self._csr - self._csr.T
        return diff.nnz == 0 or float(np.max(np.abs(diff.data))) <= tol

    def scaled(self, factor: float) -> "SparseMatrix":
        return SparseMatrix(self._csr * float(factor))

    def support(self) -> "SparseMatrix":
        """0/1 pattern of the stored entries."""
        pat = self._csr.copy()
        pat.data = np.ones_like(pat.data)
        return SparseMatrix(pat)

    def digest(self) -> str:
        """Stable SHA-256 of shape and CSR arrays."""
        h = hashlib.sha256()
        h.update(np.asarray(self.shape, dtype="<i8").tobytes())
        h.update(self.indptr.astype("<i8").tobytes())
        h.update(self.indices.astype("<i8").tobytes())
        h.update(self.data.astype("<f8").tobytes())
        return h.hexdigest()

    # -- products ---------------------------------------------------------
    def matvec(self, x) -> np.ndarray:
        return spmv(self, x)

    def apply(self, x: np.ndarray, axis: int) -> np.ndarray:
        """Multiply along ``axis`` of a dense array: ``y[..., i, ...] = sum_j S_ij x[..., j, ...]``."""
        return _apply(self._csr, x, axis)

    def apply_transpose(self, x: np.ndarray, axis: int) -> np.ndarray:
        if self._csr_t is None:
            self._csr_t = self._csr.T.tocsr()
        return _apply(self._csr_t, x, axis)

    def __matmul__(self, other):
        if isinstance(other, SparseMatrix):
            return SparseMatrix(self._csr @ other._csr)
        return self._csr @ other

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseMatrix) or other.shape != self.shape:
            return False
        return (
            np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"


def _apply(csr: sp.csr_matrix, x: np.ndarray, axis: int) -> np.ndarray:
    n = csr.shape[1]
    if x.shape[axis] != n:
        raise SizeMismatchError(f"axis {axis} has length {x.shape[axis]}, operator expects {n}")
    if x.ndim == 1:
        return csr @ x
    axis = axis % x.ndim
    if axis == x.ndim - 1:
        flat = x.reshape(-1, n)
        out = (csr @ flat.T).T
        return np.ascontiguousarray(out).reshape(x.shape[:-1] + (csr.shape[0],))
    moved = np.moveaxis(x, axis, 0)
    rest = moved.shape[1:]
    out = csr @ moved.reshape(n, -1)
    return np.moveaxis(out.reshape((csr.shape[0],) + rest), 0, axis)


def spmv(S: SparseMatrix, x) -> np.ndarray:
    """Sparse matrix-vector product ``S @ x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != S.n_cols:
        raise SizeMismatchError(f"vector of length {x.shape} does not match {S.n_cols} columns")
    return S.csr @ x


def degrees(S: SparseMatrix) -> np.ndarray:
    """Row sums of ``|S|``."""
    if not S.is_square():
        raise SizeMismatchError("degrees need a square shift operator")
    return np.asarray(abs(S.csr).sum(axis=1)).ravel()


def spectral_radius(S: SparseMatrix, iters: int = 100, tol: float = 1e-8) -> float:
    """Largest absolute eigenvalue estimated by power iteration.

    Iterates with ``S^2`` and stops once ``sqrt(||S^2 x||)`` moves by less
    than ``tol`` (relative).
    """
    n = S.n_rows
    if S.nnz == 0:
        return 0.0
    x = np.ones(n) / np.sqrt(n)
    if np.linalg.norm(S.csr @ x) == 0.0:
        x = np.random.default_rng(0).standard_normal(n)
        x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        # S^2 so that a dominant pair (+l, -l) does not oscillate
        y = S.csr @ (S.csr @ x)
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        new = float(np.sqrt(norm))
        x = y / norm
        if abs(new - est) <= tol * max(new, 1.0):
            est = new
            break
        est = new
    return est


def write_edge_list(S: SparseMatrix, path) -> None:
    """Write ``i j w`` triples (0-based) with a ``# n`` header."""
    coo = S.csr.tocoo()
    with open(path, "w") as fh:
        fh.write(f"# n {S.n_rows}\n")
        for i, j, w in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i} {j} {float(w)!r}\n")


def read_edge_list(path, n: int | None = None) -> SparseMatrix:
    """Parse an ``i j w`` edge list into a square matrix.

    The node count comes from ``n``, a ``# n <count>`` header, or the largest
    index seen, in that order of precedence.
    """
    rows, cols, vals = [], [], []
    header_n = None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "n":
                header_n = int(parts[1])
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 'i j w', got {raw!r}")
        rows.append(int(parts[0]))
        cols.append(int(parts[1]))
        vals.append(float(parts[2]))
    size = n if n is not None else header_n
    if size is None:
        size = max(max(rows, default=-1), max(cols, default=-1)) + 1
    idx = np.asarray(rows + cols, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= size):
        raise ValueError(f"{path}: node index out of range for {size} nodes")
    return SparseMatrix.from_triplets(rows, cols, vals, (size, size))
