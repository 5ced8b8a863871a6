"""Spatial and temporal graphs and their shift operators."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import DataError, InvalidSizeError, SamplingError, SizeMismatchError
from .sparse import SparseMatrix, degrees, spectral_radius

EARTH_RADIUS_KM = 6371.0
TEMPORAL_KINDS = ("directed-line", "cycle", "custom")


@dataclass(frozen=True)
class TemporalGraph:
    T: int
    kind: str
    shift: SparseMatrix

    def __post_init__(self):
        if self.shift.shape != (self.T, self.T):
            raise SizeMismatchError(f"temporal shift must be {self.T}x{self.T}, got {self.shift.shape}")
        if self.kind not in TEMPORAL_KINDS:
            raise ValueError(f"unknown temporal graph kind {self.kind!r}")

    @property
    def n_edges(self) -> int:
        return self.shift.nnz


@dataclass(frozen=True, eq=False)
class SpatialGraph:
    """A spatial graph given by its shift operator.

    ``shift`` is the raw operator (adjacency by default). Filters use
    :attr:`normalized_shift`, which divides by the spectral radius; degree
    queries use the raw operator.
    """

    shift: SparseMatrix
    labels: np.ndarray | None = None
    coords: np.ndarray | None = None
    undirected: bool = True
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.shift.is_square():
            raise SizeMismatchError(f"spatial shift must be square, got {self.shift.shape}")
        if self.undirected and not self.shift.is_symmetric(1e-12):
            raise ValueError("graph declared undirected but its shift is not symmetric")
        if self.labels is not None and len(self.labels) != self.N:
            raise SizeMismatchError("one community label per node required")

    @property
    def N(self) -> int:
        return self.shift.n_rows

    @property
    def n_edges(self) -> int:
        """Stored nonzeros of the shift (each undirected edge counts twice)."""
        return self.shift.nnz

    @cached_property
    def normalized_shift(self) -> SparseMatrix:
        rho = spectral_radius(self.shift, iters=100, tol=1e-8)
        return self.shift if rho == 0.0 else self.shift.scaled(1.0 / rho)

    @cached_property
    def degrees(self) -> np.ndarray:
        return degrees(self.shift)

    def laplacian(self) -> SparseMatrix:
        return SparseMatrix(sp.diags(self.degrees) - self.shift.csr)

    def operator(self, kind: str = "adjacency") -> SparseMatrix:
        """Normalized shift used for filtering: ``adjacency`` or ``laplacian``."""
        if kind == "adjacency":
            return self.normalized_shift
        if kind == "laplacian":
            lap = self.laplacian()
            rho = spectral_radius(lap)
            return lap if rho == 0.0 else lap.scaled(1.0 / rho)
        raise ValueError(f"unknown shift kind {kind!r}")

    def digest(self) -> str:
        return self.shift.digest()


def build_temporal_graph(kind: str, T: int, shift: SparseMatrix | None = None) -> TemporalGraph:
    """Temporal graph over ``T`` instants.

    The directed line stores ``(t, t-1) = 1`` so one shift moves a value from
    instant ``t-1`` to instant ``t``; the cycle adds the wrap-around ``(0, T-1)``.
    """
    if T < 1:
        raise InvalidSizeError(f"temporal graph needs T >= 1, got {T}")
    if kind == "custom":
        if shift is None:
            raise ValueError("custom temporal graph needs an explicit shift")
        return TemporalGraph(T, kind, shift)
    rows = list(range(1, T))
    cols = list(range(0, T - 1))
    if kind == "cycle" and T > 1:
        rows.append(0)
        cols.append(T - 1)
    elif kind == "cycle":
        # T == 1: the wrap-around is a self-loop
        rows, cols = [0], [0]
    elif kind != "directed-line":
        raise ValueError(f"unknown temporal graph kind {kind!r}")
    return TemporalGraph(T, kind, SparseMatrix.from_triplets(rows, cols, np.ones(len(rows)), (T, T)))


def is_connected(S: SparseMatrix) -> bool:
    n_comp, _ = connected_components(S.csr, directed=True, connection="weak")
    return n_comp == 1


def sample_sbm(
    N: int,
    C: int,
    p_in: float = 0.8,
    p_out: float = 0.2,
    seed=None,
    max_retries: int = 100,
) -> SpatialGraph:
    """Connected undirected stochastic block model with ``C`` equal blocks.

    Nodes ``[c*N/C, (c+1)*N/C)`` form community ``c``. Disconnected draws are
    rejected; after ``max_retries`` attempts a :class:`SamplingError` is raised.
    """
    if C < 1 or N < 1 or N % C:
        raise InvalidSizeError(f"C={C} must divide N={N}")
    if not 0.0 <= p_out <= p_in <= 1.0:
        raise ValueError(f"need 0 <= p_out <= p_in <= 1, got p_in={p_in}, p_out={p_out}")
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(C), N // C)
    probs = np.where(labels[:, None] == labels[None, :], p_in, p_out)
    iu = np.triu_indices(N, 1)
    for attempt in range(max_retries):
        draw = rng.random(iu[0].size) < probs[iu]
        rows, cols = iu[0][draw], iu[1][draw]
        S = SparseMatrix.from_triplets(
            np.concatenate([rows, cols]), np.concatenate([cols, rows]), np.ones(2 * rows.size), (N, N)
        )
        if N == 1 or is_connected(S):
            meta = {"kind": "sbm", "N": N, "C": C, "p_in": p_in, "p_out": p_out, "attempts": attempt + 1}
            return SpatialGraph(S, labels=labels, meta=meta)
    raise SamplingError(f"no connected SBM sample after {max_retries} attempts")


def great_circle_km(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Haversine distance in km for coordinates in degrees."""
    lat1, lon1, lat2, lon2 = map(np.radians, (lat1, lon1, lat2, lon2))
    a = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def build_geometric_graph(coords, threshold: float) -> SpatialGraph:
    """Geometric graph over (lat, lon) stations.

    Stations ``i != j`` are linked when their great-circle distance ``d`` is at
    most ``threshold`` km, with weight ``exp(-d / d_mean)`` where ``d_mean``
    is the mean distance over the linked pairs.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 2 or coords.shape[0] < 2:
        raise InvalidSizeError("need at least two (lat, lon) pairs")
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    n = coords.shape[0]
    lat, lon = coords[:, 0], coords[:, 1]
    dist = great_circle_km(lat[:, None], lon[:, None], lat[None, :], lon[None, :])
    iu = np.triu_indices(n, 1)
    d = dist[iu]
    if np.any(d == 0.0):
        dup = [(int(i), int(j)) for i, j, dd in zip(*iu, d) if dd == 0.0]
        warnings.warn(f"duplicate station coordinates: {dup}", stacklevel=2)
    keep = d <= threshold
    rows, cols, d = iu[0][keep], iu[1][keep], d[keep]
    if d.size:
        mean = d.mean()
        w = np.exp(-d / mean) if mean > 0 else np.ones_like(d)
    else:
        w = d
    S = SparseMatrix.from_triplets(np.concatenate([rows, cols]), np.concatenate([cols, rows]), np.concatenate([w, w]), (n, n))
    meta = {"kind": "geometric", "threshold_km": threshold, "mean_edge_km": float(d.mean()) if d.size else None}
    return SpatialGraph(S, coords=coords, meta=meta)


def load_coordinates_csv(path) -> tuple[list[str], np.ndarray]:
    """Read ``station_id,lat,lon`` rows (header required)."""
    ids, coords = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["station_id", "lat", "lon"]:
            raise DataError(f"{path}: header must be station_id,lat,lon")
        for row in reader:
            try:
                coords.append((float(row["lat"]), float(row["lon"])))
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}: bad coordinate row {row}") from exc
            ids.append(row["station_id"])
    return ids, np.asarray(coords)
