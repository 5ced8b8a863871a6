"""Property-based checks (hypothesis) across the numeric core."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from gtcnn import (
    PoolingPlan,
    SparseMatrix,
    build_temporal_graph,
    devectorize,
    gt_filter_recursive,
    spmv,
    summarize,
    vectorize,
)
from oracles import bfs_hops, random_sparse

seeds = st.integers(0, 2**32 - 1)


def _graph(rng, n, symmetric=True):
    return SparseMatrix.from_dense(random_sparse(rng, n, 0.4, symmetric=symmetric))


@given(seeds, st.integers(1, 12), st.integers(1, 12), st.floats(-3, 3), st.floats(-3, 3))
def test_spmv_is_linear(seed, n, m, a, b):
    rng = np.random.default_rng(seed)
    S = SparseMatrix.from_dense(random_sparse(rng, n, 0.4, m=m))
    x, y = rng.standard_normal(m), rng.standard_normal(m)
    np.testing.assert_allclose(spmv(S, a * x + b * y), a * spmv(S, x) + b * spmv(S, y), atol=1e-10)


@given(seeds, st.integers(1, 5), st.integers(1, 4))
def test_vectorize_round_trip(seed, N, T):
    X = np.random.default_rng(seed).standard_normal((N, T))
    v = vectorize(X)
    assert v.shape == (N * T,)
    np.testing.assert_array_equal(v[: N], X[:, 0])
    np.testing.assert_array_equal(devectorize(v, N, T), X)


@given(seeds, st.integers(1, 6), st.integers(1, 5), st.integers(0, 3), st.integers(0, 3))
def test_filter_linear_in_signal_and_taps(seed, N, T, K1, K2):
    rng = np.random.default_rng(seed)
    S, S_T = _graph(rng, N), build_temporal_graph("directed-line", T).shift
    H, G = rng.standard_normal((K1 + 1, K2 + 1)), rng.standard_normal((K1 + 1, K2 + 1))
    X, Y = rng.standard_normal((N, T)), rng.standard_normal((N, T))
    a, b = rng.standard_normal(2)
    f = lambda h, x: gt_filter_recursive(S, S_T, h, x)
    np.testing.assert_allclose(f(H, a * X + b * Y), a * f(H, X) + b * f(H, Y), atol=1e-9)
    np.testing.assert_allclose(f(a * H + b * G, X), a * f(H, X) + b * f(G, X), atol=1e-9)


@given(seeds, st.integers(2, 8), st.integers(1, 4), st.integers(0, 3), st.integers(0, 2))
def test_filter_permutation_equivariance(seed, N, T, K1, K2):
    rng = np.random.default_rng(seed)
    A = random_sparse(rng, N, 0.4, symmetric=True)
    P = np.eye(N)[rng.permutation(N)]
    S_T = build_temporal_graph("directed-line", T).shift
    H, X = rng.standard_normal((K1 + 1, K2 + 1)), rng.standard_normal((N, T))
    U = gt_filter_recursive(SparseMatrix.from_dense(A), S_T, H, X)
    Up = gt_filter_recursive(SparseMatrix.from_dense(P @ A @ P.T), S_T, H, P @ X)
    np.testing.assert_allclose(Up, P @ U, atol=1e-10)


@given(seeds, st.integers(2, 9), st.integers(1, 5), st.integers(0, 3), st.integers(0, 3))
def test_filter_locality(seed, N, T, K1, K2):
    rng = np.random.default_rng(seed)
    A = random_sparse(rng, N, 0.3, symmetric=True)
    S_T = build_temporal_graph("directed-line", T).shift
    j, t0 = int(rng.integers(N)), int(rng.integers(T))
    X = np.zeros((N, T))
    X[j, t0] = 1.0
    U = gt_filter_recursive(SparseMatrix.from_dense(A), S_T, rng.standard_normal((K1 + 1, K2 + 1)), X)
    hops = bfs_hops(A != 0)[:, j]
    reach = (hops <= K1)[:, None] & ((np.arange(T) >= t0) & (np.arange(T) <= t0 + K2))[None, :]
    assert np.all(U[~reach] == 0)


@given(st.integers(1, 10))
def test_directed_line_is_nilpotent(T):
    D = build_temporal_graph("directed-line", T).shift.to_dense()
    assert np.all(np.linalg.matrix_power(D, T) == 0)
    if T > 1:
        assert np.any(np.linalg.matrix_power(D, T - 1) != 0)


@settings(max_examples=200)
@given(seeds, st.integers(2, 12), st.integers(1, 9), st.integers(1, 4))
def test_pooling_dimension_law_and_nesting(seed, N, T, L):
    rng = np.random.default_rng(seed)
    S = _graph(rng, N)
    specs, n_prev = [], N
    for _ in range(L):
        n_act = int(rng.integers(1, n_prev + 1))
        specs.append((int(rng.integers(0, 3)), int(rng.integers(1, 4)), n_act, str(rng.choice(["max", "mean"]))))
        n_prev = n_act
    plan = PoolingPlan.build(S, T, specs)
    T_prev, prev = T, set(range(N))
    for i, stage in enumerate(plan.layers):
        assert stage.T_in == T_prev and stage.T_out == -(-T_prev // stage.ratio)
        assert set(stage.active.tolist()) <= prev and len(stage.active) == specs[i][2]
        D = plan.nested_sampling(i)
        assert D.shape == (len(stage.active), N)
        np.testing.assert_array_equal(np.flatnonzero(D.sum(axis=0)), np.sort(stage.active))
        T_prev, prev = stage.T_out, set(stage.active.tolist())


@given(seeds, st.integers(1, 8), st.integers(1, 5), st.integers(0, 3))
def test_max_summary_is_monotone_and_dominates(seed, N, T, alpha):
    rng = np.random.default_rng(seed)
    S, S_T = _graph(rng, N), build_temporal_graph("directed-line", T).shift
    U = rng.standard_normal((N, T, 2))
    V = U + np.abs(rng.standard_normal(U.shape))
    mu, mv = summarize(U, S, S_T, alpha, "max"), summarize(V, S, S_T, alpha, "max")
    assert np.all(mu <= mv) and np.all(mu >= U)
    mean = summarize(U, S, S_T, alpha, "mean")
    assert np.all(mean <= mu + 1e-12)
