import numpy as np
import pytest

from gtcnn import InvalidSizeError, PoolingPlan, SizeMismatchError, SparseMatrix, build_temporal_graph, downsample_zero_pad, select_active_nodes, slice_time, summarize
from gtcnn.pooling import sampling_matrix, slice_indices, sliced_length, summarize_backward, summarize_forward, neighborhoods
from oracles import brute_summarize, dense_line, random_sparse

PATH3 = np.array([[0, 1.0, 0], [1, 0, 1], [0, 1, 0]])


def _star(n):
    A = np.zeros((n, n))
    A[0, 1:] = A[1:, 0] = 1
    return SparseMatrix.from_dense(A)


@pytest.mark.parametrize("mode", ["max", "mean"])
def test_summarize_alpha_zero_identity(rng, mode):
    U = rng.standard_normal((4, 3, 2))
    S = SparseMatrix.from_dense(random_sparse(rng, 4, 0.5, symmetric=True))
    out = summarize(U, S, build_temporal_graph("directed-line", 3).shift, 0, mode)
    np.testing.assert_array_equal(out, U)


def test_summarize_path_max():
    U = np.array([1.0, 5.0, 2.0])[:, None]
    out = summarize(U, SparseMatrix.from_dense(PATH3), build_temporal_graph("directed-line", 1).shift, 1, "max")
    np.testing.assert_array_equal(out[:, 0], [5, 5, 5])


def test_summarize_mean_matches_bfs(rng):
    N, T = 5, 3
    A = random_sparse(rng, N, 0.4, symmetric=True)
    S_T = dense_line(T)
    U = rng.standard_normal((N, T, 2))
    got = summarize(U, SparseMatrix.from_dense(A), SparseMatrix.from_dense(S_T), 2, "mean")
    np.testing.assert_allclose(got, brute_summarize(U, A, S_T, 2, "mean"), atol=1e-13)


@pytest.mark.parametrize("alpha", [1, 2, 3])
def test_summarize_max_matches_bfs(rng, alpha):
    N, T = 6, 4
    A = random_sparse(rng, N, 0.3, symmetric=True)
    S_T = dense_line(T, cycle=True)
    U = rng.standard_normal((N, T, 3))
    got = summarize(U, SparseMatrix.from_dense(A), SparseMatrix.from_dense(S_T), alpha, "max")
    np.testing.assert_array_equal(got, brute_summarize(U, A, S_T, alpha, "max"))


def test_summarize_uses_cartesian_not_filter_product(rng):
    # a diagonal (Kronecker) space-time neighbor is 2 Cartesian hops away
    S = SparseMatrix.from_dense([[0, 1.0], [1.0, 0]])
    S_T = build_temporal_graph("directed-line", 2).shift
    U = np.zeros((2, 2))
    U[1, 0] = 1.0  # node 1 at t=0
    out = summarize(U, S, S_T, 1, "max")
    assert out[0, 1] == 0.0  # (node 0, t=1) is not adjacent to (node 1, t=0) in the Cartesian product
    assert summarize(U, S, S_T, 2, "max")[0, 1] == 1.0


def test_summarize_directed_temporal_reach():
    # the directed line links t-1 -> t; reach follows stored entries (row t sees t-1)
    S = SparseMatrix.zeros(1, 1)
    S_T = build_temporal_graph("directed-line", 3).shift
    U = np.array([[3.0, 1.0, 2.0]])
    out = summarize(U, S, S_T, 1, "max")
    np.testing.assert_array_equal(out, [[3.0, 3.0, 2.0]])


def test_max_backward_routes_to_first_argmax():
    S = SparseMatrix.from_dense(PATH3)
    S_T = build_temporal_graph("directed-line", 1).shift
    nb = neighborhoods(S, S_T, 1)
    u = np.array([[4.0, 4.0, 1.0]])[..., None]  # (T=1, N=3, 1)
    out, cache = summarize_forward(u, nb, "max")
    np.testing.assert_array_equal(out[0, :, 0], [4, 4, 4])
    du = summarize_backward(np.ones_like(out), nb, "max", cache)
    # node0 and node1 tie: lowest index (0) takes every gradient; node2's max comes from node1
    np.testing.assert_array_equal(du[0, :, 0], [2, 1, 0])


def test_mean_backward_is_adjoint(rng):
    S = SparseMatrix.from_dense(random_sparse(rng, 5, 0.5, symmetric=True))
    S_T = build_temporal_graph("directed-line", 3).shift
    nb = neighborhoods(S, S_T, 2)
    u = rng.standard_normal((3, 5, 4))
    dv = rng.standard_normal((3, 5, 4))
    out, _ = summarize_forward(u, nb, "mean")
    du = summarize_backward(dv, nb, "mean", None)
    assert np.sum(out * dv) == pytest.approx(np.sum(u * du), rel=1e-12)


def test_slice_examples(rng):
    V = rng.standard_normal((3, 5, 2))
    np.testing.assert_array_equal(slice_indices(4, 2), [0, 2])
    np.testing.assert_array_equal(slice_indices(5, 2), [0, 2, 4])
    assert sliced_length(5, 2) == 3
    np.testing.assert_array_equal(slice_time(V, 2), V[:, [0, 2, 4]])
    np.testing.assert_array_equal(slice_time(V, 1), V)
    assert slice_time(V[:, :4], 2).shape == (3, 2, 2)
    with pytest.raises(InvalidSizeError):
        slice_indices(4, 0)


def test_slice_last_phase():
    np.testing.assert_array_equal(slice_indices(5, 2, "last"), [0, 2, 4])
    np.testing.assert_array_equal(slice_indices(4, 2, "last"), [1, 3])
    np.testing.assert_array_equal(slice_indices(6, 4, "last"), [1, 5])


def test_select_active_nodes_examples():
    assert select_active_nodes(_star(5), range(5), 1).tolist() == [0]
    S = SparseMatrix.from_dense(np.ones((4, 4)) - np.eye(4))
    assert select_active_nodes(S, range(4), 2).tolist() == [0, 1]
    assert select_active_nodes(S, [3, 1, 2], 3).tolist() == [1, 2, 3]
    with pytest.raises(InvalidSizeError):
        select_active_nodes(S, [0, 1], 3)


def test_select_uses_raw_degrees_within_previous():
    star = _star(5)
    # center excluded from the previous set: remaining leaves tie, lowest index wins
    assert select_active_nodes(star, [1, 2, 3, 4], 2).tolist() == [1, 2]


def test_downsample_zero_pad(rng):
    W = rng.standard_normal((3, 2, 1))
    np.testing.assert_array_equal(downsample_zero_pad(W, range(3)), W)
    out = downsample_zero_pad(np.array([1.0, 2.0, 3.0])[:, None], [0])
    np.testing.assert_array_equal(out[:, 0], [1, 0, 0])
    with pytest.raises(SizeMismatchError):
        downsample_zero_pad(W, [5])


def test_sampling_matrix_constraints():
    C = sampling_matrix([1, 4], [0, 1, 3, 4])
    np.testing.assert_array_equal(C.sum(axis=1), [1, 1])
    assert np.all(C.sum(axis=0) <= 1)
    x = np.array([10.0, 11.0, 13.0, 14.0])
    np.testing.assert_array_equal(C @ x, [11, 14])
    np.testing.assert_array_equal(C.T @ (C @ x), [0, 11, 0, 14])  # embedding keeps active values


def test_nested_masks_compose(rng):
    # two-layer masking equals masking by the support of D2 = C2 C1 on a 6-node graph
    A = random_sparse(rng, 6, 0.5, symmetric=True)
    S = SparseMatrix.from_dense(A)
    plan = PoolingPlan.build(S, 4, [(0, 1, 4, "max"), (0, 1, 2, "max")])
    D2 = plan.nested_sampling(1)
    assert D2.shape == (2, 6)
    W = rng.standard_normal((6, 4, 1))
    twice = downsample_zero_pad(downsample_zero_pad(W, plan.layers[0].active), plan.layers[1].active)
    kept = np.flatnonzero(D2.sum(axis=0))
    np.testing.assert_array_equal(twice, downsample_zero_pad(W, kept))


def test_plan_dimension_law_and_nesting(rng):
    S = SparseMatrix.from_dense(random_sparse(rng, 10, 0.4, symmetric=True))
    plan = PoolingPlan.build(S, 7, [(1, 2, 8, "max"), (2, 3, 5, "mean"), (0, 1, 5, "max")])
    T = 7
    prev = set(range(10))
    for st in plan.layers:
        assert st.T_in == T
        assert st.T_out == -(-T // st.ratio)
        assert set(st.active.tolist()) <= prev
        prev, T = set(st.active.tolist()), st.T_out
    assert plan.output_shape == (5, 2)


def test_plan_validation(rng):
    S = SparseMatrix.from_dense(random_sparse(rng, 5, 0.5, symmetric=True))
    with pytest.raises(InvalidSizeError):
        PoolingPlan.build(S, 4, [(0, 1, 3, "max"), (0, 1, 4, "max")])
    with pytest.raises(InvalidSizeError):
        PoolingPlan.build(S, 4, [(0, 1, 0, "max")])
    with pytest.raises(InvalidSizeError):
        PoolingPlan.build(S, 4, [(-1, 1, 3, "max")])
    with pytest.raises(InvalidSizeError):
        PoolingPlan.build(S, 4, [(0, 0, 3, "max")])
    with pytest.raises(ValueError):
        PoolingPlan.build(S, 4, [(1, 1, 3, "median")])


def test_identity_pipeline(rng):
    S = SparseMatrix.from_dense(random_sparse(rng, 5, 0.5, symmetric=True))
    plan = PoolingPlan.build(S, 3, [(0, 1, 5, "max")])
    st = plan.layers[0]
    assert st.is_identity()
    u = rng.standard_normal((3, 5, 2, 4))
    z, _ = st.forward(u)
    np.testing.assert_array_equal(z, u)


def test_stage_output_support(rng):
    S = SparseMatrix.from_dense(random_sparse(rng, 8, 0.5, symmetric=True))
    plan = PoolingPlan.build(S, 5, [(1, 2, 5, "max"), (1, 2, 2, "mean")])
    x = rng.standard_normal((5, 8, 3, 2))
    for st in plan.layers:
        x, _ = st.forward(x)
        assert x.shape[0] == st.T_out
        inactive = np.setdiff1d(np.arange(8), st.active)
        assert np.all(x[:, inactive] == 0)
