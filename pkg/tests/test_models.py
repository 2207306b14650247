import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pdnsrec.errors import ConfigError, NonFiniteGradientError
from pdnsrec.models import (
    AdamState,
    EmbeddingModel,
    NormalizedGraph,
    adam_step,
    init_embeddings,
    load_checkpoint,
    propagate,
    save_checkpoint,
    score,
    score_all,
)

from tests.oracles import dense_adjacency, dense_propagate


def _lightgcn(n_users, n_items, pairs, layers, seed=0, dim=4):
    graph = NormalizedGraph(n_users, n_items, np.array(pairs))
    return init_embeddings(n_users, n_items, dim, seed, "LightGCN", layers, graph)


class TestInit:
    def test_deterministic(self):
        a = init_embeddings(5, 7, 3, seed=11)
        b = init_embeddings(5, 7, 3, seed=11)
        np.testing.assert_array_equal(a.user_emb, b.user_emb)
        np.testing.assert_array_equal(a.item_emb, b.item_emb)

    def test_shape(self):
        m = init_embeddings(10, 3, 64, seed=0)
        assert m.user_emb.shape == (10, 64) and m.item_emb.shape == (3, 64)

    def test_moments(self):
        m = init_embeddings(1000, 1000, 500, seed=0)
        x = np.concatenate([m.user_emb.ravel(), m.item_emb.ravel()])
        assert abs(x.mean()) < 1e-3
        assert abs(x.std() - 0.1) < 1e-3

    def test_rejects_empty(self):
        with pytest.raises(ConfigError):
            init_embeddings(0, 3, 2, seed=0)


class TestGraph:
    def test_weights(self):
        pairs = np.array([[0, 0], [0, 1], [1, 1]])
        g = NormalizedGraph(2, 2, pairs)
        np.testing.assert_allclose(g.weights, [1 / np.sqrt(2 * 1), 1 / np.sqrt(2 * 2), 1 / np.sqrt(1 * 2)])
        assert len(g.edges) == 3
        np.testing.assert_allclose(g.matrix.toarray(), dense_adjacency(2, 2, pairs))
        assert (g.matrix != g.matrix.T).nnz == 0

    def test_expand(self):
        # path u0 - i0 - u1 - i1
        g = NormalizedGraph(2, 2, np.array([[0, 0], [1, 0], [1, 1]]))
        mask = np.array([True, False, False, False])
        assert g.expand(mask, 1).tolist() == [True, False, True, False]
        assert g.expand(mask, 2).tolist() == [True, True, True, False]
        assert g.expand(mask, 3).tolist() == [True, True, True, True]


class TestPropagate:
    def test_zero_layers_is_identity(self):
        m = _lightgcn(3, 4, [[0, 0], [1, 2], [2, 3]], layers=0)
        out = propagate(m)
        np.testing.assert_array_equal(out.user, m.user_emb)
        np.testing.assert_array_equal(out.item, m.item_emb)

    def test_single_edge(self):
        m = _lightgcn(1, 1, [[0, 0]], layers=1)
        out = m.propagate()
        np.testing.assert_allclose(out.user[0], (m.user_emb[0] + m.item_emb[0]) / 2, rtol=0, atol=1e-15)

    def test_path_graph_matches_dense_powers(self):
        pairs = [[0, 0], [1, 0]]  # i0 in the middle of a 3-node path
        m = _lightgcn(2, 1, pairs, layers=2)
        ref_u, ref_i = dense_propagate(m.user_emb, m.item_emb, pairs, 2)
        out = m.propagate()
        np.testing.assert_allclose(out.user, ref_u, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(out.item, ref_i, rtol=1e-12, atol=1e-14)

    @pytest.mark.parametrize("layers", [1, 2, 3, 4])
    def test_random_graph_matches_dense(self, layers):
        rng = np.random.default_rng(layers)
        pairs = np.unique(np.column_stack([rng.integers(0, 5, 14), rng.integers(0, 6, 14)]), axis=0)
        m = _lightgcn(5, 6, pairs, layers, seed=layers)
        ref_u, ref_i = dense_propagate(m.user_emb, m.item_emb, pairs.tolist(), layers)
        out = m.propagate()
        np.testing.assert_allclose(out.user, ref_u, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(out.item, ref_i, rtol=1e-12, atol=1e-14)

    def test_missing_graph(self):
        m = init_embeddings(2, 2, 2, seed=0, mode="LightGCN", layers=1)
        with pytest.raises(ConfigError):
            m.propagate()

    def test_mf_matches_lightgcn_l0_bitwise(self):
        mf = init_embeddings(4, 5, 3, seed=2)
        g = NormalizedGraph(4, 5, np.array([[0, 0], [1, 1], [2, 2], [3, 4]]))
        lg = EmbeddingModel(mf.user_emb.copy(), mf.item_emb.copy(), "LightGCN", 0, g)
        np.testing.assert_array_equal(score_all(mf, 1), score_all(lg, 1))

    def test_backprop_is_adjoint(self):
        rng = np.random.default_rng(0)
        pairs = np.unique(np.column_stack([rng.integers(0, 4, 10), rng.integers(0, 5, 10)]), axis=0)
        m = _lightgcn(4, 5, pairs, 3)
        gu, gi = rng.normal(size=(4, 4)), rng.normal(size=(5, 4))
        bu, bi = m.backprop(gu, gi)
        out = m.propagate()
        # <g, P e> == <P^T g, e>
        lhs = np.sum(gu * out.user) + np.sum(gi * out.item)
        rhs = np.sum(bu * m.user_emb) + np.sum(bi * m.item_emb)
        assert lhs == pytest.approx(rhs, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.integers(0, 3), st.integers(0, 1000))
def test_propagation_is_linear(a, layers, seed):
    rng = np.random.default_rng(seed)
    pairs = np.unique(np.column_stack([rng.integers(0, 4, 8), rng.integers(0, 4, 8)]), axis=0)
    m = _lightgcn(4, 4, pairs, layers, seed=seed)
    scaled = EmbeddingModel(a * m.user_emb, a * m.item_emb, "LightGCN", layers, m.graph)
    base, out = m.propagate(), scaled.propagate()
    np.testing.assert_allclose(out.user, a * base.user, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(out.item, a * base.item, rtol=1e-12, atol=1e-14)


@settings(max_examples=50, deadline=None)
@given(
    arrays(np.float64, 6, elements=st.floats(-10, 10)),
    arrays(np.float64, 6, elements=st.floats(-10, 10)),
    arrays(np.float64, 6, elements=st.floats(-10, 10)),
    st.floats(0, 0.999),
)
def test_scale_identity(eu, ei, ej, alpha):
    lhs = eu @ (alpha * ei + (1 - alpha) * ej)
    rhs = alpha * (eu @ ei) + (1 - alpha) * (eu @ ej)
    scale = np.abs(eu) @ (np.abs(ei) + np.abs(ej)) + 1e-300
    assert abs(lhs - rhs) <= 1e-12 * scale


class TestScore:
    def test_dot_product(self):
        m = EmbeddingModel(np.array([[1.0, 0.0]]), np.array([[2.0, 0.0], [0.0, 3.0]]))
        assert score(m, 0, 0) == 2.0

    def test_zero_user(self):
        m = EmbeddingModel(np.zeros((1, 3)), np.ones((4, 3)))
        np.testing.assert_array_equal(score_all(m, 0), np.zeros(4))

    def test_score_all_consistent(self):
        m = init_embeddings(6, 9, 5, seed=1)
        rng = np.random.default_rng(0)
        for u, i in zip(rng.integers(0, 6, 20), rng.integers(0, 9, 20)):
            assert score_all(m, u)[i] == pytest.approx(score(m, u, i), rel=1e-14)

    def test_index_errors(self):
        m = init_embeddings(2, 3, 2, seed=0)
        with pytest.raises(IndexError):
            score(m, 2, 0)
        with pytest.raises(IndexError):
            score(m, 0, -1)
        with pytest.raises(IndexError):
            score_all(m, 5)


class TestAdam:
    def test_first_step_moves_by_lr(self):
        p = np.array([[0.3, -1.2, 5.0]])
        g = np.array([[0.01, -4.0, 1e3]])
        before = p.copy()
        adam_step([p], [g], AdamState(lr=0.01))
        np.testing.assert_allclose(np.abs(p - before), 0.01, rtol=1e-5)
        np.testing.assert_array_equal(np.sign(before - p), np.sign(g))

    def test_zero_gradient_keeps_params(self):
        p = np.array([[0.5, -0.5]])
        adam_step([p], [np.zeros_like(p)], AdamState(lr=0.1))
        np.testing.assert_array_equal(p, [[0.5, -0.5]])

    def test_quadratic_descent(self):
        theta = np.array([[1.0]])
        state = AdamState(lr=0.01)
        for _ in range(100):
            adam_step([theta], [2 * theta], state)
        assert abs(theta[0, 0]) < 1.0
        assert state.step_count == 100

    def test_row_restricted_update(self):
        p = np.ones((4, 2))
        g = np.full((4, 2), 3.0)
        state = AdamState(lr=0.1)
        adam_step([p], [g], state, rows=[np.array([1, 3])])
        np.testing.assert_array_equal(p[[0, 2]], 1.0)
        assert np.all(p[[1, 3]] < 1.0)
        np.testing.assert_array_equal(state.m[0][[0, 2]], 0.0)

    def test_non_finite_aborts_without_mutation(self):
        p = np.ones((2, 2))
        g = np.array([[np.nan, 0.0], [1.0, 1.0]])
        state = AdamState()
        with pytest.raises(NonFiniteGradientError):
            adam_step([p], [g], state)
        np.testing.assert_array_equal(p, 1.0)
        assert state.step_count == 0


class TestCheckpoint:
    @pytest.mark.parametrize("mode,layers", [("MF", 0), ("LightGCN", 3)])
    def test_round_trip_bit_exact(self, tmp_path, mode, layers):
        m = init_embeddings(7, 11, 5, seed=9, mode=mode, layers=layers)
        m.user_emb[0, 0] = np.nextafter(1.0, 2.0)
        path = tmp_path / "m.ckpt"
        save_checkpoint(m, path)
        back = load_checkpoint(path)
        assert (back.mode, back.layers, back.dim) == (mode, layers, 5)
        assert back.user_emb.tobytes() == m.user_emb.tobytes()
        assert back.item_emb.tobytes() == m.item_emb.tobytes()
        assert path.stat().st_size == 48 + (7 + 11) * 5 * 8

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"x" * 100)
        with pytest.raises(ValueError):
            load_checkpoint(path)
