import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdnsrec.dataset import InteractionDataset
from pdnsrec.evaluation import (
    EvalConfig,
    evaluate,
    evaluate_users,
    ndcg_at_k,
    rank_topk,
    recall_at_k,
    write_user_metrics,
)
from pdnsrec.models import EmbeddingModel, init_embeddings

from tests.conftest import random_dataset
from tests.oracles import evaluate_bruteforce, recall_ndcg, topk_bruteforce


def _fixed_scores(scores, train_items=(), val=(), test=(1,)):
    n = len(scores)
    model = EmbeddingModel(np.array([[1.0]]), np.array(scores, dtype=float).reshape(n, 1))
    pairs = np.array([[0, i] for i in train_items]).reshape(-1, 2)
    ds = InteractionDataset(1, n, pairs, val=(np.array(val, dtype=int),), test=(np.array(test),))
    return model, ds


class TestRankTopK:
    def test_sorted(self):
        model, ds = _fixed_scores([0.2, 0.9, 0.5])
        assert rank_topk(model, 0, ds, EvalConfig(K=2)).tolist() == [1, 2]

    def test_all_but_one_masked(self):
        model, ds = _fixed_scores([0.2, 0.9, 0.5, 0.1], train_items=[0, 1, 3], test=[2])
        assert rank_topk(model, 0, ds, EvalConfig(K=3)).tolist() == [2]

    def test_ties_by_index(self):
        model, ds = _fixed_scores([0.5, 0.7, 0.5, 0.5, 0.7])
        assert rank_topk(model, 0, ds, EvalConfig(K=4)).tolist() == [1, 4, 0, 2]

    def test_val_masked_only_for_test(self):
        model, ds = _fixed_scores([0.9, 0.5, 0.1], val=[0], test=[1])
        assert rank_topk(model, 0, ds, EvalConfig(K=1), "test").tolist() == [1]
        assert rank_topk(model, 0, ds, EvalConfig(K=1, mask_val_on_test=False), "test").tolist() == [0]

    def test_full_catalog_is_permutation_of_unmasked(self):
        ds = random_dataset(8, 30, 0.3, seed=0)
        model = init_embeddings(8, 30, 5, seed=1)
        final = model.propagate()
        for u in range(8):
            got = rank_topk(model, u, ds, EvalConfig(K=30), "val")
            masked = set(ds.user_items[u].tolist())
            scores = (final.item @ final.user[u]).tolist()
            assert got.tolist() == topk_bruteforce(scores, masked, 30)
            assert set(got.tolist()) == set(range(30)) - masked


class TestMetrics:
    def test_recall_definition(self):
        assert recall_at_k(["a", "x"], ["a", "b", "c"]) == pytest.approx(1 / 3)
        assert recall_at_k([3, 1, 2, 9], [1, 2]) == 1.0
        assert recall_at_k([4, 5], [1, 2]) == 0.0

    def test_recall_empty_targets(self):
        with pytest.raises(ValueError):
            recall_at_k([1], [])

    def test_ndcg_values(self):
        assert ndcg_at_k([7], [7]) == 1.0
        assert ndcg_at_k([0, 1], [5]) == 0.0
        # one hit at rank 1, three targets, K=2: 1 / (1 + 1/log2(3))
        value = ndcg_at_k(["a", "x"], ["a", "b", "c"], k=2)
        assert value == pytest.approx(1 / (1 + 1 / math.log2(3)), abs=1e-12)
        assert round(value, 5) == 0.61315

    def test_ndcg_one_iff_top_ranks(self):
        assert ndcg_at_k([3, 4, 0], [3, 4], k=3) == 1.0
        assert ndcg_at_k([4, 3, 0], [3, 4], k=3) == 1.0
        assert ndcg_at_k([0, 3, 4], [3, 4], k=3) < 1.0
        # more targets than K: ideal is K hits
        assert ndcg_at_k([1, 2], [1, 2, 3], k=2) == 1.0


class TestEvaluate:
    @pytest.mark.parametrize("split", ["val", "test"])
    @pytest.mark.parametrize("mask_val", [True, False])
    @pytest.mark.parametrize("K", [1, 5, 20])
    def test_matches_bruteforce(self, split, mask_val, K):
        ds = random_dataset(20, 45, 0.3, seed=K)
        model = init_embeddings(20, 45, 6, seed=K)
        cfg = EvalConfig(K=K, mask_val_on_test=mask_val)
        final = model.propagate()
        ref = evaluate_bruteforce(final.user, final.item, ds, split, K, mask_val)
        got = evaluate(model, ds, cfg, split)
        assert got[0] == pytest.approx(ref[0], abs=1e-12)
        assert got[1] == pytest.approx(ref[1], abs=1e-12)

    def test_mean_over_users(self):
        # user 0 finds 1 of 2 targets, user 1 finds its only target
        model = EmbeddingModel(np.ones((2, 1)), np.array([[3.0], [2.0], [1.0], [0.0]]))
        ds = InteractionDataset(2, 4, np.array([[0, 3], [1, 3]]), test=(np.array([0, 2]), np.array([1])))
        recall, _ = evaluate(model, ds, EvalConfig(K=1 + 1), "test")
        assert recall == pytest.approx(0.75)

    def test_users_without_targets_skipped(self):
        ds = random_dataset(6, 20, 0.3, seed=1)
        test = list(ds.test)
        test[2] = np.array([], dtype=int)
        ds = InteractionDataset(6, 20, ds.train, val=ds.val, test=tuple(test))
        users, recalls, _ = evaluate_users(init_embeddings(6, 20, 3, seed=0), ds, EvalConfig(K=5))
        assert 2 not in users.tolist() and len(recalls) == 5

    def test_no_users_is_error(self):
        ds = InteractionDataset(2, 5, np.array([[0, 1], [1, 2]]))
        with pytest.raises(ValueError):
            evaluate(init_embeddings(2, 5, 2, seed=0), ds, EvalConfig(), "val")

    def test_recall_at_catalog_size_is_one(self):
        ds = random_dataset(10, 25, 0.3, seed=7)
        _, recalls, ndcgs = evaluate_users(init_embeddings(10, 25, 3, seed=2), ds, EvalConfig(K=25), "test")
        np.testing.assert_allclose(recalls, 1.0)
        assert np.all((ndcgs > 0) & (ndcgs <= 1))

    def test_repeatable(self):
        ds = random_dataset(10, 25, 0.3, seed=7)
        model = init_embeddings(10, 25, 3, seed=2)
        assert evaluate(model, ds) == evaluate(model, ds)

    def test_user_dump(self, tmp_path):
        ds = random_dataset(5, 20, 0.3, seed=1)
        users, r, n = evaluate_users(init_embeddings(5, 20, 3, seed=0), ds, EvalConfig(K=5))
        path = tmp_path / "users.csv"
        write_user_metrics(path, users, r, n)
        lines = path.read_text().splitlines()
        assert lines[0] == "user,recall,ndcg" and len(lines) == 6


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([np.exp, np.arctan, lambda x: 3 * x + 1]))
def test_ranking_invariant_to_increasing_transform(seed, transform):
    rng = np.random.default_rng(seed)
    scores = np.round(rng.normal(size=30), 2)  # rounding creates ties
    masked = rng.choice(30, size=5, replace=False)
    a = topk_bruteforce(scores.tolist(), set(masked.tolist()), 10)
    model, ds = _fixed_scores(scores, train_items=masked, test=[int(a[0])])
    model_t, _ = _fixed_scores(transform(scores))
    got = rank_topk(model, 0, ds, EvalConfig(K=10)).tolist()
    got_t = rank_topk(model_t, 0, ds, EvalConfig(K=10)).tolist()
    assert got == a == got_t


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 12))
def test_metrics_bounded_and_masked(seed, K):
    ds = random_dataset(6, 15, 0.4, seed=seed)
    model = init_embeddings(6, 15, 3, seed=seed)
    for u in range(6):
        ranked = rank_topk(model, u, ds, EvalConfig(K=K), "test")
        assert not set(ranked.tolist()) & (set(ds.user_items[u].tolist()) | set(ds.val[u].tolist()))
        r, n = recall_ndcg(ranked.tolist(), ds.test[u].tolist(), K)
        assert 0 <= r <= 1 and 0 <= n <= 1
        assert recall_at_k(ranked, ds.test[u]) == pytest.approx(r)
        assert ndcg_at_k(ranked, ds.test[u], K) == pytest.approx(n)
