"""Full-catalog top-K evaluation with Recall@K and NDCG@K.

Train items are always masked out of the ranking. When scoring the test
split, validation items are masked too unless ``mask_val_on_test`` is off.
NDCG uses binary relevance, a ``log2(rank + 1)`` discount and an ideal DCG
truncated at ``min(|targets|, K)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .models import EmbeddingModel, FinalEmbeddings

__all__ = [
    "EvalConfig",
    "rank_topk",
    "recall_at_k",
    "ndcg_at_k",
    "evaluate",
    "evaluate_users",
    "write_user_metrics",
]

_CHUNK = 512


@dataclass(frozen=True)
class EvalConfig:
    K: int = 50
    mask_val_on_test: bool = True

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")


def _targets(ds, split: str):
    if split == "val":
        return ds.val
    if split == "test":
        return ds.test
    raise ValueError(f"split must be 'val' or 'test', got {split!r}")


def _masked_items(ds, u: int, split: str, cfg: EvalConfig) -> np.ndarray:
    masked = ds.user_items[u]
    if split == "test" and cfg.mask_val_on_test and len(ds.val[u]):
        masked = np.union1d(masked, ds.val[u])
    return masked


def rank_topk(
    model: EmbeddingModel,
    u: int,
    ds,
    cfg: EvalConfig = EvalConfig(),
    split: str = "test",
    final: FinalEmbeddings | None = None,
) -> np.ndarray:
    final = final or model.propagate()
    scores = (final.item @ final.user[u]).astype(np.float64)
    scores[_masked_items(ds, u, split, cfg)] = -np.inf
    top, count = kernels.topk_rows(scores[None, :], cfg.K)
    return top[0, : count[0]]


def recall_at_k(ranked, targets) -> float:
    targets = set(np.asarray(targets).tolist())
    if not targets:
        raise ValueError("recall is undefined for an empty target set")
    hits = sum(1 for item in np.asarray(ranked).tolist() if item in targets)
    return hits / len(targets)


def ndcg_at_k(ranked, targets, k: int | None = None) -> float:
    targets = set(np.asarray(targets).tolist())
    if not targets:
        raise ValueError("NDCG is undefined for an empty target set")
    ranked = np.asarray(ranked).tolist()
    k = len(ranked) if k is None else k
    dcg = sum(1.0 / np.log2(r + 2) for r, item in enumerate(ranked[:k]) if item in targets)
    idcg = sum(1.0 / np.log2(r + 2) for r in range(min(len(targets), k)))
    return float(dcg / idcg) if idcg > 0 else 0.0


def evaluate_users(
    model: EmbeddingModel,
    ds,
    cfg: EvalConfig = EvalConfig(),
    split: str = "test",
    final: FinalEmbeddings | None = None,
):
    """Per-user ``(users, recalls, ndcgs)`` over users with non-empty targets."""
    targets = _targets(ds, split)
    users = np.array([u for u in range(ds.n_users) if len(targets[u])], dtype=np.int64)
    if len(users) == 0:
        return users, np.empty(0), np.empty(0)
    final = final or model.propagate()
    K = cfg.K
    discount = 1.0 / np.log2(np.arange(2, K + 2))
    ideal = np.concatenate([[0.0], np.cumsum(discount)])

    recalls = np.empty(len(users))
    ndcgs = np.empty(len(users))
    for start in range(0, len(users), _CHUNK):
        chunk = users[start:start + _CHUNK]
        scores = final.user[chunk] @ final.item.T
        truth = np.zeros_like(scores, dtype=bool)
        for row, u in enumerate(chunk):
            scores[row, _masked_items(ds, u, split, cfg)] = -np.inf
            truth[row, targets[u]] = True
        top, _ = kernels.topk_rows(scores, K)
        valid = top >= 0
        hits = np.zeros(top.shape, dtype=bool)
        rows = np.nonzero(valid)[0]
        hits[valid] = truth[rows, top[valid]]
        n_targets = truth.sum(axis=1)
        recalls[start:start + len(chunk)] = hits.sum(axis=1) / n_targets
        dcg = (hits * discount[: top.shape[1]]).sum(axis=1)
        ndcgs[start:start + len(chunk)] = dcg / ideal[np.minimum(n_targets, K)]
    return users, recalls, ndcgs


def evaluate(
    model: EmbeddingModel,
    ds,
    cfg: EvalConfig = EvalConfig(),
    split: str = "test",
    final: FinalEmbeddings | None = None,
) -> tuple[float, float]:
    """Unweighted mean Recall@K and NDCG@K over users with targets."""
    users, recalls, ndcgs = evaluate_users(model, ds, cfg, split, final)
    if len(users) == 0:
        raise ValueError(f"no users with {split} targets")
    return float(recalls.mean()), float(ndcgs.mean())


def write_user_metrics(path: str | Path, users, recalls, ndcgs) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user", "recall", "ndcg"])
        for u, r, n in zip(users, recalls, ndcgs):
            writer.writerow([int(u), repr(float(r)), repr(float(n))])
