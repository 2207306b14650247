"""Negative samplers: uniform (RNS), dynamic hard (DNS) and PDNS.

Candidates are drawn uniformly from each user's eligible items, i.e. items
that are neither train positives nor in the user's avoid set. Sampling is
exact: a uniform rank over the eligible set is drawn and mapped to an item
index through the sorted exclusion list, so no rejection loop is needed and
the number of RNG draws per batch is fixed (``B * H``).

PDNS in mixing form keeps the DNS pick ``j`` and scores the synthetic negative
``alpha * e_i + (1 - alpha) * e_j``; in soft form it keeps ``j`` unchanged and
leaves everything to the loss.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .errors import ConfigError, NonFiniteGradientError, SamplingError
from .models import EmbeddingModel, FinalEmbeddings

STRATEGIES = ("RNS", "DNS", "PDNS_mixing", "PDNS_soft")

__all__ = [
    "STRATEGIES",
    "SamplerConfig",
    "NegativeSelection",
    "SelectionBatch",
    "ExclusionIndex",
    "NegativeSampler",
    "sample_uniform",
    "sample_dns",
    "synthesize_pdns",
    "mix_embeddings",
]


@dataclass(frozen=True)
class SamplerConfig:
    strategy: str = "RNS"
    H: int = 1
    alpha: float = 0.0
    seed: int = 0
    avoid_set: Sequence[Sequence[int]] | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}", "strategy")
        if int(self.H) < 1:
            raise ConfigError("candidate pool size must be >= 1", "H")
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError("mixing coefficient must lie in [0, 1)", "alpha")

    @property
    def pool_size(self) -> int:
        return 1 if self.strategy == "RNS" else int(self.H)


@dataclass
class NegativeSelection:
    item: int
    candidate_scores: np.ndarray
    synthetic_score: float | None = None
    candidates: np.ndarray | None = None


@dataclass
class SelectionBatch:
    negatives: np.ndarray
    negative_scores: np.ndarray
    candidates: np.ndarray
    candidate_scores: np.ndarray


# dense rank->item tables are built when n_users * n_items stays below this
DENSE_TABLE_LIMIT = 1 << 24


class ExclusionIndex:
    """Per-user sorted excluded items (train positives plus avoid set) in CSR.

    Small catalogs also get a dense ``(n_users, max_eligible)`` table of
    eligible items so rank mapping is a gather; larger ones binary-search the
    exclusion list. Both give the same item for the same rank.
    """

    def __init__(
        self,
        n_items: int,
        user_items: Sequence[np.ndarray],
        avoid_set=None,
        dense: bool | None = None,
    ):
        self.n_items = n_items
        n_users = len(user_items)
        if avoid_set is not None and len(avoid_set) != n_users:
            raise ConfigError("avoid_set needs one entry per user", "avoid_set")
        lists = []
        for u in range(n_users):
            ex = np.asarray(user_items[u], dtype=np.int64)
            if avoid_set is not None and len(avoid_set[u]):
                ex = np.union1d(ex, np.asarray(avoid_set[u], dtype=np.int64))
            else:
                ex = np.unique(ex)
            lists.append(ex)
        counts = np.array([len(x) for x in lists], dtype=np.int64)
        self.indptr = np.zeros(n_users + 1, dtype=np.int64)
        np.cumsum(counts, out=self.indptr[1:])
        self.excluded = np.concatenate(lists) if lists else np.empty(0, dtype=np.int64)
        local = np.arange(len(self.excluded), dtype=np.int64) - np.repeat(self.indptr[:-1], counts)
        self.shifted = self.excluded - local
        self.n_eligible = n_items - counts
        if dense is None:
            dense = n_users * n_items <= DENSE_TABLE_LIMIT
        self.table = self._dense_table(n_users) if dense and n_users else None

    def _dense_table(self, n_users: int) -> np.ndarray:
        mask = np.ones((n_users, self.n_items), dtype=bool)
        owner = np.repeat(np.arange(n_users), np.diff(self.indptr))
        mask[owner, self.excluded] = False
        rows, cols = np.nonzero(mask)
        start = np.zeros(n_users + 1, dtype=np.int64)
        np.cumsum(self.n_eligible, out=start[1:])
        table = np.zeros((n_users, max(int(self.n_eligible.max()), 1)), dtype=np.int64)
        table[rows, np.arange(len(rows)) - start[rows]] = cols
        return table

    def excluded_for(self, u: int) -> np.ndarray:
        return self.excluded[self.indptr[u]:self.indptr[u + 1]]

    def draw_ranks(self, users: np.ndarray, pool: int, rng: np.random.Generator) -> np.ndarray:
        n_elig = self.n_eligible[users]
        if np.any(n_elig <= 0):
            raise SamplingError(int(users[np.argmax(n_elig <= 0)]))
        # floor(U * n): bias below 2**-53 per draw, much cheaper than bounded integers
        ranks = (rng.random((len(users), pool)) * n_elig[:, None]).astype(np.int64)
        return np.minimum(ranks, n_elig[:, None] - 1, out=ranks)

    def items_from_ranks(self, users: np.ndarray, ranks: np.ndarray) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        if self.table is not None:
            return self.table[users[:, None], ranks]
        return kernels.map_ranks(users, ranks, self.indptr, self.shifted, self.n_items)


class NegativeSampler:
    """Batch sampler bound to one dataset; the avoid set can be swapped."""

    def __init__(self, cfg: SamplerConfig, ds):
        self.cfg = cfg
        self.ds = ds
        self.index = ExclusionIndex(ds.n_items, ds.user_items, cfg.avoid_set)

    def set_avoid(self, avoid_set) -> None:
        self.index = ExclusionIndex(self.ds.n_items, self.ds.user_items, avoid_set)

    def select(
        self, users: np.ndarray, final: FinalEmbeddings, rng: np.random.Generator
    ) -> SelectionBatch:
        users = np.asarray(users, dtype=np.int64)
        ranks = self.index.draw_ranks(users, self.cfg.pool_size, rng)
        cands = self.index.items_from_ranks(users, ranks)
        cand_scores, neg, neg_scores = kernels.select_hardest(users, cands, final.user, final.item)
        if not np.all(np.isfinite(cand_scores)):
            raise NonFiniteGradientError("non-finite candidate scores during negative selection")
        return SelectionBatch(neg, neg_scores, cands, cand_scores)


def _user_index(u: int, ds, avoid_set) -> ExclusionIndex:
    avoid = None
    if avoid_set is not None:
        avoid = [avoid_set[u]]
    idx = ExclusionIndex(ds.n_items, [ds.user_items[u]], avoid)
    if idx.n_eligible[0] <= 0:
        raise SamplingError(u)
    return idx


def sample_uniform(u: int, ds, rng: np.random.Generator, avoid_set=None) -> int:
    """One item uniformly from items ``u`` has not trained on and may receive."""
    idx = _user_index(u, ds, avoid_set)
    ranks = idx.draw_ranks(np.zeros(1, dtype=np.int64), 1, rng)
    return int(idx.items_from_ranks(np.zeros(1, dtype=np.int64), ranks)[0, 0])


def sample_dns(
    u: int,
    i: int,
    model: EmbeddingModel,
    ds,
    cfg: SamplerConfig,
    rng: np.random.Generator,
    final: FinalEmbeddings | None = None,
) -> NegativeSelection:
    """Hardest of ``H`` uniform eligible candidates (ties: lowest item index).

    ``i`` is unused by the selection itself; it is part of the signature
    because PDNS mixing needs the positive next.
    """
    final = final or model.propagate()
    idx = _user_index(u, ds, cfg.avoid_set)
    zero = np.zeros(1, dtype=np.int64)
    ranks = idx.draw_ranks(zero, cfg.pool_size, rng)
    user_row = final.user[u:u + 1]
    cands = idx.items_from_ranks(zero, ranks)
    cand_scores, neg, _ = kernels.select_hardest(zero, cands, user_row, final.item)
    return NegativeSelection(int(neg[0]), cand_scores[0], candidates=cands[0])


def mix_embeddings(pos_emb: np.ndarray, neg_emb: np.ndarray, alpha: float) -> np.ndarray:
    """Synthetic negative embedding ``alpha * e_i + (1 - alpha) * e_j``."""
    if not 0.0 <= alpha < 1.0:
        raise ConfigError("mixing coefficient must lie in [0, 1)", "alpha")
    return alpha * pos_emb + (1.0 - alpha) * neg_emb


def synthesize_pdns(
    u: int,
    i: int,
    selection: NegativeSelection,
    alpha: float,
    model: EmbeddingModel,
    final: FinalEmbeddings | None = None,
) -> float:
    final = final or model.propagate()
    mixed = mix_embeddings(final.item[i], final.item[selection.item], alpha)
    selection.synthetic_score = float(final.user[u] @ mixed)
    return selection.synthetic_score
