"""User/item embedding models, Adam, and the checkpoint format.

Two scoring modes share one pair of embedding tables:

* ``MF``: scores are dot products of the raw tables.
* ``LightGCN``: tables are propagated ``layers`` times over the symmetric
  normalized user-item graph (edge weight ``1/sqrt(deg(u) deg(i))``, no
  self-loops) and the layer outputs 0..L are averaged.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import ConfigError, NonFiniteGradientError
from .seeding import STREAM_INIT, stream

MODES = ("MF", "LightGCN")

__all__ = [
    "MODES",
    "NormalizedGraph",
    "EmbeddingModel",
    "FinalEmbeddings",
    "AdamState",
    "init_embeddings",
    "propagate",
    "score",
    "score_all",
    "adam_step",
    "save_checkpoint",
    "load_checkpoint",
]


class NormalizedGraph:
    """Bipartite train graph with symmetric normalized edge weights.

    Nodes ``0..n_users-1`` are users and ``n_users..n_users+n_items-1`` are
    items; ``matrix`` is the symmetric ``(N, N)`` CSR adjacency.
    """

    def __init__(self, n_users: int, n_items: int, pairs: np.ndarray):
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        self.n_users = n_users
        self.n_items = n_items
        users, items = pairs[:, 0], pairs[:, 1]
        self.user_degree = np.bincount(users, minlength=n_users)
        self.item_degree = np.bincount(items, minlength=n_items)
        self.weights = 1.0 / np.sqrt(
            self.user_degree[users].astype(np.float64) * self.item_degree[items]
        )
        self.users = users
        self.items = items
        n = n_users + n_items
        rows = np.concatenate([users, items + n_users])
        cols = np.concatenate([items + n_users, users])
        data = np.concatenate([self.weights, self.weights])
        self.matrix = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
        self.matrix_t = self.matrix.T.tocsr()
        # boolean pattern used for ancestor expansion
        self._pattern = sp.csr_matrix(
            (np.ones_like(data, dtype=np.int8), (rows, cols)), shape=(n, n)
        )

    @classmethod
    def from_dataset(cls, ds) -> "NormalizedGraph":
        return cls(ds.n_users, ds.n_items, ds.train)

    def apply(self, X: np.ndarray, transpose: bool = False) -> np.ndarray:
        """``A @ X`` (or ``A.T @ X``) for a dense ``(N, F)`` block."""
        m = self.matrix_t if transpose else self.matrix
        return kernels.csr_matmul(m.indptr, m.indices, m.data, X)

    @property
    def edges(self):
        return list(zip(self.users.tolist(), self.items.tolist(), self.weights.tolist()))

    def expand(self, mask: np.ndarray, hops: int) -> np.ndarray:
        """Nodes within ``hops`` edges of any node in ``mask``."""
        out = mask.astype(bool)
        frontier = out.astype(np.int8)
        for _ in range(hops):
            frontier = (self._pattern @ frontier > 0).astype(np.int8)
            out |= frontier.astype(bool)
        return out


class FinalEmbeddings(NamedTuple):
    user: np.ndarray
    item: np.ndarray


@dataclass
class EmbeddingModel:
    user_emb: np.ndarray
    item_emb: np.ndarray
    mode: str = "MF"
    layers: int = 0
    graph: NormalizedGraph | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown model mode {self.mode!r}", "model")
        if self.layers < 0:
            raise ConfigError("layer count must be >= 0", "layers")
        if self.user_emb.ndim != 2 or self.item_emb.ndim != 2:
            raise ValueError("embedding tables must be 2-D")
        if self.user_emb.shape[1] != self.item_emb.shape[1] or self.user_emb.shape[1] < 1:
            raise ValueError("user and item tables need the same positive width")

    @property
    def n_users(self) -> int:
        return self.user_emb.shape[0]

    @property
    def n_items(self) -> int:
        return self.item_emb.shape[0]

    @property
    def dim(self) -> int:
        return self.user_emb.shape[1]

    @property
    def params(self) -> list[np.ndarray]:
        return [self.user_emb, self.item_emb]

    def copy(self) -> "EmbeddingModel":
        return EmbeddingModel(
            self.user_emb.copy(), self.item_emb.copy(), self.mode, self.layers, self.graph
        )

    def with_graph(self, graph: NormalizedGraph) -> "EmbeddingModel":
        self.graph = graph
        return self

    def _check_graph(self):
        if self.graph is None:
            raise ConfigError("LightGCN mode needs an adjacency graph", "graph")
        if self.graph.n_users != self.n_users or self.graph.n_items != self.n_items:
            raise ConfigError("graph size does not match embedding tables", "graph")

    def propagate(self) -> FinalEmbeddings:
        if self.mode == "MF":
            return FinalEmbeddings(self.user_emb, self.item_emb)
        self._check_graph()
        layer = np.concatenate([self.user_emb, self.item_emb])
        total = layer.copy()
        for _ in range(self.layers):
            layer = self.graph.apply(layer)
            total += layer
        total /= self.layers + 1
        return FinalEmbeddings(total[: self.n_users], total[self.n_users:])

    def backprop(self, grad_user: np.ndarray, grad_item: np.ndarray):
        """Map gradients w.r.t. final embeddings to the raw tables.

        The adjoint of layer averaging: ``(1/(L+1)) sum_l (A^T)^l g``.
        """
        if self.mode == "MF":
            return grad_user, grad_item
        self._check_graph()
        layer = np.concatenate([grad_user, grad_item])
        total = layer.copy()
        for _ in range(self.layers):
            layer = self.graph.apply(layer, transpose=True)
            total += layer
        total /= self.layers + 1
        return total[: self.n_users], total[self.n_users:]

    def touched_rows(self, users: np.ndarray, items: np.ndarray):
        """Raw-table rows whose final embedding depends on the given rows."""
        if self.mode == "MF" or self.layers == 0:
            return np.unique(users), np.unique(items)
        self._check_graph()
        mask = np.zeros(self.n_users + self.n_items, dtype=bool)
        mask[users] = True
        mask[self.n_users + np.asarray(items)] = True
        mask = self.graph.expand(mask, self.layers)
        return np.flatnonzero(mask[: self.n_users]), np.flatnonzero(mask[self.n_users:])


def init_embeddings(
    n_users: int,
    n_items: int,
    dim: int,
    seed: int,
    mode: str = "MF",
    layers: int = 0,
    graph: NormalizedGraph | None = None,
    std: float = 0.1,
) -> EmbeddingModel:
    if n_users < 1 or n_items < 1 or dim < 1:
        raise ConfigError("embedding table sizes must be positive")
    rng = stream(seed, STREAM_INIT)
    user_emb = rng.normal(0.0, std, size=(n_users, dim))
    item_emb = rng.normal(0.0, std, size=(n_items, dim))
    return EmbeddingModel(user_emb, item_emb, mode, layers, graph)


def propagate(model: EmbeddingModel) -> FinalEmbeddings:
    return model.propagate()


def _check_index(value, bound: int, what: str):
    arr = np.asarray(value)
    if np.any(arr < 0) or np.any(arr >= bound):
        raise IndexError(f"{what} index out of range [0, {bound})")


def score(model: EmbeddingModel, u, i, final: FinalEmbeddings | None = None):
    """``e_u . e_i`` on final embeddings; vectorizes over index arrays."""
    _check_index(u, model.n_users, "user")
    _check_index(i, model.n_items, "item")
    final = final or model.propagate()
    eu = final.user[u]
    ei = final.item[i]
    if eu.ndim == 1:
        return float(eu @ ei)
    return np.einsum("bf,bf->b", eu, ei)


def score_all(model: EmbeddingModel, u, final: FinalEmbeddings | None = None) -> np.ndarray:
    _check_index(u, model.n_users, "user")
    final = final or model.propagate()
    return final.item @ final.user[u]


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list, repr=False)
    v: list[np.ndarray] = field(default_factory=list, repr=False)


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
    rows: Sequence[np.ndarray | None] | None = None,
) -> Sequence[np.ndarray]:
    """In-place Adam update with bias correction.

    ``rows`` restricts each parameter's update (moments included) to the given
    row indices; untouched rows keep stale moments. Bias correction uses the
    global step count.
    """
    if rows is None:
        rows = [None] * len(params)
    picked = []
    for g, r in zip(grads, rows):
        gr = g if r is None else g[r]
        if not np.all(np.isfinite(gr)):
            bad = np.argwhere(~np.isfinite(gr))[:5]
            raise NonFiniteGradientError(f"non-finite gradient entries at {bad.tolist()}")
        picked.append(gr)

    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step_count += 1
    t = state.step_count
    corr1 = 1.0 - state.beta1**t
    corr2 = 1.0 - state.beta2**t
    for p, gr, r, m, v in zip(params, picked, rows, state.m, state.v):
        if r is None:
            r = slice(None)
        m_r = state.beta1 * m[r] + (1.0 - state.beta1) * gr
        v_r = state.beta2 * v[r] + (1.0 - state.beta2) * gr * gr
        m[r] = m_r
        v[r] = v_r
        p[r] -= state.lr * (m_r / corr1) / (np.sqrt(v_r / corr2) + state.eps)
    return params


_MAGIC = b"PDNSEMB1"
_HEADER = struct.Struct("<8sqqqqq")


def save_checkpoint(model: EmbeddingModel, path: str | Path) -> None:
    """Header then both tables as row-major little-endian float64."""
    header = _HEADER.pack(
        _MAGIC, model.n_users, model.n_items, model.dim, MODES.index(model.mode), model.layers
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(model.user_emb, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.item_emb, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path, graph: NormalizedGraph | None = None) -> EmbeddingModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated checkpoint header")
    magic, n_users, n_items, dim, mode, layers = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not an embedding checkpoint")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != (n_users + n_items) * dim:
        raise ValueError(f"{path}: table size does not match header")
    user_emb = body[: n_users * dim].reshape(n_users, dim).astype(np.float64)
    item_emb = body[n_users * dim:].reshape(n_items, dim).astype(np.float64)
    return EmbeddingModel(user_emb, item_emb, MODES[mode], layers, graph)
