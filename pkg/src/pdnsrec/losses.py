"""BPR and soft-BPR objectives and their batch gradients.

For a score difference ``d = y_ui - y_uj`` the soft BPR loss is
``-ln sigmoid(beta * d)``; ``beta = 1`` is plain BPR. Its derivative in ``d``
is ``-beta * Delta`` with ``Delta = 1 - sigmoid(beta * d)``, the per-triplet
weight that a small ``beta`` flattens.

In mixing form the negative embedding is ``alpha * e_i + (1 - alpha) * e_j``;
the chain rule through the mix yields the soft-BPR gradient with
``beta = 1 - alpha``, which is what makes the two forms equivalent.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import kernels
from .errors import ConfigError, NonFiniteGradientError
from .models import EmbeddingModel, FinalEmbeddings
from .sampling import mix_embeddings

LOSS_KINDS = ("BPR", "softBPR")

__all__ = [
    "LOSS_KINDS",
    "LossConfig",
    "TripletBatch",
    "BatchGradient",
    "bpr_loss",
    "soft_bpr_loss",
    "gradient_weight",
    "loss_gradient",
]


@dataclass(frozen=True)
class LossConfig:
    kind: str = "BPR"
    beta: float = 1.0
    reg: float = 0.0
    batch_size: int = 2048
    # rescale the ranking gradient by 1/beta (or 1/(1 - alpha) in mixing form)
    drop_prefactor: bool = False

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"unknown loss {self.kind!r}", "loss")
        if not 0.0 < self.beta <= 1.0:
            raise ConfigError("soft factor must lie in (0, 1]", "beta")
        if self.reg < 0:
            raise ConfigError("regularization must be >= 0", "reg")
        if self.batch_size < 1:
            raise ConfigError("batch size must be >= 1", "batch_size")

    @property
    def effective_beta(self) -> float:
        return self.beta if self.kind == "softBPR" else 1.0


def bpr_loss(d):
    """``-ln sigmoid(d)`` as ``ln(1 + exp(-d))``; scalar in, scalar out."""
    out = np.logaddexp(0.0, -np.asarray(d, dtype=np.float64))
    return float(out) if out.ndim == 0 else out


def soft_bpr_loss(d, beta: float):
    if not beta > 0:
        raise ConfigError("soft factor must be > 0", "beta")
    return bpr_loss(beta * np.asarray(d, dtype=np.float64))


def gradient_weight(d, beta: float = 1.0):
    """``Delta = 1 - sigmoid(beta * d)``."""
    out = expit(-beta * np.asarray(d, dtype=np.float64))
    return float(out) if out.ndim == 0 else out


@dataclass
class TripletBatch:
    users: np.ndarray
    pos: np.ndarray
    neg: np.ndarray
    pos_scores: np.ndarray
    neg_scores: np.ndarray  # synthetic scores in mixing form
    delta: np.ndarray

    @property
    def diff(self) -> np.ndarray:
        return self.pos_scores - self.neg_scores


@dataclass
class BatchGradient:
    loss: float
    rank_loss: float
    grad_user: np.ndarray
    grad_item: np.ndarray
    touched_users: np.ndarray
    touched_items: np.ndarray
    batch: TripletBatch


def _rowdot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("bf,bf->b", a, b)


def loss_gradient(
    model: EmbeddingModel,
    users: np.ndarray,
    pos: np.ndarray,
    neg: np.ndarray,
    loss_cfg: LossConfig,
    alpha: float | None = None,
    final: FinalEmbeddings | None = None,
) -> BatchGradient:
    """Mean batch loss and its gradient w.r.t. the raw embedding tables.

    ``alpha`` switches to mixing form (plain BPR on the synthetic negative).
    L2 regularization ``reg/2 * (|u|^2 + |i|^2 + |j|^2)`` on raw rows is
    averaged over the batch with the ranking loss.
    With ``drop_prefactor`` the ranking part of the gradient omits the
    constant soft factor, so it is no longer the exact derivative of the loss.
    """
    users = np.asarray(users, dtype=np.int64)
    pos = np.asarray(pos, dtype=np.int64)
    neg = np.asarray(neg, dtype=np.int64)
    final = final or model.propagate()
    B = len(users)

    eu = final.user[users]
    ei = final.item[pos]
    ej = final.item[neg]
    if alpha is None:
        beta = loss_cfg.effective_beta
        e_neg = ej
        share = 1.0
    else:
        if loss_cfg.kind != "BPR":
            raise ConfigError("mixing form trains with plain BPR", "loss")
        beta = 1.0
        e_neg = mix_embeddings(ei, ej, alpha)
        share = 1.0 - alpha
    y_pos = _rowdot(eu, ei)
    y_neg = _rowdot(eu, e_neg)
    d = y_pos - y_neg
    rank_terms = bpr_loss(beta * d)
    delta = gradient_weight(d, beta)
    # dL/dd for the mean loss
    g = -(beta * delta) / B
    if loss_cfg.drop_prefactor:
        g = g / (beta * share)

    grad_user = np.zeros_like(final.user)
    grad_item = np.zeros_like(final.item)
    scatter = kernels.scatter_add_rows
    scatter(grad_user, users, g[:, None] * (ei - e_neg))
    scatter(grad_item, pos, (g * share)[:, None] * eu)
    scatter(grad_item, neg, (-g * share)[:, None] * eu)
    grad_user, grad_item = model.backprop(grad_user, grad_item)

    rank_loss = float(np.mean(rank_terms))
    loss = rank_loss
    if loss_cfg.reg > 0:
        U0, I0 = model.user_emb, model.item_emb
        coef = loss_cfg.reg / B
        scatter(grad_user, users, coef * U0[users])
        scatter(grad_item, pos, coef * I0[pos])
        scatter(grad_item, neg, coef * I0[neg])
        loss += 0.5 * coef * float(
            np.sum(U0[users] ** 2) + np.sum(I0[pos] ** 2) + np.sum(I0[neg] ** 2)
        )

    if not (np.isfinite(loss) and np.all(np.isfinite(grad_user)) and np.all(np.isfinite(grad_item))):
        bad = np.flatnonzero(~np.isfinite(d))[:5]
        raise NonFiniteGradientError(
            f"non-finite loss/gradient; offending triplets "
            f"{[(int(users[t]), int(pos[t]), int(neg[t])) for t in bad]}"
        )

    touched_users, touched_items = model.touched_rows(users, np.concatenate([pos, neg]))
    batch = TripletBatch(users, pos, neg, y_pos, y_neg, delta)
    return BatchGradient(loss, rank_loss, grad_user, grad_item, touched_users, touched_items, batch)
