"""Independent reference implementations used as test oracles.

These are deliberately naive (loops, dense matrices, Python sorting) and share
no code with the package.
"""
import math

import numpy as np


def dense_adjacency(n_users, n_items, pairs):
    n = n_users + n_items
    A = np.zeros((n, n))
    du = np.zeros(n_users)
    di = np.zeros(n_items)
    for u, i in pairs:
        du[u] += 1
        di[i] += 1
    for u, i in pairs:
        w = 1.0 / math.sqrt(du[u] * di[i])
        A[u, n_users + i] = w
        A[n_users + i, u] = w
    return A


def dense_propagate(user_emb, item_emb, pairs, layers):
    n_users = len(user_emb)
    A = dense_adjacency(n_users, len(item_emb), pairs)
    E = np.vstack([user_emb, item_emb])
    total = np.zeros_like(E)
    for l in range(layers + 1):
        total += np.linalg.matrix_power(A, l) @ E
    total /= layers + 1
    return total[:n_users], total[n_users:]


def softplus(x):
    return math.log1p(math.exp(-abs(x))) + max(x, 0.0)


def batch_loss(user_emb, item_emb, pairs, layers, users, pos, neg, beta, reg, alpha=None):
    """Mean (soft) BPR batch loss plus L2, recomputed from scratch."""
    if layers is None:
        U, I = user_emb, item_emb
    else:
        U, I = dense_propagate(user_emb, item_emb, pairs, layers)
    total = 0.0
    for u, i, j in zip(users, pos, neg):
        if alpha is None:
            d = U[u] @ I[i] - U[u] @ I[j]
        else:
            d = U[u] @ I[i] - U[u] @ (alpha * I[i] + (1 - alpha) * I[j])
        total += softplus(-beta * d)
        total += 0.5 * reg * (
            user_emb[u] @ user_emb[u] + item_emb[i] @ item_emb[i] + item_emb[j] @ item_emb[j]
        )
    return total / len(users)


def topk_bruteforce(scores, masked, k):
    cand = [(-s, idx) for idx, s in enumerate(scores) if idx not in set(masked)]
    cand.sort()
    return [idx for _, idx in cand[:k]]


def recall_ndcg(ranked, targets, k):
    targets = set(targets)
    hits = [1.0 if item in targets else 0.0 for item in ranked[:k]]
    dcg = sum(h / math.log2(r + 2) for r, h in enumerate(hits))
    idcg = sum(1.0 / math.log2(r + 2) for r in range(min(len(targets), k)))
    return sum(hits) / len(targets), dcg / idcg


def evaluate_bruteforce(U, I, ds, split, k, mask_val=True):
    targets = ds.val if split == "val" else ds.test
    recalls, ndcgs = [], []
    for u in range(ds.n_users):
        if len(targets[u]) == 0:
            continue
        masked = set(ds.user_items[u].tolist())
        if split == "test" and mask_val:
            masked |= set(ds.val[u].tolist())
        scores = [float(U[u] @ I[i]) for i in range(ds.n_items)]
        ranked = topk_bruteforce(scores, masked, k)
        r, n = recall_ndcg(ranked, targets[u].tolist(), k)
        recalls.append(r)
        ndcgs.append(n)
    return sum(recalls) / len(recalls), sum(ndcgs) / len(ndcgs)


def fd_check(model, pairs, users, pos, neg, loss_cfg, alpha, entries, h=1e-5):
    """Central differences of ``batch_loss`` at ``entries`` ``[(table, row, col)]``.

    Returns ``(numeric, analytic)`` arrays, analytic from the package.
    """
    from pdnsrec.losses import loss_gradient

    grad = loss_gradient(model, users, pos, neg, loss_cfg, alpha)
    layers = None if model.mode == "MF" else model.layers
    beta = loss_cfg.effective_beta

    def f():
        return batch_loss(
            model.user_emb, model.item_emb, pairs, layers, users, pos, neg, beta, loss_cfg.reg, alpha
        )

    numeric, analytic = [], []
    for table, row, col in entries:
        arr = model.user_emb if table == 0 else model.item_emb
        g = grad.grad_user if table == 0 else grad.grad_item
        keep = arr[row, col]
        arr[row, col] = keep + h
        up = f()
        arr[row, col] = keep - h
        down = f()
        arr[row, col] = keep
        numeric.append((up - down) / (2 * h))
        analytic.append(g[row, col])
    return np.array(numeric), np.array(analytic)


def relative_error(a, b, floor=1e-10):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
