"""Pure NumPy implementations of the hot kernels.

Each function mirrors one in ``_kernels.pyx`` with the same signature and the
same tie rules, so the two backends emit identical indices for the same draws.

Exclusion lists are passed as CSR (``indptr``, ``shifted``) where
``shifted[indptr[u] + m] = excluded_u[m] - m`` for the sorted excluded items
of user ``u``. The ``r``-th eligible item (0-based) is then ``r + k`` with
``k = #{m : shifted_u[m] <= r}``.
"""
import numpy as np
import scipy.sparse as sp


def map_ranks(users, ranks, indptr, shifted, n_items):
    """Eligible-item ranks ``(B, H)`` for ``users`` ``(B,)`` to item indices."""
    users = np.asarray(users, dtype=np.int64)
    ranks = np.asarray(ranks, dtype=np.int64)
    stride = n_items + 1
    counts = np.diff(indptr)
    owner = np.repeat(np.arange(len(counts), dtype=np.int64), counts)
    # per-user blocks of ``shifted`` are non-decreasing, so the keys are sorted
    gkey = owner * stride + shifted
    query = users[:, None] * stride + ranks
    k = np.searchsorted(gkey, query, side="right") - indptr[users][:, None]
    return ranks + k


SELECT_BLOCK_ELEMS = 1 << 16


def select_hardest(users, cands, user_emb, item_emb):
    """Score ``(B, H)`` candidates and pick the hardest per row.

    Returns ``(scores, negatives, negative_scores)``; ties on the maximum go
    to the lowest item index.
    """
    users = np.asarray(users, dtype=np.int64)
    cands = np.asarray(cands, dtype=np.int64)
    B, H = cands.shape
    scores = np.empty((B, H))
    # row blocks keep the gathered (rows, H, F) candidate tensor cache-sized (512 KB)
    step = max(1, SELECT_BLOCK_ELEMS // max(1, H * item_emb.shape[1]))
    for lo in range(0, B, step):
        hi = min(lo + step, B)
        block = np.matmul(item_emb[cands[lo:hi]], user_emb[users[lo:hi], :, None])
        scores[lo:hi] = block[:, :, 0]
    best = scores.max(axis=1)
    tied = np.where(scores == best[:, None], cands, np.iinfo(np.int64).max)
    neg = tied.min(axis=1)
    return scores, neg, best


def topk_rows(scores, k):
    """Top-``k`` column indices per row, best first.

    Order is descending score, ascending index among equal scores. Entries
    equal to ``-inf`` are never returned; short rows are padded with ``-1``.
    Returns ``(indices, counts)``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n_rows, n_cols = scores.shape
    k = min(k, n_cols)
    out = np.full((n_rows, k), -1, dtype=np.int64)
    if n_rows == 0 or k == 0:
        return out, np.zeros(n_rows, dtype=np.int64)
    part = np.argpartition(-scores, k - 1, axis=1)[:, :k]
    thresh = np.take_along_axis(scores, part, axis=1).min(axis=1)[:, None]
    above = scores > thresh
    need = k - above.sum(axis=1, keepdims=True)
    tie = scores == thresh
    chosen = above | (tie & (np.cumsum(tie, axis=1) <= need))
    rows, cols = np.nonzero(chosen)
    vals = scores[rows, cols]
    order = np.lexsort((cols, -vals, rows))
    cols = cols[order].reshape(n_rows, k)
    vals = vals[order].reshape(n_rows, k)
    finite = vals > -np.inf
    counts = finite.sum(axis=1)
    out[finite] = cols[finite]
    return out, counts


def scatter_add_rows(out, idx, vals):
    """``out[idx[b]] += vals[b]`` sequentially in ``b`` order."""
    np.add.at(out, np.asarray(idx, dtype=np.int64), vals)


def csr_matmul(indptr, indices, data, X):
    """Sparse CSR ``(N, M)`` times dense row-major ``(M, F)``."""
    n_rows = len(indptr) - 1
    A = sp.csr_matrix((data, indices, indptr), shape=(n_rows, X.shape[0]))
    return np.asarray(A @ X)
