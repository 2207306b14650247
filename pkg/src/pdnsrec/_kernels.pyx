# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; see ``_fallback.py`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()

ctypedef cnp.int64_t i64
ctypedef cnp.float64_t f64


cdef inline i64 _map_one(i64 r, const i64[::1] shifted, i64 lo, i64 hi) noexcept nogil:
    # count of entries in shifted[lo:hi] that are <= r
    cdef i64 a = lo, b = hi, mid
    while a < b:
        mid = (a + b) >> 1
        if shifted[mid] <= r:
            a = mid + 1
        else:
            b = mid
    return r + (a - lo)


def map_ranks(users, ranks, indptr, shifted, i64 n_items):
    cdef const i64[::1] u = np.ascontiguousarray(users, dtype=np.int64)
    cdef const i64[:, ::1] rk = np.ascontiguousarray(ranks, dtype=np.int64)
    cdef const i64[::1] ptr = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const i64[::1] sh = np.ascontiguousarray(shifted, dtype=np.int64)
    cdef Py_ssize_t B = rk.shape[0], H = rk.shape[1], b, h
    out = np.empty((B, H), dtype=np.int64)
    cdef i64[:, ::1] o = out
    with nogil:
        for b in range(B):
            for h in range(H):
                o[b, h] = _map_one(rk[b, h], sh, ptr[u[b]], ptr[u[b] + 1])
    return out


def select_hardest(users, cands, user_emb, item_emb):
    """Score ``(B, H)`` candidates; returns ``(scores, negatives, negative_scores)``."""
    cdef const i64[::1] u = np.ascontiguousarray(users, dtype=np.int64)
    cdef const i64[:, ::1] c = np.ascontiguousarray(cands, dtype=np.int64)
    cdef const f64[:, ::1] U = np.ascontiguousarray(user_emb, dtype=np.float64)
    cdef const f64[:, ::1] I = np.ascontiguousarray(item_emb, dtype=np.float64)
    cdef Py_ssize_t B = c.shape[0], H = c.shape[1], F = U.shape[1]
    cdef Py_ssize_t F4 = F - F % 4
    cdef Py_ssize_t b, h, f
    cdef i64 item, best_item, uu
    cdef f64 s, best, s0, s1, s2, s3

    cand_scores = np.empty((B, H), dtype=np.float64)
    neg = np.empty(B, dtype=np.int64)
    neg_scores = np.empty(B, dtype=np.float64)
    cdef f64[:, ::1] cs = cand_scores
    cdef i64[::1] n = neg
    cdef f64[::1] ns = neg_scores

    with nogil:
        for b in range(B):
            uu = u[b]
            for h in range(H):
                item = c[b, h]
                # four partial sums break the add dependency chain
                s0 = 0.0
                s1 = 0.0
                s2 = 0.0
                s3 = 0.0
                for f in range(0, F4, 4):
                    s0 += U[uu, f] * I[item, f]
                    s1 += U[uu, f + 1] * I[item, f + 1]
                    s2 += U[uu, f + 2] * I[item, f + 2]
                    s3 += U[uu, f + 3] * I[item, f + 3]
                for f in range(F4, F):
                    s0 += U[uu, f] * I[item, f]
                s = (s0 + s1) + (s2 + s3)
                cs[b, h] = s
                if h == 0 or s > best or (s == best and item < best_item):
                    best = s
                    best_item = item
            n[b] = best_item
            ns[b] = best
    return cand_scores, neg, neg_scores


def topk_rows(scores, Py_ssize_t k):
    cdef const f64[:, ::1] S = np.ascontiguousarray(scores, dtype=np.float64)
    cdef Py_ssize_t R = S.shape[0], C = S.shape[1], r, j, pos, cnt
    if k > C:
        k = C
    out = np.full((R, k), -1, dtype=np.int64)
    counts = np.zeros(R, dtype=np.int64)
    cdef i64[:, ::1] o = out
    cdef i64[::1] cn = counts
    top_vals_arr = np.empty(max(k, 1), dtype=np.float64)
    cdef f64[::1] tv = top_vals_arr
    cdef f64 s
    if k == 0:
        return out, counts
    with nogil:
        for r in range(R):
            cnt = 0
            for j in range(C):
                s = S[r, j]
                if s == -INFINITY:
                    continue
                if cnt == k and s <= tv[k - 1]:
                    continue
                # equal scores keep earlier (lower) indices ahead
                pos = cnt if cnt < k else k - 1
                while pos > 0 and tv[pos - 1] < s:
                    tv[pos] = tv[pos - 1]
                    o[r, pos] = o[r, pos - 1]
                    pos -= 1
                tv[pos] = s
                o[r, pos] = j
                if cnt < k:
                    cnt += 1
            cn[r] = cnt
    return out, counts


def scatter_add_rows(out, idx, vals):
    """``out[idx[b]] += vals[b]`` sequentially in ``b`` order (matches ``np.add.at``)."""
    cdef f64[:, ::1] O = out
    cdef const i64[::1] ix = np.ascontiguousarray(idx, dtype=np.int64)
    cdef const f64[:, ::1] V = np.ascontiguousarray(vals, dtype=np.float64)
    cdef Py_ssize_t B = ix.shape[0], F = V.shape[1], b, f
    cdef i64 r
    if O.shape[1] != F:
        raise ValueError("row width mismatch")
    for b in range(B):
        if ix[b] < 0 or ix[b] >= O.shape[0]:
            raise IndexError("scatter index out of range")
    with nogil:
        for b in range(B):
            r = ix[b]
            for f in range(F):
                O[r, f] += V[b, f]


def csr_matmul(indptr, indices, data, X):
    """Sparse CSR ``(N, M)`` times dense row-major ``(M, F)``."""
    cdef const i64[::1] ptr = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const i64[::1] ind = np.ascontiguousarray(indices, dtype=np.int64)
    cdef const f64[::1] val = np.ascontiguousarray(data, dtype=np.float64)
    cdef const f64[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t N = ptr.shape[0] - 1, F = x.shape[1], r, jj, f
    cdef i64 c
    cdef f64 a
    out = np.zeros((N, F), dtype=np.float64)
    cdef f64[:, ::1] o = out
    with nogil:
        for r in range(N):
            for jj in range(ptr[r], ptr[r + 1]):
                c = ind[jj]
                a = val[jj]
                for f in range(F):
                    o[r, f] += a * x[c, f]
    return out
