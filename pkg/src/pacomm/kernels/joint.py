"""Scoring kernel for joint label estimation over a small vertex set.

Scores cover all ``r**K`` assignments ``b`` in lexicographic order (the first
vertex is the most significant base-``r`` digit), matching
``itertools.product(range(r), repeat=K)``.
"""

import itertools

import numpy as np

from .._backend import njit, select


def _joint_scores_loop(Y, A, Ac, tvals, keep, theta_uv, log_rho, m):
    K, L = Y.shape
    r = theta_uv.shape[0]
    # split the K digits into a high and a low half; s(b) = s_hi + s_lo
    K_lo = K // 2
    K_hi = K - K_lo
    n_lo = r**K_lo
    n_hi = r**K_hi
    nb = n_hi * n_lo
    log_theta = np.log(theta_uv)
    digits_hi = np.empty((n_hi, K_hi), dtype=np.int64)
    for i in range(n_hi):
        x = i
        for k in range(K_hi - 1, -1, -1):
            digits_hi[i, k] = x % r
            x //= r
    digits_lo = np.empty((n_lo, max(K_lo, 1)), dtype=np.int64)
    for i in range(n_lo):
        x = i
        for k in range(K_lo - 1, -1, -1):
            digits_lo[i, k] = x % r
            x //= r
    s_hi = np.empty((r, n_hi))
    s_lo = np.empty((r, n_lo))
    a_hi = np.empty((r, n_hi))
    a_lo = np.empty((r, n_lo))
    scores = np.zeros(nb)
    terms = np.empty(r)
    for l in range(L):
        if not keep[l]:
            continue
        mt = m * tvals[l]
        active = False
        fixed = 0.0
        for k in range(K):
            if A[k, l] > 0:
                active = True
                fixed += A[k, l] * np.log(Y[k, l] / mt)
        for u in range(r):
            for i in range(n_hi):
                s = 0.0
                a = 0.0
                for k in range(K_hi):
                    v = digits_hi[i, k]
                    s += Y[k, l] * theta_uv[u, v]
                    if active and A[k, l] > 0:
                        a += A[k, l] * log_theta[u, v]
                s_hi[u, i] = s
                a_hi[u, i] = a
            for i in range(n_lo):
                s = 0.0
                a = 0.0
                for k in range(K_lo):
                    v = digits_lo[i, k]
                    s += Y[K_hi + k, l] * theta_uv[u, v]
                    if active and A[K_hi + k, l] > 0:
                        a += A[K_hi + k, l] * log_theta[u, v]
                s_lo[u, i] = s
                a_lo[u, i] = a
        for ih in range(n_hi):
            for il in range(n_lo):
                best = -np.inf
                for u in range(r):
                    lt = log_rho[u] + Ac[l] * np.log1p(-(s_hi[u, ih] + s_lo[u, il]) / mt)
                    if active:
                        lt += fixed + a_hi[u, ih] + a_lo[u, il]
                    terms[u] = lt
                    if lt > best:
                        best = lt
                acc = 0.0
                for u in range(r):
                    acc += np.exp(terms[u] - best)
                scores[ih * n_lo + il] += best + np.log(acc)
    return scores


def assignments(r, K):
    """All label vectors in the order used by the scoring kernels."""
    return np.array(list(itertools.product(range(r), repeat=K)), dtype=np.int64).reshape(-1, K)


def _joint_scores_numpy(Y, A, Ac, tvals, keep, theta_uv, log_rho, m, chunk=4096):
    K = Y.shape[0]
    r = theta_uv.shape[0]
    B = assignments(r, K)
    nb = B.shape[0]
    idx = np.flatnonzero(keep)
    scores = np.zeros(nb)
    theta_b = theta_uv[:, B]  # (r, nb, K)
    log_theta_b = np.log(theta_b)
    for lo in range(0, idx.size, chunk):
        sel = idx[lo : lo + chunk]
        Ys, As = Y[:, sel], A[:, sel].astype(float)
        mt = m * tvals[sel]
        with np.errstate(divide="ignore", invalid="ignore"):
            logY = np.where(As > 0, np.log(Ys / mt), 0.0)
        fixed = (As * logY).sum(axis=0)
        per_u = np.empty((r, nb, sel.size))
        for u in range(r):
            s = theta_b[u] @ Ys
            per_u[u] = log_rho[u] + Ac[sel] * np.log1p(-s / mt) + fixed + log_theta_b[u] @ As
        best = per_u.max(axis=0)
        scores += (best + np.log(np.exp(per_u - best).sum(axis=0))).sum(axis=1)
    return scores


joint_scores_numba = njit(_joint_scores_loop)
joint_scores_numpy = _joint_scores_numpy
joint_scores = select(joint_scores_numba, joint_scores_numpy)
