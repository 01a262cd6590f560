"""Per-edge message transforms for loopy belief propagation.

Each edge slot ``e`` joins ``child[e]`` to ``parent[e]`` (0-indexed vertices).
Given the current vertex totals ``Lam`` and the tilde messages, the kernel
forms the outgoing message of each slot (total minus the slot's own incoming
tilde), canonicalizes it and pushes it through ``out(v) = lse_w x(w) + M[w, v]``.
"""

import numpy as np
from scipy.special import logsumexp

from .._backend import njit, select


def _transform_loop(child, parent, Lam, nu_t, mu_t, seed, M_cp, M_pc, do_nu, do_mu):
    E = child.shape[0]
    r = Lam.shape[1]
    new_nu = nu_t.copy()
    new_mu = mu_t.copy()
    x = np.empty(r)
    y = np.empty(r)
    for e in range(E):
        for side in range(2):
            if side == 0:
                if not do_nu:
                    continue
                src = child[e]
                M = M_cp
            else:
                if not do_mu:
                    continue
                src = parent[e]
                M = M_pc
            s = seed[src]
            if s >= 0:
                for w in range(r):
                    x[w] = -np.inf
                x[s] = 0.0
            else:
                top = -np.inf
                for w in range(r):
                    if side == 0:
                        x[w] = Lam[src, w] - mu_t[e, w]
                    else:
                        x[w] = Lam[src, w] - nu_t[e, w]
                    if x[w] > top:
                        top = x[w]
                for w in range(r):
                    x[w] -= top
            ytop = -np.inf
            for v in range(r):
                best = -np.inf
                for w in range(r):
                    z = x[w] + M[w, v]
                    if z > best:
                        best = z
                acc = 0.0
                if best > -np.inf:
                    for w in range(r):
                        acc += np.exp(x[w] + M[w, v] - best)
                    y[v] = best + np.log(acc)
                else:
                    y[v] = -np.inf
                if y[v] > ytop:
                    ytop = y[v]
            for v in range(r):
                if side == 0:
                    new_nu[e, v] = y[v] - ytop
                else:
                    new_mu[e, v] = y[v] - ytop
    return new_nu, new_mu


def _push(x, M):
    y = logsumexp(x[:, :, None] + M[None, :, :], axis=1)
    return y - y.max(axis=1, keepdims=True)


def _outgoing(src, Lam, own, seed):
    x = Lam[src] - own
    x -= x.max(axis=1, keepdims=True)
    s = seed[src]
    hard = s >= 0
    if hard.any():
        x[hard] = -np.inf
        x[np.flatnonzero(hard), s[hard]] = 0.0
    return x


def _transform_numpy(child, parent, Lam, nu_t, mu_t, seed, M_cp, M_pc, do_nu, do_mu):
    new_nu = _push(_outgoing(child, Lam, mu_t, seed), M_cp) if do_nu else nu_t.copy()
    new_mu = _push(_outgoing(parent, Lam, nu_t, seed), M_pc) if do_mu else mu_t.copy()
    return new_nu, new_mu


transform_numba = njit(_transform_loop)
transform_numpy = _transform_numpy
transform = select(transform_numba, transform_numpy)
