"""Sequential growth kernel for the labeled preferential attachment graph."""

import numpy as np

from .._backend import njit, select


def _grow(labels, beta, m, t_o, init_tails, init_heads, u_class, u_pick):
    """Grow the graph from G_{t_o} to G_T.

    ``labels`` is 0-indexed per vertex (vertex t at position t-1).
    ``u_class`` / ``u_pick`` hold two uniforms per new edge: the first picks
    the label class of the target half edge, the second a half edge within
    that class. Returns ``(tails, heads)`` of all m*T edges, 1-indexed.
    """
    T = labels.shape[0]
    r = beta.shape[0]
    n_edges = m * T
    cap = 2 * n_edges
    reg = np.empty((r, cap), dtype=np.int32)
    count = np.zeros(r, dtype=np.int64)
    tails = np.empty(n_edges, dtype=np.int32)
    heads = np.empty(n_edges, dtype=np.int32)
    n0 = init_tails.shape[0]
    for e in range(n0):
        a = init_tails[e]
        b = init_heads[e]
        tails[e] = a
        heads[e] = b
        la = labels[a - 1]
        reg[la, count[la]] = a
        count[la] += 1
        lb = labels[b - 1]
        reg[lb, count[lb]] = b
        count[lb] += 1
    weights = np.empty(r, dtype=np.float64)
    e = n0
    k = 0
    for t in range(t_o + 1, T + 1):
        u = labels[t - 1]
        total = 0.0
        for v in range(r):
            weights[v] = beta[u, v] * count[v]
            total += weights[v]
        start = e
        for j in range(m):
            x = u_class[k] * total
            v = 0
            acc = weights[0]
            while acc <= x and v < r - 1:
                v += 1
                acc += weights[v]
            while count[v] == 0:
                v -= 1
            idx = np.int64(u_pick[k] * count[v])
            if idx >= count[v]:
                idx = count[v] - 1
            heads[e] = reg[v, idx]
            tails[e] = t
            e += 1
            k += 1
        # register after all m draws: targets are sampled from G_{t-1}
        for f in range(start, e):
            h = heads[f]
            lh = labels[h - 1]
            reg[lh, count[lh]] = h
            count[lh] += 1
            reg[u, count[u]] = t
            count[u] += 1
    return tails, heads


grow_numba = njit(_grow)
grow_python = _grow
grow = select(grow_numba, grow_python)
