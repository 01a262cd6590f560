"""Label estimators for single vertices and small vertex sets.

Log-likelihood vectors are plain length-r float arrays; entries may be
``-inf`` (hard evidence). Two vectors are equivalent if they differ by a
constant; the canonical representative has maximum entry 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .generator import PAGraph
from .kernels.joint import assignments, joint_scores
from .model import RateTable
from .processes import ZPath


class InferenceError(ValueError):
    pass


# --- log-likelihood vectors -------------------------------------------------


def canonicalize(llv) -> np.ndarray:
    """Shift so the maximum entry is 0 (works row-wise on 2-d input)."""
    llv = np.asarray(llv, dtype=float)
    top = llv.max(axis=-1, keepdims=True)
    if np.any(np.isneginf(top)):
        raise InferenceError("log-likelihood vector has no finite entry")
    return llv - top


def is_null(llv, atol: float = 1e-12) -> bool:
    llv = np.asarray(llv, dtype=float)
    return bool(np.all(np.isfinite(llv)) and np.ptp(llv, axis=-1).max() <= atol)


def equivalent(a, b, atol: float = 1e-12) -> bool:
    ca, cb = canonicalize(a), canonicalize(b)
    same_inf = np.array_equal(np.isneginf(ca), np.isneginf(cb))
    fin = np.isfinite(ca)
    return bool(same_inf and np.allclose(ca[fin], cb[fin], rtol=0, atol=atol))


def map_label(rho, llv) -> int | np.ndarray:
    """``argmax(ln rho + llv)``; ties go to the smallest label."""
    llv = np.asarray(llv, dtype=float)
    with np.errstate(divide="ignore"):
        post = np.log(np.asarray(rho, dtype=float)) + llv
    if np.any(np.isneginf(post.max(axis=-1))):
        raise InferenceError("posterior has no finite entry")
    out = np.argmax(post, axis=-1)
    return int(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LabelEstimate:
    vertex: int
    label: int
    llv: np.ndarray = field(repr=False)
    algorithm: str = ""


# --- single-vertex likelihoods -----------------------------------------------


def _start_times(graph: PAGraph) -> np.ndarray:
    return np.maximum(np.arange(1, graph.T + 1), graph.t_o)


def lambda_DT_all(graph: PAGraph, rates: RateTable) -> np.ndarray:
    """Degree-threshold log-likelihoods for every vertex, shape (T, r)."""
    th = rates.theta_v[None, :]
    s0 = _start_times(graph)[:, None].astype(float)
    k = graph.n_children[:, None].astype(float)
    frac = s0 / graph.T
    with np.errstate(divide="ignore", invalid="ignore"):
        jump = np.where(k == 0, 0.0, k * np.log(-np.expm1(th * np.log(frac))))
    return -graph.d0[:, None] * th * np.log(graph.T / s0) + jump


def lambda_DT(graph: PAGraph, tau: int, rates: RateTable) -> np.ndarray:
    graph._check_vertex(tau)
    return lambda_DT_all(graph, rates)[tau - 1]


def lambda_C_all(graph: PAGraph, rates: RateTable, mode: str = "approx") -> np.ndarray:
    """Children-based log-likelihoods for every vertex, shape (T, r)."""
    if mode == "approx":
        return _lambda_C_approx(graph, rates)
    if mode == "exact":
        return _lambda_C_exact(graph, rates)
    raise ValueError(f"mode must be 'approx' or 'exact', got {mode!r}")


def lambda_C(graph: PAGraph, tau: int, rates: RateTable, mode: str = "approx") -> np.ndarray:
    graph._check_vertex(tau)
    return lambda_C_all(graph, rates, mode)[tau - 1]


def _lambda_C_approx(graph: PAGraph, rates: RateTable) -> np.ndarray:
    T = graph.T
    n0 = graph.n_initial_edges
    log_child = np.bincount(
        graph.heads[n0:] - 1, weights=np.log(graph.tails[n0:] / T), minlength=T
    )
    s0 = _start_times(graph)
    integral = graph.d0 * np.log(s0 / T) + log_child
    th = rates.theta_v
    return graph.n_children[:, None] * np.log(th)[None, :] + integral[:, None] * th[None, :]


def _child_segments(graph: PAGraph):
    """Constant-degree runs of each vertex's degree path.

    Returns ``(vertex_index, a, b, y)``: for arrival times ``t`` in
    ``[a, b]`` no child arrives and the degree before ``t`` is ``y``.
    """
    T = graph.T
    n0 = graph.n_initial_edges
    heads = graph.heads[n0:].astype(np.int64)
    tails = graph.tails[n0:].astype(np.int64)
    key = (heads - 1) * (T + 1) + tails
    uniq, mult = np.unique(key, return_counts=True)
    ev_v = uniq // (T + 1)
    ev_t = uniq % (T + 1)
    d0 = graph.d0
    # degree right after each child event
    csum = np.cumsum(mult)
    first = np.r_[True, ev_v[1:] != ev_v[:-1]]
    group_start = np.maximum.accumulate(np.where(first, np.arange(ev_v.size), 0))
    before = np.r_[0, csum][group_start]
    y_after = d0[ev_v] + csum - before
    last = np.r_[ev_v[1:] != ev_v[:-1], True]
    next_t = np.where(last, T + 1, np.r_[ev_t[1:], 0])

    verts = np.arange(T)
    s0 = _start_times(graph)
    n_ev = np.bincount(ev_v, minlength=T)
    ptr = np.r_[0, np.cumsum(n_ev)]
    first_child = np.full(T, T + 1, dtype=np.int64)
    has = n_ev > 0
    first_child[has] = ev_t[ptr[:-1][has]]
    lead_a = s0 + 1
    lead_b = first_child - 1
    seg_v = np.r_[verts, ev_v]
    seg_a = np.r_[lead_a, ev_t + 1]
    seg_b = np.r_[lead_b, next_t - 1]
    seg_y = np.r_[d0, y_after].astype(float)
    return seg_v, seg_a, seg_b, seg_y


def _lambda_C_exact(graph: PAGraph, rates: RateTable, clip_rows=None) -> np.ndarray:
    """Exact children log-likelihood.

    For vertices flagged in ``clip_rows`` the no-child factors are summed only
    over steps where ``1 - y theta/(t-1) > 0`` holds for every label.
    """
    T = graph.T
    th = rates.theta_v
    seg_v, a, b, y = _child_segments(graph)
    if clip_rows is not None:
        first_ok = np.floor(y * th.max()).astype(np.int64) + 2
        a = np.where(clip_rows[seg_v], np.maximum(a, first_ok), a)
    nonempty = a <= b
    seg_v, a, b, y = seg_v[nonempty], a[nonempty], b[nonempty], y[nonempty]
    out = graph.n_children[:, None] * np.log(th)[None, :]
    for j, theta in enumerate(th):
        c = y * theta
        ok = (a - 1) > c
        contrib = np.full(a.shape, -np.inf)
        aa, bb, cc = a[ok], b[ok], c[ok]
        # sum_{t=a}^{b} ln(1 - c/(t-1)) as a ratio of Gamma functions
        contrib[ok] = gammaln(bb - cc) - gammaln(aa - 1 - cc) - gammaln(bb) + gammaln(aa - 1.0)
        bad = np.zeros(T, dtype=bool)
        bad[seg_v[~ok]] = True
        out[:, j] += np.bincount(seg_v[ok], weights=contrib[ok], minlength=T)
        out[bad, j] = -np.inf
    return out


def lambda_C_trimmed(graph: PAGraph, rates: RateTable) -> np.ndarray:
    """Exact children log-likelihood with no hard exclusions.

    Rows that the exact form would set to ``-inf`` in some coordinate are
    recomputed without the steps where any label's no-child factor is
    non-positive, so every row is finite.
    """
    ll = _lambda_C_exact(graph, rates)
    hit = np.any(np.isneginf(ll), axis=1)
    if hit.any():
        ll[hit] = _lambda_C_exact(graph, rates, clip_rows=hit)[hit]
    return ll


def lambda_C_exact_bruteforce(graph: PAGraph, tau: int, rates: RateTable) -> np.ndarray:
    """Direct term-by-term evaluation of the exact children likelihood (slow)."""
    s0 = max(tau, graph.t_o)
    ch = graph.children(tau)
    child_set = set(ch.tolist())
    out = np.zeros(graph.r)
    for j, theta in enumerate(rates.theta_v):
        total = len(ch) * np.log(theta)
        y = graph.d0[tau - 1]
        for t in range(s0 + 1, graph.T + 1):
            if t in child_set:
                y += int(np.sum(ch == t))
                continue
            f = 1.0 - y * theta / (t - 1)
            if f <= 0:
                total = -np.inf
                break
            total += np.log(f)
        out[j] = total
    return out


def lambda_Z(path: ZPath, theta_star) -> np.ndarray:
    th = np.asarray(theta_star, dtype=float)
    return path.n_jumps * np.log(th) - path.area * th


def estimate_all(graph: PAGraph, rates: RateTable, rho, algorithm: str) -> np.ndarray:
    """Per-vertex MAP labels for ``DT``, ``C`` (exact) or ``C-approx``.

    Under ``C``, a vertex whose exact likelihood excludes some label (an early
    vertex whose degree outruns ``t``) is scored without the steps at which any
    label's no-child factor is non-positive.
    """
    algorithm = algorithm.upper()
    if algorithm == "DT":
        ll = lambda_DT_all(graph, rates)
    elif algorithm == "C":
        ll = lambda_C_trimmed(graph, rates)
    elif algorithm == "C-APPROX":
        ll = lambda_C_all(graph, rates, "approx")
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    return map_label(rho, ll)


# --- joint estimation ----------------------------------------------------------


@dataclass(frozen=True)
class JointEstimate:
    vertices: tuple[int, ...]
    labels: np.ndarray
    score: float
    dropped_times: np.ndarray = field(repr=False)


def joint_observations(graph: PAGraph, V, t_bar: int):
    """Degrees ``Y_t`` and attachment counts ``A_{t+1}`` for t in [t_bar, T-1]."""
    V = np.asarray(sorted(V), dtype=np.int64)
    T, m = graph.T, graph.m
    times = np.arange(t_bar, T)
    L = times.size
    K = V.size
    A = np.zeros((K, L), dtype=np.int64)
    Y = np.zeros((K, L))
    for k, tau in enumerate(V):
        ch = graph.children(int(tau)).astype(np.int64)
        jumps = np.bincount(ch, minlength=T + 1)
        # degree at time t, for t >= start
        Y[k] = graph.d0[tau - 1] + np.cumsum(jumps)[times]
        A[k] = jumps[times + 1]
    Ac = m - A.sum(axis=0)
    return V, times, Y, A, Ac


def _joint_keep(Y, times, theta_uv, m) -> np.ndarray:
    # max over assignments of sum_k Y_k theta[u, b_k] separates over k
    worst = Y.sum(axis=0)[:, None] * theta_uv.max(axis=1)[None, :]
    return np.all(1.0 - worst / (m * times[:, None]) > 0, axis=1)


def joint_dropped_times(graph: PAGraph, V, rates: RateTable, t_bar: int) -> np.ndarray:
    """Times ``t >= t_bar`` whose term the joint likelihood drops for ``V``."""
    _, times, Y, _, _ = joint_observations(graph, V, t_bar)
    return times[~_joint_keep(Y, times, rates.theta_uv, graph.m)]


def joint_estimate(
    graph: PAGraph,
    V,
    rates: RateTable,
    rho,
    t_bar: int | None = None,
    use_prior: bool = False,
) -> JointEstimate:
    """Approximate ML (or MAP) labels of the vertex set ``V`` from their children.

    Time steps where the no-attachment factor would be non-positive for some
    label assignment are dropped for all assignments.
    """
    V = sorted(int(v) for v in V)
    if not V:
        raise InferenceError("vertex set is empty")
    if t_bar is None:
        t_bar = max(max(V), graph.t_o)
    if not (max(V) <= t_bar < graph.T):
        raise InferenceError(f"need max(V) <= t_bar < T, got t_bar={t_bar}")
    rho = np.asarray(rho, dtype=float)
    Vs, times, Y, A, Ac = joint_observations(graph, V, t_bar)
    theta = np.ascontiguousarray(rates.theta_uv, dtype=np.float64)
    keep = _joint_keep(Y, times, theta, graph.m)
    if not keep.any():
        raise InferenceError("every time step was dropped")
    B = assignments(graph.r, len(V))
    with np.errstate(divide="ignore"):
        log_rho = np.log(rho)
    scores = joint_scores(
        np.ascontiguousarray(Y),
        np.ascontiguousarray(A),
        np.ascontiguousarray(Ac.astype(np.float64)),
        times.astype(np.float64),
        keep,
        theta,
        log_rho,
        float(graph.m),
    )
    if use_prior:
        scores = scores + log_rho[B].sum(axis=1)
    best = int(np.argmax(scores))
    return JointEstimate(
        vertices=tuple(V),
        labels=B[best].copy(),
        score=float(scores[best]),
        dropped_times=times[~keep],
    )


def joint_score_bruteforce(graph: PAGraph, V, b, rates: RateTable, rho, t_bar: int) -> float:
    """Direct evaluation of the joint log-likelihood for one assignment ``b``."""
    V = sorted(int(v) for v in V)
    m, r = graph.m, graph.r
    total = 0.0
    for t in range(t_bar, graph.T):
        deg = {tau: graph.d0[tau - 1] + int(np.sum(graph.children(tau) <= t)) for tau in V}
        att = {tau: int(np.sum(graph.children(tau) == t + 1)) for tau in V}
        rest = m - sum(att.values())
        skip = False
        acc = 0.0
        for u in range(r):
            s = sum(deg[tau] * rates.theta_uv[u, bk] / (m * t) for tau, bk in zip(V, b))
            worst = sum(deg[tau] * rates.theta_uv[u].max() / (m * t) for tau in V)
            if 1 - worst <= 0:
                skip = True
                break
            prod = rho[u] * (1 - s) ** rest
            for tau, bk in zip(V, b):
                prod *= (deg[tau] * rates.theta_uv[u, bk] / (m * t)) ** att[tau]
            acc += prod
        if not skip:
            total += np.log(acc)
    return total


# --- rate estimation -------------------------------------------------------------


def rate_estimate(path, tau: int) -> float:
    """Growth-rate estimate ``(Y_T - Y_tau) / sum_{t=tau}^{T-1} Y_t / t``.

    ``path`` holds ``Y_t`` for ``t = tau .. T``.
    """
    y = np.asarray(path, dtype=float)
    if y.size < 2:
        return 0.0
    if y[0] < 1:
        raise InferenceError("rate estimate needs Y_tau >= 1")
    t = np.arange(tau, tau + y.size - 1, dtype=float)
    return float((y[-1] - y[0]) / np.sum(y[:-1] / t))
