import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pacomm.generator import generate
from pacomm.inference import (
    InferenceError,
    canonicalize,
    equivalent,
    estimate_all,
    is_null,
    joint_estimate,
    joint_observations,
    joint_score_bruteforce,
    lambda_C,
    lambda_C_all,
    lambda_C_exact_bruteforce,
    lambda_C_trimmed,
    lambda_DT,
    lambda_DT_all,
    lambda_Z,
    map_label,
    rate_estimate,
)
from pacomm.model import RateTable
from pacomm.processes import ZPath, check_Y_from_Z, simulate_Z

finite_vec = st.lists(st.floats(-50, 50), min_size=2, max_size=5)


# --- vectors and MAP --------------------------------------------------------


def test_canonicalize_examples():
    assert np.array_equal(canonicalize([0.0, 0.0]), [0.0, 0.0])
    assert np.allclose(canonicalize([3.0, 1.0]), [0.0, -2.0])
    c = canonicalize([-np.inf, 5.0])
    assert np.isneginf(c[0]) and c[1] == 0.0
    with pytest.raises(InferenceError):
        canonicalize([-np.inf, -np.inf])


def test_canonicalize_rows():
    c = canonicalize(np.array([[1.0, 2.0], [-3.0, -7.0]]))
    assert np.allclose(c, [[-1.0, 0.0], [0.0, -4.0]])


def test_null_and_equivalence():
    assert is_null([2.5, 2.5, 2.5])
    assert not is_null([0.0, -np.inf])
    assert equivalent([1.0, -np.inf, 3.0], [0.0, -np.inf, 2.0])
    assert not equivalent([1.0, -np.inf], [1.0, 0.0])


def test_map_label_examples():
    assert map_label([0.7, 0.3], [0.0, 0.0]) == 0
    assert map_label([0.5, 0.5], [0.0, -1.0]) == 0
    # ln .9 - 1 = -1.105 > ln .1 = -2.303
    assert map_label([0.9, 0.1], [-1.0, 0.0]) == 0
    assert map_label([0.5, 0.5], [-np.inf, -10.0]) == 1
    assert map_label([0.25] * 4, [1.0, 3.0, 3.0, 2.0]) == 1
    with pytest.raises(InferenceError):
        map_label([0.5, 0.5], [-np.inf, -np.inf])


@given(finite_vec, st.floats(-1e3, 1e3))
def test_map_invariant_under_shift(v, c):
    v = np.asarray(v)
    rho = np.full(v.size, 1.0 / v.size)
    assert map_label(rho, v) == map_label(rho, v + c) == map_label(rho, canonicalize(v))


@given(finite_vec)
def test_canonical_is_idempotent(v):
    c = canonicalize(v)
    assert c.max() == 0.0
    assert np.array_equal(canonicalize(c), c)
    assert equivalent(c, v, atol=1e-9)


# --- single-vertex likelihoods ------------------------------------------------


def _dt_oracle(graph, tau, theta):
    s0 = max(tau, graph.t_o)
    d0 = graph.d0[tau - 1]
    k = len(graph.children(tau))
    q = (s0 / graph.T) ** theta
    out = -d0 * theta * np.log(graph.T / s0)
    if k:
        out = out + k * np.log(1.0 - q)
    return out


def test_lambda_DT_matches_direct_formula(small_graph, example1):
    _, rates = example1
    th = rates.theta_v
    for tau in range(1, small_graph.T):
        assert np.allclose(lambda_DT(small_graph, tau, rates), _dt_oracle(small_graph, tau, th), rtol=1e-12)


def test_lambda_DT_no_children_and_equal_rates(small_graph, example1):
    _, rates = example1
    ll = lambda_DT_all(small_graph, rates)
    last = small_graph.T
    assert len(small_graph.children(last)) == 0
    # tau = T has no children and zero exponent
    assert np.allclose(ll[last - 1], 0.0)
    eq = RateTable(theta_uv=np.full((2, 2), 0.4), theta_v=np.array([0.4, 0.4]), eta_star=np.array([0.5, 0.5]))
    assert is_null(lambda_DT_all(small_graph, eq)[:-1])


def test_lambda_C_approx_formula(small_graph, example1):
    _, rates = example1
    g, T = small_graph, small_graph.T
    for tau in (1, 2, 3, 17, 150, 299):
        ch = g.children(tau)
        s0 = max(tau, g.t_o)
        integral = g.d0[tau - 1] * np.log(s0 / T) + np.sum(np.log(ch / T))
        want = len(ch) * np.log(rates.theta_v) + rates.theta_v * integral
        assert np.allclose(lambda_C(g, tau, rates, "approx"), want, rtol=1e-12)


def test_lambda_C_approx_empty_children(small_graph, example1):
    _, rates = example1
    g = small_graph
    tau = next(t for t in range(3, g.T) if len(g.children(t)) == 0)
    assert np.allclose(lambda_C(g, tau, rates), g.m * rates.theta_v * np.log(tau / g.T))


def test_lambda_C_exact_matches_bruteforce(small_graph, example1):
    _, rates = example1
    ll = lambda_C_all(small_graph, rates, "exact")
    for tau in range(1, small_graph.T + 1):
        want = lambda_C_exact_bruteforce(small_graph, tau, rates)
        got = ll[tau - 1]
        assert np.array_equal(np.isneginf(got), np.isneginf(want)), tau
        fin = np.isfinite(want)
        assert np.allclose(got[fin], want[fin], rtol=1e-9, atol=1e-9), tau


def test_lambda_C_symmetric_null(sym2):
    p, rates = sym2
    g = generate(p, 500, 4)
    for mode in ("approx", "exact"):
        ll = lambda_C_all(g, rates, mode)
        fin = np.all(np.isfinite(ll), axis=1)
        assert is_null(ll[fin])


def test_lambda_C_bad_mode(small_graph, example1):
    with pytest.raises(ValueError):
        lambda_C_all(small_graph, example1[1], "fast")


def test_lambda_Z_matches_approx_C(small_graph, example1):
    _, rates = example1
    g = small_graph
    for tau in (5, 40, 120):
        ch = g.children(tau).astype(float)
        d0 = int(g.d0[tau - 1])
        path = ZPath(m=d0, theta=1.0, s_bar=np.log(g.T / tau), jump_times=np.log(ch / tau))
        assert np.allclose(lambda_Z(path, rates.theta_v), lambda_C(g, tau, rates), rtol=1e-10)


def test_lambda_Z_no_jumps():
    path = ZPath(m=5, theta=0.5, s_bar=2.0, jump_times=np.array([]))
    assert np.allclose(lambda_Z(path, [0.3, 0.6]), [-5 * 2.0 * 0.3, -5 * 2.0 * 0.6])


def test_trimmed_rows(small_graph, example1):
    p, rates = example1
    g = small_graph
    exact = lambda_C_all(g, rates, "exact")
    hit = np.any(np.isneginf(exact), axis=1)
    assert hit[: g.t_o].all()
    trimmed = lambda_C_trimmed(g, rates)
    assert np.all(np.isfinite(trimmed))
    assert np.array_equal(trimmed[~hit], exact[~hit])
    th = rates.theta_v
    for tau in np.flatnonzero(hit)[:5] + 1:
        # sum only over steps admissible for every label
        ch = g.children(tau)
        y = g.d0[tau - 1]
        want = len(ch) * np.log(th)
        for t in range(max(tau, g.t_o) + 1, g.T + 1):
            if t in ch:
                y += int(np.sum(ch == t))
                continue
            if 1 - y * th.max() / (t - 1) > 0:
                want = want + np.log(1 - y * th / (t - 1))
        assert np.allclose(trimmed[tau - 1], want, rtol=1e-9)
    labels = estimate_all(g, rates, p.rho, "C")
    assert np.array_equal(labels, map_label(p.rho, trimmed))
    with pytest.raises(ValueError):
        estimate_all(g, rates, p.rho, "XYZ")


def test_trimming_fixes_early_vertices(example1):
    # hard exclusion misfires on the initial vertices; trimming does not
    p, rates = example1
    hard = trim = 0
    for seed in range(40):
        g = generate(p, 5000, 40 + seed)
        ll = lambda_C_all(g, rates, "exact")[:3]
        fin = np.isfinite(ll).any(axis=1)
        hard += int(np.sum(map_label(p.rho, ll[fin]) != g.labels[:3][fin]))
        trim += int(np.sum(estimate_all(g, rates, p.rho, "C")[:3] != g.labels[:3]))
    assert trim < hard
    assert trim <= 2


def test_exact_and_approx_agree_late_vertices(example1):
    p, rates = example1
    agree = total = 0
    for seed in range(5):
        g = generate(p, 10_000, 100 + seed)
        late = slice(999, None)
        a = estimate_all(g, rates, p.rho, "C")[late]
        b = estimate_all(g, rates, p.rho, "C-approx")[late]
        agree += int(np.sum(a == b))
        total += a.size
    assert agree / total >= 0.99


def test_c_beats_dt_on_early_vertices(example1):
    # vertices with tau/T <= 0.01 over many graphs
    p, rates = example1
    err_c = err_dt = n = 0
    for seed in range(100):
        g = generate(p, 10_000, 500 + seed)
        early = slice(2, 100)
        truth = g.labels[early]
        err_c += int(np.sum(estimate_all(g, rates, p.rho, "C")[early] != truth))
        err_dt += int(np.sum(estimate_all(g, rates, p.rho, "DT")[early] != truth))
        n += truth.size
    fc, fdt = err_c / n, err_dt / n
    se = np.sqrt(fc * (1 - fc) / n + fdt * (1 - fdt) / n)
    assert fdt - fc > 3 * se


def test_error_fraction_concentrates(example1):
    p, rates = example1
    fr = []
    for seed in range(20):
        g = generate(p, 10_000, 900 + seed)
        fr.append(np.mean(estimate_all(g, rates, p.rho, "C") != g.labels))
    fr = np.asarray(fr)
    assert fr.std(ddof=1) <= 0.1 * fr.mean()


@pytest.mark.slow
def test_early_vertex_error_shrinks_with_T(example1):
    p, rates = example1
    rates_by_T = {}
    for T, n in ((1_000, 300), (10_000, 150), (100_000, 40)):
        err = 0
        for seed in range(n):
            g = generate(p, T, 2000 + seed)
            ll = lambda_C_all(g, rates, "exact")[4]
            err += map_label(p.rho, ll) != g.labels[4]
        rates_by_T[T] = err / n
    vals = [rates_by_T[T] for T in sorted(rates_by_T)]
    assert vals[0] >= vals[1] >= vals[2]
    assert vals[0] > vals[2]


# --- joint estimation ----------------------------------------------------------


@pytest.fixture(scope="module")
def joint_graph(example1):
    p, _ = example1
    return generate(p, 400, 11)


@pytest.mark.parametrize("V", [(3,), (3, 5), (2, 4, 7)])
def test_joint_scores_match_bruteforce(joint_graph, example1, V):
    p, rates = example1
    from pacomm.kernels.joint import joint_scores_numba, joint_scores_numpy

    t_bar = 10
    Vs, times, Y, A, Ac = joint_observations(joint_graph, V, t_bar)
    theta = rates.theta_uv
    worst = Y.sum(axis=0)[:, None] * theta.max(axis=1)[None, :]
    keep = np.all(1.0 - worst / (p.m * times[:, None]) > 0, axis=1)
    args = (Y, A, Ac.astype(float), times.astype(float), keep, theta, np.log(p.rho), float(p.m))
    fast, slow = joint_scores_numba(*args), joint_scores_numpy(*args)
    for i, b in enumerate(itertools.product(range(p.r), repeat=len(V))):
        want = joint_score_bruteforce(joint_graph, V, b, rates, p.rho, t_bar)
        assert np.isclose(fast[i], want, rtol=1e-10, atol=1e-8)
        assert np.isclose(slow[i], want, rtol=1e-10, atol=1e-8)


def test_joint_estimate_picks_best(joint_graph, example1):
    p, rates = example1
    V = (3, 5, 8)
    est = joint_estimate(joint_graph, V, rates, p.rho, t_bar=10)
    scores = {
        b: joint_score_bruteforce(joint_graph, V, b, rates, p.rho, 10)
        for b in itertools.product(range(p.r), repeat=3)
    }
    best = max(scores, key=scores.get)
    assert tuple(est.labels) == best
    assert np.isclose(est.score, scores[best], rtol=1e-10)


def test_joint_drop_rule(example1):
    p, rates = example1
    g = generate(p, 300, 2)
    est = joint_estimate(g, (1, 2), rates, p.rho, t_bar=2)
    # the two initial vertices hold all the degree early on
    assert est.dropped_times.size > 0
    assert est.dropped_times.max() <= 30
    for t in est.dropped_times:
        y = g.d0[0] + np.sum(g.children(1) <= t) + g.d0[1] + np.sum(g.children(2) <= t)
        assert np.any(1 - y * rates.theta_uv.max(axis=1) / (g.m * t) <= 0)


def test_joint_errors(joint_graph, example1):
    p, rates = example1
    with pytest.raises(InferenceError):
        joint_estimate(joint_graph, (), rates, p.rho)
    with pytest.raises(InferenceError):
        joint_estimate(joint_graph, (5, 9), rates, p.rho, t_bar=8)


def test_joint_rank_one_ties(example1):
    p, rates = example1
    g = generate(p, 300, 5)
    flat = RateTable(
        theta_uv=np.tile(rates.theta_v, (2, 1)), theta_v=rates.theta_v.copy(), eta_star=rates.eta_star.copy()
    )
    V = (3, 4)
    s = [joint_score_bruteforce(g, V, b, flat, p.rho, 10) for b in [(0, 1), (1, 0)]]
    # no dependence on u, so vertex labels enter only through their own rates
    est = joint_estimate(g, V, flat, p.rho, t_bar=10)
    assert est.labels.shape == (2,)
    assert np.all(np.isfinite(s))


def test_joint_single_vertex_tracks_exact_C(example1):
    p, rates = example1
    agree = n = 0
    for seed in range(20):
        g = generate(p, 2000, 300 + seed)
        ll = lambda_C_all(g, rates, "exact")
        for tau in (10, 40, 90):
            j = joint_estimate(g, (tau,), rates, p.rho, t_bar=tau, use_prior=True).labels[0]
            agree += j == map_label(p.rho, ll[tau - 1])
            n += 1
    assert agree / n >= 0.9


def test_joint_prior_shifts_score(joint_graph, example1):
    p, rates = example1
    a = joint_estimate(joint_graph, (4,), rates, p.rho, t_bar=10)
    b = joint_estimate(joint_graph, (4,), rates, p.rho, t_bar=10, use_prior=True)
    if a.labels[0] == b.labels[0]:
        assert np.isclose(b.score - a.score, np.log(p.rho[a.labels[0]]))


# --- rate estimation --------------------------------------------------------------


def test_rate_estimate_examples():
    assert rate_estimate(np.full(50, 3.0), 5) == 0.0
    tau, T = 4, 30
    y = np.ones(T - tau + 1)
    y[-1] = 2
    assert np.isclose(rate_estimate(y, tau), 1.0 / np.sum(1.0 / np.arange(tau, T)))
    assert rate_estimate([7.0], 3) == 0.0
    with pytest.raises(InferenceError):
        rate_estimate([0.0, 1.0], 1)


def test_rate_estimate_consistency_small():
    rng = np.random.default_rng(3)
    T = 100_000
    est = [
        rate_estimate(check_Y_from_Z(simulate_Z(5, 0.5, np.log(T), rng), 1, T), 1) for _ in range(60)
    ]
    assert abs(np.median(est) - 0.5) < 0.05


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=2, max_size=60), st.integers(1, 50), st.integers(1, 20))
def test_rate_estimate_nonnegative(steps, tau, y0):
    y = y0 + np.cumsum([0] + steps)
    v = rate_estimate(y, tau)
    assert v >= 0
    if y[-1] == y[0]:
        assert v == 0
