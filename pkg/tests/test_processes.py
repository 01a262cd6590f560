import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import nbinom

from pacomm.kernels.paths import tilde_y_numba, tilde_y_python
from pacomm.processes import (
    bhattacharyya,
    c_decisions,
    check_Y_from_Z,
    dt_decisions,
    f_Z_C,
    f_Z_DT,
    f_Z_DT_montecarlo,
    log_pi_n,
    mgf_psi,
    p_n,
    p_survival,
    p_tail_bound,
    pi_n,
    sample_Z_stats,
    simulate_tilde_Y,
    simulate_Z,
)


def tv(p, q):
    return 0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum()


# --- Z paths ------------------------------------------------------------------


def test_z_path_basics():
    z = simulate_Z(5, 0.5, 0.0, 1)
    assert z.n_jumps == 0 and z.final_state == 5 and z.area == 0.0
    z = simulate_Z(5, 0.5, 2.0, 2)
    assert np.all(np.diff(z.jump_times) > 0)
    assert z.jump_times.max() <= 2.0
    direct = 5 * 2.0 + np.sum(2.0 - z.jump_times)
    assert z.area == pytest.approx(direct)
    s = np.linspace(0, 2, 4001)
    ds = s[1] - s[0]
    trap = np.sum(z.state_at(s)[:-1]) * ds
    assert trap == pytest.approx(z.area, rel=2e-2)


def test_z_final_law_matches_pi_n():
    rng = np.random.default_rng(3)
    finals = np.array([simulate_Z(5, 0.5, 1.0, rng).final_state for _ in range(10_000)])
    n = np.arange(5, 80)
    emp = np.bincount(finals, minlength=80)[5:80] / finals.size
    assert tv(emp, pi_n(n, 1.0, 0.5, 5)) < 0.02
    mean, se = finals.mean(), finals.std() / math.sqrt(finals.size)
    assert abs(mean - 5 * math.e**0.5) < 3 * se


def test_sample_stats_match_path_simulator():
    n, area = sample_Z_stats(3, 0.7, 1.5, 20_000, 4)
    paths = [simulate_Z(3, 0.7, 1.5, (4, i)) for i in range(4000)]
    pn = np.array([p.n_jumps for p in paths])
    pa = np.array([p.area for p in paths])
    assert abs(n.mean() - pn.mean()) < 4 * math.hypot(n.std() / 141.4, pn.std() / 63.2)
    assert abs(area.mean() - pa.mean()) < 4 * math.hypot(area.std() / 141.4, pa.std() / 63.2)
    # E[A_s] = m (e^{theta s} - 1) / theta
    expected = 3 * math.expm1(0.7 * 1.5) / 0.7
    assert abs(area.mean() - expected) < 4 * area.std() / math.sqrt(area.size)


# --- pmfs ---------------------------------------------------------------------


def test_pi_n_matches_negative_binomial():
    n = np.arange(4, 400)
    mine = pi_n(n, 1.3, 0.6, 4)
    ref = nbinom.pmf(n - 4, 4, math.exp(-0.6 * 1.3))
    assert mine == pytest.approx(ref, rel=1e-10, abs=1e-300)
    assert mine.sum() == pytest.approx(1.0, abs=1e-9)


def test_pi_n_edge_cases():
    assert pi_n(5, 0.0, 0.5, 5) == 1.0
    assert pi_n(6, 0.0, 0.5, 5) == 0.0
    assert pi_n(5, 2.0, 0.5, 5) == pytest.approx(math.exp(-5 * 0.5 * 2.0))
    with pytest.raises(ValueError):
        pi_n(4, 1.0, 0.5, 5)
    with pytest.raises(ValueError):
        p_n(0, 0.5, 1)


def _p_n_recursive(theta, m, n_max):
    # p_m = 1/(1 + theta m); p_n / p_{n-1} = (n - 1) / (n + 1/theta)
    out = [1.0 / (1.0 + theta * m)]
    for n in range(m + 1, n_max + 1):
        out.append(out[-1] * (n - 1) / (n + 1.0 / theta))
    return np.array(out)


@pytest.mark.parametrize("theta, m", [(0.5, 1), (0.598612, 5), (0.337153, 5), (1.142857, 3)])
def test_p_n_against_recursion(theta, m):
    n = np.arange(m, 2000)
    assert p_n(n, theta, m) == pytest.approx(_p_n_recursive(theta, m, 1999), rel=1e-9)
    total = p_n(n, theta, m).sum() + p_survival(2000, theta, m)
    assert total == pytest.approx(1.0, abs=1e-12)
    tail = p_survival(np.array([10, 50]), theta, m)
    assert tail == pytest.approx([p_n(np.arange(k, 400_000), theta, m).sum() + p_survival(400_000, theta, m) for k in (10, 50)], rel=1e-9)


def test_p_n_classical_case():
    assert p_n(1, 0.5, 1) == pytest.approx(2 / 3)
    k = np.arange(1, 50)
    assert p_n(k, 0.5, 1) == pytest.approx(4 / (k * (k + 1) * (k + 2)))
    big = np.array([1e3, 1e4, 1e5])
    assert p_n(big, 0.5, 1) * big**3 == pytest.approx(4.0, rel=5e-3)
    n = 10.0**np.arange(2, 7)
    ratio = p_survival(n, 0.6, 5) / p_tail_bound(n, 0.6, 5)
    assert np.all(np.diff(np.abs(ratio - 1)) < 0) and abs(ratio[-1] - 1) < 1e-3


# --- MGF ----------------------------------------------------------------------


def test_mgf_known_cases():
    lam, m, s = 0.5, 5, 1.0
    assert mgf_psi(0, 0, s, lam, m) == pytest.approx(1.0)
    p = math.exp(-lam * s)
    for u in (-0.3, 0.1, 0.2):
        nb = (p * math.exp(u) / (1 - (1 - p) * math.exp(u))) ** m
        assert mgf_psi(u, 0.0, s, lam, m) == pytest.approx(nb, rel=1e-12)
    h = 1e-6
    dz = (mgf_psi(h, 0, s, lam, m) - mgf_psi(-h, 0, s, lam, m)) / (2 * h)
    assert dz == pytest.approx(m * math.exp(lam * s), rel=1e-4)
    da = (mgf_psi(0, h, s, lam, m) - mgf_psi(0, -h, s, lam, m)) / (2 * h)
    assert da == pytest.approx(m * math.expm1(lam * s) / lam, rel=1e-4)
    # v = lambda uses the analytic limit
    assert mgf_psi(-1.0, lam, s, lam, m) == pytest.approx(mgf_psi(-1.0, lam + 1e-9, s, lam, m), rel=1e-6)
    assert mgf_psi(1.0, 0.0, 3.0, 0.5, 5) == math.inf


def test_mgf_monte_carlo_point():
    n, area = sample_Z_stats(5, 0.5, 1.0, 100_000, 9)
    x = np.exp(0.1 * (n + 5) - 0.1 * area)
    psi = mgf_psi(0.1, -0.1, 1.0, 0.5, 5)
    assert abs(x.mean() - psi) < 3 * x.std() / math.sqrt(x.size)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(0.05, 2.0), st.integers(1, 8), st.floats(0.0, 6.0))
def test_bhattacharyya_c_from_mgf(t1, t2, m, s):
    u = 0.5 * math.log(t1 / t2)
    v = -(t1 - t2) / 2
    via_psi = math.exp(-m * u) * mgf_psi(u, v, s, t2, m)
    assert via_psi == pytest.approx(bhattacharyya("C", t1, t2, m, s), rel=1e-10)


@pytest.mark.parametrize("s", [0.3, math.log(10), math.log(100)])
def test_bhattacharyya_dt_direct_sum(s):
    t1, t2, m = 0.598612, 0.337153, 5
    n = np.arange(m, 20000)
    direct = np.exp(0.5 * (log_pi_n(n, s, t1, m) + log_pi_n(n, s, t2, m))).sum()
    assert bhattacharyya("DT", t1, t2, m, s) == pytest.approx(direct, rel=1e-10)


def test_bhattacharyya_degenerate_and_ordering(example1):
    _, rates = example1
    t1, t2 = rates.theta_v
    for kind in ("C", "DT"):
        assert bhattacharyya(kind, 0.4, 0.4, 5, 3.0) == pytest.approx(1.0)
        assert bhattacharyya(kind, t1, t2, 5, 0.0) == pytest.approx(1.0)
    for s in np.linspace(0.01, math.log(1e4), 60):
        assert bhattacharyya("C", t1, t2, 5, s) <= bhattacharyya("DT", t1, t2, 5, s) + 1e-15
    with pytest.raises(ValueError):
        bhattacharyya("X", t1, t2, 5, 1.0)


# --- error functions ----------------------------------------------------------


def _f_dt_direct(rho, theta, m, s):
    n = np.arange(m, 200_000)
    joint = np.array([r * nbinom.pmf(n - m, m, math.exp(-t * s)) for r, t in zip(rho, theta)])
    return 1.0 - joint.max(axis=0).sum()


@pytest.mark.parametrize("s", [0.5, math.log(10), math.log(100), math.log(1e4)])
def test_f_dt_exact(example1, s):
    p, rates = example1
    assert f_Z_DT(p.rho, rates.theta_v, 5, s) == pytest.approx(_f_dt_direct(p.rho, rates.theta_v, 5, s), abs=1e-10)


def test_f_dt_trivial_cases(example1):
    p, rates = example1
    assert f_Z_DT(p.rho, rates.theta_v, 5, 0.0) == 0.5
    assert f_Z_DT([0.3, 0.7], [0.4, 0.4], 5, 2.0) == pytest.approx(0.3)
    three = f_Z_DT(np.full(3, 1 / 3), [0.42004, 0.53225, 0.53225], 5, math.log(100))
    assert 1 / 3 < three < 2 / 3


def test_f_dt_nonincreasing(example1):
    p, rates = example1
    grid = np.linspace(0.05, math.log(1e4), 80)
    vals = np.array([f_Z_DT(p.rho, rates.theta_v, 5, s) for s in grid])
    envelope = np.minimum.accumulate(vals)
    assert np.all(np.diff(envelope) <= 0)
    assert np.mean(np.diff(vals) <= 1e-12) > 0.9


def test_f_c_basics(example1):
    p, rates = example1
    assert f_Z_C(p.rho, rates.theta_v, 5, 0.0, 10) == (0.5, 0.0)
    a = f_Z_C(p.rho, rates.theta_v, 5, 1.0, 2000, 3)
    b = f_Z_C(p.rho, rates.theta_v, 5, 1.0, 2000, 3)
    assert a == b
    assert a[1] == pytest.approx(math.sqrt(a[0] * (1 - a[0]) / 2000))
    with pytest.raises(ValueError):
        f_Z_C(p.rho, rates.theta_v, 5, 1.0, 0)


@pytest.mark.parametrize("s", [0.3, 1.0, math.log(10), math.log(100)])
def test_f_c_below_f_dt(example1, s):
    p, rates = example1
    est, se = f_Z_C(p.rho, rates.theta_v, 5, s, 40_000, 21)
    assert est <= f_Z_DT(p.rho, rates.theta_v, 5, s) + 2 * se


def test_dt_monte_carlo_agrees(example1):
    p, rates = example1
    est, se = f_Z_DT_montecarlo(p.rho, rates.theta_v, 5, math.log(10), 50_000, 2)
    assert abs(est - f_Z_DT(p.rho, rates.theta_v, 5, math.log(10))) < 3 * se


def test_decision_rules():
    rho = np.array([0.5, 0.5])
    th = np.array([0.6, 0.3])
    # a large count or a large area points to the fast label
    assert dt_decisions(np.array([0, 100]), rho, th, 5, 2.0).tolist() == [1, 0]
    assert c_decisions(np.array([50, 50]), np.array([30.0, 500.0]), rho, th).tolist() == [0, 1]
    # exact tie breaks to the smallest label
    assert c_decisions(np.array([0]), np.array([0.0]), rho, np.array([0.5, 0.5])).tolist() == [0]


# --- Y~ and Y-check -----------------------------------------------------------


def test_tilde_y_backends_and_invariants():
    u = np.random.default_rng(0).random(5000)
    a = tilde_y_numba(10, 5010, 5, 0.8, u)
    b = tilde_y_python(10, 5010, 5, 0.8, u)
    assert np.array_equal(a[0], b[0]) and a[1] == b[1]
    path = simulate_tilde_Y(10, 5010, 5, 0.8, 1)
    inc = np.diff(path.values)
    assert path.values[0] == 5 and set(np.unique(inc)) <= {0, 1}
    assert np.all(path.values <= 5 + np.arange(path.values.size))
    assert simulate_tilde_Y(7, 7, 5, 0.5, 0).values.tolist() == [5]
    with pytest.raises(ValueError):
        simulate_tilde_Y(10, 5, 5, 0.5, 0)


def test_tilde_y_explosion_is_data():
    path = simulate_tilde_Y(1, 100, 5, 0.5, 0)
    assert path.exploded and path.zeta == 1
    for seed in range(30):
        assert not simulate_tilde_Y(5, 2000, 5, 1.0, seed).exploded
    big = simulate_tilde_Y(20, 20_000, 5, 16 / 14, 3)
    assert big.exploded or big.values[-1] < 20_000


def test_tilde_y_mean():
    tau, T, theta, m = 50, 2000, 0.5, 5
    finals = np.array([simulate_tilde_Y(tau, T, m, theta, (1, i)).final for i in range(4000)])
    expected = m * np.prod(1 + theta / np.arange(tau, T))
    assert abs(finals.mean() - expected) < 3.5 * finals.std() / math.sqrt(finals.size)


def test_tilde_y_law_near_negbinom():
    tau, T, theta, m = 1000, 10_000, 0.5, 5
    finals = np.array([simulate_tilde_Y(tau, T, m, theta, (2, i)).final for i in range(10_000)])
    n = np.arange(m, 200)
    emp = np.bincount(finals, minlength=200)[m:200] / finals.size
    assert tv(emp, pi_n(n, math.log(T / tau), theta, m)) < 0.03


def test_check_y_samples_z():
    z = simulate_Z(5, 0.5, math.log(1000 / 3), 8)
    y = check_Y_from_Z(z, 3, 1000)
    t = np.arange(3, 1001)
    assert np.array_equal(y, z.state_at(np.log(t / 3)))
