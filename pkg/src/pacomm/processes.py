"""Idealized degree processes and the single-vertex error functions.

``Z`` is the continuous-time pure-birth process started at ``m`` with birth
rate ``theta * k`` in state ``k``; ``Y~`` is its discrete-time Bernoulli
analogue. Everything here works in log space with log-Gamma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .kernels.paths import tilde_y
from .rng import make_rng


@dataclass(frozen=True, eq=False)
class ZPath:
    """Jump times of ``Z`` on ``[0, s_bar]``."""

    m: int
    theta: float
    s_bar: float
    jump_times: np.ndarray

    @property
    def n_jumps(self) -> int:
        return int(self.jump_times.size)

    @property
    def final_state(self) -> int:
        return self.m + self.n_jumps

    @property
    def area(self) -> float:
        """Area under the trajectory on ``[0, s_bar]``."""
        return self.m * self.s_bar + float(np.sum(self.s_bar - self.jump_times))

    def state_at(self, s) -> np.ndarray:
        return self.m + np.searchsorted(self.jump_times, s, side="right")


@dataclass(frozen=True, eq=False)
class TildeYPath:
    tau: int
    m: int
    theta: float
    values: np.ndarray
    exploded: bool
    zeta: int | None = None

    @property
    def final(self) -> int:
        return int(self.values[-1])


def simulate_Z(m: int, theta: float, s_bar: float, rng=None) -> ZPath:
    """Simulate one path with exponential holding times of rate ``theta * k``."""
    rng = make_rng(rng if rng is not None else 0)
    times = []
    s = 0.0
    k = m
    block = max(16, int(2 * m * math.exp(min(theta * s_bar, 30.0))))
    while True:
        rates = theta * (k + np.arange(block))
        jumps = s + np.cumsum(rng.standard_exponential(block) / rates)
        inside = jumps[jumps <= s_bar]
        times.append(inside)
        if inside.size < block:
            break
        s = float(jumps[-1])
        k += block
    jt = np.concatenate(times) if times else np.zeros(0)
    return ZPath(m=m, theta=float(theta), s_bar=float(s_bar), jump_times=jt)


def sample_Z_stats(m: int, theta, s_bar: float, n_paths: int, rng=None):
    """Draw ``(Z_{s_bar} - m, A_{s_bar})`` for many independent paths.

    ``theta`` is a scalar or a per-path array. Paths are advanced one jump
    at a time in lock-step, so this is the same holding-time construction as
    :func:`simulate_Z`, vectorized over paths.
    """
    rng = make_rng(rng if rng is not None else 0)
    theta = np.broadcast_to(np.asarray(theta, dtype=float), (n_paths,))
    n = np.zeros(n_paths, dtype=np.int64)
    area = np.full(n_paths, m * float(s_bar))
    alive = np.arange(n_paths)
    s = np.zeros(n_paths)
    while alive.size:
        k = m + n[alive]
        s_new = s[alive] + rng.standard_exponential(alive.size) / (theta[alive] * k)
        hit = s_new <= s_bar
        alive = alive[hit]
        s_new = s_new[hit]
        s[alive] = s_new
        n[alive] += 1
        area[alive] += s_bar - s_new
    return n, area


def log_pi_n(n, s: float, theta, m: int):
    """Log of the negative binomial law of ``Z_s`` (``n >= m``)."""
    n = np.asarray(n)
    if np.any(n < m):
        raise ValueError("pi_n requires n >= m")
    theta = np.asarray(theta, dtype=float)
    k = n - m
    logc = gammaln(n) - gammaln(m) - gammaln(k + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_fail = np.log(-np.expm1(-theta * s))
        tail = np.where(k == 0, 0.0, k * log_fail)
    return logc - m * theta * s + tail


def pi_n(n, s: float, theta, m: int):
    """``C(n-1, m-1) e^{-m theta s} (1 - e^{-theta s})^{n-m}``."""
    out = np.exp(log_pi_n(n, s, theta, m))
    return float(out) if np.ndim(out) == 0 else out


def log_p_n(n, theta, m: int):
    n = np.asarray(n)
    if np.any(n < m):
        raise ValueError("p_n requires n >= m")
    a = 1.0 / np.asarray(theta, dtype=float)
    return gammaln(a + m) + gammaln(n) - np.log(theta) - gammaln(m) - gammaln(n + a + 1)


def p_n(n, theta, m: int):
    """Limiting degree pmf of a vertex with growth rate ``theta``."""
    out = np.exp(log_p_n(n, theta, m))
    return float(out) if np.ndim(out) == 0 else out


def p_survival(n, theta, m: int):
    """``sum_{k >= n} p_k(theta, m)`` in closed form."""
    a = 1.0 / theta
    n = np.asarray(n)
    return np.exp(gammaln(a + m) + gammaln(n) - gammaln(m) - gammaln(n + a))


def p_tail_bound(n, theta, m: int):
    """Tail mass beyond ``n`` from the power-law asymptotics of ``p_n``."""
    a = 1.0 / theta
    const = math.exp(gammaln(a + m) - gammaln(m)) / theta
    return const * theta * np.asarray(n, dtype=float) ** (-a)


def mgf_psi(u: float, v: float, s: float, lam: float, m: int) -> float:
    """Joint MGF ``E[exp(u Z_s + v A_s)]``; ``inf`` outside the convergence region."""
    d = v - lam
    integral = s if d == 0 else math.expm1(d * s) / d
    denom = 1.0 - lam * math.exp(u) * integral
    if denom <= 0:
        return math.inf
    return math.exp(m * (d * s + u - math.log(denom)))


def bhattacharyya(kind: str, theta1: float, theta2: float, m: int, s_bar: float) -> float:
    """Bhattacharyya coefficient between rates ``theta1`` and ``theta2``.

    ``kind="C"`` observes the whole path of ``Z`` on ``[0, s_bar]``,
    ``kind="DT"`` only its final value.
    """
    tsum = theta1 + theta2
    num = math.exp(-tsum * s_bar / 2.0)
    kind = kind.upper()
    if kind == "C":
        denom = 1.0 - 2.0 * math.sqrt(theta1 * theta2) / tsum * (-math.expm1(-tsum * s_bar / 2.0))
    elif kind == "DT":
        denom = 1.0 - math.sqrt(-math.expm1(-theta1 * s_bar) * -math.expm1(-theta2 * s_bar))
    else:
        raise ValueError(f"kind must be 'C' or 'DT', got {kind!r}")
    return (num / denom) ** m


def _support_limit(theta_star, m: int, s_bar: float, tail: float) -> int:
    from scipy.stats import nbinom

    p = np.exp(-np.asarray(theta_star, dtype=float) * s_bar)
    return int(m + np.max(nbinom.isf(tail, m, p))) + 1


def f_Z_DT(rho, theta_star, m: int, s_bar: float, tail: float = 1e-12) -> float:
    """Exact Bayes error of MAP classification from the single value ``Z_{s_bar}``."""
    rho = np.asarray(rho, dtype=float)
    theta_star = np.asarray(theta_star, dtype=float)
    if s_bar == 0 or np.ptp(theta_star) == 0:
        return float(1.0 - rho.max())
    n = np.arange(m, _support_limit(theta_star, m, s_bar, tail) + 1)
    with np.errstate(divide="ignore"):
        logpost = np.log(rho)[:, None] + log_pi_n(n[None, :], s_bar, theta_star[:, None], m)
    correct = np.exp(logpost.max(axis=0)).sum()
    return float(max(0.0, 1.0 - correct))


def dt_decisions(n_children, rho, theta_star, m: int, s_bar: float) -> np.ndarray:
    """MAP label from ``Z_{s_bar} - m`` (ties to the smallest label)."""
    rho = np.asarray(rho, dtype=float)
    theta_star = np.asarray(theta_star, dtype=float)
    k = np.asarray(n_children)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        ll = -m * theta_star * s_bar + np.where(
            k == 0, 0.0, k * np.log(-np.expm1(-theta_star * s_bar))
        )
        return np.argmax(np.log(rho) + ll, axis=1)


def c_decisions(n_jumps, area, rho, theta_star) -> np.ndarray:
    """MAP label from ``(Z_{s_bar} - m, A_{s_bar})`` (ties to the smallest label)."""
    theta_star = np.asarray(theta_star, dtype=float)
    with np.errstate(divide="ignore"):
        ll = (
            np.log(rho)
            + np.asarray(n_jumps)[:, None] * np.log(theta_star)
            - np.asarray(area)[:, None] * theta_star
        )
    return np.argmax(ll, axis=1)


def _mc_error(decide, rho, theta_star, m, s_bar, trials, rng):
    rng = make_rng(rng if rng is not None else 0)
    rho = np.asarray(rho, dtype=float)
    theta_star = np.asarray(theta_star, dtype=float)
    cdf = np.cumsum(rho)
    cdf[-1] = 1.0
    truth = np.minimum(np.searchsorted(cdf, rng.random(trials), side="right"), rho.size - 1)
    n, area = sample_Z_stats(m, theta_star[truth], s_bar, trials, rng)
    est = decide(n, area)
    err = float(np.mean(est != truth))
    return err, math.sqrt(max(err * (1.0 - err), 0.0) / trials)


def f_Z_C(rho, theta_star, m: int, s_bar: float, trials: int, rng=None):
    """Monte Carlo error of MAP classification from the path of ``Z``.

    Returns ``(estimate, binomial standard error)``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if s_bar == 0:
        return float(1.0 - np.max(rho)), 0.0
    return _mc_error(
        lambda n, a: c_decisions(n, a, rho, theta_star), rho, theta_star, m, s_bar, trials, rng
    )


def f_Z_DT_montecarlo(rho, theta_star, m: int, s_bar: float, trials: int, rng=None):
    """Simulation counterpart of :func:`f_Z_DT`, for cross-checking."""
    return _mc_error(
        lambda n, a: dt_decisions(n, rho, theta_star, m, s_bar),
        rho,
        theta_star,
        m,
        s_bar,
        trials,
        rng,
    )


def simulate_tilde_Y(tau: int, T: int, m: int, theta: float, rng=None) -> TildeYPath:
    """Bernoulli-increment degree process with ``P(jump at t) = theta*y/t``."""
    if tau < 1 or T < tau:
        raise ValueError("need 1 <= tau <= T")
    rng = make_rng(rng if rng is not None else 0)
    u = rng.random(T - tau)
    values, zeta = tilde_y(int(tau), int(T), int(m), float(theta), u)
    exploded = zeta >= 0
    return TildeYPath(
        tau=tau,
        m=m,
        theta=float(theta),
        values=values,
        exploded=bool(exploded),
        zeta=int(zeta) if exploded else None,
    )


def check_Y_from_Z(path: ZPath, tau: int, T: int) -> np.ndarray:
    """Sample ``Z`` at ``s = ln(t / tau)`` for integers ``t`` in ``[tau, T]``."""
    t = np.arange(tau, T + 1)
    # first integer time at which each jump is visible
    first_t = np.ceil(tau * np.exp(path.jump_times)).astype(np.int64)
    jumps = np.bincount(np.clip(first_t - tau, 0, t.size - 1), minlength=t.size)
    return path.m + np.cumsum(jumps)

