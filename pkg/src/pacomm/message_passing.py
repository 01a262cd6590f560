"""Loopy belief propagation over the arrival-ordered graph.

Every non-initial edge is a message slot carrying two tilde messages:
``nu_t[e]`` (from the child, expressed over the parent's labels) and
``mu_t[e]`` (from the parent, over the child's labels). A vertex total is

    Lambda_tau = lambda_tau + sum of nu_t into tau + sum of mu_t into tau

and the raw message a vertex sends on a slot is its total minus what arrived
on that same slot. Parallel edges are separate slots. All stored messages are
canonical (maximum entry 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .generator import PAGraph
from .inference import InferenceError, LabelEstimate, canonicalize, lambda_C_all, map_label
from .kernels.mp import transform
from .model import RateTable

SCHEDULES = ("synchronous", "two_phase")
TERMINATION = ("lambda", "messages")


class MPConfigError(ValueError):
    pass


def _log_kernels(rates: RateTable, rho):
    """Log weight matrices ``M`` with ``g(x)(v) = lse_w x(w) + M[w, v]``."""
    with np.errstate(divide="ignore"):
        log_rho = np.log(np.asarray(rho, dtype=float))
    log_tuv = np.log(rates.theta_uv)
    log_tv = np.log(rates.theta_v)
    m_cp = log_rho[:, None] + log_tuv - log_tv[None, :]
    m_pc = (log_tuv + (log_rho - log_tv)[None, :]).T
    return np.ascontiguousarray(m_cp), np.ascontiguousarray(m_pc)


def _apply(x, M) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return canonicalize(logsumexp(x[..., :, None] + M, axis=-2))


def g_cp(nu, rates: RateTable, rho) -> np.ndarray:
    """Child-to-parent map: ``ln sum_u e^{nu(u)} rho_u theta_uv / theta_v``."""
    return _apply(nu, _log_kernels(rates, rho)[0])


def g_pc(mu, rates: RateTable, rho) -> np.ndarray:
    """Parent-to-child map: ``ln sum_w theta_vw e^{mu(w)} rho_w / theta_w``."""
    return _apply(mu, _log_kernels(rates, rho)[1])


@dataclass(frozen=True)
class MPConfig:
    """Options for :func:`run_mp`.

    ``seeds`` maps 1-indexed vertex ids to 0-indexed labels. ``balance_nu`` and
    ``balance_mu`` switch balancing of each tilde family when ``balancing`` is
    on. ``max_iterations`` bounds each phase of the two-phase schedule.
    """

    schedule: str = "synchronous"
    balancing: bool = False
    termination_threshold: float = 1.0
    max_iterations: int = 200
    seeds: dict = field(default_factory=dict)
    termination: str = "lambda"
    balance_nu: bool = True
    balance_mu: bool = True

    def __post_init__(self):
        if self.schedule not in SCHEDULES:
            raise MPConfigError(f"schedule must be one of {SCHEDULES}")
        if self.termination not in TERMINATION:
            raise MPConfigError(f"termination must be one of {TERMINATION}")
        if not self.termination_threshold > 0:
            raise MPConfigError("termination threshold must be positive")
        if self.max_iterations < 1:
            raise MPConfigError("max_iterations must be >= 1")
        object.__setattr__(self, "seeds", {int(k): int(v) for k, v in dict(self.seeds).items()})


@dataclass
class MessageBoard:
    """Message state for one graph; arrays are indexed by edge slot."""

    child: np.ndarray
    parent: np.ndarray
    lam: np.ndarray
    nu_t: np.ndarray
    mu_t: np.ndarray
    seed: np.ndarray
    m_cp: np.ndarray
    m_pc: np.ndarray

    @property
    def T(self) -> int:
        return self.lam.shape[0]

    @property
    def r(self) -> int:
        return self.lam.shape[1]

    def copy(self) -> MessageBoard:
        return replace(self, nu_t=self.nu_t.copy(), mu_t=self.mu_t.copy())

    def totals(self) -> np.ndarray:
        """Raw ``Lambda`` for every vertex, shape (T, r)."""
        out = self.lam.copy()
        for v in range(self.r):
            out[:, v] += np.bincount(self.parent, weights=self.nu_t[:, v], minlength=self.T)
            out[:, v] += np.bincount(self.child, weights=self.mu_t[:, v], minlength=self.T)
        return out

    def posteriors(self) -> np.ndarray:
        """Canonical ``Lambda``; seeds carry their hard evidence vector."""
        out = canonicalize(self.totals())
        s = np.flatnonzero(self.seed >= 0)
        out[s] = -np.inf
        out[s, self.seed[s]] = 0.0
        return out

    def outgoing(self):
        """Canonical raw messages ``(nu, mu)`` per slot, seeds hard-wired."""
        lam = self.totals()
        msgs = []
        for src, own in ((self.child, self.mu_t), (self.parent, self.nu_t)):
            x = canonicalize(lam[src] - own)
            s = self.seed[src]
            hard = np.flatnonzero(s >= 0)
            x[hard] = -np.inf
            x[hard, s[hard]] = 0.0
            msgs.append(x)
        return msgs[0], msgs[1]


def init_board(graph: PAGraph, rates: RateTable, rho, config: MPConfig | None = None) -> MessageBoard:
    """Board with all tilde messages zero and seed evidence installed."""
    config = config or MPConfig()
    r = graph.r
    seed = np.full(graph.T, -1, dtype=np.int64)
    for tau, lab in config.seeds.items():
        if not 1 <= tau <= graph.T:
            raise MPConfigError(f"seed vertex {tau} outside [1, {graph.T}]")
        if not 0 <= lab < r:
            raise MPConfigError(f"seed label {lab + 1} outside [1, {r}]")
        seed[tau - 1] = lab
    n0 = graph.n_initial_edges
    child = graph.tails[n0:].astype(np.int64) - 1
    parent = graph.heads[n0:].astype(np.int64) - 1
    m_cp, m_pc = _log_kernels(rates, rho)
    E = child.size
    return MessageBoard(
        child=child,
        parent=parent,
        lam=np.ascontiguousarray(lambda_C_all(graph, rates, "approx")),
        nu_t=np.zeros((E, r)),
        mu_t=np.zeros((E, r)),
        seed=seed,
        m_cp=m_cp,
        m_pc=m_pc,
    )


def _balance_family(msgs: np.ndarray) -> tuple[np.ndarray, bool]:
    S = msgs.sum(axis=0)
    if np.all(S == 0):
        return msgs, False
    if np.any(S == 0) or not np.all(np.isfinite(S)):
        return msgs, True
    f = S.sum() / (S.size * S)
    return msgs * f, False


def balance(board: MessageBoard, nu: bool = True, mu: bool = True) -> tuple[MessageBoard, list[str]]:
    """Rescale tilde messages per coordinate so their sum is null.

    Coordinate ``v`` of every message in a family is multiplied by
    ``f_v = sum(S) / (r * S_v)`` where ``S`` is the family's coordinate sum,
    which preserves ``sum(S)``. A family with some but not all ``S_v == 0`` is
    left untouched and its name returned in the skip list.
    """
    skipped = []
    nu_t, mu_t = board.nu_t, board.mu_t
    if mu:
        mu_t, bad = _balance_family(mu_t)
        if bad:
            skipped.append("mu")
    if nu:
        nu_t, bad = _balance_family(nu_t)
        if bad:
            skipped.append("nu")
    return replace(board, nu_t=nu_t, mu_t=mu_t), skipped


def _step(board: MessageBoard, do_nu: bool, do_mu: bool) -> MessageBoard:
    new_nu, new_mu = transform(
        board.child,
        board.parent,
        board.totals(),
        board.nu_t,
        board.mu_t,
        board.seed,
        board.m_cp,
        board.m_pc,
        do_nu,
        do_mu,
    )
    return replace(board, nu_t=new_nu, mu_t=new_mu)


def _delta(old: MessageBoard, new: MessageBoard, how: str) -> float:
    if how == "messages":
        return float(
            np.linalg.norm(new.nu_t - old.nu_t, axis=1).sum()
            + np.linalg.norm(new.mu_t - old.mu_t, axis=1).sum()
        )
    free = old.seed < 0
    a = canonicalize(old.totals()[free])
    b = canonicalize(new.totals()[free])
    return float(np.linalg.norm(b - a, axis=1).sum())


def iterate(board: MessageBoard, config: MPConfig, phase: str = "both") -> tuple[MessageBoard, float]:
    """One Jacobi update of the selected families.

    ``phase`` is ``"both"`` (synchronous), ``"nu"`` (children to parents only)
    or ``"mu"`` (parents to children only). Returns the new board and the
    change measured per ``config.termination``.
    """
    if phase not in ("both", "nu", "mu"):
        raise ValueError(f"unknown phase {phase!r}")
    new = _step(board, phase in ("both", "nu"), phase in ("both", "mu"))
    return new, _delta(board, new, config.termination)


@dataclass
class MPResult:
    estimates: list[LabelEstimate]
    labels: np.ndarray
    posteriors: np.ndarray
    trace: list[tuple[int, str, float]]
    converged: bool
    balance_skips: int = 0
    board: MessageBoard | None = field(default=None, repr=False)


def _run_phase(board, config, phase, trace, counter):
    for _ in range(config.max_iterations):
        prev = board
        if config.balancing:
            board, skipped = balance(board, nu=config.balance_nu, mu=config.balance_mu)
            counter[1] += len(skipped)
        board, _ = iterate(board, config, phase)
        # compare successive outputs so balancing itself does not count as change
        delta = _delta(prev, board, config.termination)
        counter[0] += 1
        trace.append((counter[0], phase, delta))
        if delta < config.termination_threshold:
            return board, True
    return board, False


def run_mp(graph: PAGraph, rates: RateTable, rho, config: MPConfig | None = None) -> MPResult:
    """Iterate to convergence and return MAP labels from the vertex totals."""
    config = config or MPConfig()
    board = init_board(graph, rates, rho, config)
    trace: list[tuple[int, str, float]] = []
    counter = [0, 0]
    if config.schedule == "synchronous":
        board, converged = _run_phase(board, config, "both", trace, counter)
    else:
        board, ok_nu = _run_phase(board, config, "nu", trace, counter)
        board, ok_mu = _run_phase(board, config, "mu", trace, counter)
        converged = ok_nu and ok_mu
    post = board.posteriors()
    try:
        labels = np.asarray(map_label(rho, post))
    except InferenceError:
        labels = np.argmax(post, axis=1)
    s = np.flatnonzero(board.seed >= 0)
    labels[s] = board.seed[s]
    estimates = [
        LabelEstimate(vertex=i + 1, label=int(labels[i]), llv=post[i], algorithm="MP")
        for i in range(graph.T)
    ]
    return MPResult(
        estimates=estimates,
        labels=labels,
        posteriors=post,
        trace=trace,
        converged=converged,
        balance_skips=counter[1],
        board=board,
    )
