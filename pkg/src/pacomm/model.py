"""Model parameters and the limiting half-edge / growth-rate tables.

Labels are 0-indexed throughout the library; file formats and the CLI use
1-indexed labels.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ModelError(ValueError):
    """Invalid model parameters."""


class SolverError(RuntimeError):
    """The fixed-point solver for eta* failed to converge."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class InitialGraph:
    """Edges of the initial graph G_{t_o}, as 1-indexed ``(tail, head)`` pairs."""

    edges: tuple[tuple[int, int], ...]
    t_o: int

    @classmethod
    def two_vertex(cls, m: int) -> InitialGraph:
        # m parallel edges in each direction: both vertices get degree 2m
        edges = ((1, 2),) * m + ((2, 1),) * m
        return cls(edges=edges, t_o=2)

    @classmethod
    def from_config(cls, value, m: int, t_o: int | None = None) -> InitialGraph:
        if value is None or value == "two-vertex":
            return cls.two_vertex(m)
        if isinstance(value, str):
            raise ModelError(f"unknown initial graph preset {value!r}")
        edges = tuple((int(a), int(b)) for a, b in value)
        if t_o is None:
            t_o = max(max(e) for e in edges)
        return cls(edges=edges, t_o=t_o)

    def validate(self, m: int) -> None:
        if len(self.edges) != m * self.t_o:
            raise ModelError(
                f"initial graph needs m*t_o = {m * self.t_o} edges, got {len(self.edges)}"
            )
        for a, b in self.edges:
            if not (1 <= a <= self.t_o and 1 <= b <= self.t_o):
                raise ModelError(f"initial edge ({a}, {b}) outside [1, {self.t_o}]")

    def initial_degrees(self) -> np.ndarray:
        deg = np.zeros(self.t_o, dtype=np.int64)
        for a, b in self.edges:
            deg[a - 1] += 1
            deg[b - 1] += 1
        return deg


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Parameters of the labeled preferential attachment process.

    ``initial_labels`` may be ``None``, in which case the labels of the
    initial vertices are drawn i.i.d. from ``rho`` at generation time.
    """

    m: int
    rho: np.ndarray
    beta: np.ndarray
    initial_graph: InitialGraph
    initial_labels: tuple[int, ...] | None = None
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        beta = np.asarray(self.beta, dtype=float)
        rho.setflags(write=False)
        beta.setflags(write=False)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "beta", beta)
        if self.initial_labels is not None:
            object.__setattr__(self, "initial_labels", tuple(int(x) for x in self.initial_labels))
        self.validate()

    @property
    def r(self) -> int:
        return self.rho.shape[0]

    @property
    def t_o(self) -> int:
        return self.initial_graph.t_o

    def validate(self) -> None:
        if int(self.m) != self.m or self.m < 1:
            raise ModelError(f"m must be a positive integer, got {self.m}")
        if self.rho.ndim != 1 or self.rho.size < 1:
            raise ModelError("rho must be a non-empty vector")
        if np.any(self.rho < 0) or abs(self.rho.sum() - 1.0) > 1e-12:
            raise ModelError(f"rho must be a probability vector, got {self.rho}")
        if self.beta.shape != (self.r, self.r):
            raise ModelError(f"beta must be {self.r}x{self.r}, got shape {self.beta.shape}")
        if not np.all(self.beta > 0):
            raise ModelError("all affinities beta_uv must be strictly positive")
        self.initial_graph.validate(self.m)
        if self.initial_labels is not None:
            if len(self.initial_labels) != self.t_o:
                raise ModelError(f"need {self.t_o} initial labels, got {len(self.initial_labels)}")
            if any(not 0 <= x < self.r for x in self.initial_labels):
                raise ModelError(f"initial labels must lie in [0, {self.r})")

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return self.digest() == other.digest()

    __hash__ = None

    def to_dict(self) -> dict:
        """Config-file representation (1-indexed labels and vertices)."""
        return {
            "name": self.name,
            "m": self.m,
            "r": self.r,
            "rho": self.rho.tolist(),
            "beta": self.beta.tolist(),
            "t_o": self.t_o,
            "initial_graph": [list(e) for e in self.initial_graph.edges],
            "initial_labels": None
            if self.initial_labels is None
            else [x + 1 for x in self.initial_labels],
        }

    @classmethod
    def from_dict(cls, d: dict) -> ModelParams:
        m = int(d["m"])
        rho = np.asarray(d["rho"], dtype=float)
        if "r" in d and int(d["r"]) != rho.size:
            raise ModelError(f"r={d['r']} does not match len(rho)={rho.size}")
        t_o = d.get("t_o")
        init = InitialGraph.from_config(d.get("initial_graph"), m, t_o)
        if t_o is not None and init.t_o != int(t_o):
            raise ModelError(f"t_o={t_o} does not match initial graph ({init.t_o} vertices)")
        labels = d.get("initial_labels")
        if labels is not None:
            labels = tuple(int(x) - 1 for x in labels)
        return cls(
            m=m,
            rho=rho,
            beta=np.asarray(d["beta"], dtype=float),
            initial_graph=init,
            initial_labels=labels,
            name=d.get("name", "custom"),
        )

    def digest(self) -> str:
        blob = json.dumps(self.to_dict() | {"name": None}, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def load_params(path: str | Path) -> ModelParams:
    """Read a JSON parameter file.

    Schema::

        {"m": 5, "rho": [0.5, 0.5], "beta": [[4, 1], [1, 1]],
         "t_o": 2, "initial_graph": "two-vertex" | [[tail, head], ...],
         "initial_labels": null | [1, 2]}
    """
    with open(path) as fh:
        return ModelParams.from_dict(json.load(fh))


@dataclass(frozen=True)
class RateTable:
    """Limiting half-edge fractions and attachment growth rates."""

    eta_star: np.ndarray
    theta_uv: np.ndarray
    theta_v: np.ndarray
    iterations: int = field(default=0, compare=False)
    residual: float = field(default=0.0, compare=False)

    @classmethod
    def from_eta(cls, eta: np.ndarray, params: ModelParams, **kw) -> RateTable:
        eta = np.asarray(eta, dtype=float)
        theta_uv = params.beta / (2.0 * (params.beta @ eta))[:, None]
        theta_v = params.rho @ theta_uv
        return cls(eta_star=eta, theta_uv=theta_uv, theta_v=theta_v, **kw)

    def to_dict(self) -> dict:
        return {
            "eta_star": self.eta_star.tolist(),
            "theta_uv": self.theta_uv.tolist(),
            "theta_v": self.theta_v.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> RateTable:
        return cls(
            eta_star=np.asarray(d["eta_star"], dtype=float),
            theta_uv=np.asarray(d["theta_uv"], dtype=float),
            theta_v=np.asarray(d["theta_v"], dtype=float),
        )


def h_field(eta, params: ModelParams) -> np.ndarray:
    """Drift of the half-edge label fractions; its zero is eta*."""
    eta = np.asarray(eta, dtype=float)
    if np.any(eta <= 0):
        raise ModelError("h is defined only for strictly positive eta")
    attach = params.beta * eta[None, :] / (params.beta @ eta)[:, None]
    return params.rho + params.rho @ attach - 2.0 * eta


def _project_simplex(x: np.ndarray, floor: float = 1e-300) -> np.ndarray:
    x = np.maximum(x, floor)
    return x / x.sum()


def solve_eta_star(
    params: ModelParams, tol: float = 1e-10, max_iter: int = 1_000_000
) -> RateTable:
    """Find eta* with ``max|h(eta*)| <= tol``.

    Damped fixed-point iteration ``eta <- eta + step * h(eta)`` from ``rho``,
    projected onto the simplex. The step starts at 0.25 and is halved
    whenever the residual fails to decrease for a stretch of iterations, which
    turns the scheme into forward-Euler integration of ``d eta/dt = h(eta)``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    eta = _project_simplex(params.rho.copy())
    step = 0.25
    best = np.inf
    stall = 0
    res = np.inf
    for it in range(1, max_iter + 1):
        h = h_field(eta, params)
        res = float(np.max(np.abs(h)))
        if res <= tol:
            return RateTable.from_eta(eta, params, iterations=it, residual=res)
        if res < best:
            best = res
            stall = 0
        else:
            stall += 1
            if stall >= 20:
                step *= 0.5
                stall = 0
                if step < 1e-12:
                    break
        eta = _project_simplex(eta + step * h)
    raise SolverError("eta* iteration did not converge", res)


def symmetric_rate_table(r: int, b: float, m: int | None = None) -> RateTable:
    """Closed-form rates for the symmetric r-community model (uniform rho)."""
    if r < 2:
        raise ModelError("symmetric model needs r >= 2")
    if b <= 1:
        raise ModelError("symmetric model needs b > 1")
    eta = np.full(r, 1.0 / r)
    off = r / (2.0 * (b + r - 1))
    theta_uv = np.full((r, r), off)
    np.fill_diagonal(theta_uv, b * off)
    return RateTable(eta_star=eta, theta_uv=theta_uv, theta_v=np.full(r, 0.5))


def symmetric_params(r: int, b: float, m: int = 5, name: str | None = None) -> ModelParams:
    beta = np.ones((r, r))
    np.fill_diagonal(beta, b)
    return ModelParams(
        m=m,
        rho=np.full(r, 1.0 / r),
        beta=beta,
        initial_graph=InitialGraph.two_vertex(m),
        name=name or f"sym{r}",
    )


def _preset_table() -> dict:
    two = lambda m=5: InitialGraph.two_vertex(m)  # noqa: E731
    return {
        "example1": lambda: ModelParams(
            m=5,
            rho=np.array([0.5, 0.5]),
            beta=np.array([[4.0, 1.0], [1.0, 1.0]]),
            initial_graph=two(),
            name="example1",
        ),
        "sym2": lambda: symmetric_params(2, 4.0, name="sym2"),
        "sym4": lambda: symmetric_params(4, 4.0, name="sym4"),
        "threecomm-I": lambda: ModelParams(
            m=5,
            rho=np.full(3, 1.0 / 3),
            beta=np.array([[2.0, 1, 1], [1, 4, 1], [1, 1, 4]]),
            initial_graph=two(),
            name="threecomm-I",
        ),
        "threecomm-II": lambda: ModelParams(
            m=5,
            rho=np.full(3, 1.0 / 3),
            beta=np.array([[4.0, 1, 1], [2, 4, 1], [2, 1, 4]]),
            initial_graph=two(),
            name="threecomm-II",
        ),
    }


PRESETS = tuple(_preset_table())


def preset(name: str) -> ModelParams:
    """Named parameter sets: example1, sym2, sym4, threecomm-I, threecomm-II."""
    table = _preset_table()
    if name not in table:
        raise ModelError(f"unknown preset {name!r}; choose from {', '.join(table)}")
    return table[name]()


def preset_symmetry(name: str, r: int) -> list[tuple[int, ...]]:
    """Label permutations under which a preset's model is invariant."""
    from itertools import permutations

    if name in ("sym2", "sym4"):
        return list(permutations(range(r)))
    if name.startswith("threecomm"):
        return [(0, 1, 2), (0, 2, 1)]
    return [tuple(range(r))]
