"""Simulation of the labeled preferential attachment graph process.

Vertices are identified by their arrival times ``1..T``. Per-vertex arrays
are stored 0-offset (vertex ``tau`` at index ``tau - 1``); edge endpoint
arrays hold the 1-indexed vertex ids directly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .kernels.generation import grow
from .model import ModelParams
from .rng import make_rng


@dataclass(frozen=True, eq=False)
class PAGraph:
    """Arrival-ordered labeled directed multigraph ``G_T``.

    The first ``m * t_o`` edges form the initial graph; after that vertex
    ``t`` contributes edges ``m*(t-1) .. m*t - 1``.
    """

    T: int
    m: int
    r: int
    t_o: int
    labels: np.ndarray
    tails: np.ndarray
    heads: np.ndarray
    params_hash: str = ""

    def __post_init__(self):
        for name in ("labels", "tails", "heads"):
            arr = np.ascontiguousarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_initial_edges(self) -> int:
        return self.m * self.t_o

    @cached_property
    def d0(self) -> np.ndarray:
        """Initial degree: degree in G_{t_o} for tau <= t_o, else m."""
        d0 = np.full(self.T, self.m, dtype=np.int64)
        n0 = self.n_initial_edges
        d0[: self.t_o] = 0
        np.add.at(d0, self.tails[:n0] - 1, 1)
        np.add.at(d0, self.heads[:n0] - 1, 1)
        return d0

    @cached_property
    def _children_csr(self) -> tuple[np.ndarray, np.ndarray]:
        n0 = self.n_initial_edges
        h = self.heads[n0:]
        order = np.argsort(h, kind="stable")
        ptr = np.zeros(self.T + 1, dtype=np.int64)
        np.cumsum(np.bincount(h, minlength=self.T + 1)[1:], out=ptr[1:])
        return ptr, self.tails[n0:][order]

    def children(self, tau: int) -> np.ndarray:
        """Multiset of children of ``tau`` in arrival order."""
        self._check_vertex(tau)
        ptr, idx = self._children_csr
        return idx[ptr[tau - 1] : ptr[tau]]

    def parents(self, tau: int) -> np.ndarray:
        """Multiset of parents (heads of tau's m out-edges); empty for tau <= t_o."""
        self._check_vertex(tau)
        if tau <= self.t_o:
            return self.heads[:0]
        start = self.m * (tau - 1)
        return self.heads[start : start + self.m]

    @cached_property
    def n_children(self) -> np.ndarray:
        ptr, _ = self._children_csr
        return np.diff(ptr)

    @cached_property
    def degree(self) -> np.ndarray:
        return self.d0 + self.n_children

    def _check_vertex(self, tau: int) -> None:
        if not 1 <= tau <= self.T:
            raise IndexError(f"vertex {tau} outside [1, {self.T}]")

    def __eq__(self, other):
        if not isinstance(other, PAGraph):
            return NotImplemented
        return (
            (self.T, self.m, self.r, self.t_o, self.params_hash)
            == (other.T, other.m, other.r, other.t_o, other.params_hash)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.tails, other.tails)
            and np.array_equal(self.heads, other.heads)
        )

    __hash__ = None

    # --- serialization -------------------------------------------------
    def to_text(self) -> str:
        """Line-oriented format (1-indexed labels and vertices)::

            pagraph 1
            T m r t_o params_hash
            l_1 l_2 ... l_T
            tail head          (one line per edge, arrival order)
        """
        lines = [
            "pagraph 1",
            f"{self.T} {self.m} {self.r} {self.t_o} {self.params_hash or '-'}",
            " ".join(map(str, (self.labels + 1).tolist())),
        ]
        lines.extend(f"{a} {b}" for a, b in zip(self.tails.tolist(), self.heads.tolist()))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> PAGraph:
        it = iter(text.splitlines())
        magic = next(it).split()
        if magic[:1] != ["pagraph"]:
            raise ValueError("not a pagraph file")
        T, m, r, t_o, ph = next(it).split()
        labels = np.array(next(it).split(), dtype=np.int64) - 1
        edges = np.loadtxt(list(it), dtype=np.int32, ndmin=2)
        if edges.size == 0:
            edges = np.zeros((0, 2), dtype=np.int32)
        g = cls(
            T=int(T),
            m=int(m),
            r=int(r),
            t_o=int(t_o),
            labels=labels.astype(np.int8 if int(r) < 128 else np.int64),
            tails=edges[:, 0].copy(),
            heads=edges[:, 1].copy(),
            params_hash="" if ph == "-" else ph,
        )
        g.validate()
        return g

    def to_json(self) -> dict:
        return {
            "format": "pagraph",
            "version": 1,
            "T": self.T,
            "m": self.m,
            "r": self.r,
            "t_o": self.t_o,
            "params_hash": self.params_hash,
            "labels": (self.labels + 1).tolist(),
            "edges": np.column_stack([self.tails, self.heads]).tolist(),
        }

    @classmethod
    def from_json(cls, d: dict) -> PAGraph:
        edges = np.asarray(d["edges"], dtype=np.int32).reshape(-1, 2)
        r = int(d["r"])
        g = cls(
            T=int(d["T"]),
            m=int(d["m"]),
            r=r,
            t_o=int(d["t_o"]),
            labels=(np.asarray(d["labels"], dtype=np.int64) - 1).astype(
                np.int8 if r < 128 else np.int64
            ),
            tails=edges[:, 0].copy(),
            heads=edges[:, 1].copy(),
            params_hash=d.get("params_hash", ""),
        )
        g.validate()
        return g

    def save(self, path: str | Path) -> None:
        path = Path(path)
        if path.suffix == ".json":
            path.write_text(json.dumps(self.to_json()))
        else:
            path.write_text(self.to_text())

    @classmethod
    def load(cls, path: str | Path) -> PAGraph:
        path = Path(path)
        text = path.read_text()
        if path.suffix == ".json":
            return cls.from_json(json.loads(text))
        return cls.from_text(text)

    def validate(self) -> None:
        """Check the structural invariants of an arrival-ordered graph."""
        if self.labels.shape != (self.T,):
            raise ValueError("label vector length must equal T")
        if self.tails.shape != (self.m * self.T,) or self.heads.shape != self.tails.shape:
            raise ValueError(f"expected {self.m * self.T} edges")
        if self.labels.size and not (0 <= self.labels.min() and self.labels.max() < self.r):
            raise ValueError("labels out of range")
        n0 = self.n_initial_edges
        init = np.concatenate([self.tails[:n0], self.heads[:n0]])
        if init.size and (init.min() < 1 or init.max() > self.t_o):
            raise ValueError("initial edges must join vertices in [1, t_o]")
        expected_tails = np.repeat(np.arange(self.t_o + 1, self.T + 1), self.m)
        if not np.array_equal(self.tails[n0:], expected_tails):
            raise ValueError("edges after t_o must be in arrival order, m per vertex")
        h = self.heads[n0:]
        if h.size and (h.min() < 1 or np.any(h >= self.tails[n0:])):
            raise ValueError("new edges must point to earlier vertices")


def _draw_labels(params: ModelParams, T: int, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(params.rho)
    cdf[-1] = 1.0
    u = rng.random(T)
    labels = np.searchsorted(cdf, u, side="right").astype(np.int64)
    labels = np.minimum(labels, params.r - 1)
    # zero-probability labels can only appear via the initial vertices
    if params.initial_labels is not None:
        labels[: params.t_o] = params.initial_labels
    return labels


def generate(params: ModelParams, T: int, rng_seed=0) -> PAGraph:
    """Simulate ``G_T``.

    ``rng_seed`` is an integer, a ``(master_seed, trial_index)`` pair, or a
    ``numpy.random.Generator``.
    """
    t_o = params.t_o
    if T < t_o:
        raise ValueError(f"T={T} must be at least t_o={t_o}")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else make_rng(rng_seed)
    labels = _draw_labels(params, T, rng)
    n_new = params.m * (T - t_o)
    u_class = rng.random(n_new)
    u_pick = rng.random(n_new)
    init = np.asarray(params.initial_graph.edges, dtype=np.int32).reshape(-1, 2)
    tails, heads = grow(
        labels,
        np.ascontiguousarray(params.beta, dtype=np.float64),
        params.m,
        t_o,
        np.ascontiguousarray(init[:, 0]),
        np.ascontiguousarray(init[:, 1]),
        u_class,
        u_pick,
    )
    return PAGraph(
        T=T,
        m=params.m,
        r=params.r,
        t_o=t_o,
        labels=labels.astype(np.int8 if params.r < 128 else np.int64),
        tails=tails,
        heads=heads,
        params_hash=params.digest(),
    )


def half_edge_counts(graph: PAGraph, t: int) -> np.ndarray:
    """Per-label half-edge counts C_t of G_t."""
    if not graph.t_o <= t <= graph.T:
        raise IndexError(f"t={t} outside [{graph.t_o}, {graph.T}]")
    n = graph.m * t
    lab = graph.labels.astype(np.int64)
    c = np.bincount(lab[graph.tails[:n] - 1], minlength=graph.r)
    c += np.bincount(lab[graph.heads[:n] - 1], minlength=graph.r)
    return c


def empirical_eta(graph: PAGraph, t: int) -> np.ndarray:
    """Fraction of half edges of each label in G_t."""
    return half_edge_counts(graph, t) / (2.0 * graph.m * t)


def degree_path(graph: PAGraph, tau: int) -> np.ndarray:
    """Degree of ``tau`` at times ``max(tau, t_o) .. T`` (array of length T - start + 1)."""
    graph._check_vertex(tau)
    start = max(tau, graph.t_o)
    jumps = np.bincount(graph.children(tau) - start, minlength=graph.T - start + 1)
    return graph.d0[tau - 1] + np.cumsum(jumps)
