"""Monte Carlo experiments: trials, symmetry-adjusted error counts and binning."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .generator import generate
from .inference import estimate_all, joint_estimate
from .message_passing import MPConfig, run_mp
from .model import ModelParams, load_params, preset, preset_symmetry, solve_eta_star
from .rng import trial_rng

ALGORITHMS = ("DT", "C", "C-approx", "joint", "joint-partial", "MP")
CSV_COLUMNS = ("bin_lo", "bin_hi", "algorithm", "error_rate", "n", "stderr")
MIN_BIN_SAMPLES = 30


def geometric_bins(T: int, factor: float) -> list[tuple[int, int]]:
    """Partition ``[1, T]`` at the points ``ceil(factor**k)``.

    >>> geometric_bins(10, 2)
    [(1, 1), (2, 3), (4, 7), (8, 10)]
    """
    if not factor > 1:
        raise ValueError("binning factor must be > 1")
    if T < 1:
        raise ValueError("T must be >= 1")
    starts = []
    k = 0
    while True:
        p = math.ceil(factor**k)
        if p > T:
            break
        if not starts or p != starts[-1]:
            starts.append(p)
        k += 1
    ends = [s - 1 for s in starts[1:]] + [T]
    return list(zip(starts, ends))


@dataclass
class LabelErrors:
    """Per-vertex errors after the best relabeling from a symmetry group."""

    errors: np.ndarray
    permutation: tuple[int, ...]
    big: np.ndarray | None = None
    small: np.ndarray | None = None

    @property
    def error_rate(self) -> float:
        return float(self.errors.mean()) if self.errors.size else 0.0

    @property
    def n_errors(self) -> int:
        return int(self.errors.sum())


def error_metrics(true_labels, est_labels, symmetry=None, partition=None, rng=None) -> LabelErrors:
    """Count errors after applying the error-minimizing label permutation.

    ``symmetry`` is a list of permutations of ``range(r)`` (identity included);
    ties between minimizers are broken uniformly at random with ``rng``.
    ``partition`` (a list of label groups) splits errors into big ones, across
    groups, and small ones, within a group.
    """
    true_labels = np.asarray(true_labels, dtype=np.int64)
    est_labels = np.asarray(est_labels, dtype=np.int64)
    if true_labels.shape != est_labels.shape:
        raise ValueError("label vectors differ in length")
    r = int(max(true_labels.max(initial=0), est_labels.max(initial=0))) + 1
    if symmetry is None:
        symmetry = [tuple(range(r))]
    perms = [np.asarray(p, dtype=np.int64) for p in symmetry]
    counts = np.array([np.count_nonzero(p[est_labels] != true_labels) for p in perms])
    best = np.flatnonzero(counts == counts.min())
    if best.size > 1:
        rng = rng if rng is not None else np.random.default_rng(0)
        pick = int(best[rng.integers(best.size)])
    else:
        pick = int(best[0])
    mapped = perms[pick][est_labels]
    errors = mapped != true_labels
    big = small = None
    if partition is not None:
        group = np.full(max(r, max(max(g) for g in partition) + 1), -1)
        for i, g in enumerate(partition):
            group[list(g)] = i
        big = group[mapped] != group[true_labels]
        small = errors & ~big
    return LabelErrors(errors=errors, permutation=tuple(int(x) for x in perms[pick]), big=big, small=small)


def same_community_errors(true_labels, est_labels, anchor: int = 0) -> np.ndarray:
    """Whether each vertex is wrongly judged to share (or not) the anchor's label."""
    t = np.asarray(true_labels)
    e = np.asarray(est_labels)
    return (t == t[anchor]) != (e == e[anchor])


@dataclass
class ExperimentConfig:
    params: ModelParams
    T: int
    trials: int
    master_seed: int = 0
    algorithms: tuple[str, ...] = ("DT", "C")
    options: dict = field(default_factory=dict)
    bin_factor: float = 1.2
    symmetry: list | None = None
    partition: list | None = None
    csv_path: str | None = None
    json_path: str | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trial count must be >= 1")
        if not self.bin_factor > 1:
            raise ValueError("binning factor must be > 1")
        if self.T < self.params.t_o:
            raise ValueError(f"T must be at least t_o={self.params.t_o}")
        self.algorithms = tuple(self.algorithms)
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {a!r}; choose from {ALGORITHMS}")
        if self.symmetry is None:
            self.symmetry = preset_symmetry(self.params.name, self.params.r)

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | Path = ".") -> ExperimentConfig:
        d = dict(d)
        if "preset" in d:
            params = preset(d.pop("preset"))
        elif "params_file" in d:
            params = load_params(Path(base_dir) / d.pop("params_file"))
        elif "params" in d:
            params = ModelParams.from_dict(d.pop("params"))
        else:
            raise ValueError("config needs one of 'preset', 'params_file' or 'params'")
        if d.get("partition") is not None:
            d["partition"] = [[int(x) - 1 for x in g] for g in d["partition"]]
        if d.get("symmetry") is not None:
            d["symmetry"] = [tuple(int(x) - 1 for x in p) for p in d["symmetry"]]
        return cls(params=params, **d)

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), base_dir=path.parent)


@dataclass
class TrialResult:
    trial: int
    errors: dict
    evaluated: dict
    big: dict
    small: dict
    fraction: dict
    nonconverged: dict
    failures: list


def _mp_config(opts: dict, labels: np.ndarray) -> MPConfig:
    n_seeds = int(opts.get("n_seeds", 0))
    seeds = {i + 1: int(labels[i]) for i in range(min(n_seeds, labels.size))}
    return MPConfig(
        schedule=opts.get("schedule", "synchronous"),
        balancing=bool(opts.get("balancing", False)),
        termination_threshold=float(opts.get("threshold", 1.0)),
        max_iterations=int(opts.get("max_iterations", 200)),
        termination=opts.get("termination", "lambda"),
        balance_nu=bool(opts.get("balance_nu", True)),
        balance_mu=bool(opts.get("balance_mu", True)),
        seeds=seeds,
    )


def _estimate(alg, graph, rates, params, opts):
    """Return ``(labels over evaluated vertices, vertex mask, converged)``."""
    T = graph.T
    if alg in ("DT", "C", "C-approx"):
        return estimate_all(graph, rates, params.rho, alg), np.ones(T, bool), True
    if alg == "MP":
        res = run_mp(graph, rates, params.rho, _mp_config(opts, graph.labels))
        return res.labels, np.ones(T, bool), res.converged
    k = min(int(opts.get("k", 10)), T)
    t_bar = opts.get("t_bar", 20)
    use_prior = bool(opts.get("use_prior", False))
    if alg == "joint":
        est = joint_estimate(graph, range(1, k + 1), rates, params.rho, t_bar, use_prior).labels
    else:
        # only the relation to vertex 1 is scored: encode it as same/other label
        est = np.zeros(k, dtype=np.int64)
        for tau in range(2, k + 1):
            pair = joint_estimate(graph, (1, tau), rates, params.rho, t_bar, use_prior).labels
            est[tau - 1] = int(pair[1] != pair[0])
    mask = np.zeros(T, bool)
    mask[:k] = True
    return np.asarray(est), mask, True


def _run_trial(config: ExperimentConfig, rates, trial: int) -> TrialResult:
    params = config.params
    graph = generate(params, config.T, (config.master_seed, trial))
    tie_rng = trial_rng(config.master_seed, trial, 1)
    out = TrialResult(trial, {}, {}, {}, {}, {}, {}, [])
    for alg in config.algorithms:
        try:
            est, mask, conv = _estimate(alg, graph, rates, params, config.options.get(alg, {}))
        except Exception as exc:  # recorded, the experiment goes on
            out.failures.append((trial, alg, f"{type(exc).__name__}: {exc}"))
            continue
        truth = graph.labels[mask]
        if alg.startswith("joint"):
            err = same_community_errors(truth, est)
            mask = mask.copy()
            mask[0] = False
            err = err[1:]
            big = small = None
        else:
            le = error_metrics(truth, est, config.symmetry, config.partition, tie_rng)
            err, big, small = le.errors, le.big, le.small
        full = np.zeros(config.T, np.int64)
        full[mask] = err
        out.errors[alg] = full
        out.evaluated[alg] = mask.astype(np.int64)
        out.fraction[alg] = float(err.mean()) if err.size else 0.0
        out.nonconverged[alg] = 0 if conv else 1
        if big is not None:
            out.big[alg] = np.zeros(config.T, np.int64)
            out.big[alg][mask] = big
            out.small[alg] = np.zeros(config.T, np.int64)
            out.small[alg][mask] = small
    return out


def _trial_worker(args):
    config, rates, trial = args
    return _run_trial(config, rates, trial)


@dataclass
class ErrorReport:
    """Aggregated error counts across trials.

    ``vertex_errors[a][i]`` counts trials in which vertex ``i + 1`` was
    misclassified by algorithm ``a``; ``vertex_n`` counts trials in which it
    was scored.
    """

    T: int
    bins: list
    algorithms: tuple
    vertex_errors: dict
    vertex_n: dict
    per_graph: dict
    big: dict = field(default_factory=dict)
    small: dict = field(default_factory=dict)
    nonconverged: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def bin_table(self, alg: str):
        """Per-bin ``(errors, n, rate, stderr)`` arrays."""
        e = self.vertex_errors[alg]
        n = self.vertex_n[alg]
        errs = np.array([e[lo - 1 : hi].sum() for lo, hi in self.bins], dtype=np.int64)
        ns = np.array([n[lo - 1 : hi].sum() for lo, hi in self.bins], dtype=np.int64)
        with np.errstate(invalid="ignore", divide="ignore"):
            rate = errs / ns
            se = np.sqrt(rate * (1 - rate) / ns)
        return errs, ns, rate, se

    def vertex_rate(self, alg: str) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.vertex_errors[alg] / self.vertex_n[alg]

    def flagged_bins(self, alg: str) -> list:
        """Bins scored fewer than 30 times (but at least once)."""
        _, ns, _, _ = self.bin_table(alg)
        return [b for b, n in zip(self.bins, ns) if 0 < n < MIN_BIN_SAMPLES]

    def rows(self):
        for alg in self.algorithms:
            if alg not in self.vertex_errors:
                continue
            _, ns, rate, se = self.bin_table(alg)
            for (lo, hi), n, p, s in zip(self.bins, ns, rate, se):
                yield lo, hi, alg, float(p), int(n), float(s)

    def to_dict(self) -> dict:
        arr = lambda d: {k: np.asarray(v).tolist() for k, v in d.items()}  # noqa: E731
        return {
            "T": self.T,
            "bins": [list(b) for b in self.bins],
            "algorithms": list(self.algorithms),
            "vertex_errors": arr(self.vertex_errors),
            "vertex_n": arr(self.vertex_n),
            "per_graph": {k: list(v) for k, v in self.per_graph.items()},
            "big": arr(self.big),
            "small": arr(self.small),
            "nonconverged": dict(self.nonconverged),
            "failures": [list(f) for f in self.failures],
            "flagged_bins": {a: [list(b) for b in self.flagged_bins(a)] for a in self.vertex_errors},
        }

    @classmethod
    def from_dict(cls, d: dict) -> ErrorReport:
        arr = lambda x: {k: np.asarray(v, dtype=np.int64) for k, v in x.items()}  # noqa: E731
        return cls(
            T=int(d["T"]),
            bins=[tuple(b) for b in d["bins"]],
            algorithms=tuple(d["algorithms"]),
            vertex_errors=arr(d["vertex_errors"]),
            vertex_n=arr(d["vertex_n"]),
            per_graph={k: [float(x) for x in v] for k, v in d["per_graph"].items()},
            big=arr(d.get("big", {})),
            small=arr(d.get("small", {})),
            nonconverged={k: int(v) for k, v in d.get("nonconverged", {}).items()},
            failures=[tuple(f) for f in d.get("failures", [])],
        )

    def __eq__(self, other):
        if not isinstance(other, ErrorReport):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def _aggregate(config: ExperimentConfig, results: list) -> ErrorReport:
    T = config.T
    algs = config.algorithms
    errs = {a: np.zeros(T, np.int64) for a in algs}
    ns = {a: np.zeros(T, np.int64) for a in algs}
    big: dict = {}
    small: dict = {}
    per_graph = {a: [] for a in algs}
    nonconv = {a: 0 for a in algs}
    failures = []
    for res in sorted(results, key=lambda r: r.trial):
        failures.extend(res.failures)
        for a in res.errors:
            errs[a] += res.errors[a]
            ns[a] += res.evaluated[a]
            per_graph[a].append(res.fraction[a])
            nonconv[a] += res.nonconverged[a]
            if a in res.big:
                big.setdefault(a, np.zeros(T, np.int64))
                small.setdefault(a, np.zeros(T, np.int64))
                big[a] += res.big[a]
                small[a] += res.small[a]
    return ErrorReport(
        T=T,
        bins=geometric_bins(T, config.bin_factor),
        algorithms=algs,
        vertex_errors=errs,
        vertex_n=ns,
        per_graph=per_graph,
        big=big,
        small=small,
        nonconverged=nonconv,
        failures=failures,
    )


def default_workers() -> int:
    return max(1, int(os.environ.get("PACOMM_WORKERS", "1")))


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> ErrorReport:
    """Run all trials and aggregate; results do not depend on ``workers``."""
    workers = default_workers() if workers is None else max(1, int(workers))
    rates = solve_eta_star(config.params)
    jobs = [(config, rates, t) for t in range(config.trials)]
    if workers == 1 or config.trials == 1:
        results = [_trial_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial_worker, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    report = _aggregate(config, results)
    if config.csv_path:
        export(report, "csv", config.csv_path)
    if config.json_path:
        export(report, "json", config.json_path)
    return report


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.10g}"


def report_csv(report: ErrorReport | None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    if report is not None:
        for lo, hi, alg, p, n, s in report.rows():
            w.writerow([lo, hi, alg, _fmt(p), n, _fmt(s)])
    return buf.getvalue()


def export(report: ErrorReport | None, fmt: str, path: str | Path) -> None:
    """Write the per-bin table (``csv``) or the full report (``json``)."""
    path = Path(path)
    try:
        if fmt == "csv":
            path.write_text(report_csv(report))
        elif fmt == "json":
            if report is None:
                raise ValueError("cannot write an empty report as json")
            path.write_text(json.dumps(report.to_dict(), indent=1))
        else:
            raise ValueError(f"format must be 'csv' or 'json', got {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def load_report(path: str | Path) -> ErrorReport:
    return ErrorReport.from_dict(json.loads(Path(path).read_text()))
