"""Command-line interface: ``pacomm <verb> ...``.

Exit codes: 0 success, 1 usage error, 2 runtime error, 3 finished with
non-convergence (or per-trial failure) warnings.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import harness
from .generator import PAGraph, generate
from .inference import estimate_all, joint_estimate, lambda_C_all, lambda_C_trimmed, lambda_DT_all
from .message_passing import MPConfig, run_mp
from .model import PRESETS, load_params, preset, solve_eta_star
from .processes import bhattacharyya, f_Z_C, f_Z_DT

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_WARN = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_params(p, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--preset", choices=PRESETS, help="named parameter set")
    g.add_argument("--params", type=Path, help="JSON model parameter file")


def _params(args):
    return preset(args.preset) if args.preset else load_params(args.params)


def _out(path):
    return open(path, "w", newline="") if path else nullcontext(sys.stdout)


def _llv_cells(row):
    return ["-inf" if math.isinf(x) else f"{x:.10g}" for x in row]


def _warn(msg):
    print(f"warning: {msg}", file=sys.stderr)


def _load_graph(args, params):
    g = PAGraph.load(args.graph)
    if g.params_hash and g.params_hash != params.digest():
        _warn("graph was generated with different model parameters")
    if g.r != params.r or g.m != params.m:
        raise UsageError("graph and parameters disagree on r or m")
    return g


def cmd_generate(args):
    params = _params(args)
    g = generate(params, args.T, args.seed)
    g.save(args.output)
    return EXIT_OK


def cmd_rates(args):
    params = _params(args)
    rates = solve_eta_star(params)
    text = json.dumps(rates.to_dict(), indent=1)
    if args.output:
        Path(args.output).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def cmd_infer(args):
    params = _params(args)
    g = _load_graph(args, params)
    rates = solve_eta_star(params)
    alg = args.algorithm
    if alg == "DT":
        llv = lambda_DT_all(g, rates)
    elif alg == "C":
        llv = lambda_C_trimmed(g, rates)
    else:
        llv = lambda_C_all(g, rates, "approx")
    est = estimate_all(g, rates, params.rho, alg)
    with _out(args.output) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "true_label", "est_label"] + [f"llv_{v + 1}" for v in range(g.r)])
        for i in range(g.T):
            row = llv[i]
            w.writerow([i + 1, int(g.labels[i]) + 1, int(est[i]) + 1] + _llv_cells(row - row.max()))
    return EXIT_OK


def _parse_vertices(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return out


def cmd_joint(args):
    params = _params(args)
    g = _load_graph(args, params)
    rates = solve_eta_star(params)
    try:
        V = _parse_vertices(args.vertices)
    except ValueError as exc:
        raise UsageError(f"bad vertex list {args.vertices!r}") from exc
    res = joint_estimate(g, V, rates, params.rho, args.t_bar, args.prior)
    with _out(args.output) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "true_label", "est_label"])
        for tau, lab in zip(res.vertices, res.labels):
            w.writerow([tau, int(g.labels[tau - 1]) + 1, int(lab) + 1])
    if res.dropped_times.size:
        print(f"dropped times: {' '.join(map(str, res.dropped_times.tolist()))}", file=sys.stderr)
    return EXIT_OK


def read_seeds(path) -> dict[int, int]:
    """Parse ``vertex:label`` lines (1-indexed labels) into ``{vertex: label - 1}``."""
    seeds = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            v, lab = line.split(":")
            seeds[int(v)] = int(lab) - 1
        except ValueError as exc:
            raise UsageError(f"{path}:{n}: expected 'vertex:label', got {line!r}") from exc
    return seeds


def cmd_mp(args):
    params = _params(args)
    g = _load_graph(args, params)
    rates = solve_eta_star(params)
    seeds = read_seeds(args.seeds) if args.seeds else {}
    config = MPConfig(
        schedule=args.schedule,
        balancing=args.balance,
        termination_threshold=args.threshold,
        max_iterations=args.max_iters,
        termination=args.termination,
        seeds=seeds,
    )
    res = run_mp(g, rates, params.rho, config)
    with _out(args.output) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "true_label", "est_label"] + [f"Lambda_{v + 1}" for v in range(g.r)])
        for i in range(g.T):
            w.writerow([i + 1, int(g.labels[i]) + 1, int(res.labels[i]) + 1] + _llv_cells(res.posteriors[i]))
    trace = open(args.trace, "w", newline="") if args.trace else nullcontext(sys.stderr)
    with trace as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "phase", "delta"])
        for it, phase, delta in res.trace:
            w.writerow([it, phase, f"{delta:.10g}"])
    if not res.converged:
        _warn(f"message passing did not converge within {args.max_iters} iterations")
        return EXIT_WARN
    return EXIT_OK


def cmd_bounds(args):
    params = _params(args)
    if params.r != 2:
        raise UsageError("bounds are defined for two labels")
    rates = solve_eta_star(params)
    th = rates.theta_v
    pi = np.prod(params.rho)
    with _out(args.output) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            ["s_bar", "f_C", "f_C_stderr", "f_DT", "rho_BC_half", "rho_BDT_half", "lower_C", "upper_C"]
        )
        for s in args.s_bar:
            fc, se = f_Z_C(params.rho, th, params.m, s, args.trials, (args.seed, 0))
            fdt = f_Z_DT(params.rho, th, params.m, s)
            bc = bhattacharyya("C", th[0], th[1], params.m, s)
            bdt = bhattacharyya("DT", th[0], th[1], params.m, s)
            cells = [s, fc, se, fdt, bc / 2, bdt / 2, pi * bc**2, math.sqrt(pi) * bc]
            w.writerow([f"{x:.10g}" for x in cells])
    return EXIT_OK


def cmd_experiment(args):
    if args.config:
        d = json.loads(Path(args.config).read_text())
        base = Path(args.config).parent
    else:
        d = {}
        base = Path(".")
    if args.preset:
        d.pop("params_file", None)
        d.pop("params", None)
        d["preset"] = args.preset
    elif args.params:
        d.pop("preset", None)
        d.pop("params", None)
        d["params_file"] = str(args.params.resolve())
    for key in ("T", "trials", "bin_factor"):
        val = getattr(args, key)
        if val is not None:
            d[key] = val
    if args.seed is not None:
        d["master_seed"] = args.seed
    if args.algorithms:
        d["algorithms"] = args.algorithms.split(",")
    if args.csv:
        d["csv_path"] = str(args.csv)
    if args.json:
        d["json_path"] = str(args.json)
    missing = [k for k in ("T", "trials") if k not in d]
    if missing or not ({"preset", "params", "params_file"} & d.keys()):
        raise UsageError("experiment needs model parameters, T and trials (flags or --config)")
    try:
        config = harness.ExperimentConfig.from_dict(d, base_dir=base)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    report = harness.run_experiment(config, args.workers)
    if not config.csv_path:
        sys.stdout.write(harness.report_csv(report))
    for a in report.algorithms:
        mean = float(np.mean(report.per_graph[a])) if report.per_graph[a] else float("nan")
        print(f"{a}: mean per-graph error {mean:.4f}", file=sys.stderr)
    status = EXIT_OK
    for trial, alg, msg in report.failures:
        _warn(f"trial {trial} {alg} failed: {msg}")
        status = EXIT_WARN
    for a, n in report.nonconverged.items():
        if n:
            _warn(f"{a} did not converge in {n} trial(s)")
            status = EXIT_WARN
    return status


def cmd_bins(args):
    try:
        bins = harness.geometric_bins(args.T, args.factor)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    for lo, hi in bins:
        print(lo, hi)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="pacomm", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="simulate a labeled graph")
    _add_params(p)
    p.add_argument("-T", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", type=Path, required=True, help=".json or text graph file")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("rates", help="solve for limiting half-edge fractions and growth rates")
    _add_params(p)
    p.add_argument("-o", "--output", type=Path)
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("infer", help="per-vertex labels from single-vertex likelihoods")
    _add_params(p)
    p.add_argument("--graph", type=Path, required=True)
    p.add_argument("--algorithm", choices=("DT", "C", "C-approx"), default="C")
    p.add_argument("-o", "--output", type=Path)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("joint", help="joint labels of a small vertex set")
    _add_params(p)
    p.add_argument("--graph", type=Path, required=True)
    p.add_argument("--vertices", default="1-10", help="e.g. '1-10' or '1,4,7'")
    p.add_argument("--t-bar", type=int, default=20)
    p.add_argument("--prior", action="store_true", help="add the label prior to the score")
    p.add_argument("-o", "--output", type=Path)
    p.set_defaults(func=cmd_joint)

    p = sub.add_parser("mp", help="belief propagation over the whole graph")
    _add_params(p)
    p.add_argument("--graph", type=Path, required=True)
    p.add_argument("--schedule", choices=("synchronous", "two_phase"), default="synchronous")
    p.add_argument("--balance", action="store_true")
    p.add_argument("--seeds", type=Path, help="file of vertex:label lines")
    p.add_argument("--threshold", type=float, default=1.0)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--termination", choices=("lambda", "messages"), default="lambda")
    p.add_argument("-o", "--output", type=Path)
    p.add_argument("--trace", type=Path, help="convergence trace CSV (default stderr)")
    p.set_defaults(func=cmd_mp)

    p = sub.add_parser("bounds", help="idealized error functions and Bhattacharyya bounds")
    _add_params(p)
    p.add_argument("--s-bar", type=float, nargs="+", default=[math.log(10), math.log(100)])
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", type=Path)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("experiment", help="Monte Carlo error curves")
    p.add_argument("--config", type=Path, help="JSON experiment config")
    _add_params(p, required=False)
    p.add_argument("-T", dest="T", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--algorithms", help="comma list from " + ",".join(harness.ALGORITHMS))
    p.add_argument("--bin-factor", dest="bin_factor", type=float)
    p.add_argument("--workers", type=int, help="default from PACOMM_WORKERS")
    p.add_argument("--csv", type=Path)
    p.add_argument("--json", type=Path)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("bins", help="print geometric arrival-time bins")
    p.add_argument("-T", dest="T", type=int, required=True)
    p.add_argument("--factor", type=float, default=1.2)
    p.set_defaults(func=cmd_bins)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pacomm {args.verb}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"pacomm {args.verb}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
