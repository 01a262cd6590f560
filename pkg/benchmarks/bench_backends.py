"""Time the numba kernels against their pure-numpy/Python twins.

    python3 benchmarks/bench_backends.py [-T 20000] [--repeat 3]

Each pair is run on identical inputs; the script also checks that the two
outputs agree before reporting timings.
"""

import argparse
import time

import numpy as np

from pacomm.generator import generate
from pacomm.inference import joint_observations
from pacomm.kernels import generation, joint, mp, paths
from pacomm.message_passing import init_board
from pacomm.model import preset, solve_eta_star
from pacomm.rng import make_rng


def best_of(fn, repeat):
    out = None
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a), np.asarray(b)
    if a.dtype.kind == "f":
        return np.allclose(a, b, rtol=1e-9, atol=1e-9, equal_nan=True)
    return np.array_equal(a, b)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("-T", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    T = args.T

    params = preset("example1")
    rates = solve_eta_star(params)
    g = generate(params, T, 1)
    rng = make_rng(7)
    n_new = params.m * (T - params.t_o)
    init = np.asarray(params.initial_graph.edges, dtype=np.int32)
    grow_args = (
        g.labels.astype(np.int64),
        np.ascontiguousarray(params.beta),
        params.m,
        params.t_o,
        np.ascontiguousarray(init[:, 0]),
        np.ascontiguousarray(init[:, 1]),
        rng.random(n_new),
        rng.random(n_new),
    )
    path_args = (5, T, params.m, 0.5, rng.random(T - 5))

    sym = preset("sym2")
    srates = solve_eta_star(sym)
    gs = generate(sym, min(T, 10000), 2)
    V, times, Y, A, Ac = joint_observations(gs, range(1, 11), 20)
    worst = Y.sum(axis=0)[:, None] * srates.theta_uv.max(axis=1)[None, :]
    keep = np.all(1.0 - worst / (sym.m * times[:, None]) > 0, axis=1)
    joint_args = (
        Y.astype(float),
        np.ascontiguousarray(A),
        Ac.astype(float),
        times.astype(float),
        keep,
        srates.theta_uv,
        np.log(sym.rho),
        float(sym.m),
    )

    b = init_board(g, rates, params.rho)
    b.nu_t[:] = -rng.random(b.nu_t.shape)
    b.mu_t[:] = -rng.random(b.mu_t.shape)
    mp_args = (b.child, b.parent, b.totals(), b.nu_t, b.mu_t, b.seed, b.m_cp, b.m_pc, True, True)

    pairs = [
        ("grow", generation.grow_numba, generation.grow_python, grow_args),
        ("tilde_y", paths.tilde_y_numba, paths.tilde_y_python, path_args),
        ("joint_scores", joint.joint_scores_numba, joint.joint_scores_numpy, joint_args),
        ("mp_transform", mp.transform_numba, mp.transform_numpy, mp_args),
    ]
    print(f"{'kernel':<14} {'numba [s]':>10} {'numpy [s]':>10} {'speedup':>8}  agree")
    for name, fast, slow, a in pairs:
        fast(*a)  # compile
        tf, of = best_of(lambda: fast(*a), args.repeat)
        ts, os_ = best_of(lambda: slow(*a), 1 if name in ("grow", "tilde_y") else args.repeat)
        print(f"{name:<14} {tf:>10.4f} {ts:>10.4f} {ts / tf:>8.1f}  {same(of, os_)}")


if __name__ == "__main__":
    main()
