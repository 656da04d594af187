"""Compare the compiled and NumPy round kernels.

    python benchmarks/bench_kernels.py [--n 1024 4096] [--rounds 300]

Prints per-round microseconds of the step and stability kernels and the wall
time of a full run to stabilization under each backend.
"""
import argparse
import time

import numpy as np

from beepmis import kernels
from beepmis.experiments import graph_for
from beepmis.protocol import LmaxPolicy, ProtocolConfig, assign_lmax, initial_levels
from beepmis.sim import run_until_stable


def time_kernels(impl, g, lmax, levels, code, rounds):
    t0 = time.perf_counter()
    lv = levels
    for r in range(1, rounds + 1):
        lv = impl.step(g.indptr, g.indices, lv, lmax, code, 7, r)[0]
    t_step = (time.perf_counter() - t0) / rounds
    t0 = time.perf_counter()
    for _ in range(rounds):
        impl.stable_masks(g.indptr, g.indices, levels, lmax, code)
    t_stable = (time.perf_counter() - t0) / rounds
    return t_step, t_stable


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, nargs="+", default=[256, 1024, 4096])
    ap.add_argument("--rounds", type=int, default=300)
    ap.add_argument("--runs", type=int, default=20)
    args = ap.parse_args()
    backends = ["numpy"] + (["cython"] if kernels.compiled is not None else [])
    print(f"{'graph':<14}{'n':>6}{'backend':>9}{'step us':>10}{'stable us':>11}{'run ms':>9}")
    for fam in ("CYCLE", "GNP", "CLIQUE"):
        for n in args.n:
            if fam == "CLIQUE" and n > 1024:
                continue
            g = graph_for(fam, n, 0, avg_degree=8)
            cfg = ProtocolConfig("V1", LmaxPolicy("GLOBAL_MAX_DEGREE", 15))
            lmax = assign_lmax(g, cfg.policy)
            levels = initial_levels(g, lmax, "UNIFORM_RANDOM", 0).levels
            for name in backends:
                t_step, t_stable = time_kernels(kernels.get_backend(name), g, lmax, levels, 1, args.rounds)
                prev = kernels.set_backend(name)
                t0 = time.perf_counter()
                for s in range(args.runs):
                    run_until_stable(g, cfg, seed=s)
                t_run = (time.perf_counter() - t0) / args.runs
                kernels.set_backend(prev)
                print(f"{fam:<14}{n:>6}{name:>9}{t_step * 1e6:>10.1f}{t_stable * 1e6:>11.1f}{t_run * 1e3:>9.2f}")


if __name__ == "__main__":
    np.seterr(all="ignore")
    main()
