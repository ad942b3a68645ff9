"""Compare the compiled and NumPy kernels on batch strategy evaluation.

Usage: python benchmarks/bench_kernels.py [--states S] [--horizon N] [--strategies M]
"""
import argparse
import time

import numpy as np

from mdpsense._backend import available_backends
from mdpsense.random_models import random_direction, random_mdm


def _best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def run(S, N, M, repeat=3, seed=0):
    rng = np.random.default_rng(seed)
    mdm = random_mdm(rng, N, S, 4)
    Q = random_direction(rng, mdm)
    c = mdm.compiled
    D = np.ascontiguousarray(mdm.direction_matrix(Q) - c.P)
    choices = np.ascontiguousarray((rng.random((M, N, S)) * c.counts).astype(np.intp))
    results = {}
    for mod in available_backends():
        t_single, _ = _best_of(lambda: mod.optimal_values(c.P, c.r, c.rN, c.offsets, c.counts, c.sign), repeat)
        t_batch, out = _best_of(lambda: mod.batch_initial_derivatives(c.P, D, c.r, c.rN, c.offsets, choices), repeat)
        results[mod.BACKEND] = (t_single, t_batch, out)
    return results


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--states", type=int, nargs="+", default=[4, 16, 64])
    parser.add_argument("--horizon", type=int, default=4)
    parser.add_argument("--strategies", type=int, default=2000)
    args = parser.parse_args()
    print(f"{'S':>4} {'backend':>8} {'bellman ms':>11} {'batch ms':>10} {'max |diff|':>11}")
    for S in args.states:
        res = run(S, args.horizon, args.strategies)
        ref = res["numpy"][2]
        for name, (t1, t2, out) in res.items():
            diff = max(float(np.max(np.abs(a - b))) for a, b in zip(out, ref))
            print(f"{S:>4} {name:>8} {1e3 * t1:>11.3f} {1e3 * t2:>10.2f} {diff:>11.2e}")


if __name__ == "__main__":
    main()
