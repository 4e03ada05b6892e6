#!/usr/bin/env python3
"""Compare the compiled kernel against the pure-Python fallback.

Times the batch solver's full iteration loop (the hot path of every
Monte-Carlo sweep) across horizon lengths and dimensions, and checks that
both backends land on the same pose.

Usage: python benchmarks/backend_bench.py [--trials N] [--iters N]
"""

import argparse
import time

import numpy as np

import rangealign as ra
from rangealign.two_node import StoppingRule, ppa_solve


def time_backend(backend, dataset, init, iters, trials):
    stop = StoppingRule(max_iters=iters)
    best = float("inf")
    state = None
    for _ in range(trials):
        start = time.perf_counter()
        state = ppa_solve(dataset, init=init, stop=stop, backend=backend)
        best = min(best, time.perf_counter() - start)
    return best, state


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=5,
                        help="repetitions per cell (best time kept)")
    parser.add_argument("--iters", type=int, default=1000)
    args = parser.parse_args()

    backends = ra.available_backends()
    print(f"backends: {', '.join(backends)} (default {ra.default_backend()})")
    print(f"{'dim':>4} {'tbar':>6} " +
          " ".join(f"{b + ' (ms)':>14}" for b in backends) +
          f" {'speedup':>9} {'max pose dev':>13}")
    for dim in (2, 3):
        for tbar in (10, 20, 40, 100, 400):
            scenario = ra.Scenario(dim=dim, tbar=tbar, snr_db=20.0, seed=7)
            dataset, _ = ra.generate_two_node(scenario)
            init = ra.Pose.random(dim, np.random.default_rng(1))
            times, states = {}, {}
            for backend in backends:
                times[backend], states[backend] = time_backend(
                    backend, dataset, init, args.iters, args.trials)
            row = f"{dim:>4} {tbar:>6} "
            row += " ".join(f"{1e3 * times[b]:>14.2f}" for b in backends)
            if len(backends) == 2:
                speedup = times["python"] / times["cython"]
                dev = max(
                    np.abs(states["python"].pose.rotation
                           - states["cython"].pose.rotation).max(),
                    np.abs(states["python"].pose.translation
                           - states["cython"].pose.translation).max(),
                )
                row += f" {speedup:>8.1f}x {dev:>13.2e}"
            print(row)


if __name__ == "__main__":
    main()
