"""Time the numba kernels against the pure-numpy fallback.

    python3 benchmarks/bench_backends.py [--replicates 100] [--steps 1000] [--repeat 3]

The first numba call compiles (or loads the on-disk cache); it is run once
before timing. Each row also reports the largest difference between the two
backends' outputs.
"""

import argparse
import dataclasses
import time

import numpy as np

from epictl._accel import HAS_NUMBA
from epictl.experiments import preset_table1
from epictl.network import DEFAULT_LEVEL_COUNTS, generate_er, run_updates
from epictl.sim import simulate_ensemble


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_ensemble(mode, n_rep, n_steps, repeat):
    cfg = preset_table1()
    sim = dataclasses.replace(cfg.sim, n_replicates=n_rep, n_steps=n_steps, control_mode=mode)
    results = {}
    for backend in ("numba", "numpy"):
        run = lambda: simulate_ensemble(cfg.params, sim, cfg.x0, backend=backend).states
        run()
        results[backend] = best_of(run, repeat)
    diff = float(np.max(np.abs(results["numba"][1] - results["numpy"][1])))
    return results["numba"][0], results["numpy"][0], diff


def bench_network(n_updates, repeat):
    base = generate_er(100, 0.06, DEFAULT_LEVEL_COUNTS, seed=1)
    results = {}
    for backend in ("numba", "numpy"):
        run = lambda: run_updates(base.copy(), n_updates, 0.9, backend=backend).modularity
        run()
        results[backend] = best_of(run, repeat)
    diff = float(np.max(np.abs(results["numba"][1] - results["numpy"][1])))
    return results["numba"][0], results["numpy"][0], diff


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--replicates", type=int, default=100)
    ap.add_argument("--steps", type=int, default=1000)
    ap.add_argument("--updates", type=int, default=1000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not HAS_NUMBA:
        print("numba is not installed; only the numpy backend is available")
        return

    rows = [
        (f"ensemble fixed {args.replicates}x{args.steps}",
         *bench_ensemble("fixed", args.replicates, args.steps, args.repeat)),
        (f"ensemble feedback {args.replicates}x{args.steps}",
         *bench_ensemble("optimal_feedback", args.replicates, args.steps, args.repeat)),
        (f"network {args.updates} updates, n=100", *bench_network(args.updates, args.repeat)),
    ]
    print(f"{'case':<34}{'numba s':>10}{'numpy s':>10}{'speed-up':>10}{'max diff':>12}")
    for name, t_nb, t_np, diff in rows:
        print(f"{name:<34}{t_nb:>10.4f}{t_np:>10.4f}{t_np / t_nb:>10.1f}{diff:>12.1e}")


if __name__ == "__main__":
    main()
