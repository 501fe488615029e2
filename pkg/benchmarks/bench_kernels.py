"""Compare the compiled and numpy kernels on the same workload.

    python3 benchmarks/bench_kernels.py --walkers 1 8 --reps 200 --steps 20000
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from reinforced_walks._backend import get_kernels
from reinforced_walks.rng import GRAPH, WALK, stream_key, stream_keys


def time_simulate(kern, n_walkers: int, reps: int, steps: int, repeat: int) -> tuple[float, np.ndarray]:
    z0 = np.full((reps, n_walkers), 0.5)
    rates = 1.0 / (np.arange(steps) + 2.0) ** 0.75
    keys = stream_keys(1, np.arange(reps), WALK)
    grid = np.array([steps], dtype=np.int64)
    best = float("inf")
    for _ in range(repeat):
        out = np.zeros((reps, 1, n_walkers))
        t = time.perf_counter()
        kern.simulate(z0, rates, 1.0, 0.5, 0.5, keys, 0, grid, out, False)
        best = min(best, time.perf_counter() - t)
    return best, out


def time_graph(kern, n_max: int, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        deg = np.zeros(n_max, dtype=np.int64)
        md = np.zeros(n_max - 1, dtype=np.int64)
        t = time.perf_counter()
        kern.pa_sequence(0.0, n_max, stream_key(1, 0, GRAPH), deg, md)
        best = min(best, time.perf_counter() - t)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--walkers", type=int, nargs="+", default=[1, 2, 8])
    ap.add_argument("--reps", type=int, default=200)
    ap.add_argument("--steps", type=int, default=20000)
    ap.add_argument("--graph-size", type=int, default=100000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    try:
        fast = get_kernels("cython")
    except ImportError:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation` first")
    slow = get_kernels("python")

    print(f"{'workload':<22}{'cython ns/step':>16}{'python ns/step':>16}{'speedup':>10}  identical")
    for nw in args.walkers:
        work = nw * args.reps * args.steps
        tf, of = time_simulate(fast, nw, args.reps, args.steps, args.repeat)
        ts, os_ = time_simulate(slow, nw, args.reps, args.steps, args.repeat)
        print(f"{'walk N=' + str(nw):<22}{tf / work * 1e9:>16.2f}{ts / work * 1e9:>16.2f}{ts / tf:>10.1f}  {np.array_equal(of, os_)}")
    n = args.graph_size
    tf, ts = time_graph(fast, n, args.repeat), time_graph(slow, n, args.repeat)
    print(f"{'PA graph n=' + str(n):<22}{tf / n * 1e9:>16.2f}{ts / n * 1e9:>16.2f}{ts / tf:>10.1f}")


if __name__ == "__main__":
    main()
