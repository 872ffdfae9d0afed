"""Compare the compiled integrator kernel against the pure NumPy fallback.

Runs the two packaged scenarios on every available backend and reports wall
time per run plus the largest cross-backend state deviation. Usage:

    python3 benchmarks/bench_backends.py [--repeat 3] [--t-end 100]
"""

import argparse
import dataclasses
import time

import numpy as np

from gridreg.backends import available_backends
from gridreg.config import load_scenario, packaged_scenario_path
from gridreg.sim import simulate


def bench(scenario, backend, repeat):
    best = float("inf")
    traj = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        traj = simulate(scenario, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, traj


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3, help="runs per measurement (best-of)")
    ap.add_argument("--t-end", type=float, default=None, help="override the horizon")
    args = ap.parse_args()

    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    for name in ("scenario1", "scenario2"):
        sc = load_scenario(packaged_scenario_path(name))
        if args.t_end is not None:
            sc = dataclasses.replace(sc, t_end=args.t_end)
        steps = int(round(sc.t_end / sc.dt))
        print(f"\n{name}: {steps} steps of dt={sc.dt:g} over {sc.t_end:g}s")
        times, trajs = {}, {}
        for backend in backends:
            seconds, traj = bench(sc, backend, args.repeat)
            times[backend] = seconds
            trajs[backend] = traj
            rate = steps / seconds / 1e3
            print(f"  {backend:>8}: {seconds * 1e3:8.1f} ms  ({rate:7.1f} ksteps/s)")
        if "compiled" in trajs and "python" in trajs:
            a, b = trajs["compiled"], trajs["python"]
            gap = max(
                float(np.max(np.abs(a.omega - b.omega))),
                float(np.max(np.abs(a.V - b.V))),
                float(np.max(np.abs(a.eta - b.eta))),
            )
            print(f"  agreement: max |state difference| = {gap:.3e}")
            print(f"  speedup: compiled is {times['python'] / times['compiled']:.1f}x faster")


if __name__ == "__main__":
    main()
