"""Compare the compiled kernels against the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each workload runs through the public API with ``backend`` pinned, so the
timings include the same Python-side setup for both backends.
"""

import argparse
import json
import time

import numpy as np

from patientstab import _backend, sim
from patientstab.delay import DelayPolicy, delayed_system, expected_delayed_lipschitz
from patientstab.systems import MapSpec, SwitchedSystem, lipschitz_set


def _mu2():
    f = MapSpec.build(2, None, np.array([[0.5, 1.0], [0.0, 0.5]]), None)
    g = MapSpec.build(2, None, np.array([[0.5, 0.0], [1.0, 0.5]]), None)
    return SwitchedSystem((f, g), np.array([0.9, 0.1]))


def workloads(backend):
    mu2 = _mu2()
    delayed = delayed_system(mu2, DelayPolicy("iid_uniform_entries"), 3)
    x0 = sim.circle_starts(1000, np.zeros(2))
    ls = lipschitz_set(mu2)
    kern = _backend.load(backend)
    rng = np.random.default_rng(0)
    comp = expected_delayed_lipschitz(lipschitz_set(SwitchedSystem(
        tuple(MapSpec.build(6, None, rng.uniform(0, 0.3, (6, 6)), None) for _ in range(3)),
        np.ones(3) / 3)), DelayPolicy("iid_uniform_entries"), 6)

    return {
        "simulate 1000x300 (n=2)": lambda: sim.simulate(mu2, x0, 300, 1000, seed=1, backend=backend),
        "simulate 1000x300 (n=2, L=3)": lambda: sim.simulate(delayed, x0, 300, 1000, seed=1, backend=backend),
        "mc_p_radius 2000x200": lambda: sim.mc_p_radius_estimate(ls, 1, 200, 2000, seed=1, backend=backend),
        "power_iterate 42x42": lambda: kern.power_iterate(comp, 1e-12, 100000, 16),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results to this path")
    args = ap.parse_args(argv)

    backends = ["python"]
    try:
        _backend.load("cython")
        backends.insert(0, "cython")
    except ImportError:
        print("compiled extension not built; timing the fallback only")

    results = {}
    for b in backends:
        for name, fn in workloads(b).items():
            fn()  # warm up
            times = []
            for _ in range(args.repeat):
                t0 = time.perf_counter()
                fn()
                times.append(time.perf_counter() - t0)
            results.setdefault(name, {})[b] = min(times)

    width = max(map(len, results))
    print(f"{'workload':<{width}}  " + "  ".join(f"{b:>10}" for b in backends) + "     speedup")
    for name, row in results.items():
        cells = "  ".join(f"{row[b] * 1e3:>8.2f}ms" for b in backends)
        speed = f"{row['python'] / row['cython']:>9.1f}x" if "cython" in row else ""
        print(f"{name:<{width}}  {cells}  {speed}")
    print(f"default backend: {_backend.BACKEND}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
