"""Compare the compiled and pure-numpy kernel backends.

Times the two hot reductions on synthetic inputs, then two end-to-end
workloads (a 2-d dual solve and a 4000-cell grid solve) under each backend.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import time

import numpy as np

from maxentcert import kernels
from maxentcert.dual import solve
from maxentcert.measurements import MomentProblem, PowerMoment
from maxentcert.oracle import fixture, grid_solve
from maxentcert.support import SupportSet


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def synthetic(rng, panels=2000, nodes=21, k=4):
    energy = rng.exponential(size=panels * nodes)
    weights = rng.standard_normal((panels * nodes, k))
    kronrod = rng.random(nodes)
    gauss = rng.random(nodes)
    jac = rng.random(panels)
    return energy, weights, 0.0, kronrod, gauss, jac


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled backend not built; only the python backend is available")
    rng = np.random.default_rng(0)
    panel_args = synthetic(rng)
    logw = rng.standard_normal(200_000)
    f = rng.random(200_000)
    problem_2d = MomentProblem(SupportSet.full(2), [(PowerMoment(2, 0, 2), 1.0),
                                                    (PowerMoment(2, 1, 2), 4.0)])
    gauss = fixture("gaussian")

    workloads = {
        "panel_sums (2000x21x4)": lambda: kernels.panel_sums(*panel_args),
        "tilted_line_stats (2e5)": lambda: kernels.tilted_line_stats(logw, f, 0.7),
        "solve 2-d, 2 constraints": lambda: solve(problem_2d),
        "grid_solve gaussian 4000": lambda: grid_solve(gauss.problem, gauss.truncation, 4000),
    }
    results = {}
    for name in backends:
        kernels.set_backend(name)
        results[name] = {w: best_of(fn, args.repeat) for w, fn in workloads.items()}
    names = list(backends)
    print(f"{'workload':<28}" + "".join(f"{n + ' [s]':>16}" for n in names)
          + ("      speedup" if len(names) == 2 else ""))
    for w in workloads:
        row = f"{w:<28}" + "".join(f"{results[n][w]:>16.5f}" for n in names)
        if len(names) == 2:
            row += f"{results['python'][w] / results['compiled'][w]:>12.2f}x"
        print(row)


if __name__ == "__main__":
    main()
