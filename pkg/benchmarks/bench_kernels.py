"""Compiled vs pure-Python geodesic kernels.

Integrates a batch of random unit tangents on a few surfaces with both
backends and prints wall time, speed-up and the largest endpoint difference.

    python benchmarks/bench_kernels.py [--n 20] [--T 50]
"""
import argparse
import time

import numpy as np

from birkhoff_lab import flow, geom, kernels, section


def bench(m, states, T, impl):
    t0 = time.perf_counter()
    ends = [flow.run_kernel(m, y, T, raise_on_pole=False, impl=impl)[2] for y in states]
    return time.perf_counter() - t0, np.array(ends)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=20)
    ap.add_argument("--T", type=float, default=50.0)
    args = ap.parse_args()
    if "cython" not in kernels.available():
        print("compiled kernels not built; run `python setup.py build_ext --inplace`")
        return
    print(f"{'surface':22s} {'cython s':>9s} {'python s':>9s} {'speed-up':>9s} {'max diff':>9s}")
    for m in (geom.spheroid(0.9), geom.dumbbell_sphere(), geom.torus_of_revolution(),
              geom.conformal_torus([(1, 0, 0.05, 0.0), (0, 1, 0.0, 0.03)])):
        states = section.sample_unit_tangents(m, args.n, seed=1)
        tc, yc = bench(m, states, args.T, "cython")
        tp, yp = bench(m, states, args.T, "python")
        diff = float(np.max(np.abs(yc - yp)))
        print(f"{m.name:22s} {tc:9.3f} {tp:9.3f} {tp / tc:9.1f} {diff:9.2e}")


if __name__ == "__main__":
    main()
