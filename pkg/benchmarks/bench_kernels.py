"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from devrate import _kernels
from devrate.grid import Mesh, assemble_generator
from devrate.model import langevin


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    gen = assemble_generator(langevin(None, 1.0, 1), Mesh.box(-8, 8, 161, 2))
    A = gen.matrix
    shift = gen.scale
    x0 = np.ones(A.shape[0])
    rng = np.random.default_rng(0)
    table = rng.random((161 * 161, 3))
    pts = rng.uniform(-8, 8, size=(20000, 2))
    w = rng.random(20000)
    w /= w.sum()
    lo, h, shape = np.array([-8.0, -8.0]), np.array([0.1, 0.1]), np.array([161, 161])
    yield "power_iterate (25921 nodes, 50 steps)", lambda impl: _kernels.power_iterate(
        A, shift, x0.copy(), 50, impl=impl)
    yield "multilinear_interp (20000 points, 2-d)", lambda impl: _kernels.multilinear_interp(
        table, lo, h, shape, pts, impl=impl)
    yield "systematic_resample (20000 walkers)", lambda impl: _kernels.systematic_resample(
        w, 0.37, impl=impl)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if _kernels.BACKEND != "cython":
        print("compiled kernels not built; only the python fallback is timed")
    print(f"{'kernel':42s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s}")
    for name, fn in cases():
        tp = best_of(lambda: fn("python"), args.repeat)
        if _kernels.BACKEND == "cython":
            a, b = fn("python"), fn("cython")
            assert np.allclose(np.asarray(a), np.asarray(b), rtol=1e-10, atol=1e-12), name
            tc = best_of(lambda: fn("cython"), args.repeat)
            print(f"{name:42s} {tp * 1e3:12.2f} {tc * 1e3:12.2f} {tp / tc:8.1f}")
        else:
            print(f"{name:42s} {tp * 1e3:12.2f} {'-':>12s} {'-':>8s}")


if __name__ == "__main__":
    main()
