"""Time pairing-matrix assembly on the compiled and numpy backends.

Run ``python benchmarks/bench_gram.py [--repeat R]``.  Each case builds the
functional set a solver would see and times ``pair_matrix`` on both backends,
checking they agree before reporting.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from kernelpde import _backend, kernels
from kernelpde.functionals import FunctionalSet, identity, laplacian, linear_combination, partial


def elliptic_set(M, d, rng):
    pts = rng.standard_normal((M, d)) * 0.4
    parts = [FunctionalSet.from_monomial(pts, identity(), rng.random(M))]
    parts += [FunctionalSet.from_monomial(pts, partial(i), rng.random(M)) for i in range(d)]
    parts += [FunctionalSet.from_monomial(pts, laplacian(range(d)), rng.random(M))]
    # one linearized functional per point, as inside a solve
    return linear_combination([np.ones(M)] * len(parts), parts)


def first_order_set(M, d, rng):
    pts = rng.standard_normal((M, d))
    return FunctionalSet(pts, np.ones(M), grad=rng.standard_normal((M, d)))


CASES = [
    ("matern7/2 elliptic d=2 M=1000", lambda r: (kernels.isotropic("matern", 2, 0.35, 3.5), elliptic_set(1000, 2, r))),
    ("matern7/2 elliptic d=3 M=1000", lambda r: (kernels.isotropic("matern", 3, 0.43, 3.5), elliptic_set(1000, 3, r))),
    ("gaussian elliptic d=6 M=800", lambda r: (kernels.isotropic("gaussian", 6, 0.6, None), elliptic_set(800, 6, r))),
    ("inverse quadratic first-order d=10 M=1500", lambda r: (kernels.isotropic("inverse_quadratic", 10, 5.0), first_order_set(1500, 10, r))),
    ("inverse quadratic first-order d=100 M=1500", lambda r: (kernels.isotropic("inverse_quadratic", 100, 100.0), first_order_set(1500, 100, r))),
]


def best_time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not _backend.compiled_available():
        print("compiled backend not built; only numpy timings are meaningful")
    rng = np.random.default_rng(0)
    print(f"{'case':46s} {'numpy [s]':>10s} {'cython [s]':>11s} {'speedup':>8s}  default")
    for label, make in CASES:
        k, fs = make(rng)
        t_np = best_time(lambda: kernels.pair_matrix(k, fs, fs, True, "numpy"), args.repeat)
        if _backend.compiled_available():
            a = kernels.pair_matrix(k, fs, fs, True, "numpy")
            b = kernels.pair_matrix(k, fs, fs, True, "cython")
            assert np.allclose(a, b, rtol=1e-9, atol=1e-9 * np.abs(a).max())
            t_cy = best_time(lambda: kernels.pair_matrix(k, fs, fs, True, "cython"), args.repeat)
            default = "cython" if k.dimension <= _backend.BLAS_DIMENSION else "numpy"
            print(f"{label:46s} {t_np:10.3f} {t_cy:11.3f} {t_np / t_cy:8.2f}  {default}")
        else:
            print(f"{label:46s} {t_np:10.3f} {'-':>11s} {'-':>8s}  numpy")


if __name__ == "__main__":
    main()
