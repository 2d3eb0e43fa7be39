"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from bubblelab import _kernels_py, kernels


def cases(rng):
    m = 2000
    ty1, tr = rng.uniform(-2, 2, m), rng.uniform(0, 2, m)
    py1, pr = rng.uniform(-2, 2, 4 * m), rng.uniform(0, 2, 4 * m)
    pw = rng.uniform(0, 1, 4 * m)
    return {
        "riesz_sum": lambda impl: impl.riesz_sum(ty1, tr, py1, pr, pw, 7),
    }


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    impls = {"python": _kernels_py}
    if kernels.BACKEND == "compiled":
        impls["compiled"] = kernels._impl
    print("backend at import: %s" % kernels.BACKEND)
    print("%-12s %-10s %12s %10s" % ("kernel", "impl", "best [ms]", "speedup"))
    for name, fn in cases(rng).items():
        ref = fn(_kernels_py)
        base = None
        for label, impl in impls.items():
            np.testing.assert_allclose(fn(impl), ref, rtol=1e-10)
            t = min(timeit.repeat(lambda: fn(impl), number=1, repeat=args.repeat))
            base = base or t
            print("%-12s %-10s %12.2f %10.1f" % (name, label, 1e3 * t, base / t))


if __name__ == "__main__":
    main()
