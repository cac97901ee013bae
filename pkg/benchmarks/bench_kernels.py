"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from saia import _kernels_py as py
from saia.integrator import SplittingScheme

try:
    from saia import _kernels as cy
except ImportError:  # extension not built
    cy = None


def cases(rng):
    s = SplittingScheme(3, 0.1188)
    d = 100
    a = rng.standard_normal((d, d))
    P = a @ a.T / d + np.eye(d)
    prec = rng.uniform(1.0, 4.0, 1000)
    X = rng.standard_normal((1000, 25))
    y = (rng.uniform(size=1000) < 0.5).astype(float)
    t100, p100 = rng.standard_normal(d), rng.standard_normal(d)
    t1k, p1k = rng.standard_normal(1000), rng.standard_normal(1000)
    t25, p25 = rng.standard_normal(25), rng.standard_normal(25)
    chain = np.cumsum(rng.standard_normal(5000)) * 0.05 + rng.standard_normal(5000)
    return {
        "dense leg D=100 L=50": lambda m: m.leg_gaussian(
            P, np.zeros(d), t100, p100, s.kicks, s.drifts, 0.05, 50),
        "diagonal leg D=1000 L=50": lambda m: m.leg_gaussian_diag(
            prec, np.zeros(1000), t1k, p1k, s.kicks, s.drifts, 0.05, 50),
        "logistic leg N=1000 D=25 L=20": lambda m: m.leg_logistic(
            X, y, 1.0, t25, p25, s.kicks, s.drifts, 0.01, 20),
        "minimax b k=3": lambda m: m.minimax_b(3, 3.0, 0.1, 1 / 6),
        "geyer tau N=5000": lambda m: m.geyer_tau(chain),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    print(f"{'kernel':32s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, fn in cases(np.random.default_rng(0)).items():
        t_py = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat)) * 1e3
        if cy is None:
            print(f"{name:32s} {t_py:10.2f} {'n/a':>10s}")
            continue
        t_cy = min(timeit.repeat(lambda: fn(cy), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:32s} {t_py:10.2f} {t_cy:10.3f} {t_py / t_cy:7.1f}x")


if __name__ == "__main__":
    main()
