"""Time the numba kernels against their numpy fallbacks.

Usage: python benchmarks/bench_kernels.py [--repeat R]

Numba compilation happens in a warm-up call and is reported separately.
"""
import argparse
import time

import numpy as np

from riskratio._kernels import KOOPMAN, LRT, get_impl


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def _inversion_case(size=20_000, seed=0):
    rng = np.random.default_rng(seed)
    n = np.full(size, 100.0)
    yf = rng.binomial(100, 0.2, size).astype(float)
    yc = rng.binomial(100, 0.05, size).astype(float)
    return yf, n, yc, n, np.full(size, 2.705543454095404)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    data = _inversion_case()
    cases = [
        ("invert_counts LRT (20k datasets)", lambda m: m.invert_counts(LRT, *data)),
        ("invert_counts Koopman (20k datasets)", lambda m: m.invert_counts(KOOPMAN, *data)),
        ("ws_lower_table n=10, grid 500", lambda m: m.ws_lower_table(10, 10, 0.05, 500)),
        ("ws_lower_table n=25, grid 500", lambda m: m.ws_lower_table(25, 25, 0.05, 500)),
    ]
    print(f"{'kernel':40s} {'numpy [s]':>10s} {'numba [s]':>10s} {'speed-up':>9s} {'jit [s]':>8s}")
    for name, call in cases:
        np_impl, nb_impl = get_impl("numpy"), get_impl("numba")
        t0 = time.perf_counter()
        call(nb_impl)                 # compile (cached after the first case)
        jit = time.perf_counter() - t0
        t_np = _best(lambda: call(np_impl), args.repeat)
        t_nb = _best(lambda: call(nb_impl), args.repeat)
        print(f"{name:40s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.1f}x {jit:8.2f}")


if __name__ == "__main__":
    main()
