"""Compiled vs numpy Airy kernels: timing and agreement.

Run with ``python3 benchmarks/bench_airy.py``.  Without the compiled
extension only the numpy timings are printed.
"""
import argparse
import timeit

import numpy as np

from couette import airy


def sample_points(count, seed=0):
    rng = np.random.Generator(np.random.Philox(seed))
    r = 40 * rng.random(count) ** 2
    th = rng.uniform(-np.pi, np.pi, count)
    return r * np.exp(1j * th)


def strip_points(count, seed=1):
    # the strip where A0 is used: -30 <= Re z <= 30, -2 <= Im z <= 1
    rng = np.random.Generator(np.random.Philox(seed))
    return rng.uniform(-30, 30, count) + 1j * rng.uniform(-2, 1, count)


def best_of(func, repeat):
    return min(timeit.repeat(func, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=20000)
    ap.add_argument("--a0-points", type=int, default=400)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    z = sample_points(args.points)
    za = strip_points(args.a0_points)
    kernels = {"numpy": (airy.airy_scaled_numpy,
                         lambda x: airy._a0_integral_numpy(x, 1e-19, 4000)[0])}
    try:
        from couette import _airy_ext
        kernels["compiled"] = (
            _airy_ext.airy_scaled,
            lambda x: _airy_ext.a0_integral(x, airy._GL_NODES, airy._GL_WEIGHTS, 1e-19, 4000)[0])
    except ImportError:
        print("compiled extension not built; numpy only")

    results = {}
    for name, (ai, a0) in kernels.items():
        t_ai = best_of(lambda: ai(z), args.repeat)
        t_a0 = best_of(lambda: a0(za), args.repeat)
        results[name] = (ai(z)[0], a0(za))
        print(f"{name:9s} Ai: {t_ai * 1e3:8.2f} ms for {z.size} points   "
              f"A0: {t_a0 * 1e3:8.2f} ms for {za.size} points")
    if len(results) == 2:
        (ai_n, a0_n), (ai_c, a0_c) = results["numpy"], results["compiled"]
        print(f"max relative difference  Ai: {np.max(np.abs(ai_c / ai_n - 1)):.2e}   "
              f"A0: {np.max(np.abs(a0_c / a0_n - 1)):.2e}")


if __name__ == "__main__":
    main()
