"""Compare the numba kernels with their numpy fallbacks.

    python benchmarks/bench_kernels.py [--paths N] [--grid N] [--repeat K]

Each kernel is run once untimed (numba compilation, cache warm-up), then
``--repeat`` times; the best wall time is reported.
"""

import argparse
import time

import numpy as np

from ruintime import _accel, _kernels
from ruintime.model import Gamma, MixedExponential, ModelParams, Ordinary, Stationary
from ruintime.montecarlo import simulate_paths


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=1_000_000)
    ap.add_argument("--grid", type=int, default=4000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    params = ModelParams(0.0, 1.1, 1.0)
    cases = {
        "mc gamma(2,2) ordinary": (Gamma(2, 2), Ordinary()),
        "mc gamma(0.5,0.5) stationary": (Gamma(0.5, 0.5), Stationary()),
        "mc mixedexp case B": (MixedExponential(1 / 3, 0.5, 2.0), Ordinary()),
    }
    rng = np.random.default_rng(0)
    a = rng.random(args.grid)
    b = rng.random(args.grid)
    t = np.linspace(0.01, 50, 2000)
    logw = np.log(rng.random(300))

    print(f"{'kernel':34s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s}")
    for name, (fam, delay) in cases.items():
        res = {}
        for be in ("numba", "numpy"):
            res[be] = best_of(lambda: simulate_paths(params, fam, delay, args.paths, 20.0, 1, be, 1), args.repeat)
        print(f"{name:34s} {res['numba']:10.3f} {res['numpy']:10.3f} {res['numpy'] / res['numba']:8.1f}")

    res = {be: best_of(lambda: _kernels.conv_trapz(a, b, args.grid, 0.01, be, method="direct"), args.repeat)
           for be in ("numba", "numpy")}
    print(f"{'conv_trapz direct n=' + str(args.grid):34s} {res['numba']:10.3f} {res['numpy']:10.3f} "
          f"{res['numpy'] / res['numba']:8.1f}")
    res = {be: best_of(lambda: _kernels.mixture_logpdf(logw, 3, 2.0, t, be), args.repeat) for be in ("numba", "numpy")}
    print(f"{'mixture_logpdf 300x2000':34s} {res['numba']:10.3f} {res['numpy']:10.3f} {res['numpy'] / res['numba']:8.1f}")


if __name__ == "__main__":
    main()
