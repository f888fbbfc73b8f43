"""Compare the compiled and numpy trial kernels.

    python benchmarks/bench_kernel.py [--trials 1000000] [--repeat 5]

Prints the best-of-N wall time per backend, the speedup, and whether the
two backends produced bit-identical outcome arrays.
"""

import argparse
import time

import numpy as np

from delayedchoice import montecarlo as mc
from delayedchoice.model import InterferometerConfig, QrngSpec


def best_time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=2019)
    args = ap.parse_args(argv)

    config = InterferometerConfig(qrng=QrngSpec(0.53))
    plan = mc.trial_plan(config, 0.0)
    key = mc.SeedSpec(args.seed).key
    backends = mc.available_backends()
    print(f"trials per call: {args.trials}, best of {args.repeat}")

    results, times = {}, {}
    for name in backends:
        fn = mc._BACKENDS[name]
        times[name], results[name] = best_time(lambda: fn(key, 0, args.trials, *plan.args()), args.repeat)
        rate = args.trials / times[name] / 1e6
        print(f"  {name:7s} {times[name] * 1e3:9.2f} ms  {rate:8.2f} Mtrials/s")

    if "cython" not in results:
        print("compiled kernel not built; only the numpy backend was timed")
        return 0
    same = all(np.array_equal(a, b, equal_nan=True)
               for a, b in zip(results["cython"], results["numpy"]))
    print(f"speedup cython/numpy: {times['numpy'] / times['cython']:.1f}x")
    print(f"bit-identical outputs: {same}")
    return 0 if same else 1


if __name__ == "__main__":
    raise SystemExit(main())
