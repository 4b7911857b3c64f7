"""Compare the numba and numpy kernels on the butterfly and the SC recursion.

Usage::

    python3 benchmarks/bench_kernels.py [--N 1024] [--batch 1 256] [--repeat 5]

The numpy path vectorizes over the batch axis only, so its gap to numba is
largest for single sessions and narrows for wide batches. Both backends consume the same inputs; the script checks that their outputs
agree before reporting timings. The first numba call (JIT compilation) is
excluded from the timed runs.
"""

import argparse
import time

import numpy as np

from bccpolar import kernels
from bccpolar.kernels import SAMPLE


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def workload(N, batch, seed=0):
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=(batch, N), dtype=np.uint8)
    leaf = rng.normal(0.0, 2.0, size=(batch, N))
    actions = np.full(N, SAMPLE, dtype=np.int8)
    fixed = np.zeros((batch, N), dtype=np.uint8)
    rand = rng.random((batch, N))
    return bits, leaf, actions, fixed, rand


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, nargs="+", default=[256, 1024, 4096])
    ap.add_argument("--batch", type=int, nargs="+", default=[1, 256])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    backends = ["numpy"]
    try:
        kernels.get_backend("numba")
        backends.append("numba")
    except RuntimeError:
        print("numba unavailable; timing numpy only")

    print(f"{'kernel':<10} {'N':>6} {'batch':>6} " + " ".join(f"{b + ' [ms]':>12}" for b in backends) + f" {'speedup':>8}")
    for N, batch in [(N, b) for N in args.N for b in args.batch]:
        bits, leaf, actions, fixed, rand = workload(N, batch)
        jobs = {
            "butterfly": lambda be: kernels.butterfly(bits, backend=be),
            "sc_run": lambda be: kernels.sc_run(leaf, actions, fixed, rand, backend=be),
        }
        for name, job in jobs.items():
            outs = {be: job(be) for be in backends}  # warm-up, includes JIT
            if len(backends) == 2:
                a, b = outs["numpy"], outs["numba"]
                a, b = (a, b) if name == "butterfly" else (a[0], b[0])
                if not np.array_equal(a, b):
                    raise SystemExit(f"{name}: backends disagree at N={N}")
            t = {be: best_of(lambda: job(be), args.repeat) for be in backends}
            speed = t["numpy"] / t["numba"] if "numba" in t else float("nan")
            cells = " ".join(f"{1e3 * t[be]:>12.2f}" for be in backends)
            print(f"{name:<10} {N:>6} {batch:>6} {cells} {speed:>7.1f}x")


if __name__ == "__main__":
    main()
