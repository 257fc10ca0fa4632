"""Compare the numba and pure-numpy trial kernels on identical cells.

Usage::

    python benchmarks/bench_kernels.py [--d 4096] [--trials 2000] [--repeat 3]

Both backends consume the same random streams, so the script also checks that they
report the same number of errors before printing timings.
"""
import argparse
import math
import time

import numpy as np

from l0lab import _kernels as K
from l0lab.attack import budget_from_alpha
from l0lab.noise import gaussian

MODES = {"none": K.MODE_NONE, "worst_case": K.MODE_WORST, "coupling": K.MODE_COUPLING}


def time_cell(noise, d, trials, mode, k, backend, repeat):
    t = noise.sampler
    args = (1, trials, d, 1.0 / math.sqrt(d), noise.coeffs, t.cdf, t.z, t.guide)
    kw = dict(mode=mode, trim_k=k, budget=k if mode != K.MODE_NONE else 0, backend=backend,
              workers=1)
    K.simulate(*args[:1], 4, *args[2:], **kw)      # compile / warm caches
    best, batch = math.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        batch = K.simulate(*args, **kw)
        best = min(best, time.perf_counter() - t0)
    return best, batch


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--d", type=int, default=4096)
    parser.add_argument("--trials", type=int, default=2000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    if not K.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    noise = gaussian()
    k = budget_from_alpha(args.d, 0.5).k
    print(f"d={args.d} trials={args.trials} k={k} (best of {args.repeat})")
    print(f"{'mode':<12}{'numba ms/trial':>16}{'numpy ms/trial':>16}{'speedup':>10}")
    for name, mode in MODES.items():
        t_nb, a = time_cell(noise, args.d, args.trials, mode, k, "numba", args.repeat)
        t_np, b = time_cell(noise, args.d, args.trials, mode, k, "numpy", args.repeat)
        assert np.array_equal(a.errors, b.errors), f"backends disagree in mode {name}"
        per = 1e3 / args.trials
        print(f"{name:<12}{t_nb * per:>16.4f}{t_np * per:>16.4f}{t_np / t_nb:>10.1f}")


if __name__ == "__main__":
    main()
