"""Time the numba loop kernels against the numpy vectorised fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

The loop forms run as plain Python when numba is missing, so only the
small gaussian_sum case is timed for them in that situation.
"""
import argparse
import timeit

import numpy as np

from twasim import kernels
from twasim._accel import USE_NUMBA


def cases(rng):
    n_kernels = 9
    phases = np.linspace(-np.pi, np.pi, 4096)
    amps, widths = rng.normal(0, 0.3, n_kernels), rng.uniform(0.05, 0.5, n_kernels)
    centers = rng.uniform(-np.pi, np.pi, n_kernels)
    yield "gaussian_sum 4096 x 9", (phases, amps, widths, centers), "gaussian_sum", True

    n_beats, fs = 82, 1000.0
    onsets = np.cumsum(rng.uniform(0.75, 0.9, n_beats))[:, None]
    b_amps = rng.normal(0, 0.3, (n_beats, n_kernels))
    b_centers = onsets + rng.uniform(-0.2, 0.35, (n_beats, n_kernels))
    b_widths = rng.uniform(0.005, 0.06, (n_beats, n_kernels))
    yield "render 70 s at 1 kHz", (70_000, fs, b_amps, b_centers, b_widths, 6.0), "render", USE_NUMBA

    beats = rng.normal(0, 50, (128, 400))
    orders = np.array([rng.permutation(128) for _ in range(100)])
    yield "mma_twa_batch 100 x 128 beats", (beats, orders, 0.125, 32.0, 150, 400), "mma_twa_batch", USE_NUMBA


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"numba active: {USE_NUMBA}")
    for label, call_args, name, run_loops in cases(np.random.default_rng(0)):
        vec = getattr(kernels.vectorized, name)
        t_vec = min(timeit.repeat(lambda: vec(*call_args), number=1, repeat=args.repeat))
        line = f"{label:32s} numpy {t_vec * 1e3:9.3f} ms"
        if run_loops:
            loop = getattr(kernels.loops, name)
            ref = loop(*call_args)  # also triggers compilation
            assert np.allclose(ref, vec(*call_args), atol=1e-9)
            t_loop = min(timeit.repeat(lambda: loop(*call_args), number=1, repeat=args.repeat))
            line += f"   loops {t_loop * 1e3:9.3f} ms   speedup {t_vec / t_loop:6.2f}x"
        print(line)


if __name__ == "__main__":
    main()
