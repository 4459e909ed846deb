"""Numba vs numpy kernel timings.

Runs every kernel on both backends with the same inputs, checks the results
agree, and prints the best-of-N wall time for each. The first numba call is
timed separately since it includes JIT compilation.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import time

import numpy as np

from v2vreg import kernels
from v2vreg.numerics import SeededRng


def cases():
    rng = SeededRng(2024)
    audio = rng.normal(16000 * 10)  # 10 s at 16 kHz
    frames = np.ascontiguousarray(rng.normal(1249 * 256).reshape(1249, 256))
    ball = rng.normal(16 * 4).reshape(16, 4)
    scores = rng.normal(8 * 14).reshape(8, 14)
    signs = rng.signs(100_000 * 12).reshape(100_000, 12)
    x12 = rng.normal(12 * 3).reshape(12, 3)
    s12 = rng.normal(6 * 12).reshape(6, 12)
    xb = np.abs(rng.normal(15 * 400)).reshape(15, 400)
    yb = np.abs(xb + 0.3 * rng.normal(15 * 400).reshape(15, 400))
    clip = 1 + 10 ** (15 / 20)
    return [
        ("frame_signal 10s/512", "frame_signal", (audio, 512, 256)),
        ("overlap_add 1249x256", "overlap_add", (frames, 128)),
        ("exact_ball_mean N=16", "exact_ball_mean", (ball,)),
        ("exact_finite_mean N=14", "exact_finite_mean", (scores,)),
        ("draws_ball 1e5 x 12", "draws_ball", (signs, x12)),
        ("draws_finite 1e5 x 12", "draws_finite", (signs, s12)),
        ("stoi_segments 15x400", "stoi_segments", (xb, yb, 30, clip)),
    ]


def best_of(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    nb = kernels.numba_backend()
    np_mod = kernels.numpy_backend
    if nb is None:
        print("numba not importable; numpy timings only")

    print(f"{'kernel':26s} {'numpy ms':>10s} {'numba ms':>10s} {'jit ms':>10s} {'speedup':>8s}")
    for label, name, a in cases():
        t_np, ref = best_of(getattr(np_mod, name), a, args.repeat)
        if nb is None:
            print(f"{label:26s} {t_np * 1e3:10.2f}")
            continue
        t0 = time.perf_counter()
        getattr(nb, name)(*a)
        jit = time.perf_counter() - t0
        t_nb, got = best_of(getattr(nb, name), a, args.repeat)
        if not np.allclose(got, ref, rtol=1e-10, atol=1e-12):
            raise SystemExit(f"{name}: backends disagree")
        print(f"{label:26s} {t_np * 1e3:10.2f} {t_nb * 1e3:10.2f} {jit * 1e3:10.0f} {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
