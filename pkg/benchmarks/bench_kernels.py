"""Compare the compiled and numpy kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel runs on a workload sized like its real use: top-k over a block
of kNN similarities, KSG neighbour counts for a cohort-sized feature, and
the YIN dip search over one second of audio frames.
"""

import argparse
import time

import numpy as np

from spane_kit import kernels
from spane_kit.prosody import difference_function, frame_signal


def workloads(rng):
    sims = rng.standard_normal((256, 80000))
    x = rng.standard_normal(2000)
    y = 0.6 * x + rng.standard_normal(2000)
    sr = 16000
    t = np.arange(sr) / sr
    audio = np.sin(2 * np.pi * 130 * t) + 0.1 * rng.standard_normal(sr)
    diff = np.ascontiguousarray(difference_function(frame_signal(audio, 640, 160), 640 - 269, 268))
    return {
        "topk_desc  256x80000 k=4": lambda m: m.topk_desc(sims, 4),
        "ksg_counts N=2000 k=3": lambda m: m.ksg_counts(x, y, 3),
        "yin_pick   97 frames": lambda m: m.yin_pick(diff, 40, 268, 0.15),
    }


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    mods = kernels.backends()
    print(f"default backend: {kernels.BACKEND}; available: {', '.join(sorted(mods))}")
    print(f"{'kernel':28s} " + " ".join(f"{n:>10s}" for n in sorted(mods)) + "   speedup")
    for name, fn in workloads(np.random.default_rng(0)).items():
        t = {b: best_of(lambda: fn(m), args.repeat) for b, m in mods.items()}
        speed = f"{t['python'] / t['cython']:8.1f}x" if "cython" in t else "       -"
        print(f"{name:28s} " + " ".join(f"{t[b] * 1e3:8.2f}ms" for b in sorted(t)) + speed)


if __name__ == "__main__":
    main()
