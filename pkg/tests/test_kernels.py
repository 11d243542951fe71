"""The compiled and numpy kernels must agree exactly."""

import numpy as np
import pytest

from spane_kit import _pykernels, kernels
from spane_kit.prosody import difference_function, frame_signal

BACKENDS = kernels.backends()
needs_ext = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")
    assert "python" in BACKENDS


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_topk_ties_prefer_lower_index(name):
    mod = BACKENDS[name]
    sims = np.array([[0.5, 0.9, 0.9, 0.1, 0.9]])
    assert mod.topk_desc(sims, 3).tolist() == [[1, 2, 4]]
    assert mod.topk_desc(sims, 1).tolist() == [[1]]


@needs_ext
def test_topk_parity(rng):
    for _ in range(50):
        b, n = rng.integers(1, 20), rng.integers(1, 300)
        k = int(rng.integers(1, n + 1))
        sims = np.round(rng.standard_normal((b, n)), 1)  # many ties
        assert np.array_equal(BACKENDS["cython"].topk_desc(sims, k), _pykernels.topk_desc(sims, k))


@needs_ext
def test_ksg_counts_parity(rng):
    for _ in range(20):
        n = int(rng.integers(5, 400))
        x = rng.standard_normal(n)
        y = 0.5 * x + rng.standard_normal(n)
        a = BACKENDS["cython"].ksg_counts(x, y, 3)
        b = _pykernels.ksg_counts(x, y, 3)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


@needs_ext
def test_yin_pick_parity(rng):
    sr = 16000
    t = np.arange(sr) / sr
    x = np.sin(2 * np.pi * 140 * t) + 0.3 * np.sin(2 * np.pi * 280 * t) + 0.2 * rng.standard_normal(sr)
    frames = frame_signal(x, 640, 160)
    d = np.ascontiguousarray(difference_function(frames, 640 - 269, 268))
    a = BACKENDS["cython"].yin_pick(d, 40, 268, 0.15)
    b = _pykernels.yin_pick(d, 40, 268, 0.15)
    assert np.array_equal(a, b)


def test_wrappers_accept_non_contiguous():
    sims = np.asfortranarray(np.arange(12, dtype=np.float32).reshape(3, 4))
    assert kernels.topk_desc(sims, 2).tolist() == [[3, 2], [3, 2], [3, 2]]


def test_pure_env_selects_numpy():
    import os
    import subprocess
    import sys
    env = dict(os.environ, SPANE_KIT_PURE="1")
    out = subprocess.run([sys.executable, "-c", "from spane_kit import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_benchmark_script_runs():
    import runpy
    from pathlib import Path
    mod = runpy.run_path(str(Path(__file__).parents[1] / "benchmarks" / "bench_kernels.py"))
    assert set(mod["workloads"](np.random.default_rng(0))) == {
        "topk_desc  256x80000 k=4", "ksg_counts N=2000 k=3", "yin_pick   97 frames"}
