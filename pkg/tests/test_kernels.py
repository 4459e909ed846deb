"""Both kernel backends must agree; the numpy one is also checked against loops."""
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from v2vreg import kernels
from v2vreg.numerics import SeededRng

NB = kernels.numba_backend()
NP = kernels.numpy_backend
needs_numba = pytest.mark.skipif(NB is None, reason="numba not importable")


def test_kernel_tables_match():
    for name in kernels.KERNELS:
        assert callable(getattr(NP, name))
        if NB is not None:
            assert callable(getattr(NB, name))


@pytest.mark.parametrize("value,expect", [("numpy", "numpy"), ("NumPy", "numpy")])
def test_env_flag_selects_backend(value, expect):
    env = dict(os.environ, V2V_BACKEND=value)
    out = subprocess.run([sys.executable, "-c", "import v2vreg.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expect


@needs_numba
def test_env_flag_default_is_numba():
    env = {k: v for k, v in os.environ.items() if k != "V2V_BACKEND"}
    out = subprocess.run([sys.executable, "-c", "import v2vreg.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numba"


def test_env_flag_rejects_unknown():
    with pytest.raises(ValueError):
        kernels._select("fortran")


def loop_overlap_add(frames, hop):
    count, n = frames.shape
    out = np.zeros((count - 1) * hop + n)
    for t in range(count):
        out[t * hop:t * hop + n] += frames[t]
    return out


@given(st.integers(0, 2**32), st.sampled_from([4, 8, 16, 64]), st.integers(1, 30))
def test_numpy_framing_against_loops(seed, n, count):
    hop = n // 2
    x = SeededRng(seed).normal((count - 1) * hop + n + hop // 2)
    f = NP.frame_signal(x, n, hop)
    assert f.shape == (count, n)
    for t in range(count):
        assert np.array_equal(f[t], x[t * hop:t * hop + n])
    assert np.array_equal(NP.overlap_add(f, hop), loop_overlap_add(f, hop))
    # the general (non-half-split) path too
    assert np.allclose(NP.overlap_add(f, max(1, n // 4)), loop_overlap_add(f, max(1, n // 4)), atol=1e-14)


@needs_numba
@given(st.integers(0, 2**32), st.sampled_from([8, 32, 256]), st.integers(1, 20))
def test_framing_parity(seed, n, count):
    hop = n // 2
    x = SeededRng(seed).normal((count - 1) * hop + n)
    a, b = NP.frame_signal(x, n, hop), NB.frame_signal(x, n, hop)
    assert np.array_equal(a, b)
    assert np.allclose(NP.overlap_add(a, hop), NB.overlap_add(b, hop), atol=1e-14, rtol=0)


@needs_numba
@pytest.mark.parametrize("n", [1, 2, 5, 9, 12, 16])
def test_exact_mean_parity(n):
    rng = SeededRng(n)
    x = rng.normal(n * 3).reshape(n, 3)
    scores = rng.normal(4 * n).reshape(4, n)
    assert NB.exact_ball_mean(x) == pytest.approx(NP.exact_ball_mean(x), rel=1e-12)
    assert NB.exact_finite_mean(scores) == pytest.approx(NP.exact_finite_mean(scores), rel=1e-12, abs=1e-14)


def test_numpy_exact_mean_chunking():
    # 2**16 > one chunk, so several sign blocks are stitched together
    rng = SeededRng(1)
    x = rng.normal(16 * 2).reshape(16, 2)
    signs = 1.0 - 2.0 * ((np.arange(1 << 16)[:, None] >> np.arange(16)) & 1)
    total = np.linalg.norm(signs @ x, axis=1).mean()
    assert NP.exact_ball_mean(x) == pytest.approx(total, rel=1e-12)


@needs_numba
def test_draw_parity():
    rng = SeededRng(2)
    signs = rng.signs(500 * 7).reshape(500, 7)
    x = rng.normal(7 * 3).reshape(7, 3)
    scores = rng.normal(5 * 7).reshape(5, 7)
    assert np.allclose(NB.draws_ball(signs, x), NP.draws_ball(signs, x), rtol=1e-12, atol=1e-12)
    assert np.allclose(NB.draws_finite(signs, scores), NP.draws_finite(signs, scores), rtol=1e-12, atol=1e-12)


def loop_stoi_segments(xb, yb, seg, clip):
    bands, frames = xb.shape
    total, count = 0.0, 0
    for m in range(seg, frames + 1):
        for j in range(bands):
            x = xb[j, m - seg:m]
            y = yb[j, m - seg:m]
            ny = np.linalg.norm(y)
            g = np.linalg.norm(x) / ny if ny > 0 else 0.0
            yp = np.minimum(y * g, x * clip)
            xc, yc = x - x.mean(), yp - yp.mean()
            den = np.linalg.norm(xc) * np.linalg.norm(yc)
            total += (xc @ yc) / den if den > 0 else 0.0
            count += 1
    return total / count


@pytest.mark.parametrize("backend", ["numpy", pytest.param("numba", marks=needs_numba)])
def test_stoi_segments_against_loops(backend):
    mod = NP if backend == "numpy" else NB
    rng = SeededRng(3)
    xb = np.abs(rng.normal(15 * 50)).reshape(15, 50)
    yb = np.abs(xb + 0.5 * rng.normal(15 * 50).reshape(15, 50))
    yb[3, 10:45] = 0.0  # a silent stretch exercises the zero guards
    clip = 1 + 10 ** (15 / 20)
    assert mod.stoi_segments(xb, yb, 30, clip) == pytest.approx(loop_stoi_segments(xb, yb, 30, clip), rel=1e-12)
