"""Pure-numpy versions of the hot kernels. Reference path, and the fallback when numba is off."""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_CHUNK = 1 << 15


def frame_signal(x, n, hop):
    count = (x.shape[0] - n) // hop + 1
    return np.ascontiguousarray(sliding_window_view(x, n)[::hop][:count])


def overlap_add(frames, hop):
    count, n = frames.shape
    out = np.zeros((count - 1) * hop + n)
    if count == 0:
        return out
    # n == 2*hop for every caller, so frames split into two halves that tile the output
    if n == 2 * hop:
        out[: count * hop] += frames[:, :hop].reshape(-1)
        out[hop: (count + 1) * hop] += frames[:, hop:].reshape(-1)
        return out
    for t in range(count):
        out[t * hop: t * hop + n] += frames[t]
    return out


def _sign_block(start, stop, n):
    codes = np.arange(start, stop, dtype=np.int64)[:, None]
    bits = (codes >> np.arange(n, dtype=np.int64)) & 1
    return 1.0 - 2.0 * bits


def exact_ball_mean(x):
    """Mean of ||sum_i s_i x_i||_2 over all 2**N sign vectors s (rows of ``x`` are the x_i)."""
    n = x.shape[0]
    total = 1 << n
    acc = 0.0
    for start in range(0, total, _CHUNK):
        signs = _sign_block(start, min(total, start + _CHUNK), n)
        acc += np.linalg.norm(signs @ x, axis=1).sum()
    return acc / total


def exact_finite_mean(scores):
    """Mean over all sign vectors s of max_k s . scores[k]."""
    n = scores.shape[1]
    total = 1 << n
    acc = 0.0
    for start in range(0, total, _CHUNK):
        signs = _sign_block(start, min(total, start + _CHUNK), n)
        acc += (signs @ scores.T).max(axis=1).sum()
    return acc / total


def draws_ball(signs, x):
    return np.linalg.norm(signs @ x, axis=1)


def draws_finite(signs, scores):
    return (signs @ scores.T).max(axis=1)


def stoi_segments(x_bands, y_bands, seg_len, clip):
    """Mean clipped, normalized envelope correlation over all length-``seg_len`` segments."""
    bands, frames = x_bands.shape
    xs = sliding_window_view(x_bands, seg_len, axis=1)  # (bands, segs, seg_len)
    ys = sliding_window_view(y_bands, seg_len, axis=1)
    segs = xs.shape[1]
    if segs == 0:
        return 0.0
    x_norm = np.linalg.norm(xs, axis=2, keepdims=True)
    y_norm = np.linalg.norm(ys, axis=2, keepdims=True)
    gain = np.divide(x_norm, y_norm, out=np.zeros_like(x_norm), where=y_norm > 0)
    yp = np.minimum(ys * gain, xs * clip)
    xc = xs - xs.mean(axis=2, keepdims=True)
    yc = yp - yp.mean(axis=2, keepdims=True)
    xn = np.linalg.norm(xc, axis=2)
    yn = np.linalg.norm(yc, axis=2)
    num = (xc * yc).sum(axis=2)
    den = xn * yn
    corr = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return float(corr.sum() / (bands * segs))
