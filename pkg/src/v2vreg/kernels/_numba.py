"""numba-compiled versions of the hot kernels; same signatures and results as ``_numpy``."""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def frame_signal(x, n, hop):
    count = (x.shape[0] - n) // hop + 1
    out = np.empty((count, n))
    for t in range(count):
        base = t * hop
        for k in range(n):
            out[t, k] = x[base + k]
    return out


@njit(cache=True)
def overlap_add(frames, hop):
    count, n = frames.shape
    out = np.zeros((count - 1) * hop + n) if count > 0 else np.zeros(n - hop)
    for t in range(count):
        base = t * hop
        for k in range(n):
            out[base + k] += frames[t, k]
    return out


@njit(cache=True)
def _trailing_zeros(g):
    j = 0
    while (g & 1) == 0:
        g >>= 1
        j += 1
    return j


@njit(cache=True)
def exact_ball_mean(x):
    # Gray-code walk: consecutive sign vectors differ in one entry, so the running
    # sum is updated in O(dim) per vector instead of O(N * dim).
    n, dim = x.shape
    total = 1 << n
    signs = np.ones(n)
    run = np.zeros(dim)
    for i in range(n):
        for k in range(dim):
            run[k] += x[i, k]
    acc = 0.0
    for g in range(total):
        if g > 0:
            j = _trailing_zeros(g)
            s = signs[j]
            for k in range(dim):
                run[k] -= 2.0 * s * x[j, k]
            signs[j] = -s
        sq = 0.0
        for k in range(dim):
            sq += run[k] * run[k]
        acc += math.sqrt(sq)
    return acc / total


@njit(cache=True)
def exact_finite_mean(scores):
    m, n = scores.shape
    total = 1 << n
    signs = np.ones(n)
    run = np.zeros(m)
    for k in range(m):
        for i in range(n):
            run[k] += scores[k, i]
    acc = 0.0
    for g in range(total):
        if g > 0:
            j = _trailing_zeros(g)
            s = signs[j]
            for k in range(m):
                run[k] -= 2.0 * s * scores[k, j]
            signs[j] = -s
        best = run[0]
        for k in range(1, m):
            if run[k] > best:
                best = run[k]
        acc += best
    return acc / total


@njit(cache=True)
def draws_ball(signs, x):
    d, n = signs.shape
    dim = x.shape[1]
    out = np.empty(d)
    run = np.empty(dim)
    for r in range(d):
        run[:] = 0.0
        for i in range(n):
            s = signs[r, i]
            for k in range(dim):
                run[k] += s * x[i, k]
        sq = 0.0
        for k in range(dim):
            sq += run[k] * run[k]
        out[r] = math.sqrt(sq)
    return out


@njit(cache=True)
def draws_finite(signs, scores):
    d, n = signs.shape
    m = scores.shape[0]
    out = np.empty(d)
    for r in range(d):
        best = -np.inf
        for k in range(m):
            v = 0.0
            for i in range(n):
                v += signs[r, i] * scores[k, i]
            if v > best:
                best = v
        out[r] = best
    return out


@njit(cache=True)
def stoi_segments(x_bands, y_bands, seg_len, clip):
    bands, frames = x_bands.shape
    segs = frames - seg_len + 1
    if segs <= 0:
        return 0.0
    yp = np.empty(seg_len)
    acc = 0.0
    for b in range(bands):
        for m in range(segs):
            xx = 0.0
            yy = 0.0
            for t in range(seg_len):
                xx += x_bands[b, m + t] ** 2
                yy += y_bands[b, m + t] ** 2
            gain = math.sqrt(xx) / math.sqrt(yy) if yy > 0 else 0.0
            xm = 0.0
            ym = 0.0
            for t in range(seg_len):
                v = y_bands[b, m + t] * gain
                lim = x_bands[b, m + t] * clip
                yp[t] = v if v < lim else lim
                xm += x_bands[b, m + t]
                ym += yp[t]
            xm /= seg_len
            ym /= seg_len
            num = 0.0
            xn = 0.0
            yn = 0.0
            for t in range(seg_len):
                a = x_bands[b, m + t] - xm
                c = yp[t] - ym
                num += a * c
                xn += a * a
                yn += c * c
            den = math.sqrt(xn) * math.sqrt(yn)
            if den > 0:
                acc += num / den
    return acc / (bands * segs)
