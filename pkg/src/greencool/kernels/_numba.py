"""Compiled counterparts of :mod:`greencool.kernels._numpy`."""
import numpy as np
from numba import njit


@njit(cache=True)
def seqsum(x):
    total = 0.0
    for i in range(x.size):
        total += x[i]
    return total


@njit(cache=True)
def ols_moments(x, y):
    n = x.size
    sx = 0.0
    sy = 0.0
    for i in range(n):
        sx += x[i]
        sy += y[i]
    mx = sx / n
    my = sy / n
    sxx = 0.0
    sxy = 0.0
    syy = 0.0
    for i in range(n):
        dx = x[i] - mx
        dy = y[i] - my
        sxx += dx * dx
        sxy += dx * dy
        syy += dy * dy
    return mx, my, sxx, sxy, syy


@njit(cache=True)
def weighted_sums(values, weights):
    num = 0.0
    den = 0.0
    for i in range(values.size):
        num += values[i] * weights[i]
        den += weights[i]
    return num, den


@njit(cache=True)
def box_mean(values, mask, window):
    nrows, ncols = values.shape
    half = window // 2
    out = np.full((nrows, ncols), np.nan)
    for r in range(nrows):
        for c in range(ncols):
            if not mask[r, c]:
                continue
            center = values[r, c]
            total = 0.0
            count = 0.0
            lo = np.inf
            hi = -np.inf
            for dr in range(-half, half + 1):
                rr = r + dr
                if rr < 0 or rr >= nrows:
                    continue
                for dc in range(-half, half + 1):
                    cc = c + dc
                    if cc < 0 or cc >= ncols:
                        continue
                    if mask[rr, cc]:
                        v = values[rr, cc]
                        total += v - center
                        count += 1.0
                        lo = min(lo, v)
                        hi = max(hi, v)
            out[r, c] = min(max(center + total / count, lo), hi)
    return out


@njit(cache=True)
def pairwise_weighted_absdiff(values, weights):
    n = values.size
    total = 0.0
    for i in range(n):
        row = 0.0
        for j in range(n):
            row += weights[j] * abs(values[i] - values[j])
        total += weights[i] * row
    return total
