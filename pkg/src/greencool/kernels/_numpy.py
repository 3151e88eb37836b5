"""Pure-numpy kernels.

Reductions accumulate strictly left to right (via ``cumsum``) so results match
the compiled kernels bit for bit.
"""
import numpy as np


def seqsum(x):
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return 0.0
    return float(np.cumsum(x)[-1])


def ols_moments(x, y):
    """Return ``(mean_x, mean_y, sxx, sxy, syy)`` using mean-subtracted sums."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.size
    mx = seqsum(x) / n
    my = seqsum(y) / n
    dx = x - mx
    dy = y - my
    return mx, my, seqsum(dx * dx), seqsum(dx * dy), seqsum(dy * dy)


def weighted_sums(values, weights):
    """Return ``(sum(values * weights), sum(weights))``."""
    values = np.asarray(values, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    return seqsum(values * weights), seqsum(weights)


def box_mean(values, mask, window):
    """Mean of masked cells in a ``window`` x ``window`` box, truncated at edges.

    Computed as ``center + mean(v - center)`` and clipped to the box range, so
    constant boxes and ``window == 1`` reproduce the input exactly. Cells
    outside ``mask`` come back as NaN.
    """
    values = np.asarray(values, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    nrows, ncols = values.shape
    half = window // 2
    center = np.where(mask, values, 0.0)
    w = mask.astype(np.float64)
    total = np.zeros_like(center)
    count = np.zeros_like(center)
    lo = np.full_like(center, np.inf)
    hi = np.full_like(center, -np.inf)
    # same offset order as the compiled kernel: row-major over the box
    for dr in range(-half, half + 1):
        r0, r1 = max(0, -dr), min(nrows, nrows - dr)
        if r0 >= r1:
            continue
        for dc in range(-half, half + 1):
            c0, c1 = max(0, -dc), min(ncols, ncols - dc)
            if c0 >= c1:
                continue
            m = mask[r0 + dr:r1 + dr, c0 + dc:c1 + dc]
            v = values[r0 + dr:r1 + dr, c0 + dc:c1 + dc]
            total[r0:r1, c0:c1] += np.where(m, v - center[r0:r1, c0:c1], 0.0)
            count[r0:r1, c0:c1] += w[r0 + dr:r1 + dr, c0 + dc:c1 + dc]
            lo[r0:r1, c0:c1] = np.where(m, np.minimum(lo[r0:r1, c0:c1], v), lo[r0:r1, c0:c1])
            hi[r0:r1, c0:c1] = np.where(m, np.maximum(hi[r0:r1, c0:c1], v), hi[r0:r1, c0:c1])
    out = np.full_like(center, np.nan)
    mean = center[mask] + total[mask] / count[mask]
    out[mask] = np.minimum(np.maximum(mean, lo[mask]), hi[mask])
    return out


def pairwise_weighted_absdiff(values, weights):
    """Return ``sum_i sum_j w_i w_j |x_i - x_j|``, row by row."""
    x = np.asarray(values, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    total = 0.0
    for i in range(x.size):
        total += w[i] * seqsum(w * np.abs(x[i] - x))
    return total
