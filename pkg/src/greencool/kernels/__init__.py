"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The compiled path is used when numba imports cleanly, unless the environment
variable ``GREENCOOL_DISABLE_NUMBA`` is set to a non-empty value other than
``0``. Both paths accumulate in the same order and are expected to agree
bitwise.
"""
import os

import numpy as np

from . import _numpy as numpy_impl

try:
    if os.environ.get("GREENCOOL_DISABLE_NUMBA", "") not in ("", "0"):
        raise ImportError("numba disabled by GREENCOOL_DISABLE_NUMBA")
    from . import _numba as numba_impl
except ImportError:
    numba_impl = None

BACKEND = "numba" if numba_impl is not None else "numpy"
_impl = numba_impl if numba_impl is not None else numpy_impl


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def seqsum(x):
    return float(_impl.seqsum(_f64(x)))


def ols_moments(x, y):
    return tuple(float(v) for v in _impl.ols_moments(_f64(x), _f64(y)))


def weighted_sums(values, weights):
    num, den = _impl.weighted_sums(_f64(values), _f64(weights))
    return float(num), float(den)


def box_mean(values, mask, window):
    return _impl.box_mean(_f64(values), np.ascontiguousarray(mask, dtype=np.bool_), int(window))


def pairwise_weighted_absdiff(values, weights):
    return float(_impl.pairwise_weighted_absdiff(_f64(values), _f64(weights)))


__all__ = [
    "BACKEND",
    "numpy_impl",
    "numba_impl",
    "seqsum",
    "ols_moments",
    "weighted_sums",
    "box_mean",
    "pairwise_weighted_absdiff",
]
