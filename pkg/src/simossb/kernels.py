"""Kernel backend selection.

The compiled extension is used when importable; setting the environment
variable ``SIMOSSB_PURE_PYTHON=1`` forces the numpy fallback.
"""
import functools
import os

import numpy as np

from . import _pykernels

if os.environ.get("SIMOSSB_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = _impl.BACKEND


def _contiguous(fn, out_pos=None):
    """Pass array inputs as C-contiguous; the output buffer at ``out_pos`` is left alone."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        args = [a if i == out_pos or not isinstance(a, np.ndarray) else np.ascontiguousarray(a)
                for i, a in enumerate(args)]
        return fn(*args, **kwargs)

    return wrapper


sample_grid = _contiguous(_impl.sample_grid)
marginal_values = _contiguous(_impl.marginal_values)
average_mu = _contiguous(_impl.average_mu)
exact_eu = _contiguous(_impl.exact_eu)
local_bid_product = _contiguous(_impl.local_bid_product, out_pos=6)
local_bid_joint = _contiguous(_impl.local_bid_joint, out_pos=5)
sample_utilities = _contiguous(_impl.sample_utilities)
optimal_grid = _contiguous(_impl.optimal_grid)
clear = _contiguous(_impl.clear)
