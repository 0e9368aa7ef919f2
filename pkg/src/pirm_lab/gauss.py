"""Standard normal density and distribution function.

Both functions accept a float or an array and return the same shape. The cdf
goes through the complementary error function so that lower tails keep full
relative precision, which matters once class means sit many standard
deviations from a threshold.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_INV_SQRT_2 = 1.0 / math.sqrt(2.0)


class DomainError(ValueError):
    """Raised for NaN or infinite arguments."""


def _check_finite(x):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"argument must be finite, got {x!r}")
    return arr


def _unwrap(arr: np.ndarray):
    return float(arr) if arr.ndim == 0 else arr


def std_normal_pdf(x):
    arr = _check_finite(x)
    return _unwrap(_INV_SQRT_2PI * np.exp(-0.5 * arr * arr))


def std_normal_cdf(x):
    """P(Z <= x) for Z ~ N(0, 1), clamped to [0, 1]."""
    arr = _check_finite(x)
    out = 0.5 * special.erfc(-arr * _INV_SQRT_2)
    return _unwrap(np.clip(out, 0.0, 1.0))
