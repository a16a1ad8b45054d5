"""Scalar special-function kernels: log-gamma and Laguerre polynomials."""

from __future__ import annotations

import math

import numpy as np

# Lanczos approximation, g = 7, nine terms.
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_RESCALE = 1e250


def _log_gamma_lanczos(x: np.ndarray) -> np.ndarray:
    # valid for x >= 0.5
    z = x - 1.0
    acc = np.full_like(z, _LANCZOS_COEF[0])
    for i, c in enumerate(_LANCZOS_COEF[1:], start=1):
        acc += c / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * np.log(t) - t + np.log(acc)


def log_gamma(x):
    """Natural log of the gamma function for positive real arguments.

    Accepts a scalar or an array; returns the same shape. Arguments below 0.5
    go through the reflection formula.

    Raises
    ------
    ValueError
        If any argument is non-positive or not finite.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError("log_gamma requires finite positive arguments")
    out = np.empty_like(arr)
    big = arr >= 0.5
    out[big] = _log_gamma_lanczos(arr[big])
    small = ~big
    if np.any(small):
        xs = arr[small]
        out[small] = np.log(np.pi / np.sin(np.pi * xs)) - _log_gamma_lanczos(1.0 - xs)
    if out.ndim == 0:
        return float(out)
    return out


def laguerre(nmax: int, x: float) -> np.ndarray:
    """Values L_0(x) .. L_nmax(x) from the three-term recurrence."""
    if nmax < 0:
        raise ValueError("nmax must be >= 0")
    out = np.empty(nmax + 1)
    out[0] = 1.0
    if nmax >= 1:
        out[1] = 1.0 - x
    for k in range(1, nmax):
        out[k + 1] = ((2 * k + 1 - x) * out[k] - k * out[k - 1]) / (k + 1)
    return out


def log_laguerre_negative(nmax: int, x: float) -> np.ndarray:
    """log L_n(x) for n = 0..nmax at a non-positive argument.

    Every term of the recurrence is positive for x <= 0, so it runs forward
    without cancellation; values are rescaled on the fly to stay in range.
    """
    if x > 0:
        raise ValueError("argument must be <= 0")
    if nmax < 0:
        raise ValueError("nmax must be >= 0")
    out = np.empty(nmax + 1)
    out[0] = 0.0
    if nmax == 0:
        return out
    prev, cur = 1.0, 1.0 - x
    offset = 0.0
    out[1] = math.log(cur)
    for k in range(1, nmax):
        nxt = ((2 * k + 1 - x) * cur - k * prev) / (k + 1)
        prev, cur = cur, nxt
        if cur > _RESCALE:
            offset += math.log(cur)
            prev /= cur
            cur = 1.0
        out[k + 1] = offset + math.log(cur)
    return out
