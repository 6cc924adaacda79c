"""Special functions: Bessel J of integer/half-integer order and complex E_n.

Bessel values use the ascending power series for x <= 12 and the Hankel
asymptotic expansion above.  For half-integer orders the Hankel series
terminates, so the large-argument branch is exact up to rounding.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special as sps

SERIES_SWITCH = 12.0
_MAX_TWICE_ORDER = 8  # orders up to 4 cover dimensions d <= 8


def _check_order(nu: float) -> None:
    two_nu = 2.0 * nu
    if abs(two_nu - round(two_nu)) > 1e-12 or not (-1 <= round(two_nu) <= _MAX_TWICE_ORDER):
        raise ValueError(f"unsupported Bessel order {nu!r}; need an integer or half-integer in [-1/2, 4]")


def hankel_coefficients(nu: float, kmax: int = 60) -> np.ndarray:
    """Coefficients a_k(nu) of the Hankel expansion, a_0 = 1."""
    mu = 4.0 * nu * nu
    a = np.empty(kmax + 1)
    a[0] = 1.0
    for k in range(1, kmax + 1):
        a[k] = a[k - 1] * (mu - (2 * k - 1) ** 2) / (k * 8.0)
    return a


def _series(nu: float, x: np.ndarray) -> np.ndarray:
    half = 0.5 * x
    term = half**nu / math.gamma(nu + 1.0) if nu != 0 else np.ones_like(x)
    total = term.copy()
    q = -half * half
    for k in range(1, 80):
        term = term * q / (k * (k + nu))
        total += term
        if np.all(np.abs(term) <= 1e-17 * np.maximum(np.abs(total), 1e-300)):
            break
    return total


def _hankel(nu: float, x: np.ndarray) -> np.ndarray:
    a = hankel_coefficients(nu)
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    inv = 1.0 / x
    power = np.ones_like(x)
    last = np.full_like(x, np.inf)
    for k in range(a.size):
        term = a[k] * power
        mag = np.abs(term)
        # asymptotic series: stop each entry once terms start growing
        active = mag < last
        if not np.any(active):
            break
        sign = -1.0 if (k // 2) % 2 else 1.0
        if k % 2 == 0:
            p = p + np.where(active, sign * term, 0.0)
        else:
            q = q + np.where(active, sign * term, 0.0)
        last = np.where(active, mag, 0.0)
        if a[k] == 0.0:
            break
        power = power * inv
    chi = x - 0.5 * nu * math.pi - 0.25 * math.pi
    return np.sqrt(2.0 / (math.pi * x)) * (p * np.cos(chi) - q * np.sin(chi))


def bessel_J(nu: float, x):
    """Bessel function of the first kind J_nu(x) for x >= 0.

    Accepts scalars or arrays.  Orders are restricted to integers and
    half-integers in [-1/2, 4].
    """
    _check_order(nu)
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise ValueError("bessel_J is defined here for x >= 0 only")
    flat = np.atleast_1d(arr).ravel()
    out = np.empty_like(flat)
    small = flat <= SERIES_SWITCH
    if np.any(small):
        xs = flat[small]
        if nu < 0:
            # J_{-1/2} is singular at 0; use the closed form
            with np.errstate(divide="ignore"):
                out[small] = np.sqrt(2.0 / (math.pi * xs)) * np.cos(xs)
        else:
            out[small] = _series(nu, xs)
    if np.any(~small):
        out[~small] = _hankel(nu, flat[~small])
    out = out.reshape(np.shape(arr))
    return float(out) if np.ndim(arr) == 0 else out


def expn_complex(n: int, z) -> np.ndarray:
    """Generalised exponential integral E_n(z) for complex z with Re z >= 0.

    E_1 comes from scipy; higher orders use upward recurrence near the
    origin and a Lentz continued fraction for |z| > 1, where the recurrence
    loses digits.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    if n == 1:
        return sps.exp1(z)
    out = np.empty_like(z)
    near = np.abs(z) <= 1.0
    if np.any(near):
        zn = z[near]
        e = sps.exp1(zn)
        ez = np.exp(-zn)
        for m in range(1, n):
            e = (ez - zn * e) / m
        out[near] = e
    far = ~near
    if np.any(far):
        out[far] = _expn_cf(n, z[far])
    return out


def _expn_cf(n: int, z: np.ndarray) -> np.ndarray:
    tiny = 1e-300
    b = z + n
    c = np.full_like(z, 1.0 / tiny)
    d = 1.0 / b
    h = d.copy()
    for i in range(1, 2000):
        an = -i * (n - 1 + i)
        b = b + 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h = h * delta
        if np.all(np.abs(delta - 1.0) < 1e-16):
            break
    return h * np.exp(-z)
