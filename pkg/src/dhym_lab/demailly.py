"""Regularized maximum with a smooth compactly supported kernel.

``regularized_max(t0, t1, delta)`` smooths ``max`` by averaging against two
copies of an even, positive, unit-mass bump supported in (-1, 1).  Writing
``d = (t1 - t0)/delta`` the value is ``t0 + delta * G(d)`` with
``G(d) = E[relu(d + h1 - h0)]``; translation invariance and the exact-max
property for ``|t0 - t1| >= 2 delta`` are consequences of this form.
"""

from __future__ import annotations

import numpy as np

_GAUSS_N = 96
_CHEB_DEG = 220
_interp_cache = {}


def bump(x):
    """Normalized C-infinity bump exp(-1/(1-x^2)) on (-1, 1)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    xi = x[inside]
    out[inside] = np.exp(-1.0 / (1.0 - xi**2))
    return out


def _bump_norm():
    nodes, weights = np.polynomial.legendre.leggauss(_GAUSS_N)
    return float(np.sum(weights * bump(nodes)))


def _relu_moment(d):
    """E[relu(d + h1 - h0)] for h_i drawn from the normalized bump.

    Evaluated as the double integral over the smooth pieces; the relu kink
    lies along h1 = h0 - d, so the h1-integration is restricted to
    (max(-1, h0 - d), 1) where the integrand is smooth.
    """
    norm = _bump_norm()
    nodes, weights = np.polynomial.legendre.leggauss(_GAUSS_N)

    def inner(h0):
        lo = max(-1.0, h0 - d)
        if lo >= 1.0:
            return 0.0
        mid = 0.5 * (lo + 1.0)
        half = 0.5 * (1.0 - lo)
        h1 = mid + half * nodes
        vals = (d + h1 - h0) * bump(h1)
        return half * float(np.sum(weights * vals))

    # outer integrand is smooth except where h0 - d crosses +-1
    breakpoints = [-1.0]
    for c in (d - 1.0, d + 1.0):
        if -1.0 < c < 1.0:
            breakpoints.append(c)
    breakpoints.append(1.0)
    breakpoints = sorted(set(breakpoints))
    total = 0.0
    for a, b in zip(breakpoints[:-1], breakpoints[1:]):
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        h0 = mid + half * nodes
        vals = np.array([inner(x) * bump(x) for x in h0])
        total += half * float(np.sum(weights * vals))
    return total / norm**2


def _interpolant():
    if "G" not in _interp_cache:
        cheb = np.polynomial.chebyshev.Chebyshev.interpolate(
            lambda d: np.array([_relu_moment(float(x)) for x in np.atleast_1d(d)]),
            deg=_CHEB_DEG,
            domain=[-2.0, 2.0],
        )
        _interp_cache["G"] = cheb
    return _interp_cache["G"]


def regularized_max(t0, t1, delta):
    """Smooth convex regularization of max(t0, t1).

    Satisfies ``max(t0,t1) <= M <= max(t0,t1) + delta``, equals the larger
    argument exactly once they are 2*delta apart, and commutes with adding
    a common constant.  Vectorized over t0/t1.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    t0 = np.asarray(t0, dtype=float)
    t1 = np.asarray(t1, dtype=float)
    d = (t1 - t0) / delta
    out = np.where(d <= -2.0, t0, np.where(d >= 2.0, t1, np.nan))
    mid = np.abs(d) < 2.0
    if np.any(mid):
        g = _interpolant()(np.clip(d[np.asarray(mid)], -2.0, 2.0))
        out = np.array(out)
        out[mid] = t0[np.asarray(mid)] + delta * g
    if out.ndim == 0:
        return float(out)
    return out
