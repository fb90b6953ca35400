"""Quadrature helpers shared by the kernel, assembly and stability modules."""
import warnings

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate

from .errors import QuadratureError

_RULES = {}


def legendre_rule(n):
    if n not in _RULES:
        _RULES[n] = leggauss(n)
    return _RULES[n]


def composite_rule(n=16, panels=1):
    """Composite Gauss-Legendre nodes and weights on [0, 1]."""
    t, w = legendre_rule(n)
    edges = np.linspace(0.0, 1.0, panels + 1)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (a + b) / 2 + (b - a) / 2 * t
    weights = (b - a) / 2 * w
    return nodes.ravel(), np.broadcast_to(weights, nodes.shape).ravel()


def adaptive(func, a, b, epsabs=1e-13, epsrel=1e-11, limit=400, what="integral"):
    """scipy ``quad`` with a hard failure when the tolerance is clearly missed."""
    if not b > a:
        return 0.0, 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(func, a, b, epsabs=epsabs, epsrel=epsrel, limit=limit)
    if not np.isfinite(val):
        raise QuadratureError(f"non-finite {what} on [{a}, {b}]", err)
    if err > 1e3 * max(epsabs, epsrel * abs(val)):
        raise QuadratureError(f"{what} on [{a}, {b}] did not converge", err)
    return val, err


def _split(lo, hi, breaks):
    pts = sorted({lo, hi} | {float(p) for p in breaks if lo < p < hi})
    return list(zip(pts[:-1], pts[1:]))


def band_integral(func, xa, xb, ya, yb, delta, xbreaks=(), ybreaks=(),
                  epsabs=1e-13, epsrel=1e-11, order=16, panels=2):
    """Integrate ``func(x, y)`` over [xa,xb] x [ya,yb] restricted to |y - x| < delta.

    The integral is written in offset coordinates s = y - x. The outer
    integral over s is adaptive (so integrable singularities at s = 0 are
    handled); the inner integral over x uses composite Gauss-Legendre on the
    exact x-range belonging to each s. ``func`` must be vectorized in x.
    Points where ``func`` is not smooth in x or y go in ``xbreaks``/``ybreaks``.
    """
    t, w = composite_rule(order, panels)
    total = 0.0
    err = 0.0
    for x0, x1 in _split(xa, xb, xbreaks):
        for y0, y1 in _split(ya, yb, ybreaks):
            s_lo = max(y0 - x1, -delta)
            s_hi = min(y1 - x0, delta)
            if not s_hi > s_lo:
                continue

            def inner(s, x0=x0, x1=x1, y0=y0, y1=y1):
                lo = max(x0, y0 - s)
                hi = min(x1, y1 - s)
                if not hi > lo:
                    return 0.0
                x = lo + (hi - lo) * t
                return (hi - lo) * np.dot(w, func(x, x + s))

            for a, b in _split(s_lo, s_hi, (0.0, y0 - x0, y1 - x1)):
                v, e = adaptive(inner, a, b, epsabs, epsrel, what="band integral")
                total += v
                err += e
    return total
