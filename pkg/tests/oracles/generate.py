"""Regenerate the frozen oracle values in oracles.json.

This script deliberately does not import nonlocstab: every value comes from
scipy's general-purpose quadrature or plain numpy arithmetic, so it is an
independent route to the quantities the package computes.

    python3 tests/oracles/generate.py
"""
import json
import warnings
import math
import os

import numpy as np
from scipy import integrate

HERE = os.path.dirname(os.path.abspath(__file__))


def constant(delta):
    return lambda x, y: 3.0 / delta ** 3 if abs(x - y) < delta else 0.0


def heterogeneous(delta, eps):
    return lambda x, y: (4.0 - x) * math.exp(x * y * eps) / delta ** 3 if abs(x - y) < delta else 0.0


def power_law(delta, eps):
    c = (3.0 - eps) / delta ** (3.0 - eps)
    return lambda x, y: c * abs(x - y) ** (-eps) if 0 < abs(x - y) < delta else 0.0


def brute_force_matrix(mu, edges, delta):
    """W_ij = (1/h) double integral of mu over cell_i x cell_j, by dblquad."""
    n = len(edges) - 1
    W = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            a, b = edges[i], edges[i + 1]
            c, d = edges[j], edges[j + 1]
            if c - b >= delta or a - d >= delta:
                continue
            h = b - a
            # split the y-range at y = x - delta, x, x + delta so dblquad sees smooth pieces
            total = 0.0
            for lo_off, hi_off in ((-delta, 0.0), (0.0, delta)):
                lower = lambda x, lo_off=lo_off: max(c, x + lo_off)
                upper = lambda x, lo_off=lo_off, hi_off=hi_off: max(lower(x), min(d, x + hi_off))
                total += integrate.dblquad(lambda y, x: mu(x, y), a, b, lower, upper,
                                           epsabs=1e-13, epsrel=1e-12)[0]
            W[i, j] = total / h
    return W


def composite_diagonal(delta, eps, h, n=10 ** 6):
    """(1/h) int int_{cell^2} c |x-y|^-eps by a 10^6-point composite midpoint rule.

    Reduced to 2 int_0^h (h - s) c s^-eps ds and substituted s = t^m with
    m = 1/(1 - eps), which turns the integrand into the smooth m c (h - t^m).
    """
    c = (3.0 - eps) / delta ** (3.0 - eps)
    m = 1.0 / (1.0 - eps)
    top = h ** (1.0 / m)
    t = (np.arange(n) + 0.5) * (top / n)
    integrand = m * c * (h - t ** m)
    return float(2.0 * integrand.sum() * (top / n) / h)


def main():
    warnings.simplefilter("ignore", integrate.IntegrationWarning)
    out = {}
    delta, h = 0.2, 0.1
    edges = np.linspace(-delta, 0.6 + delta, 11)
    out["ten_cell"] = {
        "omega": [0.0, 0.6], "delta": delta, "h": h,
        "constant": brute_force_matrix(constant(delta), edges, delta).tolist(),
        "heterogeneous_eps0.3": brute_force_matrix(heterogeneous(delta, 0.3), edges, delta).tolist(),
    }
    out["ten_cell"]["power_law_eps0.5"] = brute_force_matrix(power_law(delta, 0.5), edges, delta).tolist()
    out["power_law_diagonal"] = {f"{e}": composite_diagonal(0.2, e, 1.0 / 200) for e in (0.2, 0.5, 0.8)}
    out["row_mass"] = {
        "power_law_eps0.5": integrate.quad(lambda s: 2.5 * 0.2 ** -2.5 * abs(s) ** -0.5, -0.2, 0.2,
                                           points=[0.0], limit=200)[0],
        "heterogeneous_eps0_col_y0.5": integrate.quad(lambda x: (4.0 - x) / 0.2 ** 3, 0.3, 0.7)[0],
        "gaussian_delta0.2": integrate.quad(lambda s: math.exp(-s * s), -0.2, 0.2)[0],
    }
    d = 0.1
    sq = 2 * integrate.dblquad(lambda y, x: (3 / d ** 3) ** 2, 0.0, d, lambda x: x - d, lambda x: 0.0,
                               epsabs=1e-12)[0]
    out["constant_l2_omega_gamma_delta0.1"] = math.sqrt(sq)
    with open(os.path.join(HERE, "oracles.json"), "w") as fh:
        json.dump(out, fh, indent=1, sort_keys=True)
        fh.write("\n")


if __name__ == "__main__":
    main()
