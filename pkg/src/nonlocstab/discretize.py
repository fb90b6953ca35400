"""Uniform mesh on Omega u Gamma and piecewise-constant assembly of the nonlocal Laplacian.

With piecewise-constant trial and test functions the discrete operator is

    W_ij = (1/h) * integral over cell_i x cell_j of mu(x, y) chi(|x - y| < delta)
    (L_h u)_i = sum_j W_ij (u_j - u_i)

so that A = W[Omega, Omega] - diag(row sums) and B = W[Omega, Gamma].
Translation-invariant kernels use closed-form cell-pair integrals; the other
families use tensor Gauss-Legendre in offset coordinates with an adaptive
fallback.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from ._quadrature import band_integral, legendre_rule
from .errors import ConfigError, QuadratureError
from .kernels import BondRemovalKernel, Interval, KernelSpec, TranslationInvariantKernel


@dataclass(frozen=True)
class DomainSpec:
    """Omega = (a, b) with collar Gamma = (a - delta, a) u (b, b + delta)."""

    omega: Interval
    delta: float

    def __post_init__(self):
        if not (math.isfinite(self.delta) and self.delta > 0):
            raise ConfigError(f"horizon must be positive, got delta={self.delta}", path="domain.delta")

    @classmethod
    def unit(cls, delta):
        return cls(Interval(0.0, 1.0), float(delta))

    @property
    def closure(self):
        return Interval(self.omega.lo - self.delta, self.omega.hi + self.delta)

    @property
    def collar(self):
        return (Interval(self.omega.lo - self.delta, self.omega.lo),
                Interval(self.omega.hi, self.omega.hi + self.delta))

    @property
    def diameter(self):
        return self.omega.length


@dataclass(frozen=True, eq=False)
class Mesh:
    domain: DomainSpec
    h: float
    n_omega: int
    n_collar: int
    collar_aligned: bool = True
    requested_h: float = None

    @property
    def n_cells(self):
        return self.n_omega + 2 * self.n_collar

    @property
    def edges(self):
        lo = self.domain.omega.lo - self.n_collar * self.h
        return lo + self.h * np.arange(self.n_cells + 1)

    @property
    def midpoints(self):
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    @property
    def cells(self):
        e = self.edges
        return list(zip(e[:-1], e[1:]))

    @property
    def omega_idx(self):
        return np.arange(self.n_collar, self.n_collar + self.n_omega)

    @property
    def left_idx(self):
        return np.arange(self.n_collar)

    @property
    def right_idx(self):
        return np.arange(self.n_collar + self.n_omega, self.n_cells)

    @property
    def gamma_idx(self):
        return np.concatenate([self.left_idx, self.right_idx])

    def region_idx(self, region):
        """Cell indices for region name 'omega', 'gamma' or 'all'."""
        if region in ("omega", "Omega"):
            return self.omega_idx
        if region in ("gamma", "Gamma"):
            return self.gamma_idx
        if region in ("all", "closure"):
            return np.arange(self.n_cells)
        raise ConfigError(f"unknown region '{region}'")

    def describe(self):
        return {"h": self.h, "n_omega": self.n_omega, "n_collar": self.n_collar,
                "n_cells": self.n_cells, "collar_aligned": self.collar_aligned,
                "omega": [self.domain.omega.lo, self.domain.omega.hi], "delta": self.domain.delta}


def build_mesh(domain, h):
    """Uniform mesh with cell width snapped so that the cells tile Omega exactly.

    The collar gets round(delta/h) cells per side. If that falls short of
    delta (delta not a multiple of the snapped width), one more cell is added
    and the mesh is flagged as not collar-aligned.
    """
    h = float(h)
    if not (math.isfinite(h) and h > 0):
        raise ConfigError(f"mesh width must be positive, got h={h}", path="mesh.h")
    if h >= domain.delta:
        raise ConfigError(f"mesh width h={h} must be smaller than delta={domain.delta}", path="mesh.h")
    n = max(1, int(round(domain.omega.length / h)))
    hh = domain.omega.length / n
    if hh >= domain.delta:
        raise ConfigError(f"snapped mesh width {hh} is not smaller than delta={domain.delta}", path="mesh.h")
    m = max(1, int(round(domain.delta / hh)))
    aligned = abs(m * hh - domain.delta) <= 1e-9 * domain.delta
    if not aligned and m * hh < domain.delta:
        m += 1
    return Mesh(domain, hh, n, m, aligned, h)


@dataclass(frozen=True, eq=False)
class Field:
    """Piecewise-constant function on a mesh (one value per cell)."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.mesh.n_cells,):
            raise ConfigError(f"field has {v.size} values for {self.mesh.n_cells} cells")
        if not np.all(np.isfinite(v)):
            raise ConfigError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def sample(cls, mesh, func):
        return cls(mesh, np.asarray(func(mesh.midpoints), dtype=float) * np.ones(mesh.n_cells))

    def on(self, region):
        return self.values[self.mesh.region_idx(region)]

    def __sub__(self, other):
        return Field(self.mesh, self.values - other.values)

    def to_csv(self, path):
        data = np.column_stack([self.mesh.midpoints, self.values])
        with open(path, "w", newline="") as fh:
            fh.write("x,u\n")
            for x, u in data:
                fh.write(f"{x:.12g},{u:.17g}\n")


@dataclass(frozen=True, eq=False)
class AssembledOperator:
    """Discrete operator: A (Omega x Omega), B (Omega x Gamma), row sums per Omega cell."""

    mesh: Mesh
    matrix: np.ndarray
    collar_coupling: np.ndarray
    row_sums: np.ndarray
    coupling: np.ndarray = field(repr=False)  # full W over all cells

    @property
    def decoupled(self):
        """Omega cells with no interaction at all (pinned by the solver)."""
        return self.row_sums <= 1e-14 * max(1.0, float(np.max(self.row_sums)))

    def apply(self, u):
        """(L_h u) on Omega cells for a full field or value array."""
        vals = u.values if isinstance(u, Field) else np.asarray(u, dtype=float)
        return self.matrix @ vals[self.mesh.omega_idx] + self.collar_coupling @ vals[self.mesh.gamma_idx]

    def dump(self, path):
        np.savetxt(path, np.hstack([self.matrix, self.collar_coupling]), fmt="%.17g")


# -- cell-pair integrals ---------------------------------------------------

def _ti_rectangle(kernel, x0, x1, y0, y1):
    """Exact integral of phi(y - x) over [x0,x1] x [y0,y1] for a translation-invariant kernel.

    In s = y - x the x-extent at fixed s is a trapezoid: rising on
    [y0 - x1, min], flat at the smaller width, falling on [max, y1 - x0].
    """
    x0, x1, y0, y1 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x0, x1, y0, y1)))
    t1, t2, t3, t4 = y0 - x1, y0 - x0, y1 - x1, y1 - x0
    lo, hi = np.minimum(t2, t3), np.maximum(t2, t3)
    flat = np.minimum(x1 - x0, y1 - y0)
    return (kernel.moment(t1, lo, -t1, 1.0) + flat * kernel.moment(lo, hi)
            + kernel.moment(hi, t4, t4, -1.0))


def _bond_pieces(kernel, a, b):
    """Pieces of [a, b] outside (and inside) the excised interval."""
    xa, xb = kernel.excised.lo, kernel.excised.hi
    outside = [(a, min(b, xa)), (max(a, xb), b)]
    inside = [(max(a, xa), min(b, xb))]
    keep = lambda ps: [(p, q) for p, q in ps if q > p]
    return keep(outside), keep(inside)


def _rect_integral(kernel, x0, x1, y0, y1):
    """Integral of mu over [x0,x1] x [y0,y1] within the horizon (scalar cells)."""
    if isinstance(kernel, TranslationInvariantKernel):
        return float(_ti_rectangle(kernel, x0, x1, y0, y1))
    if isinstance(kernel, BondRemovalKernel):
        xo, xi = _bond_pieces(kernel, x0, x1)
        yo, yi = _bond_pieces(kernel, y0, y1)
        pairs = [(p, q) for p in xo for q in yo]
        if kernel.mode == "cross":
            pairs += [(p, q) for p in xi for q in yi]
        return sum(_rect_integral(kernel.base, p[0], p[1], q[0], q[1]) for p, q in pairs)
    brk = kernel.breakpoints()
    return band_integral(kernel, x0, x1, y0, y1, kernel.delta, xbreaks=brk, ybreaks=brk)


def cell_pair_coupling(kernel, cell_i, cell_j):
    """(1/h) * integral of mu over cell_i x cell_j restricted to the horizon."""
    (x0, x1), (y0, y1) = cell_i, cell_j
    return _rect_integral(kernel, x0, x1, y0, y1) / (x1 - x0)


def _offset_gauss(kernel, edges, h, k, order):
    """Integral over all pairs (i, i + k) by Gauss in (s, x); returns (rows, values)."""
    n = edges.size - 1
    rows = np.arange(max(0, -k), min(n, n - k))
    t, w = legendre_rule(order)
    total = np.zeros(rows.size)
    for a, b in (((k - 1) * h, k * h), (k * h, (k + 1) * h)):
        a, b = max(a, -kernel.delta), min(b, kernel.delta)
        if not b > a:
            continue
        s = a + (b - a) * (t + 1) / 2
        ws = (b - a) / 2 * w
        for sv, wv in zip(s, ws):
            width = h - abs(sv - k * h)
            lo = edges[rows] + max(0.0, k * h - sv)
            xx = lo[:, None] + width * (t[None, :] + 1) / 2
            vals = kernel(xx, xx + sv)
            total += wv * width / 2 * (vals @ w)
    return rows, total


def assemble(kernel, mesh, tol=1e-10):
    """Assemble the discrete operator for ``kernel`` on ``mesh``."""
    if not isinstance(kernel, KernelSpec):
        raise ConfigError("assemble needs a KernelSpec")
    if abs(kernel.delta - mesh.domain.delta) > 1e-12 * mesh.domain.delta:
        raise ConfigError(f"kernel horizon {kernel.delta} differs from domain delta {mesh.domain.delta}")
    h = mesh.h
    edges = mesh.edges
    n = mesh.n_cells
    kmax = int(math.ceil(kernel.delta / h - 1e-12))
    W = np.zeros((n, n))
    if isinstance(kernel, TranslationInvariantKernel):
        for k in range(-kmax, kmax + 1):
            val = float(_ti_rectangle(kernel, 0.0, h, k * h, (k + 1) * h)) / h
            idx = np.arange(max(0, -k), min(n, n - k))
            W[idx, idx + k] = val
    elif isinstance(kernel, BondRemovalKernel) and isinstance(kernel.base, TranslationInvariantKernel):
        for k in range(-kmax, kmax + 1):
            val = float(_ti_rectangle(kernel.base, 0.0, h, k * h, (k + 1) * h)) / h
            idx = np.arange(max(0, -k), min(n, n - k))
            W[idx, idx + k] = val
        # only cells meeting the excised interval need the piecewise treatment
        touched = np.flatnonzero((edges[1:] > kernel.excised.lo) & (edges[:-1] < kernel.excised.hi))
        for i in touched:
            for j in range(max(0, i - kmax), min(n, i + kmax + 1)):
                for a, b in ((i, j), (j, i)):
                    W[a, b] = _rect_integral(kernel, edges[a], edges[a + 1], edges[b], edges[b + 1]) / h
    else:
        singular = kernel.singular_exponent > 0
        for k in range(-kmax, kmax + 1):
            if singular:
                rows, fine, bad = np.arange(max(0, -k), min(n, n - k)), None, None
            else:
                rows, fine = _offset_gauss(kernel, edges, h, k, 12)
                _, coarse = _offset_gauss(kernel, edges, h, k, 8)
                bad = np.abs(fine - coarse) > tol * np.maximum(1.0, np.abs(fine)) * h
            for pos, i in enumerate(rows):
                j = i + k
                if fine is not None and not bad[pos]:
                    W[i, j] = fine[pos] / h
                else:
                    try:
                        W[i, j] = _rect_integral(kernel, edges[i], edges[i + 1], edges[j], edges[j + 1]) / h
                    except QuadratureError as exc:
                        raise QuadratureError(f"cell pair ({i}, {j}): {exc}", exc.estimate) from exc
    om, ga = mesh.omega_idx, mesh.gamma_idx
    rows = W[om]
    lam = rows.sum(axis=1)
    A = rows[:, om].copy()
    A[np.arange(om.size), np.arange(om.size)] -= lam
    return AssembledOperator(mesh, A, rows[:, ga].copy(), lam, W)
