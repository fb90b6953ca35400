"""Kernel families and the kernel functionals used by the stability constants.

A kernel is a nonnegative two-point interaction ``mu(x, y)`` with compact
support ``|x - y| < delta``. Every family is a ``KernelSpec`` subclass and is
called as ``kernel(x, y)`` with numpy broadcasting.

Slice masses ``lambda_at`` (integrate over y) and ``gamma_at`` (integrate over
x) are analytic for the translation-invariant families; the remaining
families use composite Gauss-Legendre with an adaptive fallback.
"""
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special
from scipy.interpolate import RegularGridInterpolator

from ._quadrature import adaptive, band_integral, composite_rule
from .errors import ConfigError, DegenerateKernelError, KernelError


@dataclass(frozen=True)
class Interval:
    """Open interval (lo, hi)."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.hi > self.lo):
            raise ConfigError(f"invalid interval ({self.lo}, {self.hi})")

    @property
    def length(self):
        return self.hi - self.lo

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return (x > self.lo) & (x < self.hi)


def _window(x, lo, hi, delta):
    x = np.asarray(x, dtype=float)
    a = np.maximum(lo, x - delta)
    b = np.minimum(hi, x + delta)
    return x, a, np.maximum(a, b)


class KernelSpec:
    """Base class for kernel families.

    Subclasses implement ``_raw(x, y)`` (values inside the horizon) and may
    override ``row_integral``/``col_integral`` with closed forms.
    """

    family = "abstract"
    translation_invariant = False
    singular_exponent = 0.0

    def __init__(self, delta, symmetric):
        delta = float(delta)
        if not (math.isfinite(delta) and delta > 0):
            raise KernelError(f"horizon must be positive, got delta={delta}")
        self.delta = delta
        self.symmetric = bool(symmetric)

    # pointwise values
    def __call__(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        out = np.zeros(x.shape)
        inside = np.abs(y - x) < self.delta
        if np.any(inside):
            out[inside] = self._raw(x[inside], y[inside])
        return out if out.ndim else float(out)

    def _raw(self, x, y):
        raise NotImplementedError

    def breakpoints(self):
        """Coordinates where slices of the kernel fail to be smooth."""
        return ()

    # slice masses
    def row_integral(self, x, lo, hi):
        """Integral of mu(x, .) over (lo, hi), vectorized in x."""
        x, a, b = _window(x, lo, hi, self.delta)
        return _generic_slice(lambda xx, yy: self(xx, yy), x, a, b, self.breakpoints(),
                              rows=True, singular=self.singular_exponent > 0)

    def col_integral(self, y, lo, hi):
        """Integral of mu(., y) over (lo, hi), vectorized in y."""
        y, a, b = _window(y, lo, hi, self.delta)
        return _generic_slice(lambda yy, xx: self(xx, yy), y, a, b, self.breakpoints(),
                              rows=False, singular=self.singular_exponent > 0)

    def to_dict(self):
        raise ConfigError(f"kernel family '{self.family}' is not serializable")

    def __repr__(self):
        try:
            d = self.to_dict()
        except ConfigError:
            d = {"family": self.family, "delta": self.delta}
        return f"{type(self).__name__}({d})"


def _generic_slice(func, x, a, b, breaks, rows, singular):
    """Vectorized slice integral with a Gauss-order error check.

    ``func(pivot, other)`` evaluates the kernel with the fixed coordinate
    first. The window is split at the pivot (kink or singularity of the
    kernel in the difference variable) and at the kernel breakpoints.
    """
    x = np.atleast_1d(x).astype(float)
    a = np.broadcast_to(a, x.shape).astype(float)
    b = np.broadcast_to(b, x.shape).astype(float)
    out = np.zeros(x.shape)
    if singular:
        for k in range(x.size):
            out.flat[k] = _adaptive_slice(func, x.flat[k], a.flat[k], b.flat[k], breaks)
        return out
    cuts = [np.clip(x, a, b)] + [np.clip(np.full(x.shape, p), a, b) for p in breaks]
    pts = np.sort(np.stack([a, b] + cuts, axis=-1), axis=-1)
    coarse = np.zeros(x.shape)
    t16, w16 = composite_rule(16, 2)
    t8, w8 = composite_rule(8, 2)
    for j in range(pts.shape[-1] - 1):
        lo, hi = pts[..., j], pts[..., j + 1]
        span = (hi - lo)[..., None]
        for t, w, acc in ((t16, w16, out), (t8, w8, coarse)):
            nodes = lo[..., None] + span * t
            vals = func(np.broadcast_to(x[..., None], nodes.shape), nodes)
            acc += (span * w * vals).sum(axis=-1)
    bad = np.abs(out - coarse) > 1e-10 * np.maximum(1.0, np.abs(out))
    for k in np.flatnonzero(bad):
        out.flat[k] = _adaptive_slice(func, x.flat[k], a.flat[k], b.flat[k], breaks)
    return out


def _adaptive_slice(func, x, a, b, breaks):
    if not b > a:
        return 0.0
    pts = sorted({a, b} | {p for p in (x, *breaks) if a < p < b})
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        total += adaptive(lambda y: float(func(np.array([x]), np.array([y]))[0]), lo, hi,
                          what="kernel slice")[0]
    return total


class TranslationInvariantKernel(KernelSpec):
    """Kernels of the form mu(x, y) = phi(y - x), with phi even."""

    translation_invariant = True

    def __init__(self, delta):
        super().__init__(delta, symmetric=True)

    def profile(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape)
        inside = np.abs(s) < self.delta
        out[inside] = self._profile(s[inside])
        return out if out.ndim else float(out)

    def _raw(self, x, y):
        return self._profile(y - x)

    def antiderivative(self, s, c0, c1):
        """G with G'(s) = phi(s) * (c0 + c1 s) on (-delta, delta)."""
        raise NotImplementedError

    def moment(self, a, b, c0=1.0, c1=0.0):
        """Integral of phi(s) (c0 + c1 s) over (a, b) clipped to the horizon."""
        a = np.clip(a, -self.delta, self.delta)
        b = np.clip(b, -self.delta, self.delta)
        b = np.maximum(a, b)
        return self.antiderivative(b, c0, c1) - self.antiderivative(a, c0, c1)

    def row_integral(self, x, lo, hi):
        x = np.asarray(x, dtype=float)
        return self.moment(lo - x, hi - x)

    def col_integral(self, y, lo, hi):
        y = np.asarray(y, dtype=float)
        return self.moment(y - hi, y - lo)


class PowerLawKernel(TranslationInvariantKernel):
    """(3 - eps) delta^(eps - 3) |x - y|^(-eps), weakly singular for eps > 0."""

    family = "power_law"

    def __init__(self, delta, eps, scale=1.0):
        super().__init__(delta)
        eps = float(eps)
        if not (0.0 <= eps < 1.0):
            raise KernelError(f"integrability requires eps<1 (and eps>=0), got eps={eps}",
                              path="kernel.eps")
        if not scale > 0:
            raise KernelError("kernel scale must be positive")
        self.eps = eps
        self.scale = float(scale)
        self.coefficient = self.scale * (3.0 - eps) * self.delta ** (eps - 3.0)
        self.singular_exponent = eps

    def _profile(self, s):
        return self.coefficient * np.abs(s) ** (-self.eps)

    def antiderivative(self, s, c0, c1):
        e = self.eps
        a = np.abs(s)
        return self.coefficient * (c0 * np.sign(s) * a ** (1 - e) / (1 - e) + c1 * a ** (2 - e) / (2 - e))

    def to_dict(self):
        d = {"family": self.family, "delta": self.delta, "eps": self.eps}
        if self.scale != 1.0:
            d["scale"] = self.scale
        return d


class ConstantKernel(PowerLawKernel):
    """Indicator kernel c on the horizon; c defaults to 3 delta^-3."""

    family = "constant"

    def __init__(self, delta, value=None):
        delta = float(delta)
        if not (math.isfinite(delta) and delta > 0):
            raise KernelError(f"horizon must be positive, got delta={delta}")
        base = 3.0 / delta ** 3
        value = base if value is None else float(value)
        if not value > 0:
            raise KernelError(f"constant kernel value must be positive, got {value}")
        super().__init__(delta, 0.0, scale=value / base)
        self.value = value

    def to_dict(self):
        return {"family": self.family, "delta": self.delta, "value": self.value}


class TruncatedGaussianKernel(TranslationInvariantKernel):
    """c exp(-(x - y)^2) on the horizon, with c making each interior slice mass 1."""

    family = "gaussian"

    def __init__(self, delta):
        super().__init__(delta)
        self.normalizer = 1.0 / (math.sqrt(math.pi) * math.erf(self.delta))

    def _profile(self, s):
        return self.normalizer * np.exp(-s * s)

    def antiderivative(self, s, c0, c1):
        s = np.asarray(s, dtype=float)
        return self.normalizer * (c0 * 0.5 * math.sqrt(math.pi) * special.erf(s) - 0.5 * c1 * np.exp(-s * s))

    def to_dict(self):
        return {"family": self.family, "delta": self.delta}


class HeterogeneousExpKernel(KernelSpec):
    """(4 - x) exp(x y eps) / delta^3: position dependent and nonsymmetric."""

    family = "heterogeneous_exp"

    def __init__(self, delta, eps):
        super().__init__(delta, symmetric=False)
        self.eps = float(eps)
        if not math.isfinite(self.eps):
            raise KernelError("eps must be finite", path="kernel.eps")

    def _raw(self, x, y):
        return (4.0 - x) * np.exp(x * y * self.eps) / self.delta ** 3

    def to_dict(self):
        return {"family": self.family, "delta": self.delta, "eps": self.eps}


class BondRemovalKernel(KernelSpec):
    """Base kernel with the bonds touching an excised interval removed.

    mode "all" zeroes mu(x, y) when x or y lies in the excised interval, so
    the excised material is fully decoupled. mode "cross" only removes bonds
    with exactly one end inside it.
    """

    family = "bond_removal"

    def __init__(self, base, excised, mode="all"):
        if not isinstance(base, KernelSpec):
            raise KernelError("bond removal needs a base kernel")
        if mode not in ("all", "cross"):
            raise KernelError(f"unknown bond removal mode '{mode}'", path="kernel.mode")
        super().__init__(base.delta, symmetric=base.symmetric)
        self.base = base
        self.excised = excised
        self.mode = mode
        self.singular_exponent = base.singular_exponent

    def keep(self, x, y):
        inx = self.excised.contains(x)
        iny = self.excised.contains(y)
        if self.mode == "all":
            return ~inx & ~iny
        return inx == iny

    def _raw(self, x, y):
        return self.base._raw(x, y) * self.keep(x, y)

    def breakpoints(self):
        lo, hi, d = self.excised.lo, self.excised.hi, self.delta
        return tuple(self.base.breakpoints()) + (lo, hi, lo - d, lo + d, hi - d, hi + d)

    def _sliced(self, integral, x, lo, hi):
        x = np.asarray(x, dtype=float)
        xa, xb = self.excised.lo, self.excised.hi
        left = integral(x, lo, np.minimum(hi, xa))
        right = integral(x, np.maximum(lo, xb), hi)
        outside = left + right
        inx = self.excised.contains(x)
        if self.mode == "all":
            return np.where(inx, 0.0, outside)
        inside = integral(x, np.maximum(lo, xa), np.minimum(hi, xb))
        return np.where(inx, inside, outside)

    def row_integral(self, x, lo, hi):
        return self._sliced(lambda p, a, b: self.base.row_integral(p, a, np.maximum(a, b)), x, lo, hi)

    def col_integral(self, y, lo, hi):
        return self._sliced(lambda p, a, b: self.base.col_integral(p, a, np.maximum(a, b)), y, lo, hi)

    def to_dict(self):
        return {"family": self.family, "base": self.base.to_dict(),
                "excised": [self.excised.lo, self.excised.hi], "mode": self.mode}


class TabulatedKernel(KernelSpec):
    """Bilinear interpolation of kernel values on a tensor grid, zero off the grid."""

    family = "tabulated"

    def __init__(self, x_nodes, y_nodes, values, delta):
        xs = np.asarray(x_nodes, dtype=float)
        ys = np.asarray(y_nodes, dtype=float)
        vals = np.asarray(values, dtype=float)
        if vals.shape != (xs.size, ys.size):
            raise KernelError(f"table shape {vals.shape} does not match grid ({xs.size}, {ys.size})")
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise KernelError("tabulated kernel values must be finite and nonnegative")
        sym = xs.shape == ys.shape and np.allclose(xs, ys) and np.allclose(vals, vals.T, rtol=0, atol=0)
        super().__init__(delta, symmetric=sym)
        self.x_nodes, self.y_nodes, self.values = xs, ys, vals
        self._interp = RegularGridInterpolator((xs, ys), vals, bounds_error=False, fill_value=0.0)

    def _raw(self, x, y):
        return self._interp(np.stack([x, y], axis=-1))

    def breakpoints(self):
        return tuple(self.x_nodes) + tuple(self.y_nodes)

    def to_dict(self):
        return {"family": self.family, "delta": self.delta, "x_nodes": self.x_nodes.tolist(),
                "y_nodes": self.y_nodes.tolist(), "values": self.values.tolist()}


class CallableKernel(KernelSpec):
    """Kernel given by a vectorized python callable (not serializable)."""

    family = "callable"

    def __init__(self, func, delta, symmetric=False, singular_exponent=0.0, breaks=()):
        super().__init__(delta, symmetric)
        self.func = func
        self.singular_exponent = float(singular_exponent)
        self._breaks = tuple(breaks)

    def _raw(self, x, y):
        return np.asarray(self.func(x, y), dtype=float) * np.ones_like(x)

    def breakpoints(self):
        return self._breaks


class ScaledKernel(KernelSpec):
    """t * mu for a positive constant t."""

    def __init__(self, base, factor):
        if not factor > 0:
            raise KernelError("scale factor must be positive")
        super().__init__(base.delta, base.symmetric)
        self.base, self.factor = base, float(factor)
        self.family = base.family
        self.singular_exponent = base.singular_exponent

    def _raw(self, x, y):
        return self.factor * self.base._raw(x, y)

    def breakpoints(self):
        return self.base.breakpoints()

    def row_integral(self, x, lo, hi):
        return self.factor * self.base.row_integral(x, lo, hi)

    def col_integral(self, y, lo, hi):
        return self.factor * self.base.col_integral(y, lo, hi)


# -- public operations -----------------------------------------------------

def evaluate(kernel, x, y):
    return kernel(x, y)


def _as_input(x, out):
    out = np.asarray(out, dtype=float)
    return float(out.reshape(-1)[0]) if np.ndim(x) == 0 else out


def lambda_at(kernel, x, region):
    """Row mass: integral of mu(x, y) over y in ``region``."""
    return _as_input(x, kernel.row_integral(x, region.lo, region.hi))


def gamma_at(kernel, y, region):
    """Column mass: integral of mu(x, y) over x in ``region``."""
    return _as_input(y, kernel.col_integral(y, region.lo, region.hi))


class SymmetricPart(KernelSpec):
    def __init__(self, kernel):
        super().__init__(kernel.delta, symmetric=True)
        self.kernel = kernel
        self.family = kernel.family + "_sym"
        self.singular_exponent = kernel.singular_exponent

    def _raw(self, x, y):
        return 0.5 * (self.kernel._raw(x, y) + self.kernel._raw(y, x))

    def breakpoints(self):
        return self.kernel.breakpoints()


class AntisymmetricPart:
    """Signed two-point function (mu(x, y) - mu(y, x)) / 2."""

    def __init__(self, kernel):
        self.kernel = kernel
        self.delta = kernel.delta
        self.singular_exponent = kernel.singular_exponent

    def __call__(self, x, y):
        return 0.5 * (self.kernel(x, y) - self.kernel(y, x))

    def breakpoints(self):
        return self.kernel.breakpoints()


def split_sym_asym(kernel):
    if kernel.symmetric:
        zero = CallableKernel(lambda x, y: 0.0 * x, kernel.delta, symmetric=True)
        return kernel, AntisymmetricPart(zero)
    return SymmetricPart(kernel), AntisymmetricPart(kernel)


class NormalizedKernel(KernelSpec):
    """mu(x, y) / lambda(x) for x in the domain interior, zero elsewhere.

    Row masses are taken over the closure of the domain plus collar. With
    ``allow_degenerate`` rows with zero mass (fully decoupled points) are set
    to zero instead of raising.
    """

    def __init__(self, kernel, domain, allow_degenerate=False, floor=1e-12):
        super().__init__(kernel.delta, symmetric=False)
        self.kernel = kernel
        self.omega = domain.omega
        self.region = domain.closure
        self.family = kernel.family + "_normalized"
        self.singular_exponent = kernel.singular_exponent
        self.allow_degenerate = allow_degenerate
        self._cache = {}
        probe = np.linspace(self.omega.lo, self.omega.hi, 401)[1:-1]
        lam = self.row_mass(probe, raw=True)
        self._floor = floor * max(float(np.max(lam)), 1e-300)
        low = lam <= self._floor
        if np.any(low) and not allow_degenerate:
            raise DegenerateKernelError(
                f"row mass vanishes at x={probe[np.argmax(low)]:.6g}; kernel cannot be normalized")

    def row_mass(self, x, raw=False):
        return self.kernel.row_integral(x, self.region.lo, self.region.hi)

    def _scale(self, x):
        x = np.asarray(x, dtype=float)
        uniq, inverse = np.unique(x, return_inverse=True)
        key = uniq.tobytes()
        cached = self._cache.get(key)
        if cached is None:
            cached = self.row_mass(uniq)
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[key] = cached
        lam = cached[inverse.reshape(-1)].reshape(x.shape)
        inside = self.omega.contains(x)
        ok = inside & (lam > getattr(self, "_floor", 0.0))
        return np.where(ok, 1.0 / np.where(ok, lam, 1.0), 0.0)

    def _raw(self, x, y):
        return self.kernel._raw(x, y) * self._scale(x)

    def breakpoints(self):
        d = self.delta
        return tuple(self.kernel.breakpoints()) + (
            self.omega.lo, self.omega.hi, self.region.lo + d, self.region.hi - d)

    def row_integral(self, x, lo, hi):
        x = np.asarray(x, dtype=float)
        return self.kernel.row_integral(x, lo, hi) * self._scale(x)


def normalize(kernel, domain, allow_degenerate=False):
    return NormalizedKernel(kernel, domain, allow_degenerate=allow_degenerate)


# -- sampling and norms ----------------------------------------------------

def sample_points(interval, h, delta, refine=10):
    """Cell midpoints of spacing h plus refined samples within delta of the ends."""
    n = max(1, int(round(interval.length / h)))
    hh = interval.length / n
    mid = interval.lo + (np.arange(n) + 0.5) * hh
    fine_h = hh / refine
    band = min(delta, interval.length / 2)
    m = max(1, int(round(band / fine_h)))
    left = interval.lo + (np.arange(m) + 0.5) * fine_h
    right = interval.hi - (np.arange(m) + 0.5) * fine_h
    return np.unique(np.concatenate([mid, left, right]))


def two_point_norm(func, xr, yr, delta, power=2.0, singular=0.0, breaks=()):
    """(integral over xr x yr of |func|^power)^(1/power) within the horizon.

    Returns inf when the integrand is not integrable because of the
    singular exponent.
    """
    if singular * power >= 1.0:
        return math.inf
    val = band_integral(lambda x, y: np.abs(func(x, y)) ** power, xr.lo, xr.hi, yr.lo, yr.hi,
                        delta, xbreaks=breaks, ybreaks=breaks)
    return val ** (1.0 / power)


def slice_integrals(func, pivots, lo, hi, delta, breaks=(), rows=True, singular=0.0,
                    transform=np.abs, order=16, panels=2):
    """Vectorized integrals of transform(func) along slices through each pivot.

    rows=True integrates y -> func(pivot, y) over (lo, hi); rows=False
    integrates x -> func(x, pivot). The window is split at the pivot and at
    ``breaks``. A power-law singularity of exponent ``singular`` at the
    pivot is removed by the substitution s = L t^m with m = 1/(1 - singular).
    """
    p = np.atleast_1d(np.asarray(pivots, dtype=float))
    a = np.maximum(lo, p - delta)
    b = np.maximum(a, np.minimum(hi, p + delta))
    cuts = [a, b, np.clip(p, a, b)] + [np.clip(np.full(p.shape, q), a, b) for q in breaks]
    pts = np.sort(np.stack(cuts, axis=-1), axis=-1)
    t, w = composite_rule(order, panels)
    m = 1.0 / (1.0 - singular) if singular > 0 else 1.0
    tm, jac = t ** m, m * t ** (m - 1)
    total = np.zeros(p.shape)
    pc = np.clip(p, a, b)[:, None]
    for j in range(pts.shape[-1] - 1):
        s0, s1 = pts[:, j:j + 1], pts[:, j + 1:j + 2]
        span = s1 - s0
        if not np.any(span > 0):
            continue
        if m != 1.0:
            starts = s0 == pc
            ends = (s1 == pc) & ~starts
            nodes = np.where(starts, s0 + span * tm, np.where(ends, s1 - span * tm, s0 + span * t))
            wts = np.where(starts | ends, span * w * jac, span * w)
        else:
            nodes = s0 + span * t
            wts = span * w
        piv = np.broadcast_to(p[:, None], nodes.shape)
        vals = func(piv, nodes) if rows else func(nodes, piv)
        total += np.sum(wts * transform(vals), axis=-1)
    return total


def abs_slice_masses(func, xs, ys, xr, yr, delta, singular=0.0, breaks=()):
    """Row masses over yr at points xs and column masses over xr at ys of |func|."""
    rows = slice_integrals(func, xs, yr.lo, yr.hi, delta, breaks, True, singular)
    cols = slice_integrals(func, ys, xr.lo, xr.hi, delta, breaks, False, singular)
    return rows, cols


def row_integrated_norm(func, xr, yr, delta, power=2.0, singular=0.0, breaks=(), order=16, panels=8):
    """L^power norm over xr x yr computed as an x-integral of row integrals.

    Row integrals are vectorized over the outer Gauss nodes; the outer
    integral is split wherever a row window meets a breakpoint.
    """
    if singular * power >= 1.0:
        return math.inf
    outer = {xr.lo, xr.hi}
    for q in tuple(breaks) + (yr.lo, yr.hi):
        for c in (q - delta, q, q + delta):
            if xr.lo < c < xr.hi:
                outer.add(float(c))
    edges = sorted(outer)
    t, w = composite_rule(order, panels)
    total = 0.0
    power_tf = lambda v: np.abs(v) ** power
    for x0, x1 in zip(edges[:-1], edges[1:]):
        xs = x0 + (x1 - x0) * t
        vals = slice_integrals(func, xs, yr.lo, yr.hi, delta, breaks, True, singular * power, power_tf)
        total += (x1 - x0) * np.dot(w, vals)
    return total ** (1.0 / power)


@dataclass(frozen=True)
class KernelStats:
    p: float
    lambda_sup: float
    gamma_sup: float
    m_mu_p: float
    l1_restricted: float
    l2_omega_gamma: float
    l2_full: float
    asym_l2: float
    m_asym_2: float
    lambda_inf: float
    sup_refinement_change: float
    notes: tuple = field(default_factory=tuple)


def m_functional(gamma_sup, lambda_sup, p):
    return gamma_sup ** (1.0 / p) * lambda_sup ** (1.0 - 1.0 / p)


def kernel_stats(kernel, domain, p=2.0, h=1.0 / 200, refine=10):
    """Populate all kernel functionals on ``domain``.

    Row masses are over y in the closure Omega u Gamma for x in Omega;
    column masses are over x in Omega for y in Omega u Gamma. Sup norms are
    sampled (midpoints plus boundary refinement); the change between
    sampling at h and h/2 is reported as a convergence indicator.
    """
    p = float(p)
    if not p >= 1.0:
        raise ConfigError(f"exponent p must be >= 1, got {p}")
    om, cl, d = domain.omega, domain.closure, kernel.delta
    xs = sample_points(om, h, d, refine)
    ys = sample_points(cl, h, d, refine)
    lam = kernel.row_integral(xs, cl.lo, cl.hi)
    gam = kernel.col_integral(ys, om.lo, om.hi)
    if np.any(lam < -1e-12) or np.any(gam < -1e-12):
        raise KernelError("kernel has negative mass; assumption of nonnegativity fails")
    lam_sup, gam_sup = float(np.max(lam)), float(np.max(gam))
    xs2 = sample_points(om, h / 2, d, refine)
    ys2 = sample_points(cl, h / 2, d, refine)
    lam2 = float(np.max(kernel.row_integral(xs2, cl.lo, cl.hi)))
    gam2 = float(np.max(kernel.col_integral(ys2, om.lo, om.hi)))
    change = max(abs(lam2 - lam_sup), abs(gam2 - gam_sup))
    lam_sup, gam_sup = max(lam_sup, lam2), max(gam_sup, gam2)
    breaks = kernel.breakpoints()
    sing = kernel.singular_exponent
    l1 = two_point_norm(kernel, cl, cl, d, 1.0, sing, breaks)
    l2_og = math.hypot(two_point_norm(kernel, om, Interval(cl.lo, om.lo), d, 2.0, sing, breaks),
                       two_point_norm(kernel, om, Interval(om.hi, cl.hi), d, 2.0, sing, breaks))
    l2_full = two_point_norm(kernel, cl, cl, d, 2.0, sing, breaks)
    if kernel.symmetric:
        asym_l2 = 0.0
        m_asym = 0.0
    else:
        asym = AntisymmetricPart(kernel)
        asym_l2 = two_point_norm(asym, cl, cl, d, 2.0, sing, breaks)
        r, c = abs_slice_masses(asym, xs, ys, om, cl, d, sing, breaks)
        m_asym = m_functional(float(np.max(c)), float(np.max(r)), 2.0)
    notes = []
    if kernel.symmetric:
        notes.append("symmetric kernel: antisymmetric functionals are zero")
    return KernelStats(p=p, lambda_sup=lam_sup, gamma_sup=gam_sup,
                       m_mu_p=m_functional(gam_sup, lam_sup, p), l1_restricted=l1,
                       l2_omega_gamma=l2_og, l2_full=l2_full, asym_l2=asym_l2, m_asym_2=m_asym,
                       lambda_inf=float(np.min(lam)), sup_refinement_change=change,
                       notes=tuple(notes))


def m_functional_of(func, domain, p=2.0, h=1.0 / 200, singular=0.0, breaks=(), restrict_to_omega=False):
    """M functional of |func| with rows over the closure (or Omega) and columns over Omega."""
    om, cl = domain.omega, domain.closure
    yr = om if restrict_to_omega else cl
    d = domain.delta
    xs = sample_points(om, h, d)
    ys = sample_points(yr, h, d)
    r, c = abs_slice_masses(func, xs, ys, om, yr, d, singular, breaks)
    return m_functional(float(np.max(c)), float(np.max(r)), p)


def annulus_lower_bound(kernel, domain, inner_radius, p=2.0, x_samples=None, n_radial=64, exclude=None):
    """Largest mu0 with mu(x, y) >= mu0 / |y - x|^p on inner_radius < |y - x| < delta.

    The infimum is sampled over x in the closed domain interval and over a
    radial grid including the inner radius. Points in ``exclude`` (an
    Interval) are skipped.
    """
    d = kernel.delta
    if not 0 < inner_radius < d:
        raise ConfigError(f"inner radius must lie in (0, delta), got {inner_radius}")
    if x_samples is None:
        om = domain.omega
        x_samples = np.concatenate([[om.lo, om.hi], sample_points(om, min(1.0 / 400, om.length / 50), d, 4)])
    x = np.asarray(x_samples, dtype=float)
    if exclude is not None:
        x = x[~exclude.contains(x)]
    top = d * (1 - 1e-12)
    radial = inner_radius + (top - inner_radius) * (1 - np.cos(np.linspace(0, np.pi / 2, n_radial)))
    s = np.concatenate([radial, -radial])
    vals = kernel(x[:, None], x[:, None] + s[None, :]) * np.abs(s)[None, :] ** p
    return float(np.min(vals))


def m3_feasibility(kernel, domain, p=2.0, inner_radius=None):
    """Report the (M3) lower-bound constant, excluding any excised interval."""
    r = 2 * kernel.delta / 3 if inner_radius is None else inner_radius
    exclude = kernel.excised if isinstance(kernel, BondRemovalKernel) else None
    mu0 = annulus_lower_bound(kernel, domain, r, p, exclude=exclude)
    return {"mu0": mu0, "inner_radius": r, "p": p, "feasible": mu0 > 0,
            "excluded": None if exclude is None else [exclude.lo, exclude.hi]}


# -- serialization ---------------------------------------------------------

_FAMILY_KEYS = {
    "constant": ({"delta"}, {"value"}),
    "power_law": ({"delta", "eps"}, {"scale"}),
    "gaussian": ({"delta"}, set()),
    "heterogeneous_exp": ({"delta", "eps"}, set()),
    "bond_removal": ({"base", "excised"}, {"mode"}),
    "tabulated": ({"delta", "x_nodes", "y_nodes", "values"}, set()),
}


def kernel_from_dict(spec, path="kernel"):
    """Build a kernel from its serialized form: ``{"family": tag, ...params}``."""
    if not isinstance(spec, dict):
        raise ConfigError("kernel must be a mapping", path=path)
    fam = spec.get("family")
    if fam not in _FAMILY_KEYS:
        raise ConfigError(f"unknown kernel family '{fam}' (known: {sorted(_FAMILY_KEYS)})",
                          path=f"{path}.family")
    required, optional = _FAMILY_KEYS[fam]
    keys = set(spec) - {"family"}
    unknown = keys - required - optional
    if unknown:
        raise ConfigError(f"unknown key '{sorted(unknown)[0]}' for kernel family '{fam}'",
                          path=f"{path}.{sorted(unknown)[0]}")
    missing = required - keys
    if missing:
        raise ConfigError(f"missing key '{sorted(missing)[0]}'", path=f"{path}.{sorted(missing)[0]}")

    def num(key):
        v = spec[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"'{key}' must be a number", path=f"{path}.{key}")
        return float(v)

    try:
        if fam == "constant":
            return ConstantKernel(num("delta"), num("value") if "value" in spec else None)
        if fam == "power_law":
            return PowerLawKernel(num("delta"), num("eps"), num("scale") if "scale" in spec else 1.0)
        if fam == "gaussian":
            return TruncatedGaussianKernel(num("delta"))
        if fam == "heterogeneous_exp":
            return HeterogeneousExpKernel(num("delta"), num("eps"))
        if fam == "bond_removal":
            ex = spec["excised"]
            if not (isinstance(ex, (list, tuple)) and len(ex) == 2):
                raise ConfigError("excised must be a pair [lo, hi]", path=f"{path}.excised")
            return BondRemovalKernel(kernel_from_dict(spec["base"], f"{path}.base"),
                                     Interval(float(ex[0]), float(ex[1])), spec.get("mode", "all"))
        return TabulatedKernel(spec["x_nodes"], spec["y_nodes"], spec["values"], num("delta"))
    except ConfigError as exc:
        if exc.path is None:
            raise ConfigError(str(exc), path=path) from exc
        raise
