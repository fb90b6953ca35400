"""Problem specifications and solvers for the linear and semilinear nonlocal Dirichlet problem.

The discrete problem reads A u_Omega = f - B g, where A and B come from
``discretize.assemble`` and g is the collar data sampled at Gamma cell
midpoints.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg
from scipy.special import expit

from .discretize import AssembledOperator, DomainSpec, Field, Mesh, assemble
from .errors import ConfigError, ConvergenceError, NumericError, RangeError, SolverError
from .kernels import KernelSpec

log = logging.getLogger(__name__)


# -- forcing ---------------------------------------------------------------

class ForcingSpec:
    """Right-hand side f(x) or f(x, u)."""

    variant = "abstract"
    depends_on_u = False
    lipschitz_in_u = 0.0
    breakpoints: tuple = ()

    def __call__(self, x, u=None):
        raise NotImplementedError

    def du(self, x, u):
        return np.zeros_like(np.asarray(x, dtype=float))

    def to_dict(self):
        raise NotImplementedError


@dataclass(frozen=True)
class PiecewiseSinusoid(ForcingSpec):
    """6x + 4 sin(20 eps x) for x <= 0.5, 12x^2 beyond."""

    eps: float
    variant = "piecewise_sinusoid"
    breakpoints = (0.5,)

    def __call__(self, x, u=None):
        x = np.asarray(x, dtype=float)
        return np.where(x <= 0.5, 6 * x + 4 * np.sin(20 * self.eps * x), 12 * x ** 2)

    def to_dict(self):
        return {"variant": self.variant, "eps": self.eps}


@dataclass(frozen=True)
class Sigmoid(ForcingSpec):
    """1 / (1 + exp(-(x - 0.5)/eps)); eps = 0 gives the unit step at 0.5."""

    eps: float
    variant = "sigmoid"
    breakpoints = (0.5,)

    def __post_init__(self):
        if self.eps < 0:
            raise ConfigError("sigmoid width must be >= 0", path="forcing.eps")

    def __call__(self, x, u=None):
        x = np.asarray(x, dtype=float)
        if self.eps == 0:
            return np.where(x > 0.5, 1.0, np.where(x < 0.5, 0.0, 0.5))
        return expit((x - 0.5) / self.eps)

    def to_dict(self):
        return {"variant": self.variant, "eps": self.eps}


@dataclass(frozen=True)
class Polynomial(ForcingSpec):
    """sum_k coeffs[k] x^k."""

    coeffs: tuple
    variant = "polynomial"

    def __call__(self, x, u=None):
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), self.coeffs)

    def to_dict(self):
        return {"variant": self.variant, "coeffs": list(self.coeffs)}


@dataclass(frozen=True)
class Zero(ForcingSpec):
    variant = "zero"

    def __call__(self, x, u=None):
        return np.zeros_like(np.asarray(x, dtype=float))

    def to_dict(self):
        return {"variant": self.variant}


@dataclass(frozen=True)
class NonlinearArctan(ForcingSpec):
    """2 (eta arctan(u) + theta) / (x^2 + 1)."""

    eta: float
    theta: float
    variant = "nonlinear_arctan"
    depends_on_u = True

    def __post_init__(self):
        if not (math.isfinite(self.eta) and math.isfinite(self.theta)):
            raise ConfigError("eta and theta must be finite", path="forcing")

    @property
    def lipschitz_in_u(self):
        # |d/du| = 2 eta / ((1 + u^2)(1 + x^2)), largest at x = u = 0
        return 2 * abs(self.eta)

    def __call__(self, x, u=None):
        x = np.asarray(x, dtype=float)
        u = np.zeros_like(x) if u is None else np.asarray(u, dtype=float)
        return 2 * (self.eta * np.arctan(u) + self.theta) / (x ** 2 + 1)

    def du(self, x, u):
        return 2 * self.eta / ((1 + np.asarray(u) ** 2) * (np.asarray(x) ** 2 + 1))

    def to_dict(self):
        return {"variant": self.variant, "eta": self.eta, "theta": self.theta}


def forcing_sup_difference(f1, f2, domain):
    """sup over x in Omega and all real u of |f2(x, u) - f1(x, u)|.

    Closed form for two arctan forcings: the u-supremum of
    |d_eta arctan(u) + d_theta| is |d_eta| pi/2 + |d_theta| and the x-factor
    2/(x^2 + 1) is largest at the point of Omega closest to 0.
    """
    if isinstance(f1, NonlinearArctan) and isinstance(f2, NonlinearArctan):
        om = domain.omega
        x0 = min(max(0.0, om.lo), om.hi)
        peak = 2.0 / (x0 ** 2 + 1)
        return peak * (abs(f2.eta - f1.eta) * math.pi / 2 + abs(f2.theta - f1.theta))
    if f1.depends_on_u or f2.depends_on_u:
        raise ConfigError("no closed-form supremum for this forcing pair")
    om = domain.omega
    x = np.linspace(om.lo, om.hi, 20001)
    return float(np.max(np.abs(f2(x) - f1(x))))


# -- collar data -----------------------------------------------------------

class CollarData:
    variant = "abstract"

    def __call__(self, x):
        raise NotImplementedError


@dataclass(frozen=True)
class PolynomialPair(CollarData):
    """Polynomial on the left collar and (possibly different) one on the right."""

    left: tuple
    right: tuple
    split: float = 0.5
    variant = "polynomial_pair"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        pv = np.polynomial.polynomial.polyval
        return np.where(x < self.split, pv(x, self.left), pv(x, self.right))

    def to_dict(self):
        return {"variant": self.variant, "left": list(self.left), "right": list(self.right)}


@dataclass(frozen=True)
class PiecewiseJump(CollarData):
    """1 on (a - delta, a - eps), x^4 on [a - eps, a) and on the right collar."""

    eps: float
    left_end: float = 0.0
    variant = "piecewise_jump"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < self.left_end - self.eps, 1.0, x ** 4)

    def to_dict(self):
        return {"variant": self.variant, "eps": self.eps}


@dataclass(frozen=True)
class ZeroCollar(CollarData):
    variant = "zero"

    def __call__(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def to_dict(self):
        return {"variant": self.variant}


@dataclass(frozen=True)
class LinearCollar(CollarData):
    slope: float = 1.0
    intercept: float = 0.0
    variant = "linear"

    def __call__(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.intercept

    def to_dict(self):
        return {"variant": self.variant, "slope": self.slope, "intercept": self.intercept}


@dataclass(frozen=True)
class ConstantCollar(CollarData):
    value: float = 0.0
    variant = "constant"

    def __call__(self, x):
        return np.full(np.shape(x), float(self.value))

    def to_dict(self):
        return {"variant": self.variant, "value": self.value}


# -- problem ---------------------------------------------------------------

@dataclass(frozen=True)
class ProblemSpec:
    domain: DomainSpec
    kernel: KernelSpec
    forcing: ForcingSpec
    collar: CollarData

    def __post_init__(self):
        if abs(self.kernel.delta - self.domain.delta) > 1e-12 * self.domain.delta:
            raise ConfigError(f"kernel horizon {self.kernel.delta} differs from domain delta "
                              f"{self.domain.delta}", path="kernel.delta")

    def replace(self, **changes):
        vals = {k: getattr(self, k) for k in ("domain", "kernel", "forcing", "collar")}
        vals.update(changes)
        return ProblemSpec(**vals)


@dataclass
class LinearSystem:
    """LU factorization of the Omega block, with decoupled cells pinned to zero."""

    operator: AssembledOperator
    active: np.ndarray
    lu: tuple
    condition: float

    @classmethod
    def factor(cls, operator, max_condition=1e12):
        active = ~operator.decoupled
        A = operator.matrix[np.ix_(active, active)]
        if A.size == 0:
            raise SolverError("every Omega cell is decoupled; nothing to solve")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", linalg.LinAlgWarning)
            lu = linalg.lu_factor(A, check_finite=True)
        pivots = np.abs(np.diag(lu[0]))
        smallest = int(np.argmin(pivots))
        if pivots[smallest] == 0:
            raise SolverError(f"singular matrix: zero pivot at row {smallest}")
        cond = float(np.linalg.cond(A, 1))
        if not cond <= max_condition:
            raise SolverError(f"ill-conditioned matrix (condition estimate {cond:.3e}); "
                              f"smallest pivot {pivots[smallest]:.3e} at row {smallest}")
        return cls(operator, active, lu, cond)

    def solve(self, rhs, collar_values, jacobian_shift=None):
        """Omega values solving A u = rhs - B g (decoupled cells pinned to 0)."""
        op = self.operator
        b = rhs - op.collar_coupling @ collar_values
        u = np.zeros(op.row_sums.size)
        if jacobian_shift is None:
            u[self.active] = linalg.lu_solve(self.lu, b[self.active])
        else:
            J = op.matrix[np.ix_(self.active, self.active)] - np.diag(jacobian_shift[self.active])
            u[self.active] = linalg.solve(J, b[self.active])
        return u

    def residual(self, u_omega, rhs, collar_values):
        op = self.operator
        r = op.matrix @ u_omega + op.collar_coupling @ collar_values - rhs
        return float(np.max(np.abs(r[self.active]))) if np.any(self.active) else 0.0


def _collar_values(problem, mesh):
    return np.asarray(problem.collar(mesh.midpoints[mesh.gamma_idx]), dtype=float)


def _compose(mesh, u_omega, g):
    vals = np.empty(mesh.n_cells)
    vals[mesh.omega_idx] = u_omega
    vals[mesh.gamma_idx] = g
    return Field(mesh, vals)


def solve_linear(problem, mesh, operator=None, system=None):
    """Solve the linear problem; returns the Field on Omega u Gamma."""
    if problem.forcing.depends_on_u:
        raise ConfigError("solve_linear needs a u-independent forcing; use solve_semilinear")
    op = operator if operator is not None else assemble(problem.kernel, mesh)
    sys_ = system if system is not None else LinearSystem.factor(op)
    x = mesh.midpoints[mesh.omega_idx]
    f = np.asarray(problem.forcing(x), dtype=float) * np.ones(x.size)
    if not np.all(np.isfinite(f)):
        raise NumericError("forcing evaluates to a non-finite value")
    g = _collar_values(problem, mesh)
    u = sys_.solve(f, g)
    res = sys_.residual(u, f, g)
    if not res < 1e-9 * (1 + float(np.max(np.abs(f)))):
        raise SolverError(f"linear residual {res:.3e} exceeds tolerance")
    if np.any(op.decoupled) and np.any(np.abs(f[op.decoupled]) > 0):
        log.warning("forcing is nonzero on decoupled cells; those cells are pinned to 0")
    return _compose(mesh, u, g)


@dataclass
class SemilinearResult:
    field: Field
    iterations: int
    increments: list
    method: str


def solve_semilinear(problem, mesh, tol=1e-10, max_iter=500, method="picard",
                     operator=None, poincare=None, warn=True):
    """Solve L u = f(x, u) by Picard iteration (or Newton with method='newton').

    Returns a SemilinearResult with the field, the iteration count and the
    history of sup-norm increments.
    """
    if method not in ("picard", "newton"):
        raise ConfigError(f"unknown method '{method}'", path="solver.method")
    op = operator if operator is not None else assemble(problem.kernel, mesh)
    sys_ = LinearSystem.factor(op)
    forcing = problem.forcing
    if warn and forcing.depends_on_u:
        if poincare is None:
            from .stability import poincare_constant
            poincare = poincare_constant(problem.kernel, problem.domain, 2).c_p
        if poincare * forcing.lipschitz_in_u >= 1:
            warnings.warn(f"C_P * L = {poincare * forcing.lipschitz_in_u:.3g} >= 1: "
                          "Picard contraction is not guaranteed", RuntimeWarning, stacklevel=2)
    x = mesh.midpoints[mesh.omega_idx]
    g = _collar_values(problem, mesh)
    u = np.zeros(x.size)
    history = []
    for it in range(1, max_iter + 1):
        f = np.asarray(forcing(x, u), dtype=float) * np.ones(x.size)
        if not np.all(np.isfinite(f)):
            raise NumericError(f"forcing evaluation produced NaN/inf at iteration {it}")
        if method == "newton" and forcing.depends_on_u:
            dfdu = forcing.du(x, u)
            # A v - dfdu v = f(u) - dfdu u - B g
            new = sys_.solve(f - dfdu * u, g, jacobian_shift=dfdu)
        else:
            new = sys_.solve(f, g)
        inc = float(np.max(np.abs(new - u)))
        history.append(inc)
        u = new
        if not np.isfinite(inc):
            raise NumericError(f"iteration diverged to non-finite values at iteration {it}")
        if inc < tol or not forcing.depends_on_u:
            return SemilinearResult(_compose(mesh, u, g), it, history, method)
    raise ConvergenceError(f"no convergence in {max_iter} iterations (last increment {history[-1]:.3e})",
                           last_increment=history[-1], history=history)


# -- nonlinearity inside the operator ---------------------------------------

@dataclass(frozen=True)
class Nonlinearity:
    """Strictly monotone map with a user-supplied inverse on ``value_range``."""

    func: Callable
    inverse: Callable
    value_range: tuple
    name: str = "custom"


IDENTITY = Nonlinearity(lambda z: np.asarray(z, dtype=float), lambda v: np.asarray(v, dtype=float),
                        (-math.inf, math.inf), "identity")
SINE = Nonlinearity(np.sin, np.arcsin, (-1.0, 1.0), "sin")


def solve_with_nonlinearity_in_operator(problem, nonlinearity, mesh, operator=None):
    """Solve integral (h(u(y)) - h(u(x))) mu dy = f with u = g on the collar.

    The substitution v = h(u) makes the problem linear in v with collar
    data h(g); u is recovered through the supplied inverse.
    """
    op = operator if operator is not None else assemble(problem.kernel, mesh)
    sys_ = LinearSystem.factor(op)
    x = mesh.midpoints[mesh.omega_idx]
    f = np.asarray(problem.forcing(x), dtype=float) * np.ones(x.size)
    g = _collar_values(problem, mesh)
    hg = np.asarray(nonlinearity.func(g), dtype=float)
    v = sys_.solve(f, hg)
    lo, hi = nonlinearity.value_range
    bad = np.flatnonzero((v < lo) | (v > hi))
    if bad.size:
        cells = ", ".join(str(int(c)) for c in mesh.omega_idx[bad][:10])
        raise RangeError(f"h(u) leaves the invertible range {nonlinearity.value_range} "
                         f"in {bad.size} cells: {cells}")
    u = np.asarray(nonlinearity.inverse(v), dtype=float)
    return _compose(mesh, u, g)


def nonlinear_operator_residual(operator, nonlinearity, field, forcing):
    """sup |sum_j W_ij (h(u_j) - h(u_i)) - f_i| over Omega cells."""
    hv = np.asarray(nonlinearity.func(field.values), dtype=float)
    x = field.mesh.midpoints[field.mesh.omega_idx]
    return float(np.max(np.abs(operator.apply(hv) - forcing(x))))
