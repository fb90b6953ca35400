"""Stability constants, measured sensitivities and bound reports.

Each ``audit_*`` function solves the two problems it compares, measures the
relevant norms of the solution and data differences, computes the
theoretical constant and returns a ``BoundReport``. A report whose
hypotheses fail is marked not applicable rather than violated.

Report identifiers:

    forcing_c1        L^{2p} forcing bound with the mean-value constant C1
    forcing_c2        L^r forcing bound with the constant C2
    forcing_energy    L^2 forcing bound with C_P / (1 - M_asym C_P)
    collar_operator   collar bound through ||L (g2 - g1)||
    collar            collar bound through ||g2 - g1||_{L^2(Gamma)}
    kernel_slices     kernel perturbation, slice (L^inf) form
    kernel_l2         kernel perturbation, L^2 form
    bond_removal      squared kernel-perturbation bound for excised bonds
    nonlinear         Lipschitz nonlinear forcing bound
"""
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from ._quadrature import adaptive
from .discretize import assemble, build_mesh
from .errors import ConfigError, DegenerateKernelError, KernelError
from .kernels import (AntisymmetricPart, BondRemovalKernel, NormalizedKernel, PowerLawKernel,
                      TranslationInvariantKernel, abs_slice_masses, annulus_lower_bound, kernel_stats,
                      m_functional, row_integrated_norm, sample_points, two_point_norm)
from .solve import LinearSystem, forcing_sup_difference, solve_linear, solve_semilinear

SLACK = 1e-12


# -- norms -----------------------------------------------------------------

def field_norm(field, region="omega", p=2.0):
    """Exact L^p norm of the piecewise-constant field over a region ('omega', 'gamma', 'all')."""
    vals = np.abs(field.on(region))
    if vals.size == 0:
        return 0.0
    if p == math.inf or p == "inf":
        return float(np.max(vals))
    p = float(p)
    return float((field.mesh.h * np.sum(vals ** p)) ** (1.0 / p))


def _values_norm(values, h, p=2.0):
    values = np.abs(np.asarray(values, dtype=float))
    if p == math.inf:
        return float(np.max(values)) if values.size else 0.0
    return float((h * np.sum(values ** p)) ** (1.0 / p))


# -- reports ---------------------------------------------------------------

@dataclass(frozen=True)
class HypothesisCheck:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class BoundReport:
    theorem_id: str
    hypothesis_checks: tuple
    constant: float
    lhs_norm: float
    rhs_norm: float
    ratio: float
    satisfied: bool
    extras: dict = field(default_factory=dict)
    notes: tuple = ()

    @property
    def applicable(self):
        return all(c.passed for c in self.hypothesis_checks)

    @property
    def status(self):
        if not self.applicable:
            return "not applicable"
        return "satisfied" if self.satisfied else "violated"

    def to_row(self):
        return {"theorem_id": self.theorem_id, "lhs": self.lhs_norm, "rhs": self.rhs_norm,
                "ratio": self.ratio, "constant": self.constant, "status": self.status}

    def to_dict(self):
        d = asdict(self)
        d["status"] = self.status
        return d


def make_report(theorem_id, checks, constant, lhs, rhs, extras=None, notes=()):
    """Assemble a report; ratio = lhs/rhs with 0/0 read as 0."""
    if rhs == 0:
        ratio = 0.0 if lhs == 0 else math.inf
    else:
        ratio = lhs / rhs
    applicable = all(c.passed for c in checks)
    satisfied = bool(applicable and math.isfinite(constant) and ratio <= constant + SLACK)
    return BoundReport(theorem_id, tuple(checks), float(constant), float(lhs), float(rhs),
                       float(ratio), satisfied, dict(extras or {}), tuple(notes))


# -- Poincare constant -----------------------------------------------------

@dataclass(frozen=True)
class PoincareEstimate:
    p: float
    mu0: float
    eps_star: float
    mZ: float
    c_p: float
    method: str


def _annulus_measure(inner, delta):
    return 2.0 * (delta - inner)


def poincare_closed_form(kernel, domain, p=2.0):
    """Closed form for power-law (and constant) kernels.

    With mu = c |s|^(-e) the annulus infimum of mu |s|^p is c r^(p - e), so
    mu0 m(Z) = 2 c r^(p - e) (delta - r) is largest at r = (p - e) delta / (p - e + 1).
    Returns None for other families.
    """
    if type(kernel).__name__ not in ("PowerLawKernel", "ConstantKernel") or not isinstance(kernel, PowerLawKernel):
        return None
    a = p - kernel.eps
    if a <= 0:
        return None
    d = kernel.delta
    r = a * d / (a + 1)
    mu0 = kernel.coefficient * r ** a
    mz = _annulus_measure(r, d)
    return PoincareEstimate(p, mu0, r, mz, domain.diameter ** p / (mu0 * mz), "closed_form")


def _poincare_objective(kernel, domain, p, exclude, x_samples):
    def value(r):
        return annulus_lower_bound(kernel, domain, r, p, x_samples=x_samples, exclude=exclude) \
            * _annulus_measure(r, kernel.delta)
    return value


def _poincare_samples(kernel, domain):
    om = domain.omega
    tiny = 1e-12 * om.length
    return np.concatenate([[om.lo + tiny, om.hi - tiny], sample_points(om, min(1.0 / 200, om.length / 50), kernel.delta, 4)])


def poincare_constant(kernel, domain, p=2.0, method="auto", exclude=None, tol=1e-8):
    """Smallest C_P = diam^p / (mu0 m(Z)) over inner radii, by golden-section search.

    ``method='auto'`` returns the closed form when the family has one.
    Bond-removal kernels violate the annulus lower bound near the excised
    interval and raise unless that interval is passed as ``exclude``.
    """
    if method not in ("auto", "golden", "closed_form"):
        raise ConfigError(f"unknown Poincare method '{method}'")
    if method in ("auto", "closed_form"):
        est = poincare_closed_form(kernel, domain, p)
        if est is not None:
            return est
        if method == "closed_form":
            raise ConfigError(f"no closed form for kernel family '{kernel.family}'")
    d = kernel.delta
    xs = _poincare_samples(kernel, domain)
    objective = _poincare_objective(kernel, domain, p, exclude, xs)
    grid = np.linspace(d / 64, d * (1 - 1 / 64), 63)
    vals = np.array([objective(r) for r in grid])
    if not np.max(vals) > 0:
        raise KernelError("kernel vanishes on every annulus: lower-bound assumption infeasible, "
                          "no Poincare constant")
    k = int(np.argmax(vals))
    if 0 < k < grid.size - 1:
        res = optimize.minimize_scalar(lambda r: -objective(r), bracket=(grid[k - 1], grid[k], grid[k + 1]),
                                       method="golden", options={"xtol": tol})
        r_star, best = float(res.x), -float(res.fun)
        if best < vals[k]:
            r_star, best = float(grid[k]), float(vals[k])
    else:
        r_star, best = float(grid[k]), float(vals[k])
    mu0 = annulus_lower_bound(kernel, domain, r_star, p, x_samples=xs, exclude=exclude)
    mz = _annulus_measure(r_star, d)
    return PoincareEstimate(p, mu0, r_star, mz, domain.diameter ** p / (mu0 * mz), "golden")


def poincare_grid_search(kernel, domain, p=2.0, n=1000, exclude=None):
    """Brute-force minimum of C_P over n uniformly spaced inner radii."""
    d = kernel.delta
    xs = _poincare_samples(kernel, domain)
    objective = _poincare_objective(kernel, domain, p, exclude, xs)
    grid = d * (np.arange(1, n + 1) / (n + 1))
    vals = np.array([objective(r) for r in grid])
    k = int(np.argmax(vals))
    return domain.diameter ** p / vals[k], float(grid[k])


# -- forcing constants -----------------------------------------------------

@dataclass(frozen=True)
class ConstantEstimate:
    value: float
    feasible: bool
    condition: float
    details: dict = field(default_factory=dict)


def constant_c1(kernel, domain, p=1.0):
    """Mean-value forcing constant 1 / (2 (||mu||_1 - m(Omega)^(1/2p) ||mu||_q)), q = 2p/(2p - 1).

    Kernel norms are taken over (Omega u Gamma)^2. Infeasible when
    m(Omega)^(1/2p) ||mu||_q / ||mu||_1 >= 1.
    """
    if not kernel.symmetric:
        raise ConfigError("the mean-value forcing constant needs a symmetric kernel")
    p = float(p)
    q = 2 * p / (2 * p - 1)
    cl = domain.closure
    brk = kernel.breakpoints()
    l1 = two_point_norm(kernel, cl, cl, kernel.delta, 1.0, kernel.singular_exponent, brk)
    lq = two_point_norm(kernel, cl, cl, kernel.delta, q, kernel.singular_exponent, brk)
    cond = domain.omega.length ** (1 / (2 * p)) * lq / l1
    details = {"l1_norm": l1, "lq_norm": lq, "q": q, "norm_region": "(Omega u Gamma)^2"}
    if not cond < 1:
        return ConstantEstimate(math.inf, False, cond, details)
    return ConstantEstimate(1.0 / (2 * (l1 - domain.omega.length ** (1 / (2 * p)) * lq)), True, cond, details)


def constant_c2(kernel, domain, r=2.0, h=1.0 / 200):
    """Forcing constant ||1/lambda|| / (1 - M_{mu,r} ||1/lambda||); infeasible if the denominator is <= 0."""
    st = kernel_stats(kernel, domain, r, h)
    if not st.lambda_inf > 0:
        raise DegenerateKernelError("row mass vanishes in Omega; 1/lambda is unbounded")
    inv = 1.0 / st.lambda_inf
    cond = st.m_mu_p * inv
    details = {"inv_lambda_sup": inv, "m_mu_r": st.m_mu_p, "r": r}
    # radially symmetric kernels sit exactly at 1; rounding must not make them feasible
    if not cond < 1 - 1e-9:
        return ConstantEstimate(math.inf, False, cond, details)
    return ConstantEstimate(inv / (1 - cond), True, cond, details)


def asym_functional(kernel, domain, h=1.0 / 200):
    """M_{mu_asym,2}; zero for symmetric kernels."""
    if kernel.symmetric:
        return 0.0
    return kernel_stats(kernel, domain, 2.0, h).m_asym_2


# -- helpers ---------------------------------------------------------------

def _same(a, b, what):
    if a != b and repr(a) != repr(b):
        raise ConfigError(f"problems must share the {what}")


def _energy_constant(cp, m_asym, lipschitz=0.0):
    denom = 1 - m_asym * cp - lipschitz * cp
    return (cp / denom if denom > 0 else math.inf), denom


def _solve(problem, mesh, op):
    if problem.forcing.depends_on_u:
        return solve_semilinear(problem, mesh, operator=op, warn=False).field
    return solve_linear(problem, mesh, op)


# -- forcing audits --------------------------------------------------------

def audit_forcing(problem1, problem2, mesh, include_constants=False, operator=None, fields=None):
    """Forcing-perturbation report; optionally also the C1 and C2 reports."""
    _same(problem1.kernel, problem2.kernel, "kernel")
    _same(problem1.collar, problem2.collar, "collar data")
    op = operator if operator is not None else assemble(problem1.kernel, mesh)
    u1, u2 = fields if fields is not None else (_solve(problem1, mesh, op), _solve(problem2, mesh, op))
    x = mesh.midpoints[mesh.omega_idx]
    df = problem2.forcing(x) - problem1.forcing(x)
    lhs = field_norm(u2 - u1, "omega")
    rhs = _values_norm(df, mesh.h)
    kernel, domain = problem1.kernel, problem1.domain
    cp = poincare_constant(kernel, domain, 2).c_p
    m_asym = asym_functional(kernel, domain, mesh.h)
    const, denom = _energy_constant(cp, m_asym)
    checks = [HypothesisCheck("1 - M_asym C_P > 0", denom, 0.0, denom > 0)]
    report = make_report("forcing_energy", checks, const, lhs, rhs,
                         {"c_p": cp, "m_asym_2": m_asym})
    if not include_constants:
        return report
    reports = [report]
    if kernel.symmetric:
        c1 = constant_c1(kernel, domain, 1.0)
        checks = [HypothesisCheck("m(Omega)^(1/2p) ||mu||_q / ||mu||_1 < 1", c1.condition, 1.0, c1.feasible)]
        reports.append(make_report("forcing_c1", checks, c1.value, lhs, rhs, c1.details,
                                   ("kernel norms interpreted over (Omega u Gamma)^2",)))
    c2 = constant_c2(kernel, domain, 2.0, mesh.h)
    checks = [HypothesisCheck("M_{mu,r} ||1/lambda|| < 1", c2.condition, 1.0, c2.feasible)]
    extras = dict(c2.details, df_l1=_values_norm(df, mesh.h, 1.0))
    reports.append(make_report("forcing_c2", checks, c2.value, lhs, rhs, extras,
                               ("rhs uses the L^r norm of the statement; the L^1 norm is in extras",)))
    return reports


# -- collar audits ---------------------------------------------------------

def collar_operator_values(op, dg_gamma):
    """L applied to the collar difference extended by zero to Omega, on every cell."""
    mesh = op.mesh
    w = np.zeros(mesh.n_cells)
    w[mesh.gamma_idx] = dg_gamma
    W = op.coupling
    return W @ w - W.sum(axis=1) * w


def audit_collar(problem1, problem2, mesh, operator=None, fields=None):
    """Collar-perturbation reports: (collar, collar_operator)."""
    _same(problem1.kernel, problem2.kernel, "kernel")
    _same(problem1.forcing, problem2.forcing, "forcing")
    op = operator if operator is not None else assemble(problem1.kernel, mesh)
    u1, u2 = fields if fields is not None else (_solve(problem1, mesh, op), _solve(problem2, mesh, op))
    kernel, domain = problem1.kernel, problem1.domain
    du = u2 - u1
    dg = du.on("gamma")
    lhs = field_norm(du, "omega")
    cp = poincare_constant(kernel, domain, 2).c_p
    m_asym = asym_functional(kernel, domain, mesh.h)
    base, denom = _energy_constant(cp, m_asym)
    st = kernel_stats(kernel, domain, 2.0, mesh.h)
    checks = [HypothesisCheck("1 - C_P M_asym > 0", denom, 0.0, denom > 0)]
    collar = make_report("collar", checks, base * st.l2_omega_gamma, lhs, _values_norm(dg, mesh.h),
                         {"c_p": cp, "mu_l2_omega_gamma": st.l2_omega_gamma,
                          "du_closure": field_norm(du, "all")})
    lg = collar_operator_values(op, dg)
    rhs_all = _values_norm(lg, mesh.h)
    rhs_gamma = _values_norm(lg[mesh.gamma_idx], mesh.h)
    oper = make_report("collar_operator", checks, base, lhs, rhs_all,
                       {"c_p": cp, "L_dg_gamma_only": rhs_gamma, "du_closure": field_norm(du, "all")},
                       ("rhs is ||L(g2 - g1)|| over Omega u Gamma with g extended by zero",))
    return collar, oper


# -- kernel audits ---------------------------------------------------------

@dataclass(frozen=True)
class KernelDifference:
    """Functionals of two kernels and their normalized versions."""

    k_sup: float
    l2: float
    l1_rows_sup: float
    schur: float
    asym_l2: float
    asym_schur: float
    cp_normalized: float
    cp_raw: float
    lambda_diff_sup: float


def _normalized_breaks(n1, n2):
    return tuple(sorted(set(n1.breakpoints()) | set(n2.breakpoints())))


def _ti_difference(kernel1, kernel2, domain):
    """Closed-form route for two translation-invariant kernels.

    Inside Omega the row mass is the constant Lambda_i = integral of phi_i, so
    the normalized difference depends on s = y - x only.
    """
    d = domain.delta
    lam1 = float(kernel1.moment(-d, d))
    lam2 = float(kernel2.moment(-d, d))
    diff = lambda s: kernel2.profile(s) / lam2 - kernel1.profile(s) / lam1
    sing = max(kernel1.singular_exponent, kernel2.singular_exponent)
    if kernel1.singular_exponent == kernel2.singular_exponent and lam1 == lam2 and \
            kernel1.to_dict() == kernel2.to_dict():
        l2 = l1 = 0.0
    else:
        l1 = sum(adaptive(lambda s: abs(diff(s)), lo, hi, what="profile difference")[0]
                 for lo, hi in ((-d, 0.0), (0.0, d)))
        if 2 * sing >= 1:
            l2 = math.inf
        else:
            sq = sum(adaptive(lambda s: diff(s) ** 2, lo, hi, what="profile difference")[0]
                     for lo, hi in ((-d, 0.0), (0.0, d)))
            l2 = math.sqrt(domain.omega.length * sq)
    cp_raw = poincare_constant(kernel2, domain, 2).c_p
    return KernelDifference(abs(1 / lam2 - 1 / lam1), l2, l1, l1, 0.0, 0.0, lam2 * cp_raw, cp_raw,
                            abs(lam2 - lam1))


def kernel_difference(kernel1, kernel2, domain, h=1.0 / 200, allow_degenerate=False, exclude=None):
    """Normalized-kernel difference functionals used by the kernel-perturbation bounds.

    Differences live on x in Omega, y in Omega u Gamma. The antisymmetric
    part of the perturbed normalized kernel is measured on Omega x Omega
    (the collar rows of a normalized kernel vanish by construction).
    """
    if isinstance(kernel1, TranslationInvariantKernel) and isinstance(kernel2, TranslationInvariantKernel):
        return _ti_difference(kernel1, kernel2, domain)
    om, cl, d = domain.omega, domain.closure, domain.delta
    n1 = NormalizedKernel(kernel1, domain, allow_degenerate)
    n2 = NormalizedKernel(kernel2, domain, allow_degenerate)
    xs = sample_points(om, h, d)
    lam1, lam2 = n1.row_mass(xs), n2.row_mass(xs)
    inv1 = np.where(lam1 > 0, 1 / np.where(lam1 > 0, lam1, 1), 0.0)
    inv2 = np.where(lam2 > 0, 1 / np.where(lam2 > 0, lam2, 1), 0.0)
    k_sup = float(np.max(np.abs(inv2 - inv1)))
    lam_diff = float(np.max(np.abs(lam2 - lam1)))
    diff = lambda x, y: n2(x, y) - n1(x, y)
    brk = _normalized_breaks(n1, n2)
    sing = max(kernel1.singular_exponent, kernel2.singular_exponent)
    l2 = row_integrated_norm(diff, om, cl, d, 2.0, sing, brk)
    ys = sample_points(cl, h, d)
    rows, cols = abs_slice_masses(diff, xs, ys, om, cl, d, sing, brk)
    schur = m_functional(float(np.max(cols)), float(np.max(rows)), 2.0)
    if kernel2.symmetric and _constant_rows(n2, xs):
        asym_l2 = asym_schur = 0.0
    else:
        asym = AntisymmetricPart(n2)
        asym_l2 = row_integrated_norm(asym, om, om, d, 2.0, kernel2.singular_exponent, brk)
        r, c = abs_slice_masses(asym, xs, sample_points(om, h, d), om, om, d, kernel2.singular_exponent, brk)
        asym_schur = m_functional(float(np.max(c)), float(np.max(r)), 2.0)
    base2 = kernel2.base if isinstance(kernel2, BondRemovalKernel) else kernel2
    cp_raw = poincare_constant(base2, domain, 2).c_p
    if isinstance(kernel2, BondRemovalKernel):
        cp_norm = poincare_constant(NormalizedKernel(base2, domain), domain, 2).c_p
    else:
        cp_norm = poincare_constant(n2, domain, 2, exclude=exclude).c_p
    return KernelDifference(k_sup, l2, float(np.max(rows)), schur, asym_l2, asym_schur, cp_norm, cp_raw, lam_diff)


def _constant_rows(normalized, xs):
    lam = normalized.row_mass(xs)
    return bool(np.ptp(lam) <= 1e-12 * np.max(lam))


def audit_kernel(problem1, problem2, mesh, variant="b", fields=None, difference=None):
    """Kernel-perturbation report; variant 'a' (slice form) or 'b' (L^2 form).

    The Poincare constant is that of the normalized perturbed kernel, which
    is the kernel the energy argument runs on.
    """
    if variant not in ("a", "b"):
        raise ConfigError(f"unknown variant '{variant}'")
    _same(problem1.forcing, problem2.forcing, "forcing")
    _same(problem1.collar, problem2.collar, "collar data")
    if fields is None:
        u1 = _solve(problem1, mesh, assemble(problem1.kernel, mesh))
        u2 = _solve(problem2, mesh, assemble(problem2.kernel, mesh))
    else:
        u1, u2 = fields
    kd = difference if difference is not None else kernel_difference(problem1.kernel, problem2.kernel,
                                                                     problem1.domain, mesh.h)
    x = mesh.midpoints[mesh.omega_idx]
    f_norm = _values_norm(problem1.forcing(x), mesh.h)
    u1_norm = field_norm(u1, "all")
    lhs = field_norm(u2 - u1, "omega")
    cp = kd.cp_normalized
    if variant == "a":
        asym, dnorm, tid = kd.asym_schur, kd.schur, "kernel_slices"
    else:
        asym, dnorm, tid = kd.asym_l2, kd.l2, "kernel_l2"
    const, denom = _energy_constant(cp, asym)
    checks = [HypothesisCheck("C_P * asym(normalized mu_2) < 1", cp * asym, 1.0, denom > 0)]
    if variant == "b" and not math.isfinite(kd.l2):
        checks.append(HypothesisCheck("normalized kernels in L^2", kd.l2, math.inf, False))
    rhs = 2 * dnorm * u1_norm + kd.k_sup * f_norm
    extras = {"K_sup": kd.k_sup, "f_l2": f_norm, "u1_closure_l2": u1_norm, "dmu_norm": dnorm,
              "c_p_normalized": cp, "c_p_kernel": kd.cp_raw, "asym": asym}
    return make_report(tid, checks, const, lhs, rhs, extras)


def audit_bond_removal(base_problem, excised, mesh, mode="all", fields=None, difference=None):
    """Squared kernel-perturbation report for a bar with bonds to ``excised`` removed.

    Compares ||u2 - u1||^2 against C_P * 2 ||u2||_{Omega u Gamma} ||normalized mu2 - mu1||_{L^2}.
    """
    if 2 * excised.length >= base_problem.domain.delta:
        raise ConfigError(f"excised interval of length {excised.length} is too large: "
                          f"need 2|excised| < delta = {base_problem.domain.delta}", path="excised")
    x = mesh.midpoints[mesh.omega_idx]
    if np.any(base_problem.forcing(x) != 0):
        raise ConfigError("bond-removal audit needs zero forcing", path="forcing")
    removed = BondRemovalKernel(base_problem.kernel, excised, mode)
    p2 = base_problem.replace(kernel=removed)
    if fields is None:
        u1 = solve_linear(base_problem, mesh)
        u2 = solve_linear(p2, mesh)
    else:
        u1, u2 = fields
    kd = difference if difference is not None else kernel_difference(
        base_problem.kernel, removed, base_problem.domain, mesh.h, allow_degenerate=True)
    cp = poincare_constant(base_problem.kernel, base_problem.domain, 2).c_p
    lhs = field_norm(u2 - u1, "omega") ** 2
    u2_norm = field_norm(u2, "all")
    rhs = 2 * u2_norm * kd.l2
    asym = asym_functional(base_problem.kernel, base_problem.domain, mesh.h)
    const, denom = _energy_constant(cp, asym)
    checks = [HypothesisCheck("C_P * asym(mu_1) < 1", cp * asym, 1.0, denom > 0)]
    extras = {"dmu_l2": kd.l2, "u2_closure_l2": u2_norm, "du_l2": math.sqrt(lhs), "c_p": cp}
    notes = ("cells inside the excised interval are decoupled and pinned to 0 (non-physical)",)
    return make_report("bond_removal", checks, const, lhs, rhs, extras, notes)


# -- nonlinear audit -------------------------------------------------------

def audit_nonlinear(problem1, problem2, mesh, operator=None, fields=None):
    """Lipschitz nonlinear forcing report; problem1 is the reference (its Lipschitz constant is used)."""
    _same(problem1.kernel, problem2.kernel, "kernel")
    _same(problem1.collar, problem2.collar, "collar data")
    op = operator if operator is not None else assemble(problem1.kernel, mesh)
    u1, u2 = fields if fields is not None else (_solve(problem1, mesh, op), _solve(problem2, mesh, op))
    kernel, domain = problem1.kernel, problem1.domain
    cp = poincare_constant(kernel, domain, 2).c_p
    m_asym = asym_functional(kernel, domain, mesh.h)
    lip = problem1.forcing.lipschitz_in_u
    const, denom = _energy_constant(cp, m_asym, lip)
    # the sup-norm of the forcing difference enters through its L^2(Omega) norm
    const *= math.sqrt(domain.omega.length)
    lhs = field_norm(u2 - u1, "omega")
    rhs = forcing_sup_difference(problem1.forcing, problem2.forcing, domain)
    checks = [HypothesisCheck("1 - M_asym C_P - L_1 C_P > 0", denom, 0.0, denom > 0)]
    return make_report("nonlinear", checks, const, lhs, rhs,
                       {"c_p": cp, "lipschitz": lip, "m_asym_2": m_asym})


# -- identities ------------------------------------------------------------

@dataclass(frozen=True)
class IdentityCheck:
    name: str
    value: float
    tolerance: float
    passed: bool


def _rng_fields(rng, n, count):
    return rng.standard_normal((count, n))


def integration_by_parts_residual(W, u, v, h):
    """Relative residual of the discrete integration-by-parts identity.

    With W = S + N split into symmetric and antisymmetric parts and
    (L u)_i = sum_j W_ij (u_j - u_i) on all cells:
        h <L u, v> = -h/2 sum_ij S_ij (u_j - u_i)(v_j - v_i)
                     + h sum_ij N_ij u_j v_i - h sum_i (sum_j N_ij) u_i v_i
    """
    S = 0.5 * (W + W.T)
    N = 0.5 * (W - W.T)
    Lu = W @ u - W.sum(axis=1) * u
    left = h * np.dot(Lu, v)
    du = u[None, :] - u[:, None]
    dv = v[None, :] - v[:, None]
    right = -0.5 * h * np.sum(S * du * dv) + h * (v @ N @ u) - h * np.sum(N.sum(axis=1) * u * v)
    scale = h * np.sum(np.abs(W) * (np.abs(du * dv) + np.abs(np.outer(v, u)))) + abs(left)
    return abs(left - right) / max(scale, 1e-300)


def identity_audit(kernel, domain, h=1.0 / 200, n_pairs=100, seed=0):
    """Discrete identity and inequality checks on random fields; returns IdentityCheck list."""
    rng = np.random.default_rng(seed)
    mesh = build_mesh(domain, h)
    op = assemble(kernel, mesh)
    W = op.coupling
    n = mesh.n_cells
    om = mesh.omega_idx
    checks = []

    # zero row sum: L applied to constants vanishes
    zr = float(np.max(np.abs(op.apply(np.ones(n)))))
    checks.append(IdentityCheck("zero row sum", zr, 1e-9, zr < 1e-9))

    # integration by parts on random pairs
    us, vs = _rng_fields(rng, n, n_pairs), _rng_fields(rng, n, n_pairs)
    ibp = max(integration_by_parts_residual(W, u, v, mesh.h) for u, v in zip(us, vs))
    checks.append(IdentityCheck("integration by parts", ibp, 1e-8, ibp < 1e-8))

    # weighted mean value on the solved field with zero forcing and random collar data
    g = rng.standard_normal(mesh.gamma_idx.size)
    sys_ = LinearSystem.factor(op)
    u = np.zeros(n)
    u[mesh.gamma_idx] = g
    u[om] = sys_.solve(np.zeros(om.size), g)
    active = ~op.decoupled
    mean = (W[om] @ u)[active] / op.row_sums[active]
    mv = float(np.max(np.abs(u[om][active] - mean)) / max(1.0, np.max(np.abs(u))))
    checks.append(IdentityCheck("weighted mean value", mv, 1e-8, mv < 1e-8))

    # Young-type bound with M_{mu,2}
    st = kernel_stats(kernel, domain, 2.0, mesh.h)
    worst = -math.inf
    for v in _rng_fields(rng, n, n_pairs):
        tv = W[om] @ v
        worst = max(worst, _values_norm(tv, mesh.h) - st.m_mu_p * _values_norm(v, mesh.h) - 1e-8)
    checks.append(IdentityCheck("Young-type bound", worst, 0.0, worst <= 0))

    # asymmetric-part bounds (slice and L^2 forms)
    if not kernel.symmetric:
        Nabs = np.abs(0.5 * (W - W.T))[om]
        l2_asym = st.asym_l2
        worst_a = worst_b = -math.inf
        for u_, v_ in zip(_rng_fields(rng, n, n_pairs), _rng_fields(rng, n, n_pairs)):
            lhs = mesh.h * np.abs(u_[om]) @ Nabs @ np.abs(v_)
            worst_a = max(worst_a, lhs - st.m_asym_2 * _values_norm(u_[om], mesh.h) * _values_norm(v_, mesh.h) - 1e-8)
            worst_b = max(worst_b, lhs - l2_asym * _values_norm(u_[om], mesh.h) * _values_norm(v_, mesh.h) - 1e-8)
        checks.append(IdentityCheck("asymmetric slice bound", worst_a, 0.0, worst_a <= 0))
        checks.append(IdentityCheck("asymmetric L2 bound", worst_b, 0.0, worst_b <= 0))

    # Poincare inequality on fields vanishing on the collar
    if not isinstance(kernel, BondRemovalKernel):
        cp = poincare_constant(kernel, domain, 2).c_p
        worst = -math.inf
        for u_ in _rng_fields(rng, n, n_pairs):
            u_[mesh.gamma_idx] = 0.0
            energy = mesh.h * np.sum(W[om] * (u_[None, :] - u_[om][:, None]) ** 2)
            lhs = _values_norm(u_[om], mesh.h) ** 2
            worst = max(worst, (lhs - cp * energy) / max(lhs, 1e-300))
        checks.append(IdentityCheck("Poincare inequality", worst, 1e-8, worst <= 1e-8))
    return checks

