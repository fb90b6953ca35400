import math

import numpy as np
import pytest

from nonlocstab.discretize import DomainSpec, Field, assemble, build_mesh
from nonlocstab.errors import ConfigError
from nonlocstab.kernels import (BondRemovalKernel, ConstantKernel, HeterogeneousExpKernel, Interval, PowerLawKernel,
                                TruncatedGaussianKernel)
from nonlocstab.solve import (LinearCollar, NonlinearArctan, PiecewiseSinusoid, Polynomial, PolynomialPair,
                              ProblemSpec, ZeroCollar)
from nonlocstab.stability import (audit_bond_removal, audit_collar, audit_forcing, audit_kernel, audit_nonlinear,
                                  constant_c1, constant_c2, field_norm, identity_audit, kernel_difference,
                                  poincare_constant, poincare_grid_search)


# -- Poincare constant -----------------------------------------------------

def test_constant_kernel_poincare_closed_form(unit_domain):
    est = poincare_constant(ConstantKernel(0.2), unit_domain)
    assert est.c_p == pytest.approx(9 / 8, rel=1e-14)
    assert est.eps_star == pytest.approx(2 * 0.2 / 3)


@pytest.mark.parametrize("eps", [0.0, 0.2, 0.5, 0.8])
def test_golden_search_agrees_with_closed_form(unit_domain, eps):
    k = PowerLawKernel(0.2, eps)
    closed = poincare_constant(k, unit_domain, method="closed_form").c_p
    golden = poincare_constant(k, unit_domain, method="golden").c_p
    assert golden == pytest.approx(closed, rel=1e-6)


def test_power_law_poincare_explicit_formula(unit_domain):
    # 2^-1 (2 - eps)^(eps - 2) (3 - eps)^(2 - eps) on the unit interval
    for eps in (0.2, 0.4, 0.6, 0.8):
        expect = 0.5 * (2 - eps) ** (eps - 2) * (3 - eps) ** (2 - eps)
        assert poincare_constant(PowerLawKernel(0.2, eps), unit_domain).c_p == pytest.approx(expect, rel=1e-12)
    assert poincare_constant(PowerLawKernel(0.2, 0.2), unit_domain).c_p == pytest.approx(1.10755, abs=1e-5)


def test_poincare_scales_with_squared_diameter():
    a = poincare_constant(HeterogeneousExpKernel(0.2, 0.3), DomainSpec(Interval(0.0, 1.0), 0.2), method="golden")
    b = poincare_constant(HeterogeneousExpKernel(0.2, 0.3), DomainSpec(Interval(0.0, 2.0), 0.2), method="golden")
    # the kernel grows with x, so mu0 over the longer interval can only decrease
    assert b.c_p >= 4 * a.c_p * (1 - 1e-9)
    c = poincare_constant(ConstantKernel(0.2), DomainSpec(Interval(0.0, 2.0), 0.2))
    assert c.c_p == pytest.approx(4 * 9 / 8, rel=1e-14)


@pytest.mark.parametrize("kernel", [ConstantKernel(0.2), PowerLawKernel(0.2, 0.5), TruncatedGaussianKernel(0.2),
                                    HeterogeneousExpKernel(0.2, 0.4)])
def test_golden_search_never_beaten_by_grid(unit_domain, kernel):
    golden = poincare_constant(kernel, unit_domain, method="golden").c_p
    grid, _ = poincare_grid_search(kernel, unit_domain, n=1000)
    assert golden <= grid * (1 + 1e-6)


def test_poincare_unknown_method(unit_domain):
    with pytest.raises(ConfigError, match="unknown Poincare method"):
        poincare_constant(ConstantKernel(0.2), unit_domain, method="newton")


def test_full_excision_has_no_poincare_constant_without_exclusion(unit_domain):
    k = BondRemovalKernel(ConstantKernel(0.2), Interval(0.48, 0.52))
    with pytest.raises(Exception):
        poincare_constant(k, unit_domain)


# -- forcing constants -----------------------------------------------------

def test_mean_value_constant_infeasible_on_unit_interval(unit_domain):
    est = constant_c1(ConstantKernel(0.2), unit_domain)
    assert not est.feasible and math.isinf(est.value)
    assert est.condition == pytest.approx(1.38675, rel=1e-5)


def test_mean_value_constant_feasible_on_short_interval():
    est = constant_c1(ConstantKernel(0.2), DomainSpec(Interval(0.0, 0.05), 0.2))
    assert est.feasible and 0 < est.value < math.inf


def test_mean_value_constant_scales_inversely_with_kernel():
    dom = DomainSpec(Interval(0.0, 0.05), 0.2)
    a = constant_c1(ConstantKernel(0.2), dom)
    b = constant_c1(ConstantKernel(0.2, value=3 * 375.0), dom)
    assert b.condition == pytest.approx(a.condition, rel=1e-12)
    assert b.value == pytest.approx(a.value / 3, rel=1e-12)


def test_mean_value_constant_needs_symmetry(unit_domain):
    with pytest.raises(ConfigError, match="symmetric"):
        constant_c1(HeterogeneousExpKernel(0.2, 0.3), unit_domain)


def test_row_mass_constant_is_borderline_for_symmetric_kernels(unit_domain):
    est = constant_c2(ConstantKernel(0.2), unit_domain)
    assert not est.feasible
    assert est.condition == pytest.approx(1.0, abs=1e-9)


def test_row_mass_constant_condition_is_scale_free(unit_domain):
    a = constant_c2(HeterogeneousExpKernel(0.2, 0.5), unit_domain)
    b = constant_c2(ConstantKernel(0.2, value=7.0), unit_domain)
    assert not a.feasible and a.condition > 1
    assert b.condition == pytest.approx(1.0, abs=1e-9)
    assert b.details["inv_lambda_sup"] == pytest.approx(1 / (7.0 * 0.4), rel=1e-12)


# -- audits ----------------------------------------------------------------

def _prob(forcing, collar=None, kernel=None):
    return ProblemSpec(DomainSpec.unit(0.2), kernel or ConstantKernel(0.2), forcing,
                       collar or PolynomialPair((0, 0, 0, 1), (0, 0, 0, 0, 1)))


def test_identical_problems_have_zero_ratio(unit_mesh):
    p = _prob(PiecewiseSinusoid(1.0))
    rep = audit_forcing(p, p, unit_mesh)
    assert rep.lhs_norm == 0.0 and rep.ratio == 0.0 and rep.status == "satisfied"


def test_symmetric_energy_constant_is_poincare(unit_mesh):
    rep = audit_forcing(_prob(PiecewiseSinusoid(0.0)), _prob(PiecewiseSinusoid(2.0)), unit_mesh)
    assert rep.theorem_id == "forcing_energy"
    assert rep.constant == pytest.approx(9 / 8, rel=1e-12)
    assert rep.satisfied and rep.ratio <= rep.constant


def test_forcing_audit_with_constants(unit_mesh):
    reps = audit_forcing(_prob(PiecewiseSinusoid(0.0)), _prob(PiecewiseSinusoid(2.0)), unit_mesh,
                         include_constants=True)
    ids = [r.theorem_id for r in reps]
    assert ids == ["forcing_energy", "forcing_c1", "forcing_c2"]
    assert reps[1].status == "not applicable" and reps[2].status == "not applicable"


def test_forcing_audit_rejects_mismatched_kernels(unit_mesh):
    with pytest.raises(ConfigError, match="kernel"):
        audit_forcing(_prob(PiecewiseSinusoid(0.0)),
                      _prob(PiecewiseSinusoid(1.0), kernel=PowerLawKernel(0.2, 0.3)), unit_mesh)


def test_collar_audit_reports(unit_mesh):
    a = ProblemSpec(DomainSpec.unit(0.2), ConstantKernel(0.2), Polynomial((0, 0, 12)), ZeroCollar())
    b = a.replace(collar=LinearCollar(0.1))
    reps = audit_collar(a, b, unit_mesh)
    assert {r.theorem_id for r in reps} == {"collar", "collar_operator"}
    assert all(r.satisfied for r in reps)


def test_kernel_audit_variants(unit_mesh):
    a = _prob(Polynomial((0, 0, 12)))
    b = a.replace(kernel=PowerLawKernel(0.2, 0.2))
    rb = audit_kernel(a, b, unit_mesh, "b")
    ra = audit_kernel(a, b, unit_mesh, "a")
    assert rb.theorem_id == "kernel_l2" and ra.theorem_id == "kernel_slices"
    assert rb.satisfied and ra.satisfied


def test_kernel_difference_of_equal_kernels_vanishes(unit_domain):
    kd = kernel_difference(ConstantKernel(0.2), ConstantKernel(0.2), unit_domain)
    assert kd.l2 == 0.0 and kd.k_sup == 0.0


def test_bond_removal_audit(unit_mesh):
    base = ProblemSpec(DomainSpec.unit(0.2), ConstantKernel(0.2), Polynomial((0.0,)), LinearCollar())
    rep = audit_bond_removal(base, Interval(0.49, 0.51), unit_mesh)
    assert rep.theorem_id == "bond_removal" and rep.lhs_norm > 0


def test_bond_removal_audit_rejects_wide_excision(unit_mesh):
    base = ProblemSpec(DomainSpec.unit(0.2), ConstantKernel(0.2), Polynomial((0.0,)), LinearCollar())
    with pytest.raises(ConfigError, match="too large"):
        audit_bond_removal(base, Interval(0.4, 0.6), unit_mesh)


def test_nonlinear_audit(unit_mesh):
    a = _prob(NonlinearArctan(0.0, 1.0), LinearCollar())
    b = a.replace(forcing=NonlinearArctan(1.0 / 9, 1.0))
    rep = audit_nonlinear(a, b, unit_mesh)
    assert rep.theorem_id == "nonlinear" and rep.satisfied


# -- identities and norms --------------------------------------------------

@pytest.mark.parametrize("kernel", [ConstantKernel(0.2), HeterogeneousExpKernel(0.2, 0.3)])
def test_identity_audit_passes(kernel, unit_domain):
    checks = identity_audit(kernel, unit_domain, h=1.0 / 100, n_pairs=20, seed=4)
    failed = [c.name for c in checks if not c.passed]
    assert not failed
    names = {c.name for c in checks}
    assert {"zero row sum", "integration by parts", "Poincare inequality"} <= names


def test_field_norms(unit_mesh):
    u = Field.sample(unit_mesh, lambda x: np.ones_like(x))
    assert field_norm(u, "omega") == pytest.approx(1.0, rel=1e-12)
    assert field_norm(u, "all") == pytest.approx(math.sqrt(1.4), rel=1e-12)
    assert field_norm(u, "gamma", 1.0) == pytest.approx(0.4, rel=1e-12)
    v = Field.sample(unit_mesh, lambda x: x)
    assert field_norm(v, "omega", math.inf) == pytest.approx(1 - unit_mesh.h / 2)
