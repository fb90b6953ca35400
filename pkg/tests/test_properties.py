import math
from functools import lru_cache

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nonlocstab.discretize import DomainSpec, Field, assemble, build_mesh
from nonlocstab.kernels import (ConstantKernel, HeterogeneousExpKernel, PowerLawKernel, TruncatedGaussianKernel,
                                evaluate, split_sym_asym)
from nonlocstab.solve import PolynomialPair, Polynomial, ProblemSpec, solve_linear
from nonlocstab.stability import field_norm, poincare_constant

H = 1.0 / 50
SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])

KERNELS = {
    "constant": lambda: ConstantKernel(0.2),
    "power_law": lambda: PowerLawKernel(0.2, 0.5),
    "gaussian": lambda: TruncatedGaussianKernel(0.2),
    "heterogeneous": lambda: HeterogeneousExpKernel(0.2, 0.4),
}
SYMMETRIC = ("constant", "power_law", "gaussian")


@lru_cache(maxsize=None)
def _operator(name):
    mesh = build_mesh(DomainSpec.unit(0.2), H)
    return mesh, assemble(KERNELS[name](), mesh)


N_CELLS = _operator("constant")[0].n_cells
values = arrays(np.float64, N_CELLS, elements=st.floats(-10, 10, allow_nan=False))
kernel_names = st.sampled_from(sorted(KERNELS))


@SETTINGS
@given(kernel_names, values, values, st.floats(-5, 5), st.floats(-5, 5))
def test_operator_is_linear(name, u, v, a, b):
    _, op = _operator(name)
    lhs = op.apply(a * u + b * v)
    rhs = a * op.apply(u) + b * op.apply(v)
    scale = np.max(op.row_sums) * (1 + np.max(np.abs(a * u)) + np.max(np.abs(b * v)))
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale


@SETTINGS
@given(kernel_names, values, st.floats(-100, 100))
def test_adding_constants_leaves_operator_unchanged(name, u, c):
    _, op = _operator(name)
    diff = op.apply(u + c) - op.apply(u)
    assert np.max(np.abs(diff)) <= 1e-10 * np.max(op.row_sums) * (1 + abs(c) + np.max(np.abs(u)))


@SETTINGS
@given(st.sampled_from(SYMMETRIC), values, values)
def test_symmetric_kernels_give_symmetric_bilinear_forms(name, u, v):
    mesh, op = _operator(name)
    W = op.coupling
    assert abs(u @ W @ v - v @ W @ u) <= 1e-10 * np.abs(W).sum() * (1 + np.max(np.abs(u)) * np.max(np.abs(v)))


@SETTINGS
@given(kernel_names, st.floats(-1.5, 1.5), st.floats(-1.5, 1.5).filter(lambda s: abs(s) > 1e-9))
def test_kernel_split_is_symmetric_and_antisymmetric(name, x, s):
    kernel = KERNELS[name]()
    y = x + s * 0.15
    sym, asym = split_sym_asym(kernel)
    assert math.isclose(sym(x, y), sym(y, x), rel_tol=1e-12, abs_tol=1e-9)
    assert math.isclose(asym(x, y), -asym(y, x), rel_tol=1e-12, abs_tol=1e-9)
    assert evaluate(kernel, x, y) >= 0


@SETTINGS
@given(values, values, st.one_of(st.just(0.0), st.floats(1e-6, 3), st.floats(-3, -1e-6)))
def test_norm_axioms(u, v, a):
    mesh, _ = _operator("constant")
    fu, fv = Field(mesh, u), Field(mesh, v)
    for p in (1.0, 2.0, math.inf):
        nu, nv = field_norm(fu, "all", p), field_norm(fv, "all", p)
        assert field_norm(Field(mesh, u + v), "all", p) <= (nu + nv) * (1 + 1e-12) + 1e-300
        assert math.isclose(field_norm(Field(mesh, a * u), "all", p), abs(a) * nu, rel_tol=1e-12, abs_tol=1e-300)
        assert nu >= 0


@SETTINGS
@given(kernel_names, values)
def test_discrete_poincare_inequality(name, u):
    mesh, op = _operator(name)
    u = u.copy()
    u[mesh.gamma_idx] = 0.0
    om = mesh.omega_idx
    W = op.coupling
    energy = mesh.h * np.sum(W[om] * (u[None, :] - u[om][:, None]) ** 2)
    cp = poincare_constant(KERNELS[name](), mesh.domain).c_p
    lhs = mesh.h * np.sum(u[om] ** 2)
    assert lhs <= cp * energy * (1 + 1e-9) + 1e-12


@SETTINGS
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_forcing_bound_holds_for_random_polynomials(a0, a1, b0, b1):
    mesh, op = _operator("constant")
    dom = DomainSpec.unit(0.2)
    collar = PolynomialPair((0, 1), (0, 1))
    p1 = ProblemSpec(dom, ConstantKernel(0.2), Polynomial((a0, a1)), collar)
    p2 = p1.replace(forcing=Polynomial((b0, b1)))
    du = field_norm(solve_linear(p2, mesh, op) - solve_linear(p1, mesh, op), "omega")
    x = mesh.midpoints[mesh.omega_idx]
    df = math.sqrt(mesh.h * np.sum((p2.forcing(x) - p1.forcing(x)) ** 2))
    assert du <= 9 / 8 * df * (1 + 1e-9) + 1e-12


@SETTINGS
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_maximum_principle_for_zero_forcing(left, right):
    mesh, op = _operator("constant")
    dom = DomainSpec.unit(0.2)
    prob = ProblemSpec(dom, ConstantKernel(0.2), Polynomial((0.0,)), PolynomialPair((left,), (right,)))
    u = solve_linear(prob, mesh, op).on("omega")
    lo, hi = min(left, right), max(left, right)
    tol = 1e-9 * (1 + abs(lo) + abs(hi))
    assert np.all(u >= lo - tol) and np.all(u <= hi + tol)
