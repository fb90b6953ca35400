"""Acceptance criteria, one test per criterion item.

Every item records a PASS/FAIL line. The lines are printed at the end of a
pytest session and when this file is run directly:

    python3 tests/test_acceptance.py
"""
import json
import math
import os
import time

import numpy as np
import pytest

from nonlocstab.discretize import DomainSpec, assemble, build_mesh
from nonlocstab.experiments import PRESETS, get_preset, run_preset
from nonlocstab.kernels import ConstantKernel, HeterogeneousExpKernel, Interval, PowerLawKernel
from nonlocstab.solve import solve_semilinear
from nonlocstab.stability import identity_audit, poincare_constant

HERE = os.path.dirname(os.path.abspath(__file__))
RESULTS = []
_CACHE = {}


def record(criterion, item, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'}  [{criterion}] {item}: {detail}"
    RESULTS.append(line)
    return passed


def preset(preset_id):
    if preset_id not in _CACHE:
        _CACHE[preset_id] = run_preset(preset_id)
    return _CACHE[preset_id]


def column(preset_id, key):
    return np.array([float(r[key]) for r in preset(preset_id).rows])


def within_rel(actual, target, rel):
    actual, target = np.asarray(actual, float), np.asarray(target, float)
    err = np.abs(actual - target) / np.abs(target)
    return bool(actual.shape == target.shape and np.all(err <= rel)), float(np.max(err))


def check_column(criterion, item, preset_id, key, target, rel=None, abs_tol=None):
    actual = column(preset_id, key)
    if abs_tol is not None:
        err = float(np.max(np.abs(actual - np.asarray(target))))
        ok = actual.shape == np.shape(target) and err <= abs_tol
        detail = f"max abs error {err:.3g} (tol {abs_tol:g}); got {np.array2string(actual, precision=6)}"
    else:
        ok, err = within_rel(actual, target, rel)
        detail = f"max rel error {err:.3g} (tol {rel:g}); got {np.array2string(actual, precision=6)}"
    return record(criterion, item, ok, detail)


# -- 1. table reproduction -------------------------------------------------

TABLES = [
    ("sinusoid ratio", "sinusoid", "ratio", [0.019715, 0.0075826, 0.0066292, 0.0077636], 0.10, None),
    ("sigmoid ratio", "sigmoid", "ratio", [0.0171464, 0.0257089, 0.0287117, 0.0299318], 0.10, None),
    ("collar ratio", "collar", "ratio", [1.0156, 1.13237, 1.46138, 2.05887], 0.10, None),
    ("singular kernel C_P", "kernel_singularity", "c_p", [1.1076, 1.0873, 1.0634, 1.0348], None, 1e-3),
    ("singular kernel ratio", "kernel_singularity", "ratio",
     [0.00120516, 0.000987976, 0.000756179, 0.000651402], 0.10, None),
    ("heterogeneous kernel difference", "heterogeneous_x", "D",
     [0.0105405, 0.0210802, 0.0316185, 0.0421549], 0.01, None),
    ("heterogeneous kernel ratio", "heterogeneous_x", "ratio",
     [0.00039434, 0.00036694, 0.00034106, 0.00031671], 0.10, None),
    ("bond removal kernel difference", "bond_removal", "D", [0.125, 0.25, 0.375, 0.5], 0.01, None),
    ("bond removal squared ratio", "bond_removal", "ratio", [0.03550, 0.0367, 0.0385, 0.0410], 0.10, None),
    ("nonlinear eta forcing sup", "nonlinear_eta", "df", [k * math.pi for k in (1, 2, 3, 4)], None, 1e-5),
    ("nonlinear eta ratio", "nonlinear_eta", "ratio", [0.00507719, 0.00463779, 0.00426802, 0.00395263], 0.10, None),
    ("nonlinear theta ratio", "nonlinear_theta", "ratio", [0.165991, 0.165959, 0.165928, 0.165899], 0.10, None),
    ("exponential kernel eta ratio", "exp_kernel_eta", "ratio", [50.0] * 4, 0.15, None),
    ("exponential kernel theta ratio", "exp_kernel_theta", "ratio", [50.0] * 4, 0.15, None),
]


@pytest.mark.parametrize("item,preset_id,key,target,rel,abs_tol", TABLES, ids=[t[0] for t in TABLES])
def test_1_table_reproduction(item, preset_id, key, target, rel, abs_tol):
    assert check_column("1", item, preset_id, key, target, rel, abs_tol)


# -- 2. bound satisfaction -------------------------------------------------

def test_2_applicable_reports_are_satisfied():
    bad = []
    for pid in PRESETS:
        for value, rep in preset(pid).reports:
            if rep.applicable and not rep.satisfied:
                bad.append(f"{pid}@{value}:{rep.theorem_id}")
    assert record("2", "applicable reports satisfied in every preset", not bad,
                  "violations: " + (", ".join(bad) if bad else "none"))


@pytest.mark.parametrize("preset_id,limit", [("sinusoid", 9 / 8), ("sigmoid", 9 / 8), ("collar", 675.0),
                                             ("nonlinear_theta", 1.5)])
def test_2_ratio_limits(preset_id, limit):
    ratios = column(preset_id, "ratio")
    assert record("2", f"{preset_id} ratios <= {limit:g}", bool(np.all(ratios <= limit)),
                  f"max ratio {ratios.max():.6g}")


# -- 3. Poincare constant --------------------------------------------------

def test_3_poincare_constant():
    dom = DomainSpec.unit(0.2)
    closed = poincare_constant(ConstantKernel(0.2), dom, method="closed_form").c_p
    golden = poincare_constant(ConstantKernel(0.2), dom, method="golden").c_p
    ok = closed == 9 / 8 and abs(golden - 9 / 8) <= 1e-6
    assert record("3", "constant kernel C_P = 9/8", ok, f"closed form {closed!r}, golden search {golden!r}")


# -- 4. identity audits ----------------------------------------------------

@pytest.mark.parametrize("kernel", [ConstantKernel(0.2), HeterogeneousExpKernel(0.2, 0.3)],
                         ids=["constant", "heterogeneous"])
def test_4_identity_audits(kernel):
    start = time.perf_counter()
    checks = identity_audit(kernel, DomainSpec.unit(0.2), h=1 / 200, n_pairs=100, seed=0)
    elapsed = time.perf_counter() - start
    names = {c.name: c for c in checks}
    required = ["zero row sum", "integration by parts", "weighted mean value", "Poincare inequality"]
    ok = all(n in names and names[n].passed for n in required)
    detail = ", ".join(f"{c.name}={c.value:.2g}" for c in checks) + f"; {elapsed:.2f} s"
    assert record("4", f"identities ({kernel.family})", ok, detail)
    assert record("4", f"identity audit runtime ({kernel.family}) < 1 s", elapsed < 1.0, f"{elapsed:.2f} s")


# -- 5. oracle equivalence -------------------------------------------------

def _oracles():
    with open(os.path.join(HERE, "oracles", "oracles.json")) as fh:
        return json.load(fh)


def test_5_ten_cell_assembly():
    orc = _oracles()["ten_cell"]
    mesh = build_mesh(DomainSpec(Interval(*orc["omega"]), orc["delta"]), orc["h"])
    kernels = {"constant": ConstantKernel(0.2), "heterogeneous_eps0.3": HeterogeneousExpKernel(0.2, 0.3),
               "power_law_eps0.5": PowerLawKernel(0.2, 0.5)}
    worst = max(float(np.max(np.abs(assemble(k, mesh).coupling - np.array(orc[name]))))
                for name, k in kernels.items())
    assert record("5", "10-cell assembly vs double-integral oracle", worst <= 1e-8, f"max entry error {worst:.3g}")


def test_5_singular_diagonal():
    ref = _oracles()["power_law_diagonal"]
    mesh = build_mesh(DomainSpec.unit(0.2), 1 / 200)
    worst = 0.0
    for eps, value in ref.items():
        diag = assemble(PowerLawKernel(0.2, float(eps)), mesh).coupling[mesh.omega_idx[0], mesh.omega_idx[0]]
        worst = max(worst, abs(diag - value) / value)
    assert record("5", "singular diagonal vs 10^6-point composite rule", worst <= 1e-8, f"max rel error {worst:.3g}")


# -- 6. Picard contraction -------------------------------------------------

def test_6_picard_contraction():
    problem = get_preset("nonlinear_eta").problem(1.0)
    assert problem.forcing.eta == 1.0 and problem.forcing.theta == 1.0
    mesh = build_mesh(problem.domain, 1 / 200)
    res = solve_semilinear(problem, mesh, tol=1e-10, max_iter=500, warn=False)
    inc = np.array(res.increments)
    bound = poincare_constant(problem.kernel, problem.domain).c_p * problem.forcing.lipschitz_in_u + 0.1
    observed = float(np.max(inc[3:] / inc[2:-1])) if inc.size > 3 else 0.0
    assert record("6", "increment ratio after 3 iterations <= C_P L + 0.1", observed <= bound,
                  f"observed {observed:.4g}, bound {bound:.4g}")
    assert record("6", "Picard converges in < 50 iterations", res.iterations < 50, f"{res.iterations} iterations")


# -- 7. horizon sweep ------------------------------------------------------

def test_7_horizon_sweep():
    res = preset("delta_sweep")
    deltas = sorted({r["delta1"] for r in res.rows} | {r["delta2"] for r in res.rows})
    covers = deltas[0] == pytest.approx(0.15) and deltas[-1] == pytest.approx(0.25)
    dev = res.summary["max_relative_deviation"]
    assert record("7", "fitted slope stable within 20% over [0.15, 0.25]", covers and dev <= 0.20,
                  f"slope {res.summary['fitted_slope']:.4g}, max deviation {dev:.3g}")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
