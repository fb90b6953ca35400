"""Named parameter sweeps: solution profiles, comparison tables and bound reports.

Each preset fixes a domain, kernel, forcing and collar as functions of one
scalar parameter, a baseline value and a grid. ``run_preset`` solves the
baseline and every grid point, measures the differences and runs the
matching audit from ``stability``. ``emit_tables`` writes the results as
CSV files plus a JSON manifest; the output is byte-for-byte deterministic.

Table columns follow the usual comparison-table conventions. Where a
table column uses a different normalization than the bound report (for
example an L^1 rather than an L^2 kernel difference), both are written:
the table column under its usual header and the report's ratio and
constant in the ``report_*`` columns.
"""
import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import __version__
from .discretize import DomainSpec, assemble, build_mesh
from .errors import ConfigError, NonlocStabError
from .kernels import (BondRemovalKernel, ConstantKernel, HeterogeneousExpKernel, Interval,
                      PowerLawKernel, TruncatedGaussianKernel)
from .solve import (LinearCollar, NonlinearArctan, PiecewiseJump, PiecewiseSinusoid, Polynomial,
                    PolynomialPair, ProblemSpec, Sigmoid, ZeroCollar, forcing_sup_difference,
                    solve_linear, solve_semilinear)
from .stability import (_values_norm, audit_bond_removal, audit_collar, audit_forcing, audit_kernel,
                        audit_nonlinear, field_norm, kernel_difference)

DEFAULT_H = 1.0 / 200
TUNABLE = ("h", "grid", "tol", "max_iter")

QUARTIC = (0.0, 0.0, 0.0, 0.0, 1.0)
CUBIC = (0.0, 0.0, 0.0, 1.0)
TWELVE_X2 = Polynomial((0.0, 0.0, 12.0))
QUARTIC_COLLAR = PolynomialPair(QUARTIC, QUARTIC)


@dataclass(frozen=True)
class ExperimentPreset:
    """A one-parameter family of problems with a baseline and a sweep grid."""

    id: str
    parameter: str
    symbol: str
    grid: tuple
    baseline: float
    build: Callable
    kind: str
    description: str
    notes: tuple = ()

    def problem(self, value):
        return self.build(float(value))


@dataclass
class ExperimentResult:
    preset: ExperimentPreset
    overrides: dict
    mesh: dict
    columns: tuple
    rows: list
    fields: dict
    baseline_field: object
    reports: list
    notes: tuple = ()
    summary: dict = field(default_factory=dict)


# -- problem builders ------------------------------------------------------

def _unit(delta):
    return DomainSpec(Interval(0.0, 1.0), delta)


def _sinusoid(eps):
    return ProblemSpec(_unit(0.2), ConstantKernel(0.2), PiecewiseSinusoid(eps),
                       PolynomialPair(CUBIC, QUARTIC))


def _sigmoid(eps):
    return ProblemSpec(_unit(0.2), ConstantKernel(0.2), Sigmoid(eps),
                       PolynomialPair((-0.5, 1.0), (0.125, -0.5, 0.5)))


def _collar(eps):
    return ProblemSpec(_unit(0.1), ConstantKernel(0.1), TWELVE_X2, PiecewiseJump(eps))


def _singular(eps):
    kernel = ConstantKernel(0.2) if eps == 0 else PowerLawKernel(0.2, eps)
    return ProblemSpec(_unit(0.2), kernel, TWELVE_X2, QUARTIC_COLLAR)


def _heterogeneous(eps):
    return ProblemSpec(_unit(0.2), HeterogeneousExpKernel(0.2, eps), TWELVE_X2, QUARTIC_COLLAR)


def _bond_removal(eps):
    base = ConstantKernel(0.2)
    kernel = base if eps == 0 else BondRemovalKernel(base, Interval(0.5 - eps, 0.5 + eps))
    return ProblemSpec(_unit(0.2), kernel, Polynomial((0.0,)), LinearCollar(1.0, 0.0))


def _nonlinear_eta(eta):
    return ProblemSpec(_unit(0.2), ConstantKernel(0.2), NonlinearArctan(eta, 1.0), ZeroCollar())


def _nonlinear_theta(theta):
    return ProblemSpec(_unit(0.2), ConstantKernel(0.2), NonlinearArctan(1.0 / 9, theta), ZeroCollar())


def _exp_eta(eta):
    return ProblemSpec(_unit(0.1), TruncatedGaussianKernel(0.1), NonlinearArctan(eta, 1.0), ZeroCollar())


def _exp_theta(theta):
    return ProblemSpec(_unit(0.1), TruncatedGaussianKernel(0.1), NonlinearArctan(1.0 / 9, theta), ZeroCollar())


def _delta_sweep(delta):
    return ProblemSpec(_unit(delta), ConstantKernel(delta), TWELVE_X2, PiecewiseJump(0.0))


PRESETS = {p.id: p for p in (
    ExperimentPreset("sinusoid", "eps", "ε", (1.0, 2.0, 3.0, 4.0), 0.0, _sinusoid, "forcing",
                     "constant kernel, delta=0.2, f = 6x + 4 sin(20 eps x) on x<=0.5 and 12x^2 beyond, "
                     "g = x^3 (left) / x^4 (right)"),
    ExperimentPreset("sigmoid", "eps", "ε", (0.1, 0.2, 0.3, 0.4), 0.0, _sigmoid, "forcing",
                     "constant kernel, delta=0.2, logistic forcing of width eps against the unit step, "
                     "g = x - 0.5 (left) / (x - 0.5)^2 / 2 (right)",
                     ("grid runs 0.1 to 0.4 in steps of 0.1",)),
    ExperimentPreset("collar", "eps", "ε", (0.075, 0.05, 0.025, 0.0), 0.1, _collar, "collar",
                     "constant kernel, delta=0.1, f = 12x^2, g = 1 on (-delta, -eps) and x^4 elsewhere",
                     ("the table's solution difference is measured over Omega u Gamma; the report uses Omega",)),
    ExperimentPreset("kernel_singularity", "eps", "ε", (0.2, 0.4, 0.6, 0.8), 0.0, _singular, "kernel",
                     "power-law kernel (3-eps) delta^(eps-3) |x-y|^(-eps), delta=0.2, f = 12x^2, g = x^4",
                     ("normalized kernels are not square integrable for eps >= 1/2, so B is infinite there",)),
    ExperimentPreset("heterogeneous_x", "eps", "ε", (0.2, 0.3, 0.4, 0.5), 0.1, _heterogeneous, "kernel",
                     "kernel (4 - x) exp(eps x y) / delta^3, delta=0.2, f = 12x^2, g = x^4",
                     ("K column is ||f|| sup|lambda_eps - lambda_0|; ratio uses ||u_0||_Omega D + K",
                      "constant column is C_P/(1 - C_P asym) of the normalized kernel; inf when that is <= 0")),
    ExperimentPreset("bond_removal", "eps", "ε", (0.01, 0.02, 0.03, 0.04), 0.0, _bond_removal, "bond",
                     "constant kernel, delta=0.2, bonds to (0.5-eps, 0.5+eps) removed, f = 0, g = x",
                     ("D column is the L^2 norm of the normalized-kernel difference",
                      "table ratio uses ||u_eps|| over Omega; the report uses Omega u Gamma")),
    ExperimentPreset("nonlinear_eta", "eta", "η", (1.0, 2.0, 3.0, 4.0), 0.0, _nonlinear_eta, "nonlinear",
                     "constant kernel, delta=0.2, f = 2 (eta arctan u + 1) / (x^2 + 1), g = 0"),
    ExperimentPreset("nonlinear_theta", "theta", "θ", (4.5, 4.0, 3.5, 3.0), 5.0, _nonlinear_theta, "nonlinear",
                     "constant kernel, delta=0.2, f = 2 (arctan(u) / 9 + theta) / (x^2 + 1), g = 0"),
    ExperimentPreset("exp_kernel_eta", "eta", "η", (0.1, 0.2, 0.3, 0.4), 0.0, _exp_eta, "nonlinear",
                     "unit-mass truncated Gaussian kernel, delta=0.1, f = 2 (eta arctan u + 1) / (x^2 + 1), g = 0"),
    ExperimentPreset("exp_kernel_theta", "theta", "θ", (0.9, 0.8, 0.7, 0.6), 1.0, _exp_theta, "nonlinear",
                     "unit-mass truncated Gaussian kernel, delta=0.1, f = 2 (arctan(u) / 9 + theta) / (x^2 + 1), "
                     "g = 0"),
    ExperimentPreset("delta_sweep", "delta", "δ", tuple(round(0.15 + 0.01 * i, 2) for i in range(1, 11)), 0.15,
                     _delta_sweep, "delta",
                     "constant kernel 3 delta^-3, f = 12x^2, g = 1 on the left collar and x^4 on the right; "
                     "consecutive horizons are compared",
                     ("fitted slope C is the least-squares slope through the origin of ||du|| against |d delta|",)),
)}


def list_presets():
    return sorted(PRESETS)


def get_preset(preset_id):
    try:
        return PRESETS[preset_id]
    except KeyError:
        raise ConfigError(f"unknown preset '{preset_id}'; choose from {', '.join(list_presets())}",
                          path="preset") from None


# -- running ---------------------------------------------------------------

def _check_overrides(overrides):
    overrides = dict(overrides or {})
    for key in overrides:
        if key not in TUNABLE:
            raise ConfigError(f"override '{key}' is not tunable; allowed: {', '.join(TUNABLE)}",
                              path=f"overrides.{key}")
    if "h" in overrides and not (isinstance(overrides["h"], (int, float)) and overrides["h"] > 0):
        raise ConfigError("h must be a positive number", path="overrides.h")
    if "grid" in overrides:
        grid = overrides["grid"]
        if isinstance(grid, (int, float)):
            grid = [grid]
        try:
            overrides["grid"] = tuple(float(v) for v in grid)
        except (TypeError, ValueError):
            raise ConfigError("grid must be a list of numbers", path="overrides.grid") from None
        if not overrides["grid"]:
            raise ConfigError("grid must not be empty", path="overrides.grid")
    return overrides


class _Solver:
    """Caches meshes, operators and fields so each problem is solved once."""

    def __init__(self, h, tol, max_iter):
        self.h, self.tol, self.max_iter = h, tol, max_iter
        self.meshes, self.operators, self.fields = {}, {}, {}

    def mesh(self, domain):
        key = repr(domain)
        if key not in self.meshes:
            self.meshes[key] = build_mesh(domain, self.h)
        return self.meshes[key]

    def operator(self, problem):
        key = (repr(problem.domain), repr(problem.kernel.to_dict()))
        if key not in self.operators:
            self.operators[key] = assemble(problem.kernel, self.mesh(problem.domain))
        return self.operators[key]

    def solve(self, problem):
        key = (repr(problem.domain), repr(problem.kernel.to_dict()), repr(problem.forcing),
               repr(problem.collar))
        if key not in self.fields:
            mesh, op = self.mesh(problem.domain), self.operator(problem)
            if problem.forcing.depends_on_u:
                res = solve_semilinear(problem, mesh, tol=self.tol, max_iter=self.max_iter,
                                       operator=op, warn=False)
                self.fields[key] = res.field
            else:
                self.fields[key] = solve_linear(problem, mesh, op)
        return self.fields[key]


def run_preset(preset_id, overrides=None):
    """Solve the baseline and every grid point of a preset and audit each pair."""
    preset = get_preset(preset_id)
    overrides = _check_overrides(overrides)
    grid = overrides.get("grid", preset.grid)
    solver = _Solver(overrides.get("h", DEFAULT_H), overrides.get("tol", 1e-10), overrides.get("max_iter", 500))
    runner = _RUNNERS[preset.kind]
    base_problem = preset.problem(preset.baseline)
    u_base = solver.solve(base_problem)
    rows, reports, fields = [], [], {}
    previous = (preset.baseline, base_problem, u_base)
    for value in grid:
        try:
            problem = preset.problem(value)
            u = solver.solve(problem)
            if preset.kind == "delta":
                row, reps = runner(preset, previous, (value, problem, u), solver)
                previous = (value, problem, u)
            else:
                row, reps = runner(preset, (preset.baseline, base_problem, u_base), (value, problem, u), solver)
        except NonlocStabError as exc:
            exc.args = (f"preset {preset.id}, {preset.parameter}={value}: {exc.args[0] if exc.args else exc}",)
            raise
        fields[float(value)] = u
        rows.append(row)
        reports.extend((float(value), r) for r in reps)
    summary = _summarize(preset, rows)
    mesh = solver.mesh(base_problem.domain).describe()
    return ExperimentResult(preset, overrides, mesh, _COLUMNS[preset.kind](preset), rows, fields,
                            u_base, reports, preset.notes, summary)


def _report_cols(report):
    return {"constant": report.constant, "satisfied": report.satisfied, "status": report.status,
            "report_ratio": report.ratio}


def _run_forcing(preset, base, pert, solver):
    (_, p1, u1), (value, p2, u2) = base, pert
    mesh = solver.mesh(p1.domain)
    rep = audit_forcing(p1, p2, mesh, include_constants=True, operator=solver.operator(p1), fields=(u1, u2))
    energy = rep[0]
    row = {preset.parameter: value, "df": energy.rhs_norm, "du": energy.lhs_norm, "ratio": energy.ratio}
    row.update(_report_cols(energy))
    return row, rep


def _run_collar(preset, base, pert, solver):
    (_, p1, u1), (value, p2, u2) = base, pert
    mesh = solver.mesh(p1.domain)
    collar, oper = audit_collar(p1, p2, mesh, operator=solver.operator(p1), fields=(u1, u2))
    du_all = field_norm(u2 - u1, "all")
    row = {preset.parameter: value, "dg": collar.rhs_norm, "du": du_all,
           "ratio": du_all / collar.rhs_norm if collar.rhs_norm else 0.0, "du_omega": collar.lhs_norm}
    row.update(_report_cols(collar))
    return row, [collar, oper]


def _run_kernel(preset, base, pert, solver):
    (_, p1, u1), (value, p2, u2) = base, pert
    mesh = solver.mesh(p1.domain)
    kd = kernel_difference(p1.kernel, p2.kernel, p1.domain, mesh.h)
    rep_b = audit_kernel(p1, p2, mesh, "b", fields=(u1, u2), difference=kd)
    rep_a = audit_kernel(p1, p2, mesh, "a", fields=(u1, u2), difference=kd)
    x = mesh.midpoints[mesh.omega_idx]
    f_norm = _values_norm(p1.forcing(x), mesh.h)
    du = field_norm(u2 - u1, "omega")
    row = {preset.parameter: value}
    if preset.id == "kernel_singularity":
        b = 2 * field_norm(u1, "omega") * kd.l2 + kd.k_sup * f_norm
        row.update({"c_p": kd.cp_raw, "B": b, "du": du, "ratio": du / b if b else 0.0})
    else:
        k_table = f_norm * kd.lambda_diff_sup
        b = field_norm(u1, "omega") * kd.l2 + k_table
        row.update({"table_constant": rep_b.constant, "D": kd.l2, "K_f": k_table, "du": du, "ratio": du / b if b else 0.0,
                    "D_l1": kd.l1_rows_sup})
    row.update(_report_cols(rep_b))
    row["slices_status"] = rep_a.status
    return row, [rep_b, rep_a]


def _run_bond(preset, base, pert, solver):
    (_, p1, u1), (value, p2, u2) = base, pert
    mesh = solver.mesh(p1.domain)
    du = field_norm(u2 - u1, "omega")
    u2_norm = field_norm(u2, "omega")
    if value == 0:
        row = {preset.parameter: value, "D": 0.0, "u2": u2_norm, "du": du, "ratio": 0.0,
               "constant": math.nan, "satisfied": True, "status": "baseline", "report_ratio": 0.0}
        return row, []
    rep = audit_bond_removal(p1, Interval(0.5 - value, 0.5 + value), mesh, fields=(u1, u2))
    d = rep.extras["dmu_l2"]
    row = {preset.parameter: value, "D": d, "u2": u2_norm, "du": du,
           "ratio": du ** 2 / (2 * u2_norm * d) if d else 0.0}
    row.update(_report_cols(rep))
    return row, [rep]


def _run_nonlinear(preset, base, pert, solver):
    (_, p1, u1), (value, p2, u2) = base, pert
    mesh = solver.mesh(p1.domain)
    rep = audit_nonlinear(p1, p2, mesh, operator=solver.operator(p1), fields=(u1, u2))
    df = forcing_sup_difference(p1.forcing, p2.forcing, p1.domain)
    du = field_norm(u2 - u1, "all")
    row = {preset.parameter: value, "df": df, "du": du, "ratio": du / df if df else 0.0}
    row.update(_report_cols(rep))
    return row, [rep]


def _run_delta(preset, base, pert, solver):
    (d1, _, u1), (d2, _, u2) = base, pert
    diff = u2.on("omega") - u1.on("omega")
    if diff.size != u1.on("omega").size:
        raise ConfigError("delta sweep needs the same Omega cells for every horizon")
    du = _values_norm(diff, solver.h)
    step = abs(d2 - d1)
    return {"delta1": d1, "delta2": d2, "ddelta": step, "du": du, "slope": du / step if step else 0.0}, []


_RUNNERS = {"forcing": _run_forcing, "collar": _run_collar, "kernel": _run_kernel, "bond": _run_bond,
            "nonlinear": _run_nonlinear, "delta": _run_delta}

_COLUMNS = {
    "forcing": lambda p: ((p.parameter, p.symbol), ("df", "‖Δf‖_L2"), ("du", "‖Δu‖_L2"), ("ratio", "ratio"),
                          ("constant", "constant"), ("satisfied", "satisfied"), ("status", "status")),
    "collar": lambda p: ((p.parameter, p.symbol), ("dg", "‖Δg‖_L2"), ("du", "‖Δu‖_L2"), ("ratio", "ratio"),
                         ("constant", "constant"), ("satisfied", "satisfied"), ("du_omega", "report_‖Δu‖_L2(Ω)"),
                         ("report_ratio", "report_ratio"), ("status", "status")),
    "kernel": lambda p: (((p.parameter, p.symbol), ("c_p", "C_P"), ("B", "B"), ("du", "‖Δu‖_L2"),
                          ("ratio", "ratio"))
                         if p.id == "kernel_singularity" else
                         ((p.parameter, p.symbol), ("table_constant", "C_P/(1-C_P‖μ_asym‖)"),
                          ("D", "‖μ̃_ε-μ̃_0‖"), ("K_f", "K‖f‖_L2"), ("du", "‖Δu‖_L2"), ("ratio", "ratio"),
                          ("D_l1", "report_D_L1"))) + (
        ("constant", "constant"), ("satisfied", "satisfied"), ("report_ratio", "report_ratio"),
        ("status", "status"), ("slices_status", "slices_status")),
    "bond": lambda p: ((p.parameter, p.symbol), ("D", "‖μ̃_ε-μ̃_0‖"), ("u2", "‖u_ε‖_L2(Ω)"),
                       ("du", "‖Δu‖_L2"), ("ratio", "ratio"), ("constant", "constant"), ("satisfied", "satisfied"),
                       ("report_ratio", "report_ratio"), ("status", "status")),
    "nonlinear": lambda p: ((p.parameter, p.symbol), ("df", "‖Δf‖_Linf"), ("du", "‖Δu‖_L2"), ("ratio", "ratio"),
                            ("constant", "constant"), ("satisfied", "satisfied"), ("status", "status")),
    "delta": lambda p: (("delta1", "δ1"), ("delta2", "δ2"), ("ddelta", "|Δδ|"), ("du", "‖Δu‖_L2"),
                        ("slope", "slope")),
}


def fit_slope(steps, diffs):
    """Least-squares slope through the origin of diffs against steps."""
    steps, diffs = np.asarray(steps, float), np.asarray(diffs, float)
    denom = float(np.dot(steps, steps))
    return float(np.dot(steps, diffs) / denom) if denom > 0 else 0.0


def _summarize(preset, rows):
    if preset.kind != "delta" or not rows:
        return {}
    slope = fit_slope([r["ddelta"] for r in rows], [r["du"] for r in rows])
    rel = [abs(r["slope"] / slope - 1) if slope else 0.0 for r in rows]
    return {"fitted_slope": slope, "max_relative_deviation": max(rel), "stable_within_20pct": max(rel) <= 0.2}


# -- emission --------------------------------------------------------------

def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, str):
        return value
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(value, ".10g")


def _param_tag(name, value):
    return f"{name}={format(float(value), '.10g')}"


def emit_tables(result, out_dir):
    """Write the table CSV, report CSV, profile CSVs and a manifest; return the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    pid = result.preset.id
    written = []

    table = os.path.join(out_dir, f"{pid}_table.csv")
    with open(table, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([header for _, header in result.columns])
        for row in result.rows:
            writer.writerow([_fmt(row.get(key, "")) for key, _ in result.columns])
        for note in result.notes:
            fh.write(f"# {note}\n")
        for key, value in sorted(result.summary.items()):
            fh.write(f"# {key} = {_fmt(value)}\n")
    written.append(table)

    reports = os.path.join(out_dir, f"{pid}_reports.csv")
    with open(reports, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([result.preset.parameter, "report", "lhs", "rhs", "ratio", "constant", "satisfied", "status"])
        for value, rep in result.reports:
            writer.writerow([_fmt(value), rep.theorem_id, _fmt(rep.lhs_norm), _fmt(rep.rhs_norm), _fmt(rep.ratio),
                             _fmt(rep.constant), _fmt(rep.satisfied), rep.status])
    written.append(reports)

    profiles = [("baseline", result.baseline_field)]
    profiles += [(_param_tag(result.preset.parameter, v), f) for v, f in result.fields.items()]
    for tag, fld in profiles:
        path = os.path.join(out_dir, f"{pid}_profile_{tag}.csv")
        fld.to_csv(path)
        written.append(path)

    manifest = {
        "preset": pid,
        "description": result.preset.description,
        "parameter": result.preset.parameter,
        "baseline": result.preset.baseline,
        "grid": [float(v) for v in result.fields],
        "overrides": {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(result.overrides.items())},
        "mesh": result.mesh,
        "notes": list(result.notes),
        "summary": result.summary,
        "software": {"package": "nonlocstab", "version": __version__},
        "files": {os.path.basename(p): _sha256(p) for p in written},
    }
    path = os.path.join(out_dir, f"{pid}_manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")
    written.append(path)
    return written


def _sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def read_table(path):
    """Read an emitted table CSV back as (header, rows of strings), skipping note lines."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, [r for r in reader]
