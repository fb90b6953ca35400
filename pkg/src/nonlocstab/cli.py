"""Command-line front end.

    nonloc-stab <command> --config <file> --out <dir> [--h <real>] [--quiet]

Commands: ``solve``, ``audit``, ``preset`` and ``identities``. The config
is a YAML mapping; every key is checked before any numerical work starts.
Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 I/O failure.
"""
import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

import yaml

from . import __version__
from .discretize import DomainSpec, build_mesh
from .errors import ConfigError, NonlocStabError, NumericError
from .kernels import Interval, PowerLawKernel, kernel_from_dict
from .solve import (ConstantCollar, LinearCollar, NonlinearArctan, PiecewiseJump, PiecewiseSinusoid,
                    Polynomial, PolynomialPair, ProblemSpec, Sigmoid, Zero, ZeroCollar, solve_linear,
                    solve_semilinear)

COMMANDS = ("solve", "audit", "preset", "identities")
AUDITS = ("forcing", "collar", "kernel", "bond_removal", "nonlinear")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3
LOCK_NAME = ".nonloc-stab.lock"

_TOP_KEYS = {
    "solve": ({"problem"}, {"mesh", "tolerances"}),
    "audit": ({"problem", "audit"}, {"perturbed", "mesh", "tolerances", "variant", "excised", "mode",
                                     "include_constants"}),
    "preset": ({"preset"}, {"overrides"}),
    "identities": ({"problem"}, {"mesh", "n_pairs", "seed"}),
}


@dataclass
class RunConfig:
    """Validated configuration for one command."""

    command: str
    out_dir: str
    h: float = 1.0 / 200
    problem: Optional[ProblemSpec] = None
    perturbed: Optional[ProblemSpec] = None
    audit: Optional[str] = None
    variant: str = "b"
    excised: Optional[Interval] = None
    mode: str = "all"
    include_constants: bool = False
    preset: Optional[str] = None
    overrides: dict = field(default_factory=dict)
    tol: float = 1e-10
    max_iter: int = 500
    n_pairs: int = 100
    seed: int = 0
    raw: dict = field(default_factory=dict)


# -- YAML loading ----------------------------------------------------------

class _StrictLoader(yaml.SafeLoader):
    """Safe loader that rejects duplicate mapping keys."""


def _construct_mapping(loader, node, deep=False):
    seen = {}
    for key_node, _ in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in seen:
            mark = key_node.start_mark
            raise ConfigError(f"duplicate key '{key}'", line=mark.line + 1, column=mark.column + 1)
        seen[key] = True
    return yaml.SafeLoader.construct_mapping(loader, node, deep)


_StrictLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def load_yaml(text):
    try:
        data = yaml.load(text, Loader=_StrictLoader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark else None
        col = mark.column + 1 if mark else None
        raise ConfigError(f"malformed config: {exc.problem or exc}", line=line, column=col) from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at the top level")
    return data


# -- validation helpers ----------------------------------------------------

def _check_keys(node, path, required, optional):
    if not isinstance(node, dict):
        raise ConfigError("expected a mapping", path=path or None)
    for key in node:
        if key not in required and key not in optional:
            allowed = ", ".join(sorted(set(required) | set(optional)))
            raise ConfigError(f"unknown key '{key}' (allowed: {allowed})", path=_join(path, key))
    for key in sorted(required):
        if key not in node:
            raise ConfigError(f"missing key '{key}'", path=_join(path, key))


def _join(path, key):
    return f"{path}.{key}" if path else str(key)


def _number(node, key, path, positive=False, default=None):
    if key not in node:
        if default is None:
            raise ConfigError(f"missing key '{key}'", path=_join(path, key))
        return default
    value = node[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"'{key}' must be a finite number", path=_join(path, key))
    if positive and value <= 0:
        raise ConfigError(f"'{key}' must be positive", path=_join(path, key))
    return float(value)


def _integer(node, key, path, default):
    value = node.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
        raise ConfigError(f"'{key}' must be a positive integer", path=_join(path, key))
    return value


def _number_list(node, key, path):
    value = node.get(key)
    if not isinstance(value, list) or not value:
        raise ConfigError(f"'{key}' must be a non-empty list of numbers", path=_join(path, key))
    for i, v in enumerate(value):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError("entries must be numbers", path=f"{_join(path, key)}[{i}]")
    return tuple(float(v) for v in value)


def _domain(node, path):
    _check_keys(node, path, {"delta"}, {"omega"})
    delta = _number(node, "delta", path, positive=True)
    omega = node.get("omega", [0.0, 1.0])
    if not (isinstance(omega, list) and len(omega) == 2
            and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in omega)
            and omega[1] > omega[0]):
        raise ConfigError("omega must be an interval [lo, hi] with lo < hi", path=_join(path, "omega"))
    return DomainSpec(Interval(float(omega[0]), float(omega[1])), delta)


def _kernel(node, path, delta):
    if not isinstance(node, dict):
        raise ConfigError("kernel must be a mapping", path=path)
    spec = dict(node)
    if "delta" in spec and spec["delta"] != delta:
        raise ConfigError(f"kernel delta {spec['delta']} differs from domain delta {delta}",
                          path=_join(path, "delta"))
    spec["delta"] = delta
    if spec.get("family") == "bond_removal" and isinstance(spec.get("base"), dict):
        spec["base"] = dict(spec["base"], delta=delta)
    try:
        return kernel_from_dict(spec, path)
    except ConfigError as exc:
        # constructors report paths relative to the kernel block
        if exc.path and not exc.path.startswith(path):
            rel = exc.path.split(".", 1)[1] if exc.path.startswith("kernel.") else exc.path
            raise type(exc)(str(exc).rsplit(" (at", 1)[0], path=_join(path, rel)) from None
        raise


_FORCING = {
    "polynomial": ({"coeffs"}, set()),
    "piecewise_sinusoid": ({"eps"}, set()),
    "sigmoid": ({"eps"}, set()),
    "zero": (set(), set()),
    "nonlinear_arctan": ({"eta", "theta"}, set()),
}

_COLLAR = {
    "polynomial_pair": ({"left", "right"}, {"split"}),
    "piecewise_jump": ({"eps"}, set()),
    "zero": (set(), set()),
    "linear": (set(), {"slope", "intercept"}),
    "constant": ({"value"}, set()),
}


def _variant(node, path, table):
    if not isinstance(node, dict):
        raise ConfigError("expected a mapping with a 'variant' key", path=path)
    name = node.get("variant")
    if name not in table:
        raise ConfigError(f"unknown variant '{name}' (known: {', '.join(sorted(table))})",
                          path=_join(path, "variant"))
    required, optional = table[name]
    _check_keys(node, path, required | {"variant"}, optional)
    return name


def _forcing(node, path):
    name = _variant(node, path, _FORCING)
    if name == "polynomial":
        return Polynomial(_number_list(node, "coeffs", path))
    if name == "piecewise_sinusoid":
        return PiecewiseSinusoid(_number(node, "eps", path))
    if name == "sigmoid":
        eps = _number(node, "eps", path)
        if eps < 0:
            raise ConfigError("sigmoid width eps must be >= 0", path=_join(path, "eps"))
        return Sigmoid(eps)
    if name == "zero":
        return Zero()
    return NonlinearArctan(_number(node, "eta", path), _number(node, "theta", path))


def _collar(node, path):
    name = _variant(node, path, _COLLAR)
    if name == "polynomial_pair":
        return PolynomialPair(_number_list(node, "left", path), _number_list(node, "right", path),
                              _number(node, "split", path, default=0.5) if "split" in node else 0.5)
    if name == "piecewise_jump":
        eps = _number(node, "eps", path)
        if eps < 0:
            raise ConfigError("eps must be >= 0", path=_join(path, "eps"))
        return PiecewiseJump(eps)
    if name == "zero":
        return ZeroCollar()
    if name == "linear":
        return LinearCollar(_number(node, "slope", path, default=1.0) if "slope" in node else 1.0,
                            _number(node, "intercept", path) if "intercept" in node else 0.0)
    return ConstantCollar(_number(node, "value", path))


def _problem(node, path):
    _check_keys(node, path, {"domain", "kernel", "forcing", "collar"}, set())
    domain = _domain(node["domain"], _join(path, "domain"))
    kernel = _kernel(node["kernel"], _join(path, "kernel"), domain.delta)
    return ProblemSpec(domain, kernel, _forcing(node["forcing"], _join(path, "forcing")),
                       _collar(node["collar"], _join(path, "collar")))


def _kernel_problem(node, path):
    """Domain and kernel only, for the identities command."""
    _check_keys(node, path, {"domain", "kernel"}, {"forcing", "collar"})
    domain = _domain(node["domain"], _join(path, "domain"))
    return ProblemSpec(domain, _kernel(node["kernel"], _join(path, "kernel"), domain.delta), Zero(), ZeroCollar())


def _perturbed(node, base, path):
    _check_keys(node, path, set(), {"kernel", "forcing", "collar"})
    changes = {}
    if "kernel" in node:
        changes["kernel"] = _kernel(node["kernel"], _join(path, "kernel"), base.domain.delta)
    if "forcing" in node:
        changes["forcing"] = _forcing(node["forcing"], _join(path, "forcing"))
    if "collar" in node:
        changes["collar"] = _collar(node["collar"], _join(path, "collar"))
    return base.replace(**changes)


def parse_config(text, command, out_dir, h=None):
    """Validate a YAML config for ``command`` and return a ``RunConfig``."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command '{command}' (known: {', '.join(COMMANDS)})", path="command")
    data = load_yaml(text)
    required, optional = _TOP_KEYS[command]
    _check_keys(data, "", required, optional)
    cfg = RunConfig(command=command, out_dir=out_dir, raw=data)

    if "mesh" in data:
        _check_keys(data["mesh"], "mesh", set(), {"h"})
        if "h" in data["mesh"]:
            cfg.h = _number(data["mesh"], "h", "mesh", positive=True)
    if h is not None:
        if not (math.isfinite(h) and h > 0):
            raise ConfigError("--h must be a positive number", path="--h")
        cfg.h = float(h)
    if "tolerances" in data:
        _check_keys(data["tolerances"], "tolerances", set(), {"tol", "max_iter"})
        cfg.tol = _number(data["tolerances"], "tol", "tolerances", positive=True, default=1e-10)
        cfg.max_iter = _integer(data["tolerances"], "max_iter", "tolerances", 500)

    if command == "preset":
        from .experiments import TUNABLE, get_preset
        if not isinstance(data["preset"], str):
            raise ConfigError("preset must be a name", path="preset")
        cfg.preset = get_preset(data["preset"]).id
        overrides = data.get("overrides") or {}
        _check_keys(overrides, "overrides", set(), set(TUNABLE))
        if "h" in overrides:
            _number(overrides, "h", "overrides", positive=True)
        if "grid" in overrides:
            _number_list(overrides, "grid", "overrides")
        if "tol" in overrides:
            _number(overrides, "tol", "overrides", positive=True)
        if "max_iter" in overrides:
            _integer(overrides, "max_iter", "overrides", 500)
        if h is not None:
            overrides = dict(overrides, h=float(h))
        cfg.overrides = dict(overrides)
        return cfg

    if command == "identities":
        cfg.problem = _kernel_problem(data["problem"], "problem")
        cfg.n_pairs = _integer(data, "n_pairs", "", 100)
        seed = data.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed must be a non-negative integer", path="seed")
        cfg.seed = seed
    else:
        cfg.problem = _problem(data["problem"], "problem")

    delta = cfg.problem.domain.delta
    if not cfg.h < delta:
        raise ConfigError(f"mesh width h={cfg.h} must be smaller than delta={delta}", path="mesh.h")

    if command == "audit":
        if data["audit"] not in AUDITS:
            raise ConfigError(f"unknown audit '{data['audit']}' (known: {', '.join(AUDITS)})", path="audit")
        cfg.audit = data["audit"]
        cfg.include_constants = bool(data.get("include_constants", False))
        if cfg.audit == "bond_removal":
            ex = data.get("excised")
            if not (isinstance(ex, list) and len(ex) == 2
                    and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in ex) and ex[1] > ex[0]):
                raise ConfigError("excised must be an interval [lo, hi] with lo < hi", path="excised")
            cfg.excised = Interval(float(ex[0]), float(ex[1]))
            if 2 * cfg.excised.length >= delta:
                raise ConfigError(f"excised interval too large: need 2|excised| < delta = {delta}",
                                  path="excised")
            cfg.mode = data.get("mode", "all")
            if cfg.mode not in ("all", "cross"):
                raise ConfigError("mode must be 'all' or 'cross'", path="mode")
        else:
            if "perturbed" not in data:
                raise ConfigError("missing key 'perturbed'", path="perturbed")
            cfg.perturbed = _perturbed(data["perturbed"], cfg.problem, "perturbed")
        if cfg.audit == "kernel":
            cfg.variant = data.get("variant", "b")
            if cfg.variant not in ("a", "b"):
                raise ConfigError("variant must be 'a' or 'b'", path="variant")
    return cfg


# -- dispatch --------------------------------------------------------------

class OutputLock:
    """Exclusive lock file inside the output directory."""

    def __init__(self, out_dir):
        self.path = os.path.join(out_dir, LOCK_NAME)

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise OSError(f"output directory is locked by another run ({self.path})") from None
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        return self

    def __exit__(self, *exc):
        try:
            os.remove(self.path)
        except FileNotFoundError:
            pass


def _write_manifest(cfg, files, extra=None):
    manifest = {"command": cfg.command, "config": cfg.raw, "h": cfg.h,
                "software": {"package": "nonlocstab", "version": __version__},
                "files": sorted(os.path.basename(f) for f in files)}
    manifest.update(extra or {})
    path = os.path.join(cfg.out_dir, f"{cfg.command}_manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, ensure_ascii=False, default=str)
        fh.write("\n")
    return path


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return format(float(v), ".10g")
    return str(v)


def _print_table(header, rows, out):
    cells = [[_fmt(c) for c in header]] + [[_fmt(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    for r in cells:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip(), file=out)


def _run_solve(cfg, out):
    mesh = build_mesh(cfg.problem.domain, cfg.h)
    extra = {"mesh": mesh.describe()}
    if cfg.problem.forcing.depends_on_u:
        res = solve_semilinear(cfg.problem, mesh, tol=cfg.tol, max_iter=cfg.max_iter)
        fld = res.field
        extra.update(iterations=res.iterations, method=res.method)
    else:
        fld = solve_linear(cfg.problem, mesh)
    path = os.path.join(cfg.out_dir, "solution.csv")
    fld.to_csv(path)
    from .stability import field_norm
    norms = {"u_l2_omega": field_norm(fld, "omega"), "u_l2_all": field_norm(fld, "all")}
    extra["norms"] = norms
    _print_table(("quantity", "value"), sorted(norms.items()), out)
    return [path, _write_manifest(cfg, [path], extra)]


def _run_audit(cfg, out):
    from . import stability
    mesh = build_mesh(cfg.problem.domain, cfg.h)
    p1, p2 = cfg.problem, cfg.perturbed
    if cfg.audit == "forcing":
        reports = stability.audit_forcing(p1, p2, mesh, include_constants=cfg.include_constants)
    elif cfg.audit == "collar":
        reports = stability.audit_collar(p1, p2, mesh)
    elif cfg.audit == "kernel":
        reports = stability.audit_kernel(p1, p2, mesh, cfg.variant)
    elif cfg.audit == "bond_removal":
        reports = stability.audit_bond_removal(p1, cfg.excised, mesh, cfg.mode)
    else:
        reports = stability.audit_nonlinear(p1, p2, mesh)
    if not isinstance(reports, (list, tuple)):
        reports = [reports]
    header = ("report", "lhs", "rhs", "ratio", "constant", "satisfied", "status")
    rows = [(r.theorem_id, r.lhs_norm, r.rhs_norm, r.ratio, r.constant, r.satisfied, r.status) for r in reports]
    path = os.path.join(cfg.out_dir, "audit_reports.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([[_fmt(c) for c in r] for r in rows])
    _print_table(header, rows, out)
    extra = {"reports": [r.to_dict() for r in reports], "mesh": mesh.describe()}
    return [path, _write_manifest(cfg, [path], extra)]


def _run_preset(cfg, out):
    from .experiments import emit_tables, run_preset
    result = run_preset(cfg.preset, cfg.overrides)
    files = emit_tables(result, cfg.out_dir)
    _print_table([h for _, h in result.columns],
                 [[row.get(k, "") for k, _ in result.columns] for row in result.rows], out)
    return files


def _run_identities(cfg, out):
    from .stability import identity_audit
    checks = identity_audit(cfg.problem.kernel, cfg.problem.domain, cfg.h, cfg.n_pairs, cfg.seed)
    header = ("check", "value", "tolerance", "result")
    rows = [(c.name, c.value, c.tolerance, "pass" if c.passed else "FAIL") for c in checks]
    path = os.path.join(cfg.out_dir, "identities.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([[_fmt(c) for c in r] for r in rows])
    _print_table(header, rows, out)
    files = [path, _write_manifest(cfg, [path], {"all_passed": all(c.passed for c in checks)})]
    if not all(c.passed for c in checks):
        failed = ", ".join(c.name for c in checks if not c.passed)
        raise NumericError(f"identity checks failed: {failed}")
    return files


_DISPATCH = {"solve": _run_solve, "audit": _run_audit, "preset": _run_preset, "identities": _run_identities}


def dispatch(cfg, out=None):
    """Run a validated config; returns the list of written files."""
    out = out if out is not None else sys.stdout
    os.makedirs(cfg.out_dir, exist_ok=True)
    with OutputLock(cfg.out_dir):
        return _DISPATCH[cfg.command](cfg, out)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser():
    parser = _Parser(prog="nonloc-stab", description="Nonlocal diffusion solver and stability auditor.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="YAML config file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--h", type=float, default=None, help="mesh width (overrides the config)")
    parser.add_argument("--quiet", action="store_true", help="suppress the printed table")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        cfg = parse_config(text, args.command, args.out, args.h)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = open(os.devnull, "w") if args.quiet else sys.stdout
    try:
        dispatch(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, NonlocStabError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    finally:
        if args.quiet:
            out.close()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
