"""Command-line front end: ``defdom <command> --config <file> --out <dir>``.

Exit status: 0 on success, 1 on a numerical failure, 2 on a usage or
configuration error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from .errors import ConfigurationError, DefdomError, UsageError

COMMANDS = ("selftest", "poisson-demo", "bubble", "sweep")
CASE_KEYS = ("Ca", "V_B", "L", "eps", "mesh_h")
EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("defdom")


@dataclass
class RunConfig:
    command: str
    output_dir: Path
    case: object = None
    options: dict = field(default_factory=dict)
    seed: int = 0
    jobs: int = 1
    verbosity: int = 0


def parse_number(value, key):
    """Numbers may be written as TOML floats or as strings such as ``"pi*0.2**2"``."""
    if isinstance(value, bool):
        raise ConfigurationError(f"{key} must be a number")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        allowed = set("0123456789.+-*/()eEpi ")
        if not set(value) <= allowed:
            raise ConfigurationError(f"{key}: cannot parse {value!r}")
        try:
            return float(eval(value, {"__builtins__": {}}, {"pi": math.pi}))  # noqa: S307
        except Exception as exc:
            raise ConfigurationError(f"{key}: cannot parse {value!r}") from exc
    raise ConfigurationError(f"{key} must be a number")


def load_config_file(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file {path} not found") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigurationError(f"config file {path}: {exc}") from exc


def build_case(doc: dict, require=("Ca", "V_B")):
    from .bubble import CaseConfig

    missing = [k for k in require if k not in doc]
    if missing:
        raise ConfigurationError(f"missing required key(s): {', '.join(missing)}")
    vals = {k: parse_number(doc[k], k) for k in CASE_KEYS if k in doc}
    kw = dict(Ca=vals["Ca"], V_B=vals["V_B"])
    if "L" in vals:
        kw["L"] = vals["L"]
    if "eps" in vals:
        kw["epsilon"] = vals["eps"]
    if "mesh_h" in vals:
        kw["mesh_h"] = vals["mesh_h"]
    return CaseConfig(**kw)


def make_run_config(args) -> RunConfig:
    doc = load_config_file(args.config) if args.config else {}
    if args.command in ("bubble", "sweep") and not args.config:
        raise ConfigurationError(f"{args.command} needs --config")
    case = build_case(doc) if args.command in ("bubble", "sweep") else None
    options = {k: v for k, v in doc.items() if k not in CASE_KEYS}
    if args.jobs < 1:
        raise ConfigurationError("--jobs must be at least 1")
    return RunConfig(args.command, Path(args.out), case, options, args.seed, args.jobs, args.verbose)


# ------------------------------------------------------------- commands

def cmd_selftest(rc: RunConfig) -> int:
    from .selftest import run_selftests

    checks = run_selftests(rc.seed)
    lines = [c.line() for c in checks]
    rc.output_dir.mkdir(parents=True, exist_ok=True)
    (rc.output_dir / "selftest.txt").write_text("\n".join(lines) + "\n")
    for ln in lines:
        print(ln)
    return EXIT_OK if all(c.passed for c in checks) else EXIT_NUMERIC


def cmd_poisson_demo(rc: RunConfig) -> int:
    from .dbp import demo_problem, linearize_poisson_demo
    from .mesh import build_disk_mesh

    o = rc.options
    h = parse_number(o.get("mesh_h", 0.05), "mesh_h")
    c = parse_number(o.get("c", -1.0), "c")
    deltas = [parse_number(d, "deltas") for d in o.get("deltas", [1e-2, 5e-3, 2.5e-3])]
    if not deltas:
        raise ConfigurationError("deltas must not be empty")
    bc, rho1 = demo_problem(c)
    res = linearize_poisson_demo(bc, build_disk_mesh(1.0, h), deltas, rho1)
    slopes = [float("nan")] + list(res.slopes())
    rc.output_dir.mkdir(parents=True, exist_ok=True)
    path = rc.output_dir / "poisson_demo.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["delta", "rel_error", "slope"])
        for (d, e), s in zip(res.table, slopes):
            w.writerow([repr(d), repr(e), repr(float(s))])
    print(path.read_text(), end="")
    return EXIT_OK


def cmd_bubble(rc: RunConfig) -> int:
    from .bubble import SensitivityRow, export_results, solve_first, solve_zeroth

    z = solve_zeroth(rc.case)
    first = solve_first(z) if rc.options.get("first", True) else None
    row = SensitivityRow(rc.case.epsilon, z.f0, first.f1 if first else float("nan"),
                         float("nan"), z.V0, z.dp0, z.pG0)
    files = export_results([row], rc.output_dir, [(z, first)])
    q = z.quality()
    print(f"f0={z.f0:.10g} f1={row.f1:.10g} V0={z.V0:.10g} dp0={z.dp0:.10g} pG0={z.pG0:.10g}")
    print(f"bubble area error {z.bubble_area() - rc.case.V_B:.3e}; "
          f"boundary spacing cv {q.boundary_spacing_cv:.3e}")
    print(f"wrote {files['csv']} and {len(files['vtk'])} VTK file(s)")
    return EXIT_OK


def cmd_sweep(rc: RunConfig) -> int:
    from .bubble import sensitivity_validation, write_csv

    o = rc.options
    grid = [parse_number(e, "eps_grid") for e in o.get("eps_grid", [0.0, 0.05, 0.10, 0.15])]
    delta = parse_number(o.get("delta", 1e-3), "delta")
    if delta <= 0:
        raise ConfigurationError("delta must be positive")
    rep = sensitivity_validation(rc.case, delta, grid, jobs=rc.jobs)
    path = write_csv(rep.rows, rc.output_dir / "sweep.csv")
    for r in rep.rows:
        status = "ok" if r.ok else f"FAILED ({r.error})"
        print(f"eps={r.eps:g} f0={r.f0:.8g} f1={r.f1:.8g} dfd_eps={r.dfd_eps:.8g} "
              f"mismatch={r.mismatch:.3e} {status}")
    print(f"wrote {path}")
    return EXIT_OK if rep.complete else EXIT_NUMERIC


HANDLERS = {"selftest": cmd_selftest, "poisson-demo": cmd_poisson_demo,
            "bubble": cmd_bubble, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="defdom", description="Deformable-domain finite elements.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="TOML file with Ca, V_B, L, eps, mesh_h and command options")
    p.add_argument("--out", default="defdom-out", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel sub-solves for sweep")
    p.add_argument("--seed", type=int, default=0, help="seed for randomised checks")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def run(rc: RunConfig) -> int:
    return HANDLERS[rc.command](rc)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    level = logging.INFO if args.verbose else logging.WARNING
    if args.verbose > 1:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    # Newton traces are the default level-1 output
    logging.getLogger("defdom").setLevel(level)
    for noisy in ("jax", "absl"):
        logging.getLogger(noisy).setLevel(logging.WARNING)
    try:
        rc = make_run_config(args)
        return run(rc)
    except (ConfigurationError, UsageError) as exc:
        print(f"defdom: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DefdomError as exc:
        print(f"defdom: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
