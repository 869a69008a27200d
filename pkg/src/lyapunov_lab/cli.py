"""Command line entry point.

Exit codes: 0 all pass, 1 a verdict or check failed, 2 configuration error,
3 solver failure.  ``LAB_WORKERS`` sets the worker count for ``suite`` and
``fuzz``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import yaml

from . import __version__
from .errors import ConfigError, DomainError, LabError
from .harmonic import StripConfig
from .inequalities import (FUZZ_TARGETS, RandomFieldSpec, check_bvy_coercivity, entropy_constants,
                           fuzz, gamma_d, solve_c_d)
from .spectral import TorusGrid

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

_FUZZ_KEYS = {"target", "dim", "n", "trials", "seed", "mu", "spectral_decay", "amplitude",
              "offset", "kcut", "max_slope", "m_vert"}


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("LAB_WORKERS", "1")))
    except ValueError:
        return 1


def _err(msg: str) -> None:
    print(f"lyapunov-lab: {msg}", file=sys.stderr)


def cmd_run(args) -> int:
    from .config import parse_config
    from .report import run_experiment

    cfg = parse_config(Path(args.config).read_text())
    out = args.out if args.out is not None else (cfg.output_dir or Path("runs") / cfg.name)
    report = run_experiment(cfg, out)
    print(json.dumps({"name": report.name, "all_pass": report.all_pass, "error": report.error,
                      "verdicts": {k: (v["status"] if v else None) for k, v in report.verdicts.items()},
                      "checks": {k: c["passed"] for k, c in report.checks.items()},
                      "output_dir": str(out)}, indent=2))
    return report.exit_code


def cmd_suite(args) -> int:
    from .suite import format_table, run_suite

    reports = run_suite(args.filter, args.out, _workers())
    if not reports:
        _err(f"no suite entry matches {args.filter!r}")
        return EXIT_CONFIG
    print(format_table(reports))
    if any(r.error for r in reports):
        return EXIT_SOLVER
    return EXIT_OK if all(r.all_pass for r in reports) else EXIT_VIOLATION


def _fuzz_spec(text: str) -> dict:
    spec = yaml.safe_load(text)
    if not isinstance(spec, dict):
        raise ConfigError("fuzz spec must be a mapping")
    unknown = set(spec) - _FUZZ_KEYS
    if unknown:
        raise ConfigError(f"unknown fuzz spec keys: {sorted(unknown)}")
    if spec.get("target") not in FUZZ_TARGETS:
        raise ConfigError(f"target must be one of {FUZZ_TARGETS}")
    return spec


def cmd_fuzz(args) -> int:
    spec = _fuzz_spec(Path(args.spec).read_text())
    try:
        grid = TorusGrid(int(spec.get("dim", 1)), int(spec.get("n", 64)))
        field_spec = RandomFieldSpec(
            grid, float(spec.get("spectral_decay", 2.5)), float(spec.get("amplitude", 1.0)),
            float(spec.get("offset", 0.0)), int(spec.get("seed", 0)),
            None if spec.get("kcut") is None else int(spec["kcut"]),
            None if spec.get("max_slope") is None else float(spec["max_slope"]))
        strip = StripConfig(m_vert=int(spec.get("m_vert", 48)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"fuzz spec: {exc}") from None
    mus = spec.get("mu", -1.0)
    mus = mus if isinstance(mus, list) else [mus]
    trials = int(spec.get("trials", 100))
    try:
        reports = [fuzz(field_spec, spec["target"], trials, float(mu), strip, _workers())
                   for mu in (mus if spec["target"] == "sobolev" else [-1.0])]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    print(json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True))
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VIOLATION


def cmd_constants(args) -> int:
    out = {}
    if args.d is not None:
        c = solve_c_d(args.d)
        out["c_d"] = {"d": args.d, "value": c, "gamma_minus_half": gamma_d(c, args.d) - 0.5}
    if args.m is not None:
        ec = entropy_constants(args.m)
        out["entropy"] = {"m": args.m, "c_thinfilm": ec.c_thinfilm, "c_boussinesq": ec.c_boussinesq}
    if args.alpha is not None:
        out["bvy_coercivity"] = {"alpha": args.alpha, "value": check_bvy_coercivity(args.alpha)}
    print(json.dumps(out, indent=2))
    return EXIT_OK


def cmd_verdict(args) -> int:
    from .report import VIOLATED, verdicts_from_csv

    path = Path(args.series)
    dt, convex = args.dt, list(args.convex or [])
    report_path = path.with_name("report.json")
    if report_path.exists() and (dt is None or not args.convex):
        rep = json.loads(report_path.read_text())
        dt = rep.get("dt_effective") if dt is None else dt
        convex = convex or rep.get("config", {}).get("convex", [])
    if dt is None:
        raise ConfigError("--dt is required when no report.json sits next to the series")
    verdicts = verdicts_from_csv(path, float(dt), convex)
    print(json.dumps({k: v.to_dict() for k, v in verdicts.items()}, indent=2, sort_keys=True))
    return EXIT_VIOLATION if any(v.status == VIOLATED for v in verdicts.values()) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lyapunov-lab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment from a YAML config")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: output_dir or runs/<name>)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("suite", help="run the built-in monotonicity matrix")
    s.add_argument("--filter", help="substring of experiment names to keep")
    s.add_argument("--out", help="write per-experiment outputs under this directory")
    s.set_defaults(func=cmd_suite)

    f = sub.add_parser("fuzz", help="randomized inequality checks from a YAML spec")
    f.add_argument("spec")
    f.set_defaults(func=cmd_fuzz)

    c = sub.add_parser("constants", help="print the explicit constants")
    c.add_argument("--d", type=int, help="dimension for the smallness constant c_d")
    c.add_argument("--m", type=float, help="exponent for the entropy constants")
    c.add_argument("--alpha", type=float, help="exponent for the coercivity constant")
    c.set_defaults(func=cmd_constants)

    v = sub.add_parser("verdict", help="recompute verdicts from a series.csv")
    v.add_argument("series")
    v.add_argument("--dt", type=float, help="time step (default: from report.json)")
    v.add_argument("--convex", nargs="*", help="monitors that must decay convexly")
    v.set_defaults(func=cmd_verdict)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "constants" and args.d is None and args.m is None and args.alpha is None:
        parser.error("constants needs at least one of --d, --m, --alpha")
    try:
        return args.func(args)
    except (ConfigError, DomainError, OSError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except LabError as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
