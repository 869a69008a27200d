"""The built-in monotonicity matrix: one experiment per (flow, functional family).

Every entry runs on the one-dimensional torus with n = 128 up to T = 0.5.
``LAB_WORKERS`` sets the number of worker processes (default 1).
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import yaml

from .config import ExperimentConfig, parse_config
from .report import RunReport, run_experiment

_BASE = {"dim": 1, "n": 128, "t_end": 0.5}
_HS_DATA = {"preset": "fourier", "amplitude": 1.0, "modes": [[1, 0.05, 0.0], [2, 0.0, 0.02]]}
_HS_STRIP = {"m_vert": 32}
_FILM_DATA = {"preset": "fourier", "offset": 1.0, "modes": [[1, 0.2, 0.0], [2, 0.0, 0.1]]}


def _hele_shaw(g: float, mu: float) -> dict:
    return {"name": f"hele_shaw_g{g:g}_mu{mu:g}", "equation": "hele_shaw", "g": g, "mu": mu,
            "dt": 5e-3, "monitor_stride": 5, "monitors": ["L2", "Area"],
            "checks": ["max_principle"], "initial": _HS_DATA, "strip": _HS_STRIP}


SUITE: list[dict] = [
    *(_hele_shaw(g, mu) for g, mu in ((1, 0), (0, 1), (1, 1), (0.5, 0.5))),
    {"name": "hele_shaw_small_data", "equation": "hele_shaw", "g": 1, "mu": 0,
     "dt": 5e-3, "monitor_stride": 5, "monitors": ["J", "Area"], "convex": ["Area"],
     "checks": ["smallness", "max_principle"],
     "initial": {"preset": "cosine", "amplitude": 0.01}, "strip": _HS_STRIP},
    {"name": "thin_film_gravity", "equation": "thin_film_gravity", "g": 1, "mu": 1,
     "dt": 1e-3, "monitor_stride": 5, "monitors": ["L2", "WeightedGradient(0)"],
     "initial": _FILM_DATA},
    {"name": "boussinesq", "equation": "boussinesq", "dt": 1.25e-4, "monitor_stride": 20,
     "monitors": ["L2", "Boltzmann", "ArctanSlope"], "convex": ["L2", "Boltzmann"],
     "initial": {"preset": "fourier", "offset": 2.0, "modes": [[1, 0.5, 0.0], [2, 0.0, 0.2]]}},
    {"name": "thin_film_power_mass", "equation": "thin_film", "dt": 1e-3, "monitor_stride": 5,
     "monitors": ["PowerMass(-0.5)", "PowerMass(0.25)", "PowerMass(1)"], "initial": _FILM_DATA},
    {"name": "thin_film_laugesen", "equation": "thin_film", "dt": 1e-3, "monitor_stride": 5,
     "monitors": ["Laugesen(0)", "Laugesen(0.25)", "Laugesen(0.5)"], "initial": _FILM_DATA},
    {"name": "mean_curvature", "equation": "mean_curvature", "dt": 4e-4, "monitor_stride": 10,
     "monitors": ["L2", "TimeDerivL2", "CurvatureEnergy", "ArctanSlope", "WeightedGradient(0)"],
     "convex": ["L2"],
     "initial": {"preset": "fourier", "modes": [[1, 0.5, 0.0], [2, 0.0, 0.2]]}},
    {"name": "heat", "equation": "heat", "dt": 1e-3, "monitor_stride": 10,
     "monitors": ["L2", "Boltzmann", "WeightedGradient(0)"], "convex": ["L2"],
     "initial": {"preset": "multi_mode", "offset": 2.0, "amplitude": 0.5}, "n": 64},
]


def suite_config(entry: dict) -> ExperimentConfig:
    return parse_config(yaml.safe_dump({**_BASE, **entry}, sort_keys=False))


def suite_entries(name_filter: str | None = None) -> list[dict]:
    return [e for e in SUITE if not name_filter or name_filter in e["name"]]


def _run_one(args) -> RunReport:
    entry, out = args
    return run_experiment(suite_config(entry), None if out is None else Path(out) / entry["name"])


def run_suite(name_filter: str | None = None, output_dir: str | os.PathLike | None = None,
              workers: int | None = None) -> list[RunReport]:
    """Run every matching entry; reports come back in suite order."""
    entries = suite_entries(name_filter)
    workers = int(os.environ.get("LAB_WORKERS", "1")) if workers is None else workers
    jobs = [(e, output_dir) for e in entries]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(min(workers, len(jobs))) as ex:
            return list(ex.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


def format_table(reports: list[RunReport]) -> str:
    """One line per monitor: experiment, functional, verdict, worst normalized step."""
    lines = [f"{'experiment':<24} {'functional':<22} {'verdict':<22} {'max fwd diff':>13}"]
    for r in reports:
        if r.error:
            lines.append(f"{r.name:<24} {'-':<22} {'solver failure':<22} {r.error}")
        for name, v in r.verdicts.items():
            status = v["status"] if v else "too few samples"
            if v and v["reason"]:
                status += f" ({v['reason']} at t={v['t']:.3g})"
            fwd = f"{v['max_forward']:13.3e}" if v else ""
            lines.append(f"{r.name:<24} {name:<22} {status:<22} {fwd}")
        for name, c in r.checks.items():
            lines.append(f"{r.name:<24} {'check ' + name:<22} {'pass' if c['passed'] else 'FAIL':<22}")
    n_pass = sum(r.all_pass for r in reports)
    lines.append(f"{n_pass}/{len(reports)} experiments pass")
    return "\n".join(lines)
