"""Verdicts on monitored series, experiment execution and output files.

Verdicts use only the persisted series (times and values) plus the time step,
so ``verdict`` applied to a written ``series.csv`` reproduces ``report.json``.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy

from . import __version__
from .config import SCHEMA_VERSION, ExperimentConfig
from .errors import LabError, TooFewSamples
from .flows import Trajectory, run, smallness_check, trajectory_states
from .functionals import FunctionalKind, FunctionalSample, identity_residual
from .spectral import RESOLVED_TAIL, TorusGrid

NONINCREASING = "nonincreasing"
CONVEX = "convex-nonincreasing"
VIOLATED = "violated"

TOL_FLOOR = 1e-6
TOL_C = 1.0
IDENTITY_MIN_RATIO = 3.5
MAX_PRINCIPLE_TOL = 1e-5


@dataclass(frozen=True)
class Verdict:
    status: str
    tol: float
    max_forward: float
    min_second: float
    t: float | None = None
    magnitude: float | None = None
    reason: str | None = None

    @property
    def passed(self) -> bool:
        return self.status != VIOLATED

    def to_dict(self) -> dict:
        return asdict(self)


def tolerance(dt: float, C: float = TOL_C) -> float:
    return max(TOL_FLOOR, C * dt * dt)


def verdict(series, dt: float, *, t: Sequence[float] | None = None, orientation: float = 1.0,
            require_convex: bool = False, C: float = TOL_C) -> Verdict:
    """Classify a sampled functional as nonincreasing, convex-nonincreasing or violated.

    ``series`` is a list of :class:`FunctionalSample` or a sequence of values
    (then ``t`` gives the sample times).  With tol = max(1e-6, C dt^2):
    nonincreasing iff every forward difference <= tol (1 + |I|); convex
    additionally iff every second difference >= -tol.  ``orientation`` = -1
    flips functionals whose decaying form is -I.
    """
    if len(series) and isinstance(series[0], FunctionalSample):
        t = [s.t for s in series]
        vals = np.array([s.value for s in series], dtype=float)
        orientation = series[0].kind.orientation
    else:
        vals = np.asarray(series, dtype=float)
    if vals.size < 3:
        raise TooFewSamples(f"verdict needs at least 3 samples, got {vals.size}")
    t = np.arange(vals.size, dtype=float) if t is None else np.asarray(t, dtype=float)
    v = orientation * vals
    tol = tolerance(dt, C)
    fwd = np.diff(v)
    scale = 1.0 + np.abs(v[:-1])
    excess = fwd - tol * scale
    second = np.diff(v, 2)
    max_fwd = float(np.max(fwd / scale))
    min_sec = float(np.min(second))
    if not np.all(np.isfinite(v)):
        i = int(np.argmin(np.isfinite(v)))
        return Verdict(VIOLATED, tol, max_fwd, min_sec, float(t[i]), math.inf, "non-finite value")
    if np.any(excess > 0):
        i = int(np.argmax(excess > 0))
        return Verdict(VIOLATED, tol, max_fwd, min_sec, float(t[i + 1]), float(fwd[i]), "increase")
    if np.all(second >= -tol):
        return Verdict(CONVEX, tol, max_fwd, min_sec)
    if require_convex:
        i = int(np.argmax(second < -tol))
        return Verdict(VIOLATED, tol, max_fwd, min_sec, float(t[i + 1]), float(-second[i]), "concavity")
    return Verdict(NONINCREASING, tol, max_fwd, min_sec)


def trajectory_verdicts(traj: Trajectory, dt: float, convex: Sequence[str] = ()) -> dict:
    out = {}
    for kind in traj.monitors:
        vals = traj.values[kind.name]
        if len(vals) < 3:
            out[kind.name] = None
            continue
        out[kind.name] = verdict(vals, dt, t=traj.t, orientation=kind.orientation,
                                 require_convex=kind.name in convex)
    return out


# -- series I/O -------------------------------------------------------------------


def _fmt(x: float) -> str:
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else format(float(x), ".17g")


def series_rows(traj: Trajectory) -> tuple[list, list]:
    header = ["t"]
    for k in traj.monitors:
        header += [k.name, f"{k.name}_dissipation"]
    rows = []
    for i, t in enumerate(traj.t):
        row = [_fmt(t)]
        for k in traj.monitors:
            row += [_fmt(traj.values[k.name][i]), _fmt(traj.dissipation[k.name][i])]
        rows.append(row)
    return header, rows


def write_series(path: Path, traj: Trajectory) -> None:
    header, rows = series_rows(traj)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_series(path) -> tuple[np.ndarray, dict, dict]:
    """(t, values, dissipation) from a ``series.csv``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "t":
        raise ValueError(f"{path}: not a series file (first column must be t)")
    header, body = rows[0], rows[1:]
    cols = list(zip(*body)) if body else [()] * len(header)
    t = np.array(cols[0], dtype=float)
    values, diss = {}, {}
    for name, col in zip(header[1:], cols[1:]):
        arr = np.array(col, dtype=float)
        if name.endswith("_dissipation"):
            diss[name[: -len("_dissipation")]] = arr
        else:
            values[name] = arr
    return t, values, diss


def verdicts_from_csv(path, dt: float, convex: Sequence[str] = ()) -> dict:
    t, values, _ = read_series(path)
    out = {}
    for name, vals in values.items():
        kind = FunctionalKind.parse(name)
        out[name] = verdict(vals, dt, t=t, orientation=kind.orientation,
                            require_convex=name in convex)
    return out


# -- experiment ---------------------------------------------------------------------


@dataclass
class RunReport:
    name: str
    config: dict
    verdicts: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    trace: dict = field(default_factory=dict)
    error: str | None = None
    refined: bool = False
    dt_effective: float | None = None
    coarse_verdicts: dict | None = None
    resolution: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def all_pass(self) -> bool:
        return (self.error is None
                and all(v["status"] != VIOLATED for v in self.verdicts.values() if v)
                and all(c["passed"] for c in self.checks.values()))

    @property
    def exit_code(self) -> int:
        if self.error is not None:
            return 3
        return 0 if self.all_pass else 1

    def to_dict(self) -> dict:
        """Deterministic content of ``report.json`` (wall time is kept apart)."""
        return _clean({
            "name": self.name, "schema": SCHEMA_VERSION, "config": self.config,
            "verdicts": self.verdicts, "checks": self.checks, "max_principle": self.trace,
            "error": self.error, "refined": self.refined, "dt_effective": self.dt_effective,
            "coarse_verdicts": self.coarse_verdicts, "resolution": self.resolution,
            "all_pass": self.all_pass,
            "versions": {"lyapunov_lab": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__},
        })


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _identity_check(cfg: ExperimentConfig, which: str) -> dict:
    """Residual at (n, dt) and at (2n, dt/2) from the first three states."""
    res = []
    for scale in (1, 2):
        grid = TorusGrid(cfg.dim, cfg.n * scale)
        h0 = cfg.initial.field(grid)
        stepper = replace(cfg.stepper, dt=cfg.stepper.dt / scale, monitor_stride=1)
        states = trajectory_states(cfg.equation, h0, stepper, cfg.strip, n=3, grid=grid)
        res.append(identity_residual(which, states, cfg.strip, grid))
    r1, r2 = res
    ratio = r1 / r2 if r2 > 0 else math.inf
    passed = r2 <= 1e-13 or ratio >= IDENTITY_MIN_RATIO
    return {"passed": bool(passed), "residual": r1, "residual_refined": r2, "ratio": ratio,
            "order": math.log2(ratio) if 0 < ratio < math.inf else None}


def _resolution(grid: TorusGrid, h0: np.ndarray, h1: np.ndarray) -> dict:
    """Spectral tails of the initial and final states.  Informational: the
    identities are only meaningful while both stay below the threshold."""
    t0, t1 = grid.spectral_tail(h0), grid.spectral_tail(h1)
    return {"initial_tail": t0, "final_tail": t1, "threshold": RESOLVED_TAIL,
            "resolved": bool(max(t0, t1) < RESOLVED_TAIL)}


def _max_principle_check(summary: dict) -> dict:
    if not summary:
        return {"passed": False, "reason": "no trace recorded"}
    ok = (summary["sup_grad_rel_excess"] <= MAX_PRINCIPLE_TOL
          and summary["sup_dtn_rel_excess"] <= MAX_PRINCIPLE_TOL)
    return {"passed": bool(ok), "tolerance": MAX_PRINCIPLE_TOL, **summary}


def run_experiment(cfg: ExperimentConfig, output_dir: str | os.PathLike | None = None) -> RunReport:
    """Run the flow, apply verdicts (with the dt-halving persistence rule),
    evaluate the requested checks and, when a directory is given, write outputs."""
    start = time.perf_counter()
    output_dir = output_dir if output_dir is not None else cfg.output_dir
    report = RunReport(cfg.name, cfg.to_dict(), dt_effective=cfg.stepper.dt)
    grid = cfg.grid
    h0 = cfg.initial_field()
    coarse = None
    try:
        traj = run(cfg.equation, h0, cfg.stepper, cfg.strip, cfg.monitors, grid=grid)
        verdicts = trajectory_verdicts(traj, cfg.stepper.dt, cfg.convex)
        violated = any(v is not None and not v.passed for v in verdicts.values())
        if violated and cfg.persistence and traj.error is None:
            fine_cfg = cfg.with_dt(cfg.stepper.dt / 2)
            coarse, coarse_verdicts = traj, verdicts
            traj = run(fine_cfg.equation, h0, fine_cfg.stepper, fine_cfg.strip, fine_cfg.monitors,
                       grid=grid)
            verdicts = trajectory_verdicts(traj, fine_cfg.stepper.dt, cfg.convex)
            report.refined = True
            report.dt_effective = fine_cfg.stepper.dt
            report.coarse_verdicts = {k: (v.to_dict() if v else None)
                                      for k, v in coarse_verdicts.items()}
        report.verdicts = {k: (v.to_dict() if v else None) for k, v in verdicts.items()}
        if traj.trace is not None:
            report.trace = traj.trace.summary()
        report.error = traj.error
        report.resolution = _resolution(grid, h0, traj.final.h)
        for check in cfg.checks:
            if check == "smallness":
                s = smallness_check(h0, cfg.strip, grid=grid)
                report.checks[check] = {"passed": bool(s.passes), "c_d": s.c_d,
                                        "sup_grad2": s.sup_grad2, "sup_dtn2": s.sup_dtn2}
            elif check == "max_principle":
                report.checks[check] = _max_principle_check(report.trace)
            else:
                report.checks[check] = _identity_check(cfg, check)
    except LabError as exc:
        report.error = f"{type(exc).__name__}: {exc}"
        traj = None
    report.wall_time = time.perf_counter() - start
    if output_dir is not None:
        emit_outputs(report, traj, output_dir, coarse=coarse)
    return report


def emit_outputs(report: RunReport, series: Trajectory | None, output_dir,
                 coarse: Trajectory | None = None) -> Path:
    """Write ``series.csv``, ``report.json`` and ``timing.json`` into ``output_dir``."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if series is not None:
        write_series(out / "series.csv", series)
    if coarse is not None:
        write_series(out / "series_coarse.csv", coarse)
    with open(out / "report.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "timing.json", "w") as fh:
        json.dump({"wall_time": report.wall_time}, fh)
        fh.write("\n")
    return out
