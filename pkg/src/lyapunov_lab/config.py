"""Experiment configuration: a YAML document of flat keys plus two nested
sections (``initial`` and ``strip``).

Example::

    name: hs_demo
    equation: hele_shaw
    g: 1
    mu: 1
    n: 128
    dt: 5e-3
    t_end: 0.5
    monitors: [L2, Area, J]
    initial:
      preset: cosine
      amplitude: 0.05
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np
import yaml

from .errors import ParseError, ValidationError
from .flows import EQUATION_ALIASES, EQUATION_TAGS, EquationKind, StepperConfig, stiffest_rate
from .functionals import POSITIVITY_FLOOR, FunctionalKind, IDENTITIES
from .harmonic import StripConfig
from .spectral import TorusGrid

SCHEMA_VERSION = 1

PRESETS = ("cosine", "multi_mode", "bump", "fourier")
CHECKS = IDENTITIES + ("smallness", "max_principle")
D1_ONLY = ("Laugesen", "ArctanSlope")

_TOP = {
    "schema", "name", "equation", "g", "mu", "dim", "n", "dt", "t_end", "scheme",
    "positivity_floor", "monitor_stride", "monitors", "convex", "checks", "output_dir",
    "persistence", "initial", "strip",
}
_INITIAL = {"preset", "amplitude", "offset", "modes"}
_STRIP = {"beta", "m_vert"}
_REQUIRED = ("equation", "n", "dt", "t_end")


@dataclass(frozen=True)
class InitialData:
    """offset + amplitude * shape, where the preset shapes have max|shape| = 1.

    ``fourier`` takes explicit ``modes``: rows [k, a, b] meaning
    a cos(kx) + b sin(kx) in one dimension, or [kx, ky, a, b] in two; the
    amplitude multiplies them unchanged.
    """

    preset: str = "cosine"
    amplitude: float = 1.0
    offset: float = 0.0
    modes: tuple = ()

    def field(self, grid: TorusGrid) -> np.ndarray:
        xs = grid.x
        x = xs[0]
        if self.preset == "cosine":
            shape = np.cos(x) if grid.dim == 1 else np.cos(x) * np.cos(xs[1])
        elif self.preset == "multi_mode":
            shape = np.cos(x) + 0.4 * np.sin(2 * x) + 0.2 * np.cos(3 * x)
            if grid.dim == 2:
                shape = shape + np.cos(xs[1]) + 0.4 * np.sin(x + xs[1])
            shape = shape / np.max(np.abs(shape))
        elif self.preset == "bump":
            shape = np.exp(-4.0 * (1.0 + np.cos(x)))
            if grid.dim == 2:
                shape = shape * np.exp(-4.0 * (1.0 + np.cos(xs[1])))
        else:
            shape = np.zeros(grid.shape)
            for row in self.modes:
                if grid.dim == 1:
                    k, a, b = row
                    arg = k * x
                else:
                    kx, ky, a, b = row
                    arg = kx * x + ky * xs[1]
                shape = shape + a * np.cos(arg) + b * np.sin(arg)
        return self.offset + self.amplitude * shape

    def to_dict(self) -> dict:
        d = asdict(self)
        d["modes"] = [list(r) for r in self.modes]
        return d


@dataclass(frozen=True)
class ExperimentConfig:
    equation: EquationKind
    n: int
    stepper: StepperConfig
    dim: int = 1
    initial: InitialData = InitialData()
    strip: StripConfig = StripConfig()
    monitors: tuple = ()
    convex: tuple = ()
    checks: tuple = ()
    output_dir: str | None = None
    name: str = "experiment"
    persistence: bool = True

    @property
    def grid(self) -> TorusGrid:
        return TorusGrid(self.dim, self.n)

    def initial_field(self) -> np.ndarray:
        return self.initial.field(self.grid)

    def with_dt(self, dt: float) -> "ExperimentConfig":
        """Same experiment with dt halved or otherwise changed; the monitor
        stride is scaled so that sample times are preserved."""
        ratio = self.stepper.dt / dt
        stride = max(1, int(round(self.stepper.monitor_stride * ratio)))
        return replace(self, stepper=replace(self.stepper, dt=dt, monitor_stride=stride))

    def to_dict(self) -> dict:
        """Normalized echo, accepted back by :func:`parse_config`."""
        eq = self.equation
        out = {
            "schema": SCHEMA_VERSION, "name": self.name,
            "equation": eq.tag, "dim": self.dim, "n": self.n,
            "dt": self.stepper.dt, "t_end": self.stepper.t_end, "scheme": self.stepper.scheme,
            "positivity_floor": self.stepper.positivity_floor,
            "monitor_stride": self.stepper.monitor_stride,
            "monitors": [k.name for k in self.monitors], "convex": list(self.convex),
            "checks": list(self.checks), "persistence": self.persistence,
            "initial": self.initial.to_dict(),
            "strip": {"beta": self.strip.beta, "m_vert": self.strip.m_vert},
        }
        if eq.tag in ("HeleShaw", "ThinFilmGravity"):
            out["g"], out["mu"] = eq.g, eq.mu
        if self.output_dir is not None:
            out["output_dir"] = self.output_dir
        return out


def default_scheme(eq: EquationKind) -> str:
    """RK4 unless the equation has a stiff fourth- or third-order part."""
    if eq.tag in ("ThinFilm", "ThinFilmGravity"):
        return "ETDRK4"
    if eq.tag == "HeleShaw" and eq.mu > 0:
        return "ETDRK4"
    return "RK4"


# -- parsing ---------------------------------------------------------------------


def _line(node) -> int:
    return node.start_mark.line + 1


def _mapping(node, allowed: set, where: str) -> dict:
    """{key: (value, node)} for a YAML mapping node, rejecting unknown keys."""
    if not isinstance(node, yaml.MappingNode):
        raise ParseError(f"{where} must be a mapping", line=_line(node))
    out = {}
    for knode, vnode in node.value:
        key = knode.value
        if key not in allowed:
            raise ParseError(f"unknown key in {where}", line=_line(knode), key=key)
        if key in out:
            raise ParseError(f"duplicate key in {where}", line=_line(knode), key=key)
        out[key] = (yaml.SafeLoader("").construct_object(vnode, deep=True), vnode)
    return out


def _num(entry, key, kind=float):
    value, node = entry
    try:
        if isinstance(value, bool):
            raise TypeError
        x = float(value) if not isinstance(value, str) else float(value.strip())
        if kind is int:
            if x != int(x):
                raise ValueError
            return int(x)
        return x
    except (TypeError, ValueError):
        raise ParseError(f"expected a number, got {value!r}", line=_line(node), key=key) from None


def _list(entry, key) -> list:
    value, node = entry
    if value is None:
        return []
    if isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    if not isinstance(value, list):
        raise ParseError(f"expected a list, got {value!r}", line=_line(node), key=key)
    return [str(v) for v in value]


def _equation(name: str, g: float | None, mu: float | None) -> EquationKind:
    tag = EQUATION_ALIASES.get(name, name)
    if tag not in EQUATION_TAGS:
        raise ValidationError(f"unknown equation {name!r}")
    try:
        if tag in ("HeleShaw", "ThinFilmGravity"):
            if name == "mullins_sekerka":
                dg, dmu = 0.0, 1.0
            else:
                dg, dmu = 1.0, (1.0 if tag == "ThinFilmGravity" else 0.0)
            return EquationKind(tag, dg if g is None else g, dmu if mu is None else mu)
        if g is not None or mu is not None:
            raise ValueError(f"{tag} takes no g/mu parameters")
        return EquationKind(tag)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate an experiment description; defaults are filled in."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ParseError(f"malformed config: {getattr(exc, 'problem', exc)}",
                         line=None if mark is None else mark.line + 1) from None
    if root is None:
        raise ParseError("empty config")
    top = _mapping(root, _TOP, "config")
    for key in _REQUIRED:
        if key not in top:
            raise ParseError("missing required key", key=key)

    schema = _num(top["schema"], "schema", int) if "schema" in top else SCHEMA_VERSION
    if schema != SCHEMA_VERSION:
        raise ParseError(f"unsupported schema version {schema}", key="schema")

    g = _num(top["g"], "g") if "g" in top else None
    mu = _num(top["mu"], "mu") if "mu" in top else None
    equation = _equation(str(top["equation"][0]), g, mu)

    dim = _num(top["dim"], "dim", int) if "dim" in top else 1
    n = _num(top["n"], "n", int)
    dt = _num(top["dt"], "dt")
    t_end = _num(top["t_end"], "t_end")
    scheme = str(top["scheme"][0]) if "scheme" in top else default_scheme(equation)
    floor = _num(top["positivity_floor"], "positivity_floor") if "positivity_floor" in top else 1e-6
    stride = _num(top["monitor_stride"], "monitor_stride", int) if "monitor_stride" in top else 1

    initial = InitialData()
    if "initial" in top:
        sec = _mapping(top["initial"][1], _INITIAL, "initial")
        preset = str(sec["preset"][0]) if "preset" in sec else "cosine"
        if preset not in PRESETS:
            raise ValidationError(f"initial.preset must be one of {PRESETS}, got {preset!r}")
        modes = ()
        if "modes" in sec:
            raw, node = sec["modes"]
            if not isinstance(raw, list) or not all(isinstance(r, list) for r in raw):
                raise ParseError("modes must be a list of rows", line=_line(node), key="modes")
            try:
                modes = tuple(tuple(float(v) for v in r) for r in raw)
            except (TypeError, ValueError):
                raise ParseError("modes rows must be numeric", line=_line(node), key="modes") from None
        if preset == "fourier" and not modes:
            raise ValidationError("initial.preset fourier needs initial.modes")
        initial = InitialData(
            preset,
            _num(sec["amplitude"], "amplitude") if "amplitude" in sec else 1.0,
            _num(sec["offset"], "offset") if "offset" in sec else 0.0,
            modes)

    strip = StripConfig()
    if "strip" in top:
        sec = _mapping(top["strip"][1], _STRIP, "strip")
        beta = sec["beta"][0] if "beta" in sec else None
        try:
            strip = StripConfig(beta=None if beta is None else _num(sec["beta"], "beta"),
                                m_vert=_num(sec["m_vert"], "m_vert", int) if "m_vert" in sec else 48)
        except ValueError as exc:
            raise ValidationError(f"strip: {exc}") from None

    try:
        monitors = tuple(FunctionalKind.parse(s) for s in (_list(top["monitors"], "monitors")
                                                           if "monitors" in top else []))
    except ValueError as exc:
        raise ValidationError(f"monitors: {exc}") from None
    convex = tuple(_list(top["convex"], "convex")) if "convex" in top else ()
    checks = tuple(_list(top["checks"], "checks")) if "checks" in top else ()
    persistence = bool(top["persistence"][0]) if "persistence" in top else True
    name = str(top["name"][0]) if "name" in top else "experiment"
    output_dir = str(top["output_dir"][0]) if "output_dir" in top else None

    try:
        stepper = StepperConfig(dt, t_end, scheme, floor, stride)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    cfg = ExperimentConfig(equation, n, stepper, dim, initial, strip, monitors, convex,
                           checks, output_dir, name, persistence)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    """Raise :class:`ValidationError` naming the first violated invariant."""
    if cfg.dim not in (1, 2):
        raise ValidationError(f"dim must be 1 or 2, got {cfg.dim}")
    if cfg.n < 8 or cfg.n % 2:
        raise ValidationError(f"n must be an even integer >= 8, got {cfg.n}")
    grid = cfg.grid
    h0 = cfg.initial_field()
    if not np.all(np.isfinite(h0)):
        raise ValidationError("initial data is not finite")
    eq = cfg.equation
    lo = float(np.min(h0))
    if eq.degenerate and not lo > cfg.stepper.positivity_floor:
        raise ValidationError(
            f"positivity: {eq.tag} needs min h0 > {cfg.stepper.positivity_floor:g}, "
            f"got {lo:.4g} (amplitude {cfg.initial.amplitude:g}, offset {cfg.initial.offset:g})")
    names = [k.name for k in cfg.monitors]
    if len(set(names)) != len(names):
        raise ValidationError("duplicate monitors")
    for k in cfg.monitors:
        if k.requires_positive and not lo > POSITIVITY_FLOOR:
            raise ValidationError(f"positivity: monitor {k.name} needs min h0 > 0, got {lo:.4g}")
        if k.tag in D1_ONLY and cfg.dim != 1:
            raise ValidationError(f"monitor {k.name} is defined for dim = 1 only")
    for c in cfg.convex:
        if c not in names:
            raise ValidationError(f"convex entry {c!r} is not among the monitors")
    for c in cfg.checks:
        if c not in CHECKS:
            raise ValidationError(f"unknown check {c!r}; expected one of {CHECKS}")
    need = {"ThinFilmL2": ("ThinFilm",), "HeatBoltzmannPointwise": ("Heat",),
            "JDissipationD1": ("HeleShaw",), "smallness": ("HeleShaw",),
            "max_principle": ("HeleShaw",)}
    for c in cfg.checks:
        if eq.tag not in need[c]:
            raise ValidationError(f"check {c} does not apply to {eq}")
    if "JDissipationD1" in cfg.checks and (cfg.dim != 1 or eq.mu != 0 or eq.g != 1):
        raise ValidationError("JDissipationD1 needs dim = 1 and HeleShaw(g=1, mu=0)")
    if "HeatBoltzmannPointwise" in cfg.checks and lo < 1.0:
        raise ValidationError("HeatBoltzmannPointwise needs min h0 >= 1")
    if cfg.stepper.scheme == "RK4":
        rate = stiffest_rate(eq, grid, h0)
        if cfg.stepper.dt * rate > 0.9:
            raise ValidationError(
                f"stability: RK4 needs dt * rate <= 0.9, got {cfg.stepper.dt * rate:.3g} "
                f"(dt <= {0.9 / rate:.3g} for n={cfg.n})")
    if cfg.stepper.n_steps < 2 * cfg.stepper.monitor_stride and cfg.monitors:
        raise ValidationError("t_end / dt must allow at least three monitor samples")
    if not math.isclose(cfg.stepper.n_steps * cfg.stepper.dt, cfg.stepper.t_end,
                        rel_tol=1e-9, abs_tol=1e-12):
        raise ValidationError("t_end must be an integer multiple of dt")
