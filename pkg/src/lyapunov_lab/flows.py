"""Right-hand sides and time integrators for the free-surface parabolic flows.

Schemes
-------
RK4
    Classical explicit Runge-Kutta; requires dt * (stiffest linear rate) <= 0.9.
IMEX1
    First-order implicit-explicit Euler.  A constant-coefficient linear part L
    (a negative Fourier symbol frozen at the start of the run) is inverted
    exactly in Fourier space, the remainder rhs(h) - L h is explicit.
ETDRK4
    Fourth-order exponential time differencing Runge-Kutta with the same
    splitting; the phi-function coefficients are evaluated by contour
    averaging to avoid cancellation at small |L dt|.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import LabError, NoClosedForm, NonpositiveTaylor, PositivityViolated, Unstable
from .functionals import FunctionalKind, FunctionalSample, Surface, dissipation_rate, evaluate
from .harmonic import DEFAULT_STRIP, StripConfig
from .inequalities import solve_c_d
from .spectral import TorusGrid, check_field, grid_for

EQUATION_TAGS = ("Heat", "MeanCurvature", "HeleShaw", "Boussinesq", "ThinFilm", "ThinFilmGravity")
DEGENERATE = ("Boussinesq", "ThinFilm", "ThinFilmGravity")
SCHEMES = ("RK4", "IMEX1", "ETDRK4")

EQUATION_ALIASES = {
    "heat": "Heat",
    "mean_curvature": "MeanCurvature", "mcf": "MeanCurvature",
    "hele_shaw": "HeleShaw", "mullins_sekerka": "HeleShaw",
    "boussinesq": "Boussinesq",
    "thin_film": "ThinFilm",
    "thin_film_gravity": "ThinFilmGravity",
}


@dataclass(frozen=True)
class EquationKind:
    tag: str
    g: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        tag = EQUATION_ALIASES.get(self.tag, self.tag)
        if tag not in EQUATION_TAGS:
            raise ValueError(f"unknown equation {self.tag!r}")
        object.__setattr__(self, "tag", tag)
        if tag in ("HeleShaw", "ThinFilmGravity"):
            if self.g < 0 or self.mu < 0:
                raise ValueError("g and mu must be nonnegative")
            if self.g == 0 and self.mu == 0:
                raise ValueError(f"{tag} needs (g, mu) != (0, 0)")
        elif self.g or self.mu:
            raise ValueError(f"{tag} takes no (g, mu) parameters")

    @property
    def degenerate(self) -> bool:
        return self.tag in DEGENERATE

    def __str__(self) -> str:
        if self.tag in ("HeleShaw", "ThinFilmGravity"):
            return f"{self.tag}(g={self.g:g}, mu={self.mu:g})"
        return self.tag


HEAT = EquationKind("Heat")
MEAN_CURVATURE = EquationKind("MeanCurvature")
BOUSSINESQ = EquationKind("Boussinesq")
THIN_FILM = EquationKind("ThinFilm")


def HeleShaw(g: float = 1.0, mu: float = 0.0) -> EquationKind:
    return EquationKind("HeleShaw", g, mu)


def ThinFilmGravity(g: float = 1.0, mu: float = 1.0) -> EquationKind:
    return EquationKind("ThinFilmGravity", g, mu)


# -- right-hand sides ----------------------------------------------------------


def _check_positive(eq: EquationKind, h: np.ndarray, floor: float = 0.0) -> None:
    if eq.degenerate:
        lo = float(np.min(h))
        if not lo > floor:
            raise PositivityViolated(f"{eq.tag} requires min h > {floor:g}, got {lo:.3e}")


def rhs(eq: EquationKind, h: np.ndarray, cfg: StripConfig = DEFAULT_STRIP, *,
        grid: TorusGrid | None = None, surface: Surface | None = None) -> np.ndarray:
    """dh/dt for the equation ``eq``; every pointwise product is dealiased."""
    if surface is None:
        grid = grid_for(h) if grid is None else grid
        surface = Surface(grid, h, cfg)
    s = surface
    g, h = s.grid, s.h
    _check_positive(eq, h)
    D = g.dealias
    tag = eq.tag
    if tag == "Heat":
        out = s.lap
    elif tag == "MeanCurvature":
        if g.dim == 1:
            out = g.derivative(D(np.arctan(s.grad[0])), 0, 1)
        else:
            quad = np.einsum("i...,ij...,j...->...", s.grad, s.hess, s.grad)
            out = s.lap - D(quad / (1.0 + s.grad2))
    elif tag == "HeleShaw":
        out = -s.G(eq.g * h + eq.mu * s.kappa) if eq.mu else -eq.g * s.gh
    elif tag == "Boussinesq":
        out = g.divergence(D(h * s.grad))
    elif tag == "ThinFilm":
        out = -g.divergence(D(h * g.gradient(s.lap)))
    else:  # ThinFilmGravity
        flux = eq.g * h * s.grad - eq.mu * h * g.gradient(s.lap)
        out = g.divergence(D(flux))
    return D(out)


def linear_symbol(eq: EquationKind, grid: TorusGrid, h0: np.ndarray) -> np.ndarray:
    """Constant-coefficient stiff part L (nonpositive Fourier symbol) frozen at h0."""
    k = grid.kabs
    c = float(np.max(h0))
    tag = eq.tag
    if tag in ("Heat", "MeanCurvature"):
        return -(k ** 2)
    if tag == "HeleShaw":
        return -(eq.g * k + eq.mu * k ** 3)
    if tag == "Boussinesq":
        return -c * k ** 2
    if tag == "ThinFilm":
        return -c * k ** 4
    return -c * (eq.g * k ** 2 + eq.mu * k ** 4)


def stiffest_rate(eq: EquationKind, grid: TorusGrid, h0: np.ndarray) -> float:
    """Largest |L| over the dealiased band; the RK4 stability bound uses it."""
    kmax = grid.kmax_dealiased * math.sqrt(grid.dim)
    c = max(float(np.max(np.abs(h0))), 1e-300)
    tag = eq.tag
    if tag in ("Heat", "MeanCurvature"):
        return kmax ** 2
    if tag == "HeleShaw":
        return eq.g * kmax + eq.mu * kmax ** 3
    if tag == "Boussinesq":
        return c * kmax ** 2
    if tag == "ThinFilm":
        return c * kmax ** 4
    return c * (eq.g * kmax ** 2 + eq.mu * kmax ** 4)


# -- time stepping -------------------------------------------------------------


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    t_end: float
    scheme: str = "RK4"
    positivity_floor: float = 1e-6
    monitor_stride: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end >= 0:
            raise ValueError(f"t_end must be nonnegative, got {self.t_end}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if int(self.monitor_stride) < 1:
            raise ValueError("monitor_stride must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True)
class FlowState:
    t: float
    h: np.ndarray
    h_t: np.ndarray
    surface: Surface | None = field(default=None, repr=False, compare=False)


def _phi_coefficients(Ldt: np.ndarray, n_roots: int = 32):
    """ETDRK4 coefficients of Kassam and Trefethen by contour averaging."""
    r = np.exp(1j * np.pi * (np.arange(1, n_roots + 1) - 0.5) / n_roots)
    LR = Ldt[..., None] + r
    e = np.exp(LR)
    q = np.real(np.mean((np.exp(LR / 2) - 1.0) / LR, axis=-1))
    f1 = np.real(np.mean((-4.0 - LR + e * (4.0 - 3.0 * LR + LR ** 2)) / LR ** 3, axis=-1))
    f2 = np.real(np.mean((2.0 + LR + e * (-2.0 + LR)) / LR ** 3, axis=-1))
    f3 = np.real(np.mean((-4.0 - 3.0 * LR - LR ** 2 + e * (4.0 - LR)) / LR ** 3, axis=-1))
    return q, f1, f2, f3


class Integrator:
    """Time stepper for one run; the linear splitting is frozen at ``h0``."""

    def __init__(self, eq: EquationKind, grid: TorusGrid, stepper: StepperConfig,
                 strip: StripConfig = DEFAULT_STRIP, h0: np.ndarray | None = None):
        self.eq, self.grid, self.cfg, self.strip = eq, grid, stepper, strip
        dt = stepper.dt
        if stepper.scheme == "RK4" and h0 is not None:
            rate = stiffest_rate(eq, grid, h0)
            if dt * rate > 0.9:
                raise Unstable(
                    f"RK4 stability bound violated: dt*rate = {dt * rate:.3g} > 0.9 "
                    f"(dt <= {0.9 / rate:.3g} required)")
        if stepper.scheme != "RK4":
            if h0 is None:
                raise ValueError(f"{stepper.scheme} needs h0 to freeze the linear part")
            self.L = linear_symbol(eq, grid, h0)
            if stepper.scheme == "ETDRK4":
                Ldt = self.L * dt
                self.E = np.exp(Ldt)
                self.E2 = np.exp(Ldt / 2)
                q, f1, f2, f3 = _phi_coefficients(Ldt)
                self.Q, self.f1, self.f2, self.f3 = dt * q, dt * f1, dt * f2, dt * f3

    def state(self, t: float, h: np.ndarray) -> FlowState:
        s = Surface(self.grid, h, self.strip)
        return FlowState(t, s.h, rhs(self.eq, s.h, surface=s), s)

    def _f(self, h):
        return rhs(self.eq, h, self.strip, grid=self.grid)

    def step(self, st: FlowState) -> FlowState:
        g, dt, scheme = self.grid, self.cfg.dt, self.cfg.scheme
        h = st.h
        with np.errstate(over="raise", invalid="raise"):
            try:
                if scheme == "RK4":
                    k1 = st.h_t
                    k2 = self._f(h + 0.5 * dt * k1)
                    k3 = self._f(h + 0.5 * dt * k2)
                    k4 = self._f(h + dt * k3)
                    hn = h + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                elif scheme == "IMEX1":
                    uh = g.fft(h)
                    Nh = g.fft(st.h_t) - self.L * uh
                    hn = g.ifft((uh + dt * Nh) / (1.0 - dt * self.L))
                else:
                    L = self.L
                    uh = g.fft(h)
                    N = lambda f, fh: g.fft(f) - L * fh  # noqa: E731
                    Nu = N(st.h_t, uh)
                    ah = self.E2 * uh + self.Q * Nu
                    a = g.ifft(ah)
                    Na = N(self._f(a), ah)
                    bh = self.E2 * uh + self.Q * Na
                    b = g.ifft(bh)
                    Nb = N(self._f(b), bh)
                    ch = self.E2 * ah + self.Q * (2.0 * Nb - Nu)
                    c = g.ifft(ch)
                    Nc = N(self._f(c), ch)
                    hn = g.ifft(self.E * uh + self.f1 * Nu + 2.0 * self.f2 * (Na + Nb) + self.f3 * Nc)
            except FloatingPointError as exc:
                raise Unstable(f"floating-point overflow at t={st.t:.6g}: {exc}") from exc
            except PositivityViolated as exc:
                raise PositivityViolated(f"stage positivity lost near t={st.t:.6g}: {exc}") from exc
        if not np.all(np.isfinite(hn)):
            raise Unstable(f"non-finite values after step at t={st.t:.6g}")
        n0, n1 = np.linalg.norm(h), np.linalg.norm(hn)
        if n1 > 10.0 * max(n0, 1e-12):
            raise Unstable(f"field norm grew {n1 / max(n0, 1e-300):.3g}x in one step at t={st.t:.6g}")
        if self.eq.degenerate and float(np.min(hn)) < self.cfg.positivity_floor:
            raise PositivityViolated(
                f"min h = {np.min(hn):.3e} < floor {self.cfg.positivity_floor:g} after step "
                f"from t={st.t:.6g}; step rejected")
        return self.state(st.t + dt, hn)


def step(eq: EquationKind, state: FlowState, cfg: StepperConfig,
         strip: StripConfig = DEFAULT_STRIP, grid: TorusGrid | None = None) -> FlowState:
    """Advance one step.  For the exponential/IMEX schemes the linear part is
    frozen at ``state.h``."""
    grid = grid_for(state.h) if grid is None else grid
    return Integrator(eq, grid, cfg, strip, state.h).step(state)


# -- runs ----------------------------------------------------------------------


@dataclass
class MaxPrincipleTrace:
    """sup|grad h|, sup|G(h)h| and inf a along a Hele-Shaw trajectory."""

    t: list = field(default_factory=list)
    sup_grad: list = field(default_factory=list)
    sup_dtn: list = field(default_factory=list)
    inf_a: list = field(default_factory=list)

    def record(self, t: float, s: Surface) -> None:
        g = s.grid
        grad_f = g.refine(s.grad)
        gh_f = g.refine(s.gh)
        g2 = np.sum(grad_f ** 2, axis=0)
        self.t.append(t)
        self.sup_grad.append(float(np.sqrt(np.max(g2))))
        self.sup_dtn.append(float(np.max(np.abs(gh_f))))
        self.inf_a.append(float(np.min((1.0 - gh_f) / (1.0 + g2))))

    def summary(self) -> dict:
        if not self.t:
            return {}
        rel = lambda v: (max(v) - v[0]) / max(abs(v[0]), 1e-300)  # noqa: E731
        return {
            "sup_grad_initial": self.sup_grad[0], "sup_grad_max": max(self.sup_grad),
            "sup_grad_rel_excess": rel(self.sup_grad),
            "sup_dtn_initial": self.sup_dtn[0], "sup_dtn_max": max(self.sup_dtn),
            "sup_dtn_rel_excess": rel(self.sup_dtn),
            "inf_a_initial": self.inf_a[0], "inf_a_min": min(self.inf_a),
        }


@dataclass
class Trajectory:
    equation: EquationKind
    monitors: list
    t: list = field(default_factory=list)
    values: dict = field(default_factory=dict)
    dissipation: dict = field(default_factory=dict)
    trace: MaxPrincipleTrace | None = None
    error: str | None = None
    final: FlowState | None = None
    n_steps: int = 0

    def series(self, kind: FunctionalKind) -> np.ndarray:
        return np.asarray(self.values[kind.name])

    def samples(self, kind: FunctionalKind) -> list:
        d = self.dissipation[kind.name]
        return [FunctionalSample(t, kind, v, None if math.isnan(r) else r)
                for t, v, r in zip(self.t, self.values[kind.name], d)]


def _sample(traj: Trajectory, st: FlowState) -> None:
    s = st.surface
    traj.t.append(st.t)
    for kind in traj.monitors:
        traj.values[kind.name].append(evaluate(kind, h_t=st.h_t, surface=s))
        try:
            r = dissipation_rate(kind, traj.equation, surface=s)
        except NoClosedForm:
            r = float("nan")
        traj.dissipation[kind.name].append(r)
    if traj.trace is not None:
        traj.trace.record(st.t, s)


def run(eq: EquationKind, h0: np.ndarray, stepper: StepperConfig,
        strip: StripConfig = DEFAULT_STRIP, monitors: Sequence[FunctionalKind] = (),
        grid: TorusGrid | None = None) -> Trajectory:
    """Integrate to ``t_end`` sampling ``monitors`` every ``monitor_stride`` steps.

    Errors after the start are caught: the partial trajectory is returned
    with ``error`` set to the message.
    """
    grid = grid_for(h0) if grid is None else grid
    h0 = check_field(grid, h0)
    _check_positive(eq, h0, stepper.positivity_floor)
    monitors = list(monitors)
    traj = Trajectory(eq, monitors, values={k.name: [] for k in monitors},
                      dissipation={k.name: [] for k in monitors},
                      trace=MaxPrincipleTrace() if eq.tag == "HeleShaw" else None)
    integ = Integrator(eq, grid, stepper, strip, h0)
    st = integ.state(0.0, h0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonpositiveTaylor)
        try:
            _sample(traj, st)
            for i in range(1, stepper.n_steps + 1):
                st = integ.step(st)
                traj.n_steps = i
                if i % stepper.monitor_stride == 0:
                    _sample(traj, st)
        except LabError as exc:
            traj.error = f"{type(exc).__name__}: {exc}"
    traj.final = st
    return traj


def trajectory_states(eq: EquationKind, h0: np.ndarray, stepper: StepperConfig,
                      strip: StripConfig = DEFAULT_STRIP, n: int | None = None,
                      grid: TorusGrid | None = None) -> list:
    """The first ``n`` (default all) states of a run, for identity residuals."""
    grid = grid_for(h0) if grid is None else grid
    integ = Integrator(eq, grid, stepper, strip, check_field(grid, h0))
    st = integ.state(0.0, h0)
    out = [st]
    total = stepper.n_steps if n is None else n - 1
    for _ in range(total):
        st = integ.step(st)
        out.append(st)
    return out


# -- smallness gate ------------------------------------------------------------


@dataclass(frozen=True)
class SmallnessResult:
    passes: bool
    c_d: float
    sup_grad2: float
    sup_dtn2: float


def smallness_check(h0: np.ndarray, strip: StripConfig = DEFAULT_STRIP, d: int | None = None,
                    grid: TorusGrid | None = None) -> SmallnessResult:
    """Compare sup|grad h0|^2 and sup|G(h0)h0|^2 with the universal constant c_d."""
    grid = grid_for(h0) if grid is None else grid
    d = grid.dim if d is None else d
    s = Surface(grid, h0, strip)
    c_d = solve_c_d(d)
    if not np.any(s.h - np.mean(s.h)):
        sg = sd = 0.0
    else:
        sg = float(np.max(np.sum(grid.refine(s.grad) ** 2, axis=0)))
        sd = float(np.max(grid.refine(s.gh) ** 2))
    return SmallnessResult(sg <= c_d and sd <= c_d, c_d, sg, sd)
