"""Lyapunov functionals, their closed-form dissipation rates, and exact-identity
residuals used as discretization-error meters.

A :class:`Surface` caches the geometric quantities of one elevation field
(gradient, curvature, the strip solver, G(h)h) so that several functionals
evaluated at the same time sample share a single harmonic solve.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, DomainError, NoClosedForm, PositivityViolated
from .harmonic import DEFAULT_STRIP, StripConfig, StripSolver, b_star
from .spectral import TorusGrid, check_field, grid_for

POSITIVITY_FLOOR = 1e-8

_PARAM_TAGS = {"PowerMass", "WeightedGradient", "Laugesen", "ConvexPhi"}
_PLAIN_TAGS = {"L2", "Area", "Boltzmann", "DirichletEnergyDtN", "J", "ArctanSlope",
               "TimeDerivL2", "CurvatureEnergy"}
_PHI_PRESETS = ("square", "fourth", "exp")


@dataclass(frozen=True)
class FunctionalKind:
    """One functional I(h); ``param`` carries m, p or the convex preset name."""

    tag: str
    param: float | str | None = None

    def __post_init__(self):
        if self.tag in _PLAIN_TAGS:
            if self.param is not None:
                raise ValueError(f"{self.tag} takes no parameter")
        elif self.tag in _PARAM_TAGS:
            if self.tag == "ConvexPhi":
                if self.param not in _PHI_PRESETS:
                    raise ValueError(f"ConvexPhi preset must be one of {_PHI_PRESETS}")
            else:
                if self.param is None or not math.isfinite(float(self.param)):
                    raise ValueError(f"{self.tag} needs a finite real parameter")
                object.__setattr__(self, "param", float(self.param))
                if self.tag == "Laugesen" and self.param < 0:
                    raise ValueError("Laugesen exponent p must be >= 0")
                if self.tag == "PowerMass" and self.param == -1.0:
                    raise DomainError("PowerMass(-1) is undefined (integrand h^0)")
        else:
            raise ValueError(f"unknown functional tag {self.tag!r}")

    @classmethod
    def parse(cls, text: str) -> "FunctionalKind":
        """Parse ``"L2"``, ``"PowerMass(0.25)"``, ``"ConvexPhi(exp)"`` and so on."""
        text = str(text).strip()
        m = re.fullmatch(r"([A-Za-z0-9]+)\s*(?:\(\s*([^()]*?)\s*\))?", text)
        if not m:
            raise ValueError(f"cannot parse functional {text!r}")
        tag, arg = m.group(1), m.group(2)
        if tag in _PARAM_TAGS:
            if arg is None:
                raise ValueError(f"{tag} requires a parameter, e.g. {tag}(1)")
            return cls(tag, arg if tag == "ConvexPhi" else float(arg))
        if arg is not None:
            raise ValueError(f"{tag} takes no parameter")
        return cls(tag)

    @property
    def name(self) -> str:
        if self.param is None:
            return self.tag
        if isinstance(self.param, str):
            return f"{self.tag}({self.param})"
        return f"{self.tag}({self.param:g})"

    def __str__(self) -> str:
        return self.name

    @property
    def requires_positive(self) -> bool:
        if self.tag == "WeightedGradient":
            return self.param != 0.0
        return self.tag in ("Boltzmann", "PowerMass", "Laugesen")

    @property
    def orientation(self) -> float:
        """Sign s such that s*I is the decaying quantity.

        For PowerMass with -1 < m < 0 the decaying functional is
        int h^{m+1} / (m(m+1)), so the raw integral increases.
        """
        if self.tag == "PowerMass" and self.param != 0.0:
            return float(np.sign(self.param * (self.param + 1.0)))
        return 1.0


# convenient constants
L2 = FunctionalKind("L2")
AREA = FunctionalKind("Area")
BOLTZMANN = FunctionalKind("Boltzmann")
DIRICHLET_DTN = FunctionalKind("DirichletEnergyDtN")
J = FunctionalKind("J")
ARCTAN_SLOPE = FunctionalKind("ArctanSlope")
TIME_DERIV_L2 = FunctionalKind("TimeDerivL2")
CURVATURE_ENERGY = FunctionalKind("CurvatureEnergy")


def PowerMass(m: float) -> FunctionalKind:
    return FunctionalKind("PowerMass", m)


def WeightedGradient(m: float) -> FunctionalKind:
    return FunctionalKind("WeightedGradient", m)


def Laugesen(p: float) -> FunctionalKind:
    return FunctionalKind("Laugesen", p)


def ConvexPhi(preset: str) -> FunctionalKind:
    return FunctionalKind("ConvexPhi", preset)


@dataclass(frozen=True)
class FunctionalSample:
    t: float
    kind: FunctionalKind
    value: float
    dissipation: float | None = None


# -- geometry ------------------------------------------------------------------


def curvature(h: np.ndarray, grid: TorusGrid | None = None) -> np.ndarray:
    """kappa = -div(grad h / sqrt(1 + |grad h|^2)), with the flux dealiased."""
    grid = grid_for(h) if grid is None else grid
    gh = grid.gradient(check_field(grid, h))
    flux = grid.dealias(gh / np.sqrt(1.0 + np.sum(gh ** 2, axis=0)))
    return -grid.divergence(flux)


class Surface:
    """Cached geometric data of one elevation field h."""

    def __init__(self, grid: TorusGrid, h: np.ndarray, strip: StripConfig = DEFAULT_STRIP):
        self.grid = grid
        self.h = check_field(grid, h)
        self.strip = strip

    @cached_property
    def grad(self) -> np.ndarray:
        return self.grid.gradient(self.h)

    @cached_property
    def grad2(self) -> np.ndarray:
        return np.sum(self.grad ** 2, axis=0)

    @cached_property
    def lap(self) -> np.ndarray:
        return self.grid.laplacian(self.h)

    @cached_property
    def hess(self) -> np.ndarray:
        return self.grid.hessian(self.h)

    @cached_property
    def kappa(self) -> np.ndarray:
        return curvature(self.h, self.grid)

    @cached_property
    def solver(self) -> StripSolver:
        return StripSolver(self.grid, self.h, self.strip)

    @cached_property
    def gh(self) -> np.ndarray:
        """G(h)h."""
        return self.G(self.h)

    def G(self, psi: np.ndarray) -> np.ndarray:
        return self.solver.solve(psi).dtn()

    def min_positive(self, what: str) -> None:
        lo = float(np.min(self.h))
        if not lo > POSITIVITY_FLOOR:
            raise PositivityViolated(f"{what} requires min h > {POSITIVITY_FLOOR:g}, got {lo:.3e}")


def _surface(h, grid, cfg, surface) -> Surface:
    if surface is not None:
        return surface
    grid = grid_for(h) if grid is None else grid
    return Surface(grid, h, cfg)


def _need_d1(s: Surface, what: str) -> None:
    if s.grid.dim != 1:
        raise DimensionMismatch(f"{what} is defined in dimension 1 only")


# -- evaluation ----------------------------------------------------------------


def evaluate(kind: FunctionalKind, h: np.ndarray | None = None, h_t: np.ndarray | None = None,
             cfg: StripConfig = DEFAULT_STRIP, *, grid: TorusGrid | None = None,
             surface: Surface | None = None) -> float:
    """Quadrature of the integrand defining ``kind`` at the elevation h."""
    s = _surface(h, grid, cfg, surface)
    g, h = s.grid, s.h
    tag, p = kind.tag, kind.param
    if kind.requires_positive:
        s.min_positive(kind.name)
    if tag == "L2":
        f = h ** 2
    elif tag == "PowerMass":
        f = h if p == 0.0 else h ** (p + 1.0)
    elif tag == "Area":
        f = np.sqrt(1.0 + s.grad2)
    elif tag == "Boltzmann":
        f = h * np.log(h)
    elif tag == "DirichletEnergyDtN":
        f = h * s.gh
    elif tag == "J":
        f = s.kappa * s.gh
    elif tag == "WeightedGradient":
        f = s.grad2 if p == 0.0 else h ** p * s.grad2
    elif tag == "Laugesen":
        _need_d1(s, kind.name)
        f = s.grad2 * h ** (-p)
    elif tag == "ArctanSlope":
        _need_d1(s, kind.name)
        u = s.grad[0]
        f = u * np.arctan(u)
    elif tag == "TimeDerivL2":
        if h_t is None:
            raise ValueError("TimeDerivL2 needs h_t")
        f = check_field(g, h_t) ** 2
    elif tag == "CurvatureEnergy":
        f = (1.0 + s.grad2) * s.kappa ** 2
    elif tag == "ConvexPhi":
        f = {"square": lambda v: v ** 2, "fourth": lambda v: v ** 4, "exp": np.exp}[p](h)
    else:  # pragma: no cover - guarded by FunctionalKind
        raise ValueError(tag)
    return float(g.integrate(f))


def _phi_prime(preset: str, h: np.ndarray) -> np.ndarray:
    return {"square": 2.0 * h, "fourth": 4.0 * h ** 3, "exp": np.exp(h)}[preset]


def thin_film_l2_rate(s: Surface) -> float:
    """-d/dt int h^2 for h_t = -div(h grad Lap h)."""
    hess2 = np.sum(s.hess ** 2, axis=(0, 1))
    return 2.0 * ((2.0 / 3.0) * s.grid.integrate(s.h * hess2)
                  + (1.0 / 3.0) * s.grid.integrate(s.h * s.lap ** 2))


def j_rate_d1(s: Surface, h_t: np.ndarray | None = None) -> float:
    """-dJ/dt along h_t = -G(h)h in d=1 (equality case of the J identity)."""
    _need_d1(s, "the J dissipation identity")
    g = s.grid
    h_t = -s.gh if h_t is None else h_t
    htx = g.derivative(h_t, 0, 1)
    hxx = s.hess[0, 0]
    w = (1.0 + s.grad2) ** 1.5
    theta = theta_field(s.h, h_t, s.strip, surface=s)
    return float(g.integrate((htx ** 2 + hxx ** 2) / w) - g.integrate(s.kappa * theta))


def dissipation_rate(kind: FunctionalKind, equation, h: np.ndarray | None = None,
                     cfg: StripConfig = DEFAULT_STRIP, *, grid: TorusGrid | None = None,
                     surface: Surface | None = None) -> float:
    """Closed-form -dI/dt along ``equation`` at h.

    ``equation`` is an :class:`lyapunov_lab.flows.EquationKind`.
    Raises :class:`NoClosedForm` for unsupported pairs.
    """
    s = _surface(h, grid, cfg, surface)
    g, h = s.grid, s.h
    I = g.integrate
    eq, tag, p = equation.tag, kind.tag, kind.param
    d1 = g.dim == 1

    if kind.requires_positive:
        s.min_positive(kind.name)

    if eq == "Heat":
        if tag == "L2":
            return float(2.0 * I(s.grad2))
        if tag == "Boltzmann":
            return float(I(s.grad2 / h))
        if tag == "WeightedGradient" and p == 0.0:
            return float(2.0 * I(s.lap ** 2))
    elif eq == "HeleShaw":
        gg, mu = equation.g, equation.mu
        if tag == "L2":
            out = 2.0 * gg * I(h * s.gh) if gg else 0.0
            if mu:
                out += 2.0 * mu * I(s.kappa * s.gh)
            return float(out)
        if tag == "Area":
            out = gg * I(s.kappa * s.gh) if gg else 0.0
            if mu:
                out += mu * I(s.kappa * s.G(s.kappa))
            return float(out)
        if tag == "ConvexPhi":
            return float(I(_phi_prime(p, h) * s.G(gg * h + mu * s.kappa)))
        if tag == "J" and mu == 0.0 and d1:
            return gg * j_rate_d1(s)
    elif eq == "Boussinesq":
        if tag == "L2":
            return float(2.0 * I(h * s.grad2))
        if tag == "PowerMass":
            return 0.0 if p == 0.0 else float(p * (p + 1.0) * I(h ** p * s.grad2))
        if tag == "Boltzmann":
            return float(I(s.grad2))
        if tag == "ArctanSlope" and d1:
            return float(2.0 * I(h * s.hess[0, 0] ** 2 / (1.0 + s.grad2) ** 2))
    elif eq == "ThinFilm":
        if tag == "L2":
            return thin_film_l2_rate(s)
        if tag == "PowerMass":
            if p == 0.0:
                return 0.0
            glap = g.gradient(s.lap)
            return float(-p * (p + 1.0) * I(h ** p * np.sum(s.grad * glap, axis=0)))
        if tag == "WeightedGradient" and p == 0.0:
            glap = g.gradient(s.lap)
            return float(2.0 * I(h * np.sum(glap ** 2, axis=0)))
    elif eq == "ThinFilmGravity":
        gg, mu = equation.g, equation.mu
        if tag == "L2":
            return float(2.0 * gg * I(h * s.grad2) + mu * thin_film_l2_rate(s))
        if tag == "WeightedGradient" and p == 0.0:
            glap = g.gradient(s.lap)
            return float(gg * thin_film_l2_rate(s)
                         + 2.0 * mu * I(h * np.sum(glap ** 2, axis=0)))
    elif eq == "MeanCurvature":
        sq = np.sqrt(1.0 + s.grad2)
        if tag == "Area":
            return float(I(sq * s.kappa ** 2))
        if tag == "WeightedGradient" and p == 0.0:
            return float(-2.0 * I(s.lap * sq * s.kappa))
        if d1:
            u = s.grad[0]
            if tag == "L2":
                return float(2.0 * I(u * np.arctan(u)))
            if tag == "ArctanSlope":
                return float(2.0 * I(s.kappa ** 2))
            if tag in ("TimeDerivL2", "CurvatureEnergy"):
                ht = s.hess[0, 0] / (1.0 + s.grad2)
                htx = g.derivative(ht, 0, 1)
                return float(2.0 * I(htx ** 2 / (1.0 + s.grad2)))
    raise NoClosedForm(f"no closed-form dissipation for ({kind.name}, {equation})")


# -- theta and identity residuals -----------------------------------------------


def _zeta_tilde(s: Surface, h_t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w = check_field(s.grid, h_t) ** 2 + s.grad2
    return w, w / (1.0 + s.grad2)


def theta_field(h: np.ndarray | None, h_t: np.ndarray, cfg: StripConfig = DEFAULT_STRIP,
                *, grid: TorusGrid | None = None, surface: Surface | None = None) -> np.ndarray:
    """theta = G(h) zeta - div(zeta grad h) with zeta = (h_t^2 + |grad h|^2)/(1 + |grad h|^2),
    computed as the adjoint operator B(h)* applied to h_t^2 + |grad h|^2."""
    s = _surface(h, grid, cfg, surface)
    w, _ = _zeta_tilde(s, h_t)
    return b_star(s.grid, s.h, w, s.strip, solver=s.solver)


def theta_field_expanded(h: np.ndarray | None, h_t: np.ndarray,
                         cfg: StripConfig = DEFAULT_STRIP, *, grid: TorusGrid | None = None,
                         surface: Surface | None = None) -> np.ndarray:
    """Same theta through the product rule: G(h) zeta - zeta Lap h - grad zeta . grad h."""
    s = _surface(h, grid, cfg, surface)
    _, zeta = _zeta_tilde(s, h_t)
    gz = s.grid.gradient(zeta)
    return s.G(zeta) - zeta * s.lap - np.sum(gz * s.grad, axis=0)


IDENTITIES = ("ThinFilmL2", "JDissipationD1", "HeatBoltzmannPointwise")


def identity_residual(which: str, states: Sequence, cfg: StripConfig = DEFAULT_STRIP,
                      grid: TorusGrid | None = None) -> float:
    """Residual of an exact dissipation identity at the middle of three
    equally spaced trajectory samples.

    ``states`` holds three objects with attributes ``t``, ``h`` and ``h_t``
    (e.g. :class:`lyapunov_lab.flows.FlowState`).  The time derivative of the
    functional is replaced by the centred difference (I(t+dt) - I(t-dt)) / 2dt,
    so the residual converges to zero at second order in dt.  The middle
    sample's ``h_t`` is the analytic right-hand side.
    """
    if which not in IDENTITIES:
        raise ValueError(f"unknown identity {which!r}; expected one of {IDENTITIES}")
    if len(states) != 3:
        raise ValueError("identity_residual needs exactly three samples")
    s0, s1, s2 = states
    dt0, dt1 = s1.t - s0.t, s2.t - s1.t
    if not dt0 > 0 or abs(dt1 - dt0) > 1e-9 * dt0:
        raise ValueError("samples must be equally spaced and increasing in time")
    grid = grid_for(s1.h) if grid is None else grid
    if which == "JDissipationD1" and grid.dim != 1:
        raise DimensionMismatch("JDissipationD1 is an identity in dimension 1 only")
    ddt = lambda a, c: (c - a) / (2.0 * dt0)  # noqa: E731

    if which == "ThinFilmL2":
        vals = [grid.integrate(np.asarray(st.h) ** 2) for st in (s0, s2)]
        rate = thin_film_l2_rate(Surface(grid, s1.h, cfg))
        return float(abs(ddt(*vals) + rate))

    if which == "HeatBoltzmannPointwise":
        for st in states:
            if np.min(st.h) < 1.0:
                raise DomainError("HeatBoltzmannPointwise requires min h >= 1")
        f0, f2 = (np.asarray(st.h) * np.log(st.h) for st in (s0, s2))
        h1 = np.asarray(s1.h)
        res = ddt(f0, f2) - grid.laplacian(h1 * np.log(h1)) + np.sum(grid.gradient(h1) ** 2, axis=0) / h1
        return float(np.max(np.abs(res)))

    # JDissipationD1
    surf = [Surface(grid, st.h, cfg) for st in (s0, s1, s2)]
    J0, J2 = (evaluate(J, surface=sf) for sf in (surf[0], surf[2]))
    rate = j_rate_d1(surf[1], s1.h_t)
    return float(abs(ddt(J0, J2) + rate))
