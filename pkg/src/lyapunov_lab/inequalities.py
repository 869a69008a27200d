"""Functional inequalities on the torus and the explicit constants attached to them.

Every check returns an :class:`InequalityReport`.  Margins are relative,
(rhs - lhs) / |rhs|, with an absolute fallback when |rhs| < 1e-12.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from .errors import DomainError, PositivityViolated
from .harmonic import DEFAULT_STRIP, StripConfig, StripSolver
from .spectral import TorusGrid, check_field, grid_for

REL_TOL = 1e-10
ABS_TOL = 1e-14
RHS_FLOOR = 1e-12


def margin_of(lhs: float, rhs: float) -> tuple[float, bool]:
    """Normalized margin and whether it counts as a violation."""
    if abs(rhs) >= RHS_FLOOR:
        m = (rhs - lhs) / abs(rhs)
        return m, m < -REL_TOL
    m = rhs - lhs
    return m, m < -ABS_TOL


@dataclass
class InequalityReport:
    name: str
    trials: int
    lhs: float
    rhs: float
    min_margin: float
    violations: int
    seeds_of_violations: list = field(default_factory=list)
    worst_seed: int | None = None

    @property
    def passed(self) -> bool:
        return self.violations == 0

    @classmethod
    def single(cls, name: str, lhs: float, rhs: float, seed: int | None = None) -> "InequalityReport":
        m, bad = margin_of(lhs, rhs)
        return cls(name, 1, float(lhs), float(rhs), float(m), int(bad),
                   [seed] if bad and seed is not None else [], seed)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "InequalityReport":
        return cls(**json.loads(text))


# -- Sobolev-type inequalities ---------------------------------------------------


def sobolev_sides(theta: np.ndarray, mu: float, grid: TorusGrid | None = None) -> tuple[float, float]:
    grid = grid_for(theta) if grid is None else grid
    th = check_field(grid, theta)
    if not np.min(th) > 0:
        raise PositivityViolated(f"theta must be positive, min = {np.min(th):.3e}")
    gr = grid.gradient(th)
    g2 = np.sum(gr ** 2, axis=0)
    lap = grid.laplacian(th)
    I = grid.integrate
    if mu == -1:
        # |grad theta^{1/2}|^4 = |grad theta|^4 / (16 theta^2)
        return float(I(g2 ** 2 / (16.0 * th ** 2))), float(9.0 / 16.0 * I(lap ** 2))
    hess2 = np.sum(grid.hessian(th) ** 2, axis=(0, 1))
    w = th ** (mu + 1.0)
    lhs = mu ** 2 / 3.0 * I(th ** (mu - 1.0) * g2 ** 2)
    rhs = I(w * lap ** 2) + 2.0 * I(w * hess2)
    return float(lhs), float(rhs)


def check_sobolev(theta: np.ndarray, mu: float, grid: TorusGrid | None = None,
                  seed: int | None = None) -> InequalityReport:
    """mu = -1: int |grad theta^{1/2}|^4 <= 9/16 int (Lap theta)^2.
    Otherwise: mu^2/3 int theta^{mu-1}|grad theta|^4
    <= int theta^{mu+1}(Lap theta)^2 + 2 int theta^{mu+1}|Hess theta|^2."""
    lhs, rhs = sobolev_sides(theta, mu, grid)
    return InequalityReport.single(f"sobolev(mu={mu:g})", lhs, rhs, seed)


# -- Rellich-type estimate -----------------------------------------------------------


def rellich_sides(h: np.ndarray, zeta: np.ndarray, strip: StripConfig = DEFAULT_STRIP,
                  grid: TorusGrid | None = None,
                  solver: StripSolver | None = None) -> tuple[float, float]:
    grid = grid_for(h) if grid is None else grid
    solver = StripSolver(grid, h, strip) if solver is None else solver
    zeta = check_field(grid, zeta)
    Gz = solver.solve(zeta).dtn()
    gh = solver.grad_h
    w = 1.0 + solver.grad_h2
    gz = grid.gradient(zeta)
    B = (Gz + np.sum(gz * gh, axis=0)) / w
    lhs = grid.integrate(Gz ** 2)
    rhs = grid.integrate(w * np.sum((gz - B * gh) ** 2, axis=0))
    return float(lhs), float(rhs)


def check_rellich(h: np.ndarray, zeta: np.ndarray, strip: StripConfig = DEFAULT_STRIP,
                  grid: TorusGrid | None = None, seed: int | None = None) -> InequalityReport:
    """int (G(h)zeta)^2 <= int (1+|grad h|^2)|grad zeta - B grad h|^2,
    B = (G(h)zeta + grad zeta . grad h)/(1+|grad h|^2)."""
    lhs, rhs = rellich_sides(h, zeta, strip, grid)
    return InequalityReport.single("rellich", lhs, rhs, seed)


# -- pointwise divergence bound -------------------------------------------------------


def check_div_bound(v: np.ndarray, grid: TorusGrid | None = None) -> InequalityReport:
    """(div v)^2 <= d |grad v|^2 at every node; the worst node is reported."""
    v = np.asarray(v, dtype=float)
    if grid is None:
        grid = grid_for(v[0])
    if v.shape[0] != grid.dim:
        raise ValueError(f"vector field needs {grid.dim} components, got {v.shape[0]}")
    div = grid.divergence(v)
    jac2 = sum(np.sum(grid.gradient(v[i]) ** 2, axis=0) for i in range(grid.dim))
    lhs = div ** 2
    rhs = grid.dim * jac2
    worst = None
    out = None
    count = 0
    for l_, r_ in zip(lhs.ravel(), rhs.ravel()):
        m, bad = margin_of(l_, r_)
        count += bad
        if worst is None or m < worst:
            worst, out = m, (l_, r_)
    return InequalityReport("div_bound", int(lhs.size), float(out[0]), float(out[1]),
                            float(worst), int(count))


# -- constants -------------------------------------------------------------------------


def gamma_d(c: float, d: int) -> float:
    """2c(d + (d+sqrt d)c) + 4 sqrt(c(d + (d+1)c)(12/(1-2c) + 1)) for 0 <= c < 1/2."""
    if not 0.0 <= c < 0.5:
        raise DomainError(f"gamma_d needs 0 <= c < 1/2, got {c}")
    if d < 1:
        raise DomainError(f"dimension must be >= 1, got {d}")
    return (2.0 * c * (d + (d + math.sqrt(d)) * c)
            + 4.0 * math.sqrt(c * (d + (d + 1) * c) * (12.0 / (1.0 - 2.0 * c) + 1.0)))


_C_D_CACHE: dict = {}


def solve_c_d(d: int) -> float:
    """Root of gamma_d(c) = 1/2 in [0, 1/4] by bisection (gamma_d is increasing)."""
    if d not in _C_D_CACHE:
        f = lambda c: gamma_d(c, d) - 0.5  # noqa: E731
        if not (f(0.0) < 0.0 < f(0.25)):
            raise DomainError(f"no sign change of gamma_{d} - 1/2 on [0, 1/4]")
        _C_D_CACHE[d] = optimize.bisect(f, 0.0, 0.25, xtol=1e-300, rtol=1e-15, maxiter=2000)
    return _C_D_CACHE[d]


@dataclass(frozen=True)
class EntropyConstants:
    c_thinfilm: float
    c_boussinesq: float


def entropy_constants(m: float) -> EntropyConstants:
    """C_m for the thin-film power entropies and for the Boussinesq weighted
    gradient functionals."""
    if m == -1:
        raise DomainError("c_boussinesq is undefined at m = -1")
    c_tf = (-2.0 * m * m + m + 1.0) / 9.0
    c_b = (m + 2.0) / (m + 1.0) * (m + 3.0) ** 2 / 36.0 - (m * m - m + 2.0) / 4.0
    return EntropyConstants(c_tf, c_b)


def check_bvy_coercivity(alpha: float) -> float:
    """1/9 + (1/alpha - 1/4) * 4 / (3 alpha - 2)^2, defined for alpha > 2/3."""
    if not alpha > 2.0 / 3.0:
        raise DomainError(f"alpha must exceed 2/3, got {alpha}")
    return 1.0 / 9.0 + (1.0 / alpha - 0.25) * 4.0 / (3.0 * alpha - 2.0) ** 2


# -- randomized fuzzing ------------------------------------------------------------------


@dataclass(frozen=True)
class RandomFieldSpec:
    """Random smooth fields offset + amplitude * f with max|f| = 1 and Fourier
    coefficients ~ |k|^-decay * N(0, 1), band-limited to |k_i| <= kcut."""

    grid: TorusGrid
    spectral_decay: float = 2.5
    amplitude: float = 1.0
    offset: float = 0.0
    seed: int = 0
    kcut: int | None = None
    max_slope: float | None = None

    @property
    def positive(self) -> bool:
        return self.offset > self.amplitude

    def rng(self, trial: int) -> np.random.Generator:
        return np.random.default_rng(self.seed + trial)

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        f = self.offset + self.amplitude * self.grid.random_field(rng, self.spectral_decay, self.kcut)
        if self.max_slope is not None:
            f0 = f - self.offset
            slope = float(np.sqrt(np.max(np.sum(self.grid.gradient(f0) ** 2, axis=0))))
            if slope > self.max_slope:
                f = self.offset + f0 * (self.max_slope / slope)
        return f

    def sample(self, trial: int) -> np.ndarray:
        return self.draw(self.rng(trial))


FUZZ_TARGETS = ("sobolev", "rellich")


def _trial(spec: RandomFieldSpec, which: str, i: int, mu, strip) -> tuple[float, float]:
    if which == "sobolev":
        return sobolev_sides(spec.sample(i), mu, spec.grid)
    rng = spec.rng(i)
    h = spec.draw(rng)
    zeta = spec.grid.random_field(rng, spec.spectral_decay, spec.kcut)
    return rellich_sides(h, zeta, strip, spec.grid)


def fuzz(spec: RandomFieldSpec, which: str, trials: int, mu: float = -1.0,
         strip: StripConfig = DEFAULT_STRIP, workers: int = 1) -> InequalityReport:
    """Run ``trials`` independent checks; trial i uses seed ``spec.seed + i``,
    so the report does not depend on ``workers``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if which not in FUZZ_TARGETS:
        raise ValueError(f"unknown fuzz target {which!r}; expected one of {FUZZ_TARGETS}")
    if which == "sobolev" and not spec.positive:
        raise ValueError("sobolev fuzzing needs offset > amplitude (positive fields)")
    job = lambda i: _trial(spec, which, i, mu, strip)  # noqa: E731
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            sides = list(ex.map(job, range(trials)))
    else:
        sides = [job(i) for i in range(trials)]
    name = f"sobolev(mu={mu:g})" if which == "sobolev" else "rellich"
    worst_m, worst_i, bad = math.inf, 0, []
    for i, (l_, r_) in enumerate(sides):
        m, v = margin_of(l_, r_)
        if v:
            bad.append(spec.seed + i)
        if m < worst_m:
            worst_m, worst_i = m, i
    l_, r_ = sides[worst_i]
    return InequalityReport(f"{name},d={spec.grid.dim}", trials, float(l_), float(r_), float(worst_m),
                            len(bad), bad, spec.seed + worst_i)
