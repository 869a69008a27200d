"""Harmonic extension below a periodic graph and the Dirichlet-to-Neumann map.

The fluid domain {y < h(x)} is truncated at y = -beta.  Below that line the
domain is a flat half-space, so a decaying harmonic function satisfies the
exact transparent relation d_y phi = |D_x| phi there.  The strip
-beta < y < h(x) is mapped to sigma in [0, 1] by

    sigma = (y + beta) / (h(x) + beta),

and the mapped Laplace equation (multiplied by eta^2, eta = h + beta)

    eta^2 Lap_x u - 2 sigma eta grad h . grad u_s
        + (1 + sigma^2 |grad h|^2) u_ss + sigma (2 |grad h|^2 - eta Lap h) u_s = 0

is collocated with Fourier modes in x and Chebyshev points in sigma.  The
linear system is solved by GMRES, left-preconditioned with the exact
mode-by-mode solver for the same problem with eta frozen to its mean.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .errors import DegeneratePressure, GeometryError, IllConditioned, NonpositiveTaylor
from .spectral import TorusGrid, check_field


def cheb(m: int):
    """Chebyshev points x_j = cos(pi j/(m-1)) and the differentiation matrix."""
    N = m - 1
    j = np.arange(m)
    x = np.cos(np.pi * j / N)
    c = np.where((j == 0) | (j == N), 2.0, 1.0) * (-1.0) ** j
    X = x[:, None] - x[None, :]
    D = np.outer(c, 1.0 / c) / (X + np.eye(m))
    D -= np.diag(D.sum(axis=1))
    return x, D


def clenshaw_curtis(m: int) -> np.ndarray:
    """Clenshaw-Curtis weights for the nodes of :func:`cheb` on [-1, 1]."""
    N = m - 1
    theta = np.pi * np.arange(m) / N
    w = np.zeros(m)
    v = np.ones(N - 1)
    if N % 2 == 0:
        w[0] = w[N] = 1.0 / (N ** 2 - 1)
        for k in range(1, N // 2):
            v -= 2.0 * np.cos(2 * k * theta[1:-1]) / (4 * k ** 2 - 1)
        v -= np.cos(N * theta[1:-1]) / (N ** 2 - 1)
    else:
        w[0] = w[N] = 1.0 / N ** 2
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[1:-1]) / (4 * k ** 2 - 1)
    w[1:-1] = 2.0 * v / N
    return w


@dataclass(frozen=True)
class StripConfig:
    """Truncation depth and vertical resolution of the strip solver.

    ``beta=None`` selects 1 + 2 max|h| for each surface.
    """

    beta: float | None = None
    m_vert: int = 48
    tol: float = 1e-14
    maxiter: int = 400

    def __post_init__(self):
        if self.m_vert < 16:
            raise ValueError(f"m_vert must be >= 16, got {self.m_vert}")
        if self.beta is not None and not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")

    def depth_for(self, h: np.ndarray) -> float:
        beta = 1.0 + 2.0 * float(np.max(np.abs(h))) if self.beta is None else self.beta
        if not beta > -float(np.min(h)):
            raise GeometryError(
                f"beta={beta} does not put y=-beta below the surface (min h={np.min(h)})")
        return beta


DEFAULT_STRIP = StripConfig()


class _Vertical:
    """Chebyshev data on sigma in [0, 1]; index 0 is the surface sigma = 1."""

    _cache: dict = {}

    def __new__(cls, m):
        if m not in cls._cache:
            obj = super().__new__(cls)
            x, D = cheb(m)
            obj.m = m
            obj.sigma = 0.5 * (x + 1.0)
            obj.D1 = 2.0 * D
            obj.D2 = obj.D1 @ obj.D1
            obj.weights = 0.5 * clenshaw_curtis(m)
            cls._cache[m] = obj
        return cls._cache[m]


class StripSolver:
    """Discrete harmonic-extension operator for one surface h.

    Immutable after construction; :meth:`solve` may be called for many
    boundary data and is reentrant.
    """

    def __init__(self, grid: TorusGrid, h: np.ndarray, cfg: StripConfig = DEFAULT_STRIP):
        self.grid = grid
        self.h = check_field(grid, h)
        self.cfg = cfg
        self.beta = cfg.depth_for(self.h)
        self.vert = _Vertical(cfg.m_vert)
        m = cfg.m_vert
        bshape = (m,) + (1,) * grid.dim
        self.sigma = self.vert.sigma.reshape(bshape)
        self.eta = self.h + self.beta
        self.grad_h = grid.gradient(self.h)
        self.grad_h2 = np.sum(self.grad_h ** 2, axis=0)
        self.lap_h = grid.laplacian(self.h)
        s = self.sigma
        self.c_lap = self.eta ** 2
        self.c_ss = 1.0 + s ** 2 * self.grad_h2
        self.c_s = s * (2.0 * self.grad_h2 - self.eta * self.lap_h)
        self.c_cross = -2.0 * self.sigma[None] * self.eta * self.grad_h[:, None]
        self._build_preconditioner()

    # -- linear algebra -------------------------------------------------------

    def _build_preconditioner(self):
        g, v = self.grid, self.vert
        m = v.m
        eta2 = float(np.mean(self.eta ** 2))
        eta1 = float(np.mean(self.eta))
        kabs = g.kabs
        uniq, inv = np.unique(np.round(kabs, 12), return_inverse=True)
        mats = np.empty((uniq.size, m, m))
        for i, kk in enumerate(uniq):
            M = v.D2 - eta2 * kk ** 2 * np.eye(m)
            M[0] = 0.0
            M[0, 0] = 1.0
            M[-1] = v.D1[-1]
            M[-1, -1] -= eta1 * kk
            mats[i] = np.linalg.inv(M)
        self._pinv = mats[inv.ravel()]

    def _precondition(self, r: np.ndarray) -> np.ndarray:
        g = self.grid
        rh = g.fft(r)  # (m, *kshape)
        m = rh.shape[0]
        flat = rh.reshape(m, -1)
        out = np.einsum("kij,jk->ik", self._pinv, flat)
        return g.ifft(out.reshape(rh.shape))

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Collocation operator: interior rows, Dirichlet top row, transparent bottom row."""
        g, v = self.grid, self.vert
        us = np.tensordot(v.D1, u, axes=(1, 0))
        uss = np.tensordot(v.D2, u, axes=(1, 0))
        uh = g.fft(u)
        lap = g.ifft(-(g.kabs ** 2) * uh)
        ush = g.fft(us)
        cross = 0.0
        for i, ki in enumerate(g.k):
            gh = 1j * ki * ush
            gh[..., g.nyquist_mask] = 0.0
            cross = cross + self.c_cross[i] * g.ifft(gh)
        out = self.c_lap * lap + cross + self.c_ss * uss + self.c_s * us
        out[0] = u[0]
        out[-1] = us[-1] - self.eta * g.ifft(g.kabs * uh[-1])
        return out

    def solve(self, psi: np.ndarray) -> "HarmonicExtension":
        g = self.grid
        psi = check_field(g, psi)
        m = self.vert.m
        shape = (m,) + g.shape
        b = np.zeros(shape)
        b[0] = psi
        pb = self._precondition(b)
        size = pb.size

        def mv(x):
            return self._precondition(self.apply(x.reshape(shape))).ravel()

        op = spla.LinearOperator((size, size), matvec=mv, dtype=float)
        bnorm = np.linalg.norm(pb)
        if bnorm == 0.0:
            return HarmonicExtension(self, psi, np.zeros(shape), 0.0)
        x, info = spla.gmres(op, pb.ravel(), x0=pb.ravel(), rtol=self.cfg.tol,
                             atol=0.0, restart=80, maxiter=self.cfg.maxiter)
        u = x.reshape(shape)
        res = np.linalg.norm(mv(x) - pb.ravel()) / bnorm
        if not np.isfinite(res) or res > 1e-9:
            raise IllConditioned(f"strip solve residual {res:.3e} exceeds 1e-9 (info={info})")
        return HarmonicExtension(self, psi, u, res)

    def solve_direct(self, psi: np.ndarray) -> "HarmonicExtension":
        """Dense LU of the assembled collocation matrix (small grids only)."""
        g = self.grid
        m = self.vert.m
        shape = (m,) + g.shape
        size = int(np.prod(shape))
        A = np.empty((size, size))
        e = np.zeros(size)
        for j in range(size):
            e[j] = 1.0
            A[:, j] = self.apply(e.reshape(shape)).ravel()
            e[j] = 0.0
        b = np.zeros(shape)
        b[0] = check_field(g, psi)
        u = sla.solve(A, b.ravel()).reshape(shape)
        res = np.linalg.norm(A @ u.ravel() - b.ravel()) / max(np.linalg.norm(b), 1e-300)
        return HarmonicExtension(self, b[0], u, res)

    # -- mapped-coordinate calculus -------------------------------------------

    def physical_gradient(self, f: np.ndarray) -> np.ndarray:
        """(grad_x f, d_y f) at fixed y for f sampled on (sigma, x) nodes."""
        g, v = self.grid, self.vert
        fs = np.tensordot(v.D1, f, axes=(1, 0))
        gx = g.gradient(f)
        a = -self.sigma[None] * self.grad_h[:, None] / self.eta  # d sigma / dx at fixed y
        comps = [gx[i] + a[i] * fs for i in range(g.dim)]
        comps.append(fs / self.eta)
        return np.stack(comps)

    def vertical_integral(self, f: np.ndarray) -> float:
        """Integral of f over the strip -beta < y < h(x)."""
        w = self.vert.weights.reshape((-1,) + (1,) * self.grid.dim)
        col = np.sum(w * f, axis=0) * self.eta
        return float(self.grid.integrate(col))

    def residual(self, ext: "HarmonicExtension") -> np.ndarray:
        """Mapped Laplacian of the discrete solution divided by eta^2, interior nodes."""
        r = self.apply(ext.u) / self.eta ** 2
        return r[1:-1]


@dataclass(frozen=True)
class HarmonicExtension:
    solver: StripSolver
    psi: np.ndarray
    u: np.ndarray  # phi(x, sigma_j), shape (m_vert, *grid.shape)
    solve_residual: float

    @property
    def surface(self) -> np.ndarray:
        return self.solver.h

    @property
    def phi(self) -> np.ndarray:
        return self.u

    @cached_property
    def u_sigma(self) -> np.ndarray:
        return np.tensordot(self.solver.vert.D1, self.u, axes=(1, 0))

    @cached_property
    def dy_top(self) -> np.ndarray:
        return self.u_sigma[0] / self.solver.eta

    def dtn(self) -> np.ndarray:
        """G(h) psi = (d_y phi - grad h . grad_x phi)|_{y=h}."""
        s = self.solver
        gpsi = s.grid.gradient(self.psi)
        return (1.0 + s.grad_h2) * self.dy_top - np.sum(s.grad_h * gpsi, axis=0)

    def bottom_trace(self) -> np.ndarray:
        return self.u[-1]

    def y_nodes(self) -> np.ndarray:
        s = self.solver
        return -s.beta + s.sigma * s.eta


def solve_harmonic(grid: TorusGrid, h, psi, cfg: StripConfig = DEFAULT_STRIP) -> HarmonicExtension:
    return StripSolver(grid, h, cfg).solve(psi)


def dtn(grid: TorusGrid, h, psi, cfg: StripConfig = DEFAULT_STRIP) -> np.ndarray:
    """Normalized Dirichlet-to-Neumann operator G(h) psi."""
    return solve_harmonic(grid, h, psi, cfg).dtn()


def dtn_expansion(grid: TorusGrid, h, psi, order: int = 2) -> np.ndarray:
    """Small-amplitude expansion G0 + G1 + G2 of G(h) psi (Craig-Sulem recursion)."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    D = grid.abs_d
    out = D(psi)
    if order >= 1:
        out = out - D(h * D(psi)) - grid.divergence(h * grid.gradient(psi))
    if order >= 2:
        # G2 = -1/2 (|D|^2 h^2 |D| + |D| h^2 |D|^2 - 2 |D| h |D| h |D|)
        g0 = D(psi)
        out = out - 0.5 * (D(h ** 2 * g0, 2.0) + D(h ** 2 * D(psi, 2.0))
                           - 2.0 * D(h * D(h * g0)))
    return out


def taylor_coefficient(grid: TorusGrid, h, cfg: StripConfig = DEFAULT_STRIP,
                       ext: HarmonicExtension | None = None) -> np.ndarray:
    """a = (1 - G(h)h) / (1 + |grad h|^2); warns when min a <= 0."""
    ext = solve_harmonic(grid, h, h, cfg) if ext is None else ext
    a = (1.0 - ext.dtn()) / (1.0 + ext.solver.grad_h2)
    if np.min(a) <= 0:
        warnings.warn(f"Taylor coefficient min a = {np.min(a):.3e} <= 0", NonpositiveTaylor)
    return a


@dataclass(frozen=True)
class PressureDiagnostics:
    """Q = phi - y with phi the harmonic extension of h, on every strip node."""

    ext: HarmonicExtension
    a: np.ndarray
    q: np.ndarray
    grad_q: np.ndarray  # (d+1, m, *grid)
    hess_q: np.ndarray  # (d+1, d+1, m, *grid)
    normal: np.ndarray  # (d+1, *grid)

    @property
    def grad_q_norm2(self) -> np.ndarray:
        return np.sum(self.grad_q ** 2, axis=0)

    def a_from_strip(self) -> np.ndarray:
        """-d_y Q on the surface, from the strip solution directly."""
        return -self.grad_q[-1][0]


def pressure_diagnostics(grid: TorusGrid, h, cfg: StripConfig = DEFAULT_STRIP) -> PressureDiagnostics:
    solver = StripSolver(grid, h, cfg)
    ext = solver.solve(solver.h)
    y = ext.y_nodes()
    q = ext.u - y
    grad_phi = solver.physical_gradient(ext.u)
    grad_q = grad_phi.copy()
    grad_q[-1] -= 1.0
    d1 = grid.dim + 1
    hess = np.empty((d1, d1) + grad_q.shape[1:])
    for i in range(d1):
        hess[:, i] = solver.physical_gradient(grad_q[i])
    hess = 0.5 * (hess + np.swapaxes(hess, 0, 1))
    nrm = np.sqrt(1.0 + solver.grad_h2)
    normal = np.concatenate([-solver.grad_h, np.ones((1,) + grid.shape)]) / nrm
    a = taylor_coefficient(grid, h, cfg, ext=ext)
    return PressureDiagnostics(ext, a, q, grad_q, hess, normal)


def _volume_integrand(g: np.ndarray, H: np.ndarray) -> np.ndarray:
    g2 = np.sum(g ** 2, axis=0)
    if np.min(g2) < 1e-16:
        raise DegeneratePressure(f"min |grad Q| = {np.sqrt(np.min(g2)):.3e} < 1e-8")
    H2 = np.sum(H ** 2, axis=(0, 1))
    gH = np.einsum("i...,ij...->j...", g, H)
    return (g2 * H2 - np.sum(gH ** 2, axis=0)) / g2 ** 1.5


def _tail_integral(grid: TorusGrid, trace: np.ndarray, nodes: int = 40) -> float:
    """Volume integral over the half-space y < -beta, where
    phi = sum_k c_k e^{-|k| z} e^{ik.x} with z = -(y + beta).

    Depth uses Gauss-Laguerre nodes after z = s/2, which makes the slowest
    quadratic contribution (|k| = 1) a constant against the weight e^{-s}.
    """
    s_nodes, w_nodes = np.polynomial.laguerre.laggauss(nodes)
    ch = grid.fft(trace)
    ks, kabs = grid.k, grid.kabs
    d = grid.dim
    total = 0.0
    for s, w in zip(s_nodes, w_nodes):
        c = ch * np.exp(-kabs * (0.5 * s))
        grad = [grid.ifft(1j * ki * c) for ki in ks] + [grid.ifft(kabs * c) - 1.0]
        H = np.empty((d + 1, d + 1) + grid.shape)
        for i in range(d):
            for j in range(i, d):
                H[i, j] = H[j, i] = grid.ifft(-ks[i] * ks[j] * c)
            H[i, d] = H[d, i] = grid.ifft(1j * ks[i] * kabs * c)
        H[d, d] = grid.ifft(kabs ** 2 * c)
        f = _volume_integrand(np.stack(grad), H)
        total += 0.5 * w * np.exp(s) * float(grid.integrate(f))
    return total


def j_volume(grid: TorusGrid, h, cfg: StripConfig = DEFAULT_STRIP,
             diag: PressureDiagnostics | None = None) -> float:
    """Volume form of J(h): integral over the fluid of

        (|grad Q|^2 |Hess Q|^2 - |grad Q . Hess Q|^2) / |grad Q|^3.

    The strip part uses Clenshaw-Curtis quadrature.  Below y = -beta the
    extension is the explicit series sum_k c_k e^{|k|(y+beta)} e^{ik.x}, and the
    same integrand is evaluated from it and integrated in depth by Gauss-Laguerre.
    """
    diag = pressure_diagnostics(grid, h, cfg) if diag is None else diag
    integrand = _volume_integrand(diag.grad_q, diag.hess_q)
    strip = diag.ext.solver.vertical_integral(integrand)
    return strip + _tail_integral(grid, diag.ext.bottom_trace())


def b_operator(grid: TorusGrid, h, psi, cfg: StripConfig = DEFAULT_STRIP,
               solver: StripSolver | None = None) -> np.ndarray:
    """B(h) psi = (G(h) psi + grad h . grad psi) / (1 + |grad h|^2)."""
    solver = StripSolver(grid, h, cfg) if solver is None else solver
    G = solver.solve(psi).dtn()
    return (G + np.sum(solver.grad_h * grid.gradient(psi), axis=0)) / (1.0 + solver.grad_h2)


def b_star(grid: TorusGrid, h, psi, cfg: StripConfig = DEFAULT_STRIP,
           solver: StripSolver | None = None) -> np.ndarray:
    """Adjoint B(h)* psi = G(h)(psi / (1+|grad h|^2)) - div(psi grad h / (1+|grad h|^2))."""
    solver = StripSolver(grid, h, cfg) if solver is None else solver
    w = np.asarray(psi) / (1.0 + solver.grad_h2)
    return solver.solve(w).dtn() - grid.divergence(w * solver.grad_h)
