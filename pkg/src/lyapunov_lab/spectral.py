"""Fourier pseudospectral machinery on the torus T^d = [0, 2pi)^d, d in {1, 2}.

Fields are plain real numpy arrays of shape ``grid.shape``.  Every operator
also accepts arrays with extra *leading* axes (e.g. one horizontal slice per
vertical collocation level), transforming only the trailing ``dim`` axes.

Internally the real-to-complex FFT is used.  Wavenumbers are integers because
the period is fixed to 2pi on every axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidField

TWO_PI = 2.0 * np.pi
# spectral_tail threshold below which a field counts as resolved
RESOLVED_TAIL = 1e-10


@dataclass(frozen=True)
class SpectralField:
    """Fourier-series coefficients c_k of a real field, f(x) = sum_k c_k e^{ik.x}.

    ``coeffs`` uses numpy's full FFT ordering along every axis.
    """

    grid: "TorusGrid"
    coeffs: np.ndarray

    def at(self, *k: int) -> complex:
        idx = tuple(int(ki) % self.grid.n for ki in k)
        return complex(self.coeffs[idx])


@dataclass(frozen=True)
class TorusGrid:
    dim: int
    n: int
    shape: tuple = field(init=False, repr=False)
    axes: tuple = field(init=False, repr=False)
    k: tuple = field(init=False, repr=False)
    kabs: np.ndarray = field(init=False, repr=False)
    dealias_mask: np.ndarray = field(init=False, repr=False)
    nyquist_mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 8 or self.n % 2:
            raise ValueError(f"n must be an even integer >= 8, got {self.n}")
        n, d = self.n, self.dim
        set_ = object.__setattr__
        set_(self, "shape", (n,) * d)
        set_(self, "axes", tuple(range(-d, 0)))
        full = np.fft.fftfreq(n, 1.0 / n)
        half = np.fft.rfftfreq(n, 1.0 / n)
        if d == 1:
            ks = (half,)
        else:
            ks = (full[:, None], half[None, :])
        set_(self, "k", ks)
        kabs = np.sqrt(sum(ki.astype(float) ** 2 for ki in ks))
        set_(self, "kabs", kabs)
        cut = n / 3.0
        keep = np.ones(kabs.shape, dtype=bool)
        nyq = np.zeros(kabs.shape, dtype=bool)
        for ki in ks:
            keep &= np.abs(ki) <= cut
            nyq |= np.abs(ki) == n // 2
        set_(self, "dealias_mask", keep)
        set_(self, "nyquist_mask", nyq)

    # -- nodes and quadrature -------------------------------------------------

    @property
    def x(self) -> tuple:
        """Node coordinates x_j = 2 pi j / n, broadcast to ``shape``."""
        x1 = TWO_PI * np.arange(self.n) / self.n
        if self.dim == 1:
            return (x1,)
        return tuple(np.meshgrid(x1, x1, indexing="ij"))

    @property
    def volume(self) -> float:
        return TWO_PI ** self.dim

    @property
    def kmax_dealiased(self) -> int:
        return int(self.n // 3)

    def integrate(self, f: np.ndarray) -> np.ndarray:
        """Trapezoid rule on the torus, exact for trig polynomials below Nyquist."""
        return np.mean(f, axis=self.axes) * self.volume

    # -- transforms -----------------------------------------------------------

    def fft(self, f: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(f, axes=self.axes)

    def ifft(self, fh: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(fh, s=self.shape, axes=self.axes)

    def transform(self, f: np.ndarray) -> SpectralField:
        f = check_field(self, f)
        coeffs = np.fft.fftn(f, axes=self.axes) / self.n ** self.dim
        # enforce Hermitian symmetry exactly: c(-k) = conj c(k)
        flipped = np.conj(np.roll(np.flip(coeffs, axis=self.axes), 1, axis=self.axes))
        coeffs = 0.5 * (coeffs + flipped)
        return SpectralField(self, coeffs)

    def inverse(self, fs: SpectralField) -> np.ndarray:
        return np.real(np.fft.ifftn(fs.coeffs * self.n ** self.dim, axes=self.axes))

    # -- differentiation ------------------------------------------------------

    def partial(self, f: np.ndarray, orders: tuple) -> np.ndarray:
        """Mixed spectral derivative; ``orders[i]`` is the order along axis i."""
        if len(orders) != self.dim:
            raise ValueError("one derivative order per axis required")
        sym = 1.0 + 0j
        for ki, p in zip(self.k, orders):
            if p:
                sym = sym * (1j * ki) ** p
        fh = self.fft(f) * sym
        fh[..., self.nyquist_mask] = 0.0
        return self.ifft(fh)

    def derivative(self, f: np.ndarray, axis: int = 0, order: int = 1) -> np.ndarray:
        if order < 1:
            raise ValueError("order must be >= 1")
        if not 0 <= axis < self.dim:
            raise ValueError(f"axis {axis} out of range for dim={self.dim}")
        orders = [0] * self.dim
        orders[axis] = order
        return self.partial(f, tuple(orders))

    def gradient(self, f: np.ndarray) -> np.ndarray:
        """Stacked gradient, shape (dim, ...)."""
        fh = self.fft(f)
        out = []
        for ki in self.k:
            gh = 1j * ki * fh
            gh[..., self.nyquist_mask] = 0.0
            out.append(self.ifft(gh))
        return np.stack(out)

    def divergence(self, v: np.ndarray) -> np.ndarray:
        acc = 0.0
        for i, ki in enumerate(self.k):
            acc = acc + 1j * ki * self.fft(v[i])
        acc = acc * ~self.nyquist_mask
        return self.ifft(acc)

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        return self.ifft(-(self.kabs ** 2) * self.fft(f))

    def hessian(self, f: np.ndarray) -> np.ndarray:
        """Matrix of second derivatives, shape (dim, dim, ...)."""
        fh = self.fft(f)
        d = self.dim
        out = np.empty((d, d) + np.shape(f))
        for i in range(d):
            for j in range(i, d):
                hh = -(self.k[i] * self.k[j]) * fh
                if i != j:
                    hh = hh * ~self.nyquist_mask
                out[i, j] = self.ifft(hh)
                out[j, i] = out[i, j]
        return out

    def multiplier(self, f: np.ndarray, symbol) -> np.ndarray:
        """Apply a real Fourier multiplier.

        ``symbol`` is either an array on the rfft wavevector layout or a callable
        ``symbol(kabs, *k)`` evaluated on it.
        """
        sym = symbol(self.kabs, *self.k) if callable(symbol) else np.asarray(symbol)
        sym = np.broadcast_to(sym, self.kabs.shape)
        if not np.all(np.isfinite(sym)):
            raise InvalidField("multiplier symbol is not finite on the grid")
        return self.ifft(self.fft(f) * sym)

    def abs_d(self, f: np.ndarray, s: float = 1.0) -> np.ndarray:
        """|D|^s f, i.e. (-Delta)^{s/2} f; the zero mode is mapped to zero."""
        return self.ifft(self.fft(f) * self.kabs ** s)

    def dealias(self, f: np.ndarray) -> np.ndarray:
        """2/3 rule: zero every mode with some |k_i| > n/3."""
        return self.ifft(self.fft(f) * self.dealias_mask)

    # -- diagnostics ----------------------------------------------------------

    def spectral_tail(self, f: np.ndarray) -> float:
        """Largest Fourier amplitude with some |k_i| > n/6, relative to the
        largest nonzero-mode amplitude; 0 for constant fields.  Values below
        ``RESOLVED_TAIL`` mean the field is resolved on this grid."""
        c = np.abs(self.fft(check_field(self, f)))
        high = np.zeros(c.shape, dtype=bool)
        for ki in self.k:
            high |= np.abs(ki) > self.n / 6.0
        nonzero = self.kabs > 0
        top = float(np.max(c[nonzero])) if np.any(nonzero) else 0.0
        if top == 0.0 or top <= 1e-14 * float(np.max(c)):
            return 0.0
        return float(np.max(c[high])) / top

    def refine(self, f: np.ndarray, refine: int = 16) -> np.ndarray:
        """Samples of the trigonometric interpolant of f on a ``refine``-times
        finer grid (``refine`` is capped at 4 in two dimensions).  Leading
        axes are carried along."""
        if self.dim == 2:
            refine = min(refine, 4)
        m = self.n * refine
        fh = np.fft.fftn(f, axes=self.axes)
        fh[..., self.nyquist_mask_full] = 0.0
        lead = np.shape(f)[: np.ndim(f) - self.dim]
        pad = np.zeros(lead + (m,) * self.dim, dtype=complex)
        h = self.n // 2
        if self.dim == 1:
            pad[..., :h] = fh[..., :h]
            pad[..., -h:] = fh[..., -h:]
        else:
            for a in (slice(None, h), slice(-h, None)):
                for b in (slice(None, h), slice(-h, None)):
                    pad[..., a, b] = fh[..., a, b]
        return np.real(np.fft.ifftn(pad, axes=self.axes)) * (m / self.n) ** self.dim

    def sup(self, f: np.ndarray, refine: int = 16) -> float:
        """max f over the torus, from the trigonometric interpolant sampled
        on a finer grid (the grid values themselves are included)."""
        return float(max(self.refine(f, refine).max(), np.max(f)))

    @property
    def kabs_full(self) -> np.ndarray:
        """|k| in full FFT ordering (matches :meth:`transform`)."""
        kk = np.fft.fftfreq(self.n, 1.0 / self.n)
        return np.abs(kk) if self.dim == 1 else np.hypot(kk[:, None], kk[None, :])

    @property
    def nyquist_mask_full(self) -> np.ndarray:
        full = np.fft.fftfreq(self.n, 1.0 / self.n)
        if self.dim == 1:
            return np.abs(full) == self.n // 2
        a = np.abs(full) == self.n // 2
        return a[:, None] | a[None, :]

    def random_field(self, rng: np.random.Generator, decay: float = 2.5,
                     kcut: int | None = None) -> np.ndarray:
        """Zero-mean random smooth field with coefficients ~ |k|^-decay * N(0,1),
        band-limited to |k_i| <= kcut (default n // 5)."""
        kcut = self.n // 5 if kcut is None else kcut
        shape = self.kabs.shape
        coef = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        with np.errstate(divide="ignore"):
            amp = np.where(self.kabs > 0, self.kabs ** (-decay), 0.0)
        band = np.ones(shape, dtype=bool)
        for ki in self.k:
            band &= np.abs(ki) <= kcut
        f = self.ifft(coef * amp * band)
        scale = np.max(np.abs(f))
        return f / scale if scale > 0 else f


def check_field(grid: TorusGrid, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape[-grid.dim:] != grid.shape:
        raise InvalidField(f"field shape {f.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(f)):
        raise InvalidField("field contains non-finite values")
    return f


def grid_for(f: np.ndarray) -> TorusGrid:
    """Infer the grid of a bare 1-D or square 2-D field."""
    f = np.asarray(f)
    if f.ndim == 1:
        return TorusGrid(1, f.shape[0])
    if f.ndim == 2 and f.shape[0] == f.shape[1]:
        return TorusGrid(2, f.shape[0])
    raise InvalidField(f"cannot infer torus grid from shape {f.shape}")
