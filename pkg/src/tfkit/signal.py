"""Uniformly sampled periodic signals with exact trigonometric evaluation.

A :class:`SampledSignal` stores samples ``f(origin + j*spacing)`` for
``j = 0..n-1`` with ``n`` a power of two.  The samples are read as one period
of a trigonometric polynomial with frequencies ``k / (n*spacing)``, which is
the band-limited stand-in for a Schwartz function used throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

__all__ = ["SampledSignal", "ParameterError", "ResolutionError", "set_fft_workers", "fft", "ifft"]

_FFT_WORKERS = 1


def set_fft_workers(n: int) -> None:
    """Number of threads used by the FFTs of the package."""
    global _FFT_WORKERS
    if int(n) < 1:
        raise ValueError("worker count must be positive")
    _FFT_WORKERS = int(n)


def fft(x):
    return sfft.fft(x, workers=_FFT_WORKERS)


def ifft(x):
    return sfft.ifft(x, workers=_FFT_WORKERS)


class ParameterError(ValueError):
    """Raised when an argument lies outside its admissible range."""


class ResolutionError(RuntimeError):
    """Raised when a grid cannot resolve the requested computation."""


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SampledSignal:
    """Complex samples of a periodic band-limited function.

    Parameters
    ----------
    samples : ndarray
        Complex samples, length a power of two.
    spacing : float
        Grid step.
    origin : float
        Position of the first sample.
    band : tuple of float, optional
        Declared frequency support ``(lo, hi)``; verified on construction.
    """

    samples: np.ndarray
    spacing: float = 1.0
    origin: float = 0.0
    band: tuple | None = None
    band_tol: float = 1e-9
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=complex)
        object.__setattr__(self, "samples", arr)
        if arr.ndim != 1 or not _is_power_of_two(arr.size):
            raise ParameterError("sample count must be a power of two")
        if not self.spacing > 0:
            raise ParameterError("spacing must be positive")
        if self.band is not None:
            lo, hi = self.band
            freqs, coef = self.fourier_coefficients()
            outside = (freqs < lo - 1e-12) | (freqs > hi + 1e-12)
            scale = max(np.max(np.abs(coef)), 1e-300)
            if np.any(np.abs(coef[outside]) > self.band_tol * scale):
                raise ParameterError("samples carry energy outside the declared band")

    # grid description -------------------------------------------------
    @property
    def n(self) -> int:
        return self.samples.size

    @property
    def period(self) -> float:
        return self.n * self.spacing

    @property
    def x(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.n)

    @property
    def nyquist(self) -> float:
        return 0.5 / self.spacing

    def like(self, samples) -> "SampledSignal":
        """Signal with the same grid and new samples."""
        return SampledSignal(np.asarray(samples, dtype=complex), self.spacing, self.origin)

    # spectral representation -----------------------------------------
    def fourier_coefficients(self):
        """Return ``(freqs, c)`` with ``f(x) = sum_k c_k exp(2 pi i freqs_k x)``."""
        if "coef" not in self._cache:
            freqs = sfft.fftfreq(self.n, d=self.spacing)
            c = fft(self.samples) / self.n
            c = c * np.exp(-2j * np.pi * freqs * self.origin)
            self._cache["coef"] = (freqs, c)
        return self._cache["coef"]

    def spectrum(self, rel_tol: float = 1e-12):
        """Frequencies and coefficients of the significant modes only."""
        freqs, c = self.fourier_coefficients()
        scale = np.max(np.abs(c)) if c.size else 0.0
        if scale == 0.0:
            return freqs[:0], c[:0]
        keep = np.abs(c) > rel_tol * scale
        return freqs[keep], c[keep]

    @classmethod
    def from_spectrum(cls, freqs, coef, n, spacing=1.0, origin=0.0, band=None):
        """Synthesize samples of ``sum c_k exp(2 pi i xi_k x)`` on a grid.

        Every frequency must lie on the lattice ``Z / (n*spacing)`` and below
        the Nyquist frequency.
        """
        freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
        coef = np.atleast_1d(np.asarray(coef, dtype=complex))
        period = n * spacing
        idx = np.rint(freqs * period)
        if np.any(np.abs(idx - freqs * period) > 1e-9):
            raise ParameterError("frequencies are not on the grid lattice")
        if np.any(np.abs(freqs) >= 0.5 / spacing):
            raise ParameterError("frequency beyond Nyquist")
        full = np.zeros(n, dtype=complex)
        np.add.at(full, idx.astype(int) % n, coef * np.exp(2j * np.pi * freqs * origin))
        return cls(ifft(full) * n, spacing, origin, band=band)

    def evaluate(self, z) -> np.ndarray:
        """Exact trigonometric evaluation at arbitrary points."""
        z = np.asarray(z, dtype=float)
        freqs, c = self.spectrum(rel_tol=0.0)
        out = np.exp(2j * np.pi * np.multiply.outer(z.ravel(), freqs)) @ c
        return out.reshape(z.shape)

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.samples) ** 2) * self.spacing))

    def lp_norm(self, p: float) -> float:
        a = np.abs(self.samples)
        if np.isinf(p):
            return float(a.max())
        return float((np.sum(a**p) * self.spacing) ** (1.0 / p))

    # serialization ----------------------------------------------------
    def to_csv(self, path) -> None:
        data = np.column_stack([self.x, self.samples.real, self.samples.imag])
        np.savetxt(path, data, delimiter=",", header="x,re,im", comments="")

    @classmethod
    def from_csv(cls, path) -> "SampledSignal":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        x = data[:, 0]
        spacing = float(x[1] - x[0]) if x.size > 1 else 1.0
        if x.size > 2 and np.max(np.abs(np.diff(x) - spacing)) > 1e-9 * max(1.0, abs(spacing)):
            raise ParameterError("CSV grid is not uniform")
        return cls(data[:, 1] + 1j * data[:, 2], spacing, float(x[0]))
