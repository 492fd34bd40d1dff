"""Band-limited wave packets stored by their Fourier profile.

The Fourier convention is ``f_hat(xi) = int f(z) exp(-2 pi i z xi) dz``.  A
packet of radius ``r`` has its profile supported in ``[-r, r]``.  Packets are
kept frequency-side as callables ``hat(xi, deriv)``; spatial samples are
produced on demand.

Besides plain packets the module provides *layers*: profiles that may depend
on a point-dependent frequency parameter ``theta``.  Layers are what the
embedding evaluates; the space and scale boosts act on them.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.fft as sfft
import sympy as sp

from .signal import ParameterError, ResolutionError, SampledSignal, fft, ifft

__all__ = [
    "WavePacket",
    "SymmetryParams",
    "ConvergenceError",
    "make_mother_packet",
    "make_cutoff_packet",
    "packet_norm",
    "packet_signal",
    "apply_symmetry",
    "compose_symmetries",
    "wp_decompose",
    "WPDecomposition",
    "boost_packet",
    "export_profile_csv",
    "import_profile_csv",
    "Layer",
    "PacketLayer",
    "ZetaBoost",
    "SigmaBoost",
    "OverlapLayer",
    "LayerCombination",
]


class ConvergenceError(ValueError):
    """Raised when decomposition exponents do not give a convergent series."""


# ---------------------------------------------------------------------------
# smooth transition and its derivatives


@functools.lru_cache(maxsize=None)
def _transition_derivatives(max_order: int):
    """Lambdified derivatives of the C-infinity step ``S`` on (0, 1).

    ``S(x) = psi(x) / (psi(x) + psi(1-x))`` with ``psi(x) = exp(-1/x)``,
    written as a logistic of ``1/x - 1/(1-x)`` to avoid overflow.
    """
    x = sp.Symbol("x", positive=True)
    expr = 1 / (1 + sp.exp(1 / x - 1 / (1 - x)))
    funcs = []
    for k in range(max_order + 1):
        funcs.append(sp.lambdify(x, expr, "numpy"))
        expr = sp.diff(expr, x)
    return funcs


_EDGE = 1e-3  # S and all its derivatives are below 1e-400 within this distance


def _transition(x: np.ndarray, deriv: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    if deriv == 0:
        out[x >= 1 - _EDGE] = 1.0
    inside = (x > _EDGE) & (x < 1 - _EDGE)
    if np.any(inside):
        with np.errstate(over="ignore", invalid="ignore"):
            vals = _transition_derivatives(deriv)[deriv](x[inside])
        out[inside] = np.nan_to_num(vals, nan=0.0, posinf=0.0, neginf=0.0)
    return out


# ---------------------------------------------------------------------------
# packets


@dataclass(frozen=True)
class WavePacket:
    """Band-limited packet given by a Fourier profile.

    Attributes
    ----------
    r : float
        Support radius: the profile vanishes outside ``[-r, r]``.
    order : int
        Regularity order the packet is used at.
    plateau : float
        Half-width of the set where the profile equals one (0 if none).
    profile : callable
        ``profile(xi, deriv)`` returning the ``deriv``-th derivative.
    label : str
        Human-readable tag used in reports.
    """

    r: float
    order: int
    plateau: float
    profile: Callable
    label: str = "packet"

    def hat(self, xi, deriv: int = 0) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        out = np.asarray(self.profile(xi, deriv), dtype=complex)
        return np.where(np.abs(xi) <= self.r, out, 0.0)

    def profile_grid(self, n: int = 2048):
        """Uniform frequency grid on ``[-2r, 2r)`` with profile samples."""
        xi = -2 * self.r + 4 * self.r * np.arange(n) / n
        return xi, self.hat(xi)

    def scaled(self, c: complex) -> "WavePacket":
        prof = self.profile
        return WavePacket(self.r, self.order, self.plateau if c == 1 else 0.0,
                          lambda xi, d: c * prof(xi, d), f"{c}*{self.label}")

    def __add__(self, other: "WavePacket") -> "WavePacket":
        pa, pb = self.profile, other.profile
        r = max(self.r, other.r)
        return WavePacket(r, min(self.order, other.order), 0.0,
                          lambda xi, d: (np.where(np.abs(xi) <= self.r, pa(xi, d), 0)
                                         + np.where(np.abs(xi) <= other.r, pb(xi, d), 0)),
                          f"({self.label}+{other.label})")


def make_cutoff_packet(r: float, plateau_fraction: float = 0.5, order: int = 8,
                       label: str = "cutoff") -> WavePacket:
    """Even smooth cutoff: one on ``[-p, p]``, zero outside ``(-r, r)``."""
    if not r > 0:
        raise ParameterError("radius must be positive")
    if not 0 < plateau_fraction < 1:
        raise ParameterError("plateau fraction must lie in (0, 1)")
    p = plateau_fraction * r
    width = r - p

    def profile(xi, deriv):
        a = np.abs(xi)
        u = (a - p) / width
        if deriv == 0:
            return 1.0 - _transition(u, 0)
        sign = np.sign(xi) ** deriv
        return -_transition(u, deriv) * sign / width**deriv

    return WavePacket(float(r), int(order), float(p), profile, label)


def make_mother_packet(r: float = 2.0**-5, plateau_fraction: float = 0.5,
                       order: int = 8) -> WavePacket:
    """Real, even mother packet with ``0 <= profile <= 1``.

    Examples
    --------
    >>> phi = make_mother_packet(0.125)
    >>> float(phi.hat(0.0).real), float(phi.hat(0.125).real)
    (1.0, 0.0)
    """
    return make_cutoff_packet(r, plateau_fraction, order, label="mother")


# ---------------------------------------------------------------------------
# norms


def _spectral_derivatives(values: np.ndarray, period: float, max_order: int,
                          floor: float = 1e-13):
    """Spectral derivatives with modes below ``floor * max`` discarded.

    Dropping the round-off floor keeps high-order derivatives from being
    swamped by amplified noise at large wavenumbers.
    """
    n = values.size
    k = sfft.fftfreq(n, d=period / n)
    spec = fft(values)
    spec = np.where(np.abs(spec) > floor * np.max(np.abs(spec)), spec, 0.0)
    out = [np.asarray(values, dtype=complex)]
    for j in range(1, max_order + 1):
        out.append(ifft(spec * (2j * np.pi * k) ** j))
    return out, spec, k


def _norm_on_grid(phi: WavePacket, N: int, n: int):
    _, vals = phi.profile_grid(n)
    derivs, spec, k = _spectral_derivatives(vals, 4 * phi.r, N)
    retained = np.abs(k[spec != 0])
    edge = float(retained.max()) if retained.size else 0.0
    return max(float(np.max(np.abs(d))) for d in derivs), edge, 0.5 * n / (4 * phi.r)


def packet_norm(phi: WavePacket, N: int, n: int = 4096, rtol: float = 1e-2) -> float:
    """``max_{j<=N} sup |d^j profile|`` by spectral differentiation.

    The profile is sampled on the periodic grid ``[-2r, 2r)``.  The order is
    considered resolved when the significant spectrum stays inside the lower
    three quarters of the band and the value is stable under grid doubling to
    relative accuracy ``rtol``; otherwise :class:`ResolutionError` is raised.
    """
    if N < 0:
        raise ParameterError("order must be non-negative")
    _, vals = phi.profile_grid(n)
    if not np.any(vals):
        return 0.0
    value, edge, nyq = _norm_on_grid(phi, N, n)
    if edge > 0.75 * nyq:
        raise ResolutionError(f"profile spectrum reaches the Nyquist band on {n} points")
    if N > 0:
        fine, _, _ = _norm_on_grid(phi, N, 2 * n)
        if abs(fine - value) > rtol * fine:
            raise ResolutionError(f"profile grid of {n} points does not resolve order {N}")
    return value


# ---------------------------------------------------------------------------
# symmetries


@dataclass(frozen=True)
class SymmetryParams:
    """Parameters of ``Tr_y Mod_eta Dil_t``."""

    y: float = 0.0
    eta: float = 0.0
    t: float = 1.0

    def __post_init__(self):
        if not self.t > 0:
            raise ParameterError("dilation must be positive")


def compose_symmetries(outer: SymmetryParams, inner: SymmetryParams):
    """Return ``(phase, params)`` with ``outer . inner = phase * params``.

    ``Tr_y2 Mod_e2 Dil_t2 Tr_y1 Mod_e1 Dil_t1
    = exp(2 pi i e2 t2 y1) Tr_{y2+t2 y1} Mod_{e2+e1/t2} Dil_{t2 t1}``.
    """
    phase = np.exp(2j * np.pi * outer.eta * outer.t * inner.y)
    return phase, SymmetryParams(outer.y + outer.t * inner.y,
                                 outer.eta + inner.eta / outer.t,
                                 outer.t * inner.t)


def _packet_spatial(phi: WavePacket, z: np.ndarray, m: int = 2048, chunk: int = 4096) -> np.ndarray:
    """Inverse Fourier transform of the profile at points ``z`` (midpoint rule).

    The rule on ``m`` nodes repeats the packet with period ``m / (2r)``; ``m``
    is raised so that the period is at least four times the largest ``|z|``.
    """
    z = np.asarray(z, dtype=float)
    zmax = float(np.max(np.abs(z))) if z.size else 0.0
    m = max(m, 1 << int(np.ceil(np.log2(max(8 * phi.r * zmax, 1.0)))))
    xi = -phi.r + 2 * phi.r * (np.arange(m) + 0.5) / m
    weighted = phi.hat(xi) * (2 * phi.r / m)
    flat = z.ravel()
    out = np.empty(flat.size, dtype=complex)
    for s in range(0, flat.size, chunk):
        out[s:s + chunk] = np.exp(2j * np.pi * np.multiply.outer(flat[s:s + chunk], xi)) @ weighted
    return out.reshape(z.shape)


def packet_signal(phi: WavePacket, n: int, spacing: float, origin: float | None = None) -> SampledSignal:
    """Spatial samples of ``phi`` on a grid centred at 0 by default."""
    if origin is None:
        origin = -0.5 * n * spacing
    x = origin + spacing * np.arange(n)
    return SampledSignal(_packet_spatial(phi, x), spacing, origin)


def apply_symmetry(phi, s: SymmetryParams, like: SampledSignal | None = None,
                   truncation_tol: float = 1e-6) -> SampledSignal:
    """Evaluate ``Tr_y Mod_eta Dil_t phi`` on a spatial grid.

    ``phi`` is a :class:`SampledSignal` (evaluated off-grid by exact
    trigonometric interpolation) or a :class:`WavePacket` together with the
    grid template ``like``.
    """
    if isinstance(phi, WavePacket):
        if like is None:
            raise ParameterError("a grid template is required for packets")
        grid = like

        def base(z):
            return _packet_spatial(phi, z)
    else:
        grid = phi if like is None else like
        base = phi.evaluate
    x = grid.x
    u = (x - s.y) / s.t
    vals = np.exp(2j * np.pi * s.eta * (x - s.y)) * base(u) / s.t
    edge = np.concatenate([np.abs(vals[:4]), np.abs(vals[-4:])])
    peak = np.max(np.abs(vals)) if vals.size else 0.0
    if peak > 0 and np.max(edge) > truncation_tol * peak:
        warnings.warn("transformed packet is truncated by the spatial grid", RuntimeWarning)
    return SampledSignal(vals, grid.spacing, grid.origin)


# ---------------------------------------------------------------------------
# shifted-packet decomposition


@dataclass(frozen=True)
class WPDecomposition:
    """Result of :func:`wp_decompose`.

    ``phi_hat = sum_k coefficients[k] * atom_k`` with
    ``atom_k(xi) = <k>^{-N'} exp(2 pi i k xi / period) weight(xi)`` on
    ``[-period/2, period/2]``.
    """

    ks: np.ndarray
    coefficients: np.ndarray
    period: float
    N: int
    N_prime: int
    decay_constant: float
    tail_bound: float
    source_norm: float

    def weight(self, xi, deriv: int = 0) -> np.ndarray:
        half = self.period / 2
        xi = np.asarray(xi, dtype=float)
        inside = np.abs(xi) <= half
        out = np.zeros(xi.shape)
        x = xi[inside]
        if deriv == 0:
            out[inside] = (1 - (x / half) ** 2) ** (self.N_prime + 1)
        else:
            out[inside] = _weight_poly(half, self.N_prime, deriv)(x)
        return out

    def atom(self, k: int) -> WavePacket:
        bracket = (1.0 + k * k) ** (-self.N_prime / 2)
        freq = 2 * np.pi * k / self.period
        weight = self.weight
        half = self.period / 2

        def profile(xi, d):
            xi = np.asarray(xi, dtype=float)
            out = np.zeros(xi.shape, dtype=complex)
            inside = np.abs(xi) <= half
            x = xi[inside]
            total = np.zeros(x.shape, dtype=complex)
            for j in range(d + 1):
                total += math.comb(d, j) * (1j * freq) ** j * weight(x, d - j)
            out[inside] = bracket * np.exp(1j * freq * x) * total
            return out

        return WavePacket(self.period / 2, self.N_prime, 0.0, profile, f"atom[{k}]")

    def reconstruct(self, xi, K: int | None = None) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        sel = np.ones(self.ks.shape, bool) if K is None else np.abs(self.ks) <= K
        ks = self.ks[sel]
        phases = np.exp(2j * np.pi * np.multiply.outer(xi, ks) / self.period)
        b = self.coefficients[sel] * (1.0 + ks.astype(float) ** 2) ** (-self.N_prime / 2)
        return (phases @ b) * self.weight(xi)

    def decay_ratio(self) -> float:
        """``max_k |a_k| <k>^{N-N'}``."""
        br = (1.0 + self.ks.astype(float) ** 2) ** ((self.N - self.N_prime) / 2)
        return float(np.max(np.abs(self.coefficients) * br))


@functools.lru_cache(maxsize=None)
def _weight_poly(half: float, N_prime: int, deriv: int):
    """Derivative of ``(1 - (x/half)^2)^(N'+1)`` as a polynomial."""
    return (np.polynomial.Polynomial([1.0, 0.0, -1.0 / half**2]) ** (N_prime + 1)).deriv(deriv)


@functools.lru_cache(maxsize=None)
def _inverse_weight_sup(N: int, N_prime: int, ratio: float) -> tuple:
    """``sup_{|x|<=ratio} |d^j (1-x^2)^{-(N'+1)}|`` for ``j <= N`` in units of the half period."""
    x = sp.Symbol("x")
    expr = (1 - x**2) ** (-(N_prime + 1))
    grid = np.linspace(-ratio, ratio, 2001)
    sups = []
    for j in range(N + 1):
        f = sp.lambdify(x, sp.diff(expr, x, j), "numpy")
        sups.append(float(np.max(np.abs(f(grid)))))
    return tuple(sups)


def wp_decompose(phi: WavePacket, N: int, N_prime: int, K: int | None = None,
                 tol: float = 1e-10, m: int = 8192) -> WPDecomposition:
    """Expand ``phi`` in modulated copies of a fixed weight of radius ``2r``.

    The quotient ``g = phi_hat / w`` with ``w(xi) = (1 - (xi/2r)^2)^{N'+1}`` is
    smooth and supported in ``[-r, r]``; its Fourier series on the period
    ``4r`` gives ``phi_hat = sum_k a_k atom_k`` where ``a_k = <k>^{N'} b_k``.
    Integration by parts bounds ``|a_k| <k>^{N-N'} <= C ||phi||_{C^N}`` with
    the explicit ``C`` stored as ``decay_constant``.

    Parameters
    ----------
    K : int, optional
        Truncation index.  By default the smallest ``K`` whose computed tail
        ``sum_{|k|>K} |b_k|`` is below ``tol``.
    """
    if not 0 < N_prime < N:
        raise ConvergenceError("need 0 < N' < N")
    if N <= N_prime + 1:
        raise ConvergenceError("need N > N' + 1 for absolute convergence")
    period = 4 * phi.r
    half = period / 2
    xi = -half + period * np.arange(m) / m
    w = (1 - (xi / half) ** 2) ** (N_prime + 1)
    vals = phi.hat(xi)
    g = np.zeros(m, dtype=complex)
    nz = np.abs(xi) <= phi.r
    g[nz] = vals[nz] / w[nz]
    # b_k = (1/P) int g exp(-2 pi i k xi / P): DFT with the grid offset
    raw = fft(g) / m
    kk = sfft.fftfreq(m, d=1.0 / m).astype(int)
    b = raw * np.exp(2j * np.pi * kk * half / period)
    order = np.argsort(kk)
    kk, b = kk[order], b[order]
    absb = np.abs(b)
    if K is None:
        K = 0
        kmax = m // 2 - 1
        while K < kmax and np.sum(absb[np.abs(kk) > K]) > tol:
            K += 1
    sel = np.abs(kk) <= K
    tail = float(np.sum(absb[~sel]))
    ks = kk[sel]
    a = b[sel] * (1.0 + ks.astype(float) ** 2) ** (N_prime / 2)
    # explicit constant: |b_k| <= (P / (2 pi |k|))^N sup|g^(N)|, <k>^N <= 2^{N/2}|k|^N
    inv_sups = _inverse_weight_sup(N, N_prime, phi.r / half)
    leib = sum(math.comb(N, j) * inv_sups[N - j] / half ** (N - j) for j in range(N + 1))
    const = max(inv_sups[0], 2 ** (N / 2) * (period / (2 * np.pi)) ** N * leib)
    return WPDecomposition(ks, a, period, N, N_prime, float(const), tail,
                           packet_norm(phi, N) if np.any(vals) else 0.0)


# ---------------------------------------------------------------------------
# boosts


def boost_packet(phi: WavePacket, theta: float, kind: str) -> WavePacket:
    """Fourier-side boost of a packet at a fixed frequency ``theta``.

    ``zeta``: ``(-d_z + 2 pi i theta) phi``, i.e. ``2 pi i (theta - xi) phi_hat``.
    ``sigma``: ``(-d_z + 2 pi i theta)(z phi)``, i.e. ``(xi - theta) phi_hat'``.
    """
    prof = phi.profile
    if kind == "zeta":
        def profile(xi, d):
            out = 2j * np.pi * (theta - xi) * prof(xi, d)
            if d:
                out = out - 2j * np.pi * d * prof(xi, d - 1)
            return out
    elif kind == "sigma":
        def profile(xi, d):
            return (xi - theta) * prof(xi, d + 1) + d * prof(xi, d)
    else:
        raise ParameterError("kind must be 'zeta' or 'sigma'")
    return WavePacket(phi.r, max(phi.order - 1, 0), 0.0, profile, f"{kind}[{theta}]{phi.label}")


# ---------------------------------------------------------------------------
# CSV exchange


def export_profile_csv(phi: WavePacket, path, n: int = 2048) -> None:
    xi, vals = phi.profile_grid(n)
    np.savetxt(path, np.column_stack([xi, vals.real, vals.imag]), delimiter=",",
               header="xi,re,im", comments="")


def import_profile_csv(path, r: float, order: int = 4, tol: float = 1e-9,
                       label: str = "imported") -> WavePacket:
    """Load a sampled profile and validate support and evenness.

    Derivatives are obtained by spectral differentiation on the file grid and
    linear interpolation in between.
    """
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    xi = data[:, 0]
    vals = data[:, 1] + 1j * data[:, 2]
    step = xi[1] - xi[0]
    if np.max(np.abs(np.diff(xi) - step)) > 1e-9 * abs(step):
        raise ParameterError("profile grid is not uniform")
    scale = max(np.max(np.abs(vals)), 1e-300)
    if np.any(np.abs(vals[np.abs(xi) > r + 1e-12]) > tol * scale):
        raise ParameterError("profile does not vanish outside [-r, r]")
    mirrored = np.interp(-xi, xi, vals.real) + 1j * np.interp(-xi, xi, vals.imag)
    inner = np.abs(xi) <= min(abs(xi[0]), abs(xi[-1]))
    if np.max(np.abs(mirrored[inner] - vals[inner])) > 1e-6 * scale:
        raise ParameterError("profile is not even")
    period = step * xi.size
    derivs, _, _ = _spectral_derivatives(vals, period, order + 1)

    def profile(q, d):
        table = derivs[d]
        return np.interp(q, xi, table.real, 0, 0) + 1j * np.interp(q, xi, table.imag, 0, 0)

    return WavePacket(float(r), int(order), 0.0, profile, label)


# ---------------------------------------------------------------------------
# layers: profiles depending on a point-dependent frequency parameter


class Layer:
    """Profile ``(w, theta) -> value`` evaluated by the embedding.

    ``w`` is the rescaled frequency offset ``t (eta - xi_k)`` and ``theta``
    the frequency parameter attached to the evaluation point.
    """

    radius: float = 0.0

    def evaluate(self, w, theta, deriv: int = 0):  # pragma: no cover - interface
        raise NotImplementedError

    def zeta(self) -> "Layer":
        return ZetaBoost(self)

    def sigma(self) -> "Layer":
        return SigmaBoost(self)

    def __sub__(self, other: "Layer") -> "Layer":
        return LayerCombination(((1.0, self), (-1.0, other)))


@dataclass(frozen=True)
class PacketLayer(Layer):
    packet: WavePacket

    @property
    def radius(self):
        return self.packet.r

    def evaluate(self, w, theta, deriv=0):
        return self.packet.hat(w, deriv)


@dataclass(frozen=True)
class ZetaBoost(Layer):
    inner: Layer

    @property
    def radius(self):
        return self.inner.radius

    def evaluate(self, w, theta, deriv=0):
        out = 2j * np.pi * (theta - w) * self.inner.evaluate(w, theta, deriv)
        if deriv:
            out = out - 2j * np.pi * deriv * self.inner.evaluate(w, theta, deriv - 1)
        return out


@dataclass(frozen=True)
class SigmaBoost(Layer):
    inner: Layer

    @property
    def radius(self):
        return self.inner.radius

    def evaluate(self, w, theta, deriv=0):
        out = (w - theta) * self.inner.evaluate(w, theta, deriv + 1)
        if deriv:
            out = out + deriv * self.inner.evaluate(w, theta, deriv)
        return out


@dataclass(frozen=True)
class OverlapLayer(Layer):
    """``phi_hat(theta) * omega_hat(w / r)``: the overlap part of a packet."""

    packet: WavePacket
    omega: WavePacket
    scale: float

    @property
    def radius(self):
        return self.omega.r * self.scale

    def evaluate(self, w, theta, deriv=0):
        return self.packet.hat(theta) * self.omega.hat(np.asarray(w) / self.scale, deriv) / self.scale**deriv


@dataclass(frozen=True)
class LayerCombination(Layer):
    terms: tuple

    @property
    def radius(self):
        return max(layer.radius for _, layer in self.terms)

    def evaluate(self, w, theta, deriv=0):
        return sum(c * layer.evaluate(w, theta, deriv) for c, layer in self.terms)
