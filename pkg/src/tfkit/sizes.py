"""Local sizes of fields restricted to a tree.

All sizes are computed on a model grid for the tree ``T``: ``theta`` midpoints
over the band, ``zeta`` midpoints over ``(-1, 1)`` and a geometric ``sigma``
grid from ``1`` down to ``sigma_min``, masked to ``sigma < 1 - |zeta|``.  The
field is evaluated at ``pi_T(theta, zeta, sigma)`` and the mixed norm

    || F o pi_T ||_{L^u(d theta d zeta / |band|) L^v(d sigma / sigma)}

is taken layer by layer, followed by the maximum over layers (the finite
stand-in for the supremum over the packet class).  ``inf`` is a legitimate
result: it is returned when the inner ``d sigma / sigma`` integral has not
settled at the bottom of the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .embedding import (DefectField, Field, GammaMap, MaskField, ProductField, PullbackField,
                        SumField, field_boost)
from .geometry import Tree, solve_model_boundary
from .signal import ParameterError
from .wavepacket import (LayerCombination, OverlapLayer, PacketLayer, WavePacket, boost_packet,
                         make_cutoff_packet, make_mother_packet, wp_decompose)

__all__ = [
    "Quadrature",
    "SizeSpec",
    "ModelSample",
    "model_sample",
    "default_family",
    "lebesgue_size",
    "lacunary_size",
    "defect_size",
    "sio_size",
    "integral_size",
    "composite_size",
    "product_size",
    "size",
    "SIZE_KINDS",
]

SIZE_KINDS = ("lebesgue", "lacunary", "defect_zeta", "defect_sigma", "sio", "integral",
              "composite_nonuniform", "composite_uniform_linear", "composite_uniform_bilinear")

DIVERGENCE_RATIO = 1e-3


@dataclass(frozen=True)
class Quadrature:
    """Model-grid resolution."""

    n_theta: int = 128
    n_zeta: int = 24
    per_octave: int = 6
    sigma_min: float = 2.0**-8
    h: float = 1e-3

    def sigma_nodes(self):
        n = int(np.ceil(-np.log2(self.sigma_min) * self.per_octave))
        return 2.0 ** (-(np.arange(n) + 0.5) / self.per_octave)

    @property
    def dlog(self) -> float:
        return np.log(2.0) / self.per_octave


@dataclass(frozen=True)
class SizeSpec:
    """Selection of a size functional.

    Parameters
    ----------
    kind : str
        One of :data:`SIZE_KINDS`.
    u, v : float
        Outer and inner exponents (``np.inf`` allowed).
    restrict : tuple or None
        Sub-interval of the tree band where the indicator is applied in
        model coordinates; the normalization stays ``1 / |band|``.
    gamma : GammaMap or None
        Pull the field back before measuring it.
    inner_band : tuple or None
        Band used by the uniform composite sizes for their restricted parts.
    packet_params : tuple
        ``(r, N)`` of the packet class.
    beta_prefactor : float or None
        Override for the ``beta`` entering ``beta^(1/u)``; by default taken
        from ``gamma``.
    """

    kind: str = "lebesgue"
    u: float = 1.0
    v: float = 1.0
    restrict: tuple | None = None
    gamma: GammaMap | None = None
    inner_band: tuple | None = None
    packet_params: tuple = (0.25, 4)
    beta_prefactor: float | None = None
    quad: Quadrature = field(default_factory=Quadrature)

    def __post_init__(self):
        if self.kind not in SIZE_KINDS:
            raise ParameterError(f"unknown size kind {self.kind!r}")
        if not (self.u >= 1 and self.v >= 1):
            raise ParameterError("exponents must be at least 1")

    def check_band(self, T: Tree):
        if self.restrict is not None:
            lo, hi = self.restrict
            if lo < T.band[0] - 1e-12 or hi > T.band[1] + 1e-12:
                raise ParameterError("restricted band must lie inside the tree band")
        if self.kind.startswith("composite_uniform"):
            if self.inner_band is None:
                raise ParameterError("uniform composite sizes need an inner band")
            g = self.gamma[0] if isinstance(self.gamma, tuple) else self.gamma
            c = -g.gamma if g is not None else 0.0
            lo, hi = self.inner_band
            if not (c - 2**-3 <= lo < c - 2**-5 and c + 2**-5 < hi <= c + 2**-3):
                raise ParameterError("inner band must satisfy B_{1/32}(-gamma) < band < B_{1/8}(-gamma)")


# ---------------------------------------------------------------------------
# model grid sampling


@dataclass
class ModelSample:
    """Field values on the model grid of a tree."""

    theta: np.ndarray
    zeta: np.ndarray
    sigma: np.ndarray
    values: np.ndarray  # (L, n_theta, n_zeta, n_sigma), zero outside the mask
    mask: np.ndarray  # (n_theta, n_zeta, n_sigma)
    outer_weight: float  # d theta d zeta / |band|
    inner_weight: float  # d sigma / sigma
    dzeta: float
    dtheta: float
    band_width: float
    singular: np.ndarray | None = None  # (L, n_theta, n_zeta) masses in d sigma / sigma
    bottom: int = 0  # number of sigma nodes in the last octave


def _theta_nodes(band, n):
    lo, hi = band
    return lo + (hi - lo) * (np.arange(n) + 0.5) / n


def model_sample(F: Field, T: Tree, quad: Quadrature = Quadrature(), restrict=None,
                 exclude=None, sigma_floor: float | None = None) -> ModelSample:
    """Sample ``1_T F o pi_T`` on the model grid.

    ``restrict`` applies the band indicator in ``theta``; ``exclude`` is a
    region whose points are removed (the ``1_{X \\ E}`` operation).
    """
    th = _theta_nodes(T.band, quad.n_theta)
    ze = -1 + 2 * (np.arange(quad.n_zeta) + 0.5) / quad.n_zeta
    si = quad.sigma_nodes()
    if sigma_floor is not None:
        si = si[si >= sigma_floor]
    TH, ZE, SI = np.meshgrid(th, ze, si, indexing="ij")
    mask = SI < 1 - np.abs(ZE)
    if restrict is not None:
        mask &= (TH > restrict[0]) & (TH < restrict[1])
    eta, y, t = T.from_model(TH, ZE, SI)
    if exclude is not None:
        mask &= ~exclude.contains(eta, y, t)
    vals = np.zeros((F.n_layers,) + mask.shape, dtype=complex)
    if np.any(mask):
        vals[:, mask] = F.evaluate(eta[mask], y[mask], t[mask], TH[mask])
    width = T.band[1] - T.band[0]
    dth = width / quad.n_theta
    dze = 2.0 / quad.n_zeta
    sample = ModelSample(th, ze, si, vals, mask, dth * dze / width, quad.dlog, dze, dth, width,
                         bottom=min(quad.per_octave, si.size))
    if isinstance(F, DefectField) and F.source.boundary() is not None:
        sample.singular = _singular_masses(F, T, th, ze, restrict, exclude, si[-1] if si.size else 0.0)
    return sample


def _singular_masses(D: DefectField, T: Tree, th, ze, restrict, exclude, sigma_low):
    """Graph measure of the defect of ``1_E G`` per model ``(theta, zeta)``."""
    region = D.source.boundary()
    G = D.smooth_part()
    TH, ZE = np.meshgrid(th, ze, indexing="ij")
    sstar = solve_model_boundary(T, region, TH, ZE)
    ok = np.isfinite(sstar) & (sstar > sigma_low) & (sstar < 1 - np.abs(ZE))
    if restrict is not None:
        ok &= (TH > restrict[0]) & (TH < restrict[1])
    out = np.zeros((G.n_layers,) + TH.shape)
    if not np.any(ok):
        return out
    eta, y, t = T.from_model(TH[ok], ZE[ok], sstar[ok])
    if exclude is not None:
        keep = ~exclude.contains(eta, y, t * (1 - 1e-12))
        idx = np.flatnonzero(ok)
        ok.flat[idx[~keep]] = False
        eta, y, t = eta[keep], y[keep], t[keep]
    vals = G.evaluate(eta, y, t, TH[ok])
    w = D.singular_weight(eta, y)
    jac = D.singular_jacobian(eta, y)
    out[:, ok] = np.abs(vals) * np.abs(w) / np.abs(jac)
    return out


def _mixed_norm(S: ModelSample, u, v, values=None):
    """Per-layer mixed norm with divergence detection; returns an array over layers."""
    vals = np.abs(S.values if values is None else values)
    L = vals.shape[0]
    if np.isinf(v):
        inner = vals.max(axis=3)
        if S.singular is not None and np.any(S.singular > 0):
            inner = np.where(S.singular > 0, np.inf, inner)
        diverge = np.zeros(L, bool)
    else:
        pw = vals**v * S.inner_weight
        total = pw.sum(axis=3)
        tail = pw[..., -S.bottom:].sum(axis=3) if S.bottom else np.zeros_like(total)
        if S.singular is not None:
            if v == 1:
                total = total + S.singular
            elif np.any(S.singular > 0):
                total = np.where(S.singular > 0, np.inf, total)
        tot = total.reshape(L, -1).sum(axis=1)
        tl = tail.reshape(L, -1).sum(axis=1)
        with np.errstate(invalid="ignore"):
            diverge = (tot > 0) & np.isfinite(tot) & (tl > DIVERGENCE_RATIO * tot)
        inner = total ** (1.0 / v)
    if np.isinf(u):
        out = inner.reshape(L, -1).max(axis=1)
    else:
        out = (np.sum(inner**u, axis=(1, 2)) * S.outer_weight) ** (1.0 / u)
    return np.where(diverge, np.inf, out)


def _finalize(per_layer) -> float:
    per_layer = np.asarray(per_layer, float)
    return float(per_layer.max()) if per_layer.size else 0.0


def _pull(F: Field, spec: SizeSpec) -> Field:
    g = spec.gamma
    if g is None or isinstance(g, tuple):
        return F
    if g.alpha == 1 and g.beta == 1 and g.gamma == 0:
        return F
    return PullbackField(F, g)


def _check_singular_support(F, v):
    if isinstance(F, DefectField) and F.source.boundary() is not None and v not in (1, 2, np.inf):
        raise ParameterError("graph-supported parts are only supported for v in {1, 2, inf}")


# ---------------------------------------------------------------------------
# families


def default_family(r: float = 0.25, N: int = 4, K: int = 2, theta: float = 0.0,
                   include_atoms: bool = True):
    """Finite packet family: mother packet, its boosts at ``theta`` and lattice atoms.

    Every member is normalized to unit sup norm of its profile.
    """
    phi = make_mother_packet(r)
    members = [phi, boost_packet(phi, theta, "zeta"), boost_packet(phi, theta, "sigma")]
    if include_atoms and N >= 3:
        dec = wp_decompose(phi, N, 1, K=K)
        members.extend(dec.atom(k) for k in range(-K, K + 1))
    xi = np.linspace(-r, r, 2049)
    out = []
    for m in members:
        peak = float(np.max(np.abs(m.hat(xi))))
        out.append(m.scaled(1.0 / peak) if peak > 0 else m)
    return out


# ---------------------------------------------------------------------------
# sizes


def lebesgue_size(F: Field, T: Tree, spec: SizeSpec, exclude=None, return_layers=False):
    """Mixed Lebesgue size ``L^u(d theta d zeta / |band|) L^v(d sigma / sigma)``."""
    spec.check_band(T)
    _check_singular_support(F, spec.v)
    G = _pull(F, spec)
    S = model_sample(G, T, spec.quad, spec.restrict, exclude)
    per = _mixed_norm(S, spec.u, spec.v)
    return per if return_layers else _finalize(per)


def lacunary_size(F: Field, T: Tree, spec: SizeSpec, exclude=None):
    """Lebesgue size of the ``zeta``-boosted field (boost frequency ``t (eta - xi_T)``)."""
    spec.check_band(T)
    G = field_boost(_pull(F, spec), "zeta")
    S = model_sample(G, T, spec.quad, spec.restrict, exclude)
    return _finalize(_mixed_norm(S, spec.u, spec.v))


def defect_size(F: Field, T: Tree, spec: SizeSpec, kind: str | None = None, exclude=None):
    """Lebesgue size of the space (``zeta``) or scale (``sigma``) defect.

    With ``kind=None`` the kind is read from ``spec.kind`` and ``'total'``
    sums both.  Graph-supported parts of masked fields enter through their
    closed-form masses.
    """
    kind = kind or {"defect_zeta": "zeta", "defect_sigma": "sigma"}.get(spec.kind, "total")
    if kind == "total":
        return (defect_size(F, T, spec, "zeta", exclude) + defect_size(F, T, spec, "sigma", exclude))
    spec.check_band(T)
    G = _pull(F, spec)
    D = DefectField(G, float(T.xi), kind, spec.quad.h)
    _check_singular_support(D, spec.v)
    S = model_sample(D, T, spec.quad, spec.restrict, exclude)
    return _finalize(_mixed_norm(S, spec.u, spec.v))


def sio_size(F: Field, T: Tree, spec: SizeSpec, exclude=None, boosted: bool = True):
    """Maximal truncation size ``J^u``.

    For each ``(theta, zeta)`` the partial integrals of the boosted field from
    the top of the ``sigma`` column down to each grid scale are formed; their
    largest modulus is then measured in ``L^u(d theta d zeta / |band|)``.
    """
    spec.check_band(T)
    G = _pull(F, spec)
    if boosted:
        G = field_boost(G, "zeta")
    S = model_sample(G, T, spec.quad, spec.restrict, exclude)
    partial = np.cumsum(S.values, axis=3) * S.inner_weight
    inner = np.abs(partial).max(axis=3)
    if np.isinf(spec.u):
        per = inner.reshape(inner.shape[0], -1).max(axis=1)
    else:
        per = (np.sum(inner**spec.u, axis=(1, 2)) * S.outer_weight) ** (1 / spec.u)
    return _finalize(per)


def _pattern_layer(layer, star, omega, scale):
    if not isinstance(layer, PacketLayer):
        raise ParameterError("integral sizes need plain packet layers")
    ov = OverlapLayer(layer.packet, omega, scale)
    if star == "o":
        return ov
    if star == "l":
        return LayerCombination(((1.0, layer), (-1.0, ov)))
    raise ParameterError("pattern entries must be 'o' or 'l'")


def integral_size(factors, T: Tree, pattern, spec: SizeSpec, omega: WavePacket | None = None,
                  report: bool = False):
    """Integral size of a triple product with overlap/lacunary packet splits.

    Parameters
    ----------
    factors : sequence of three fields
        ``(F1, F2, F3)``; pulled-back factors should be :class:`PullbackField`
        so that their packets see ``theta_Gamma``.
    pattern : str or tuple
        Three entries in ``{'o', 'l'}``.
    omega : WavePacket
        Cutoff with profile ``1`` on ``B_{7/8}``; defaults to a radius-1 cutoff.

    Returns
    -------
    float or dict
        Value at the smallest grid scale ``eps``; with ``report=True`` also the
        value at ``2 eps`` and the relative change.
    """
    pattern = tuple(pattern)
    if len(pattern) != 3 or len(factors) != 3:
        raise ParameterError("integral sizes take three factors and a three-entry pattern")
    omega = omega or make_cutoff_packet(1.0, plateau_fraction=7 / 8)
    r = spec.packet_params[0]
    fs = [f.map_layers(lambda l, s=s: _pattern_layer(l, s, omega, r)) for f, s in zip(factors, pattern)]
    H = ProductField(ProductField(fs[0], fs[1]), fs[2])
    S = model_sample(H, T, spec.quad, spec.restrict)

    def value(min_sigma):
        keep = S.sigma >= min_sigma * (1 - 1e-12)
        col = np.sum(S.values[..., keep], axis=3) * S.inner_weight
        per_theta = np.abs(np.sum(col, axis=2) * S.dzeta)
        per = np.sum(per_theta, axis=1) * S.dtheta / S.band_width
        return _finalize(per)

    eps = S.sigma[-1] if S.sigma.size else 0.0
    v1 = value(eps)
    if not report:
        return v1
    v2 = value(2 * eps)
    denom = max(abs(v1), abs(v2), 1e-300)
    flagged = pattern in (("o", "o", "l"), ("o", "l", "o"))
    return {"value": v1, "value_2eps": v2, "relative_change": abs(v1 - v2) / denom,
            "eps": float(eps), "vanishing_pattern": flagged}


def product_size(H: ProductField, T: Tree, variant: str, spec: SizeSpec, exclude=None):
    """Product sizes of a two-factor field ``H = G2 G3``.

    ``variant`` is one of ``'PP'`` (plain), ``'PD'``, ``'DP'``, ``'DD'``
    (``zeta`` boosts on the second, first or both factors), ``'defect_zeta'``
    or ``'defect_sigma'`` (Leibniz boosts plus the transport terms).
    """
    if not isinstance(H, ProductField):
        raise ParameterError("product sizes need a two-factor product field")
    spec.check_band(T)
    z = lambda l: l.zeta()
    if variant == "PP":
        G = H
    elif variant == "PD":
        G = H.map_second(z)
    elif variant == "DP":
        G = H.map_first(z)
    elif variant == "DD":
        G = ProductField(H.first.map_layers(z), H.second.map_layers(z))
    elif variant in ("defect_zeta", "defect_sigma"):
        G = DefectField(H, float(T.xi), variant.split("_")[1], spec.quad.h)
    else:
        raise ParameterError(f"unknown product variant {variant!r}")
    S = model_sample(G, T, spec.quad, spec.restrict, exclude)
    return _finalize(_mixed_norm(S, spec.u, spec.v))


def _beta_factor(spec: SizeSpec, beta_default: float) -> float:
    beta = spec.beta_prefactor if spec.beta_prefactor is not None else beta_default
    return 0.0 if np.isinf(spec.u) and beta == 0 else beta ** (1.0 / spec.u)


def composite_size(F, T: Tree, spec: SizeSpec, exclude=None, breakdown: bool = False):
    """Composite sizes built from the constituents above.

    ``composite_nonuniform``: ``L^(inf,inf) + L^(u,2) D + L^(u,1) defect + J^u``.
    ``composite_uniform_linear``: ``beta^(1/u) L^(u,inf) + L^(u,2) D +
    L^(u,1) defect`` restricted to ``inner_band``, all pulled back by ``gamma``.
    ``composite_uniform_bilinear``: for ``F = G2 G3`` (already pulled back),
    ``beta^(1/u) (L^(u,inf) PP + L^(u,2) PD + L^(u,2) DP)`` on the inner band
    plus ``L^(u,1) DD`` and the restricted ``L^(u,1)`` bilinear defect.
    """
    u = spec.u
    parts = {}
    if spec.kind == "composite_nonuniform":
        if isinstance(F, ProductField):
            raise ParameterError("non-uniform composite size takes a single field")
        parts["lebesgue_inf_inf"] = lebesgue_size(F, T, replace(spec, kind="lebesgue", u=np.inf, v=np.inf), exclude)
        parts["lacunary_u_2"] = lacunary_size(F, T, replace(spec, kind="lacunary", v=2.0), exclude)
        parts["defect_u_1"] = defect_size(F, T, replace(spec, kind="lebesgue", v=1.0), "total", exclude)
        parts["sio_u"] = sio_size(F, T, replace(spec, kind="sio"), exclude)
    elif spec.kind == "composite_uniform_linear":
        if isinstance(F, ProductField):
            raise ParameterError("linear uniform composite size takes a single field")
        spec.check_band(T)
        beta = spec.gamma.beta if spec.gamma is not None else 1.0
        parts["lebesgue_u_inf"] = _beta_factor(spec, beta) * lebesgue_size(
            F, T, replace(spec, kind="lebesgue", v=np.inf, inner_band=None), exclude)
        parts["lacunary_u_2"] = lacunary_size(F, T, replace(spec, kind="lacunary", v=2.0, inner_band=None), exclude)
        parts["defect_u_1_in"] = defect_size(
            F, T, replace(spec, kind="lebesgue", v=1.0, restrict=spec.inner_band, inner_band=None), "total", exclude)
    elif spec.kind == "composite_uniform_bilinear":
        if not isinstance(F, ProductField):
            raise ParameterError("bilinear uniform composite size takes a product field")
        spec.check_band(T)
        beta = F.defect_constants()[0]
        inner = replace(spec, kind="lebesgue", restrict=spec.inner_band, inner_band=None, gamma=None)
        plain = replace(spec, kind="lebesgue", inner_band=None, gamma=None)
        bf = _beta_factor(spec, beta)
        parts["PP_u_inf_in"] = bf * product_size(F, T, "PP", replace(inner, v=np.inf), exclude)
        parts["PD_u_2_in"] = bf * product_size(F, T, "PD", replace(inner, v=2.0), exclude)
        parts["DP_u_2_in"] = bf * product_size(F, T, "DP", replace(inner, v=2.0), exclude)
        parts["DD_u_1"] = product_size(F, T, "DD", replace(plain, v=1.0), exclude)
        parts["defect_u_1_in"] = (product_size(F, T, "defect_zeta", replace(inner, v=1.0), exclude)
                                  + product_size(F, T, "defect_sigma", replace(inner, v=1.0), exclude))
    else:
        raise ParameterError(f"{spec.kind!r} is not a composite size")
    total = float(sum(parts.values()))
    if breakdown:
        return total, parts
    return total


def size(F, T: Tree, spec: SizeSpec, exclude=None) -> float:
    """Dispatch on ``spec.kind`` (integral sizes use :func:`integral_size`)."""
    kind = spec.kind
    if kind == "lebesgue":
        return lebesgue_size(F, T, spec, exclude)
    if kind == "lacunary":
        return lacunary_size(F, T, spec, exclude)
    if kind in ("defect_zeta", "defect_sigma"):
        return defect_size(F, T, spec, exclude=exclude)
    if kind == "sio":
        return sio_size(F, T, spec, exclude)
    if kind.startswith("composite"):
        return composite_size(F, T, spec, exclude)
    raise ParameterError("integral sizes take three factors; call integral_size")
