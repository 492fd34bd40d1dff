"""Fields on the time-frequency-scale half space and the embedding map.

A field is a lazily evaluated object: ``F.evaluate(eta, y, t, theta)``
returns an array of shape ``(n_layers,) + eta.shape``.  Each layer is a wave
packet (or a pair of packets for products), so a field is a finite sample of
an element of the dual of the packet class.  ``theta`` is the frequency
parameter of the evaluation point, needed by boosted packets whose profile
depends on it.

The embedding of ``f = sum c_k exp(2 pi i xi_k z)`` is synthesized in closed
form::

    E[f](eta, y, t)[phi] = sum_k c_k exp(2 pi i xi_k y) phi_hat(t (eta - xi_k)),

which equals ``f * Dil_t Mod_eta (phi^v)`` evaluated at ``y``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field

import numpy as np

from .signal import ParameterError, ResolutionError, SampledSignal
from .wavepacket import Layer, PacketLayer, WavePacket

__all__ = [
    "Grid3",
    "GammaMap",
    "gamma_apply",
    "gamma_invert",
    "Field",
    "EmbedField",
    "PullbackField",
    "MaskField",
    "ProductField",
    "SumField",
    "FunctionField",
    "GridField",
    "DefectField",
    "embed",
    "as_layers",
    "field_boost",
    "defect_field",
    "product_field",
    "save_grid_field",
    "load_grid_field",
]


# ---------------------------------------------------------------------------
# grids and changes of variables


@dataclass(frozen=True)
class Grid3:
    """Tensor grid: uniform in ``eta`` and ``y``, geometric in ``t``."""

    eta_nodes: np.ndarray
    y_nodes: np.ndarray
    t_nodes: np.ndarray

    def __post_init__(self):
        for name in ("eta_nodes", "y_nodes", "t_nodes"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        t = self.t_nodes
        if np.any(t <= 0) or np.any(np.diff(t) <= 0):
            raise ParameterError("t_nodes must be positive and increasing")
        if t.size > 1:
            ratios = t[1:] / t[:-1]
            if not np.allclose(ratios, ratios[0], rtol=1e-9) or not 1 < ratios[0] <= 2:
                raise ParameterError("t_nodes must have a constant ratio in (1, 2]")
        for arr in (self.eta_nodes, self.y_nodes):
            if arr.size > 2 and not np.allclose(np.diff(arr), arr[1] - arr[0], rtol=1e-9):
                raise ParameterError("eta and y nodes must be uniform")

    @classmethod
    def build(cls, eta_range, n_eta, y_range, n_y, t_range, per_octave):
        t0, t1 = t_range
        k = int(np.ceil(np.log2(t1 / t0) * per_octave))
        return cls(np.linspace(*eta_range, n_eta), np.linspace(*y_range, n_y),
                   t0 * 2.0 ** (np.arange(k + 1) / per_octave))

    @property
    def shape(self):
        return (self.eta_nodes.size, self.y_nodes.size, self.t_nodes.size)

    def mesh(self):
        return np.meshgrid(self.eta_nodes, self.y_nodes, self.t_nodes, indexing="ij")


@dataclass(frozen=True)
class GammaMap:
    """``(eta, y, t) -> (alpha (eta + gamma / t), y, beta t)``.

    The parameter box is closed (``|alpha beta|`` in ``[1/2, 2]``,
    ``|gamma| <= 1``) so that the two maps attached to the bilinear Hilbert
    transform, see :meth:`bht`, are admissible for every ``beta`` in ``(0, 1]``.
    """

    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        if not 0 < self.beta <= 1:
            raise ParameterError("beta must lie in (0, 1]")
        if not 0.5 - 1e-12 <= abs(self.alpha * self.beta) <= 2 + 1e-12:
            raise ParameterError("|alpha beta| must lie in [1/2, 2]")
        if not abs(self.gamma) <= 1 + 1e-12:
            raise ParameterError("|gamma| must be at most 1")

    @classmethod
    def bht(cls, index: int, beta: float) -> "GammaMap":
        """Maps attached to the transform: 1 identity, 2 and 3 the degenerate ones."""
        if index == 1:
            return cls(1.0, 1.0, 0.0)
        if index == 2:
            return cls(1.0 / beta, beta, -1.0)
        if index == 3:
            return cls(-(1.0 + beta) / beta, beta, -1.0 / (1.0 + beta))
        raise ParameterError("index must be 1, 2 or 3")

    def theta(self, theta):
        """Frequency parameter seen by the pulled-back packet."""
        return self.alpha * self.beta * (np.asarray(theta) + self.gamma)

    def band(self, band):
        lo, hi = sorted((float(self.theta(band[0])), float(self.theta(band[1]))))
        return (lo, hi)


def gamma_apply(g: GammaMap, eta, y, t):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ParameterError("t must be positive")
    return g.alpha * (np.asarray(eta) + g.gamma / t), np.asarray(y), g.beta * t


def gamma_invert(g: GammaMap, eta, y, t):
    t = np.asarray(t, dtype=float)
    t0 = t / g.beta
    return np.asarray(eta) / g.alpha - g.gamma / t0, np.asarray(y), t0


# ---------------------------------------------------------------------------
# field nodes


def as_layers(family) -> tuple:
    """Normalize a packet or a sequence of packets/layers into a layer tuple."""
    if isinstance(family, (WavePacket, Layer)):
        family = [family]
    out = []
    for item in family:
        out.append(PacketLayer(item) if isinstance(item, WavePacket) else item)
    return tuple(out)


class Field:
    """Base class: lazily evaluated, layered field on the half space."""

    n_layers: int = 1

    def evaluate(self, eta, y, t, theta):  # pragma: no cover - interface
        raise NotImplementedError

    def map_layers(self, fn) -> "Field":
        """Apply ``fn`` to every packet layer at the leaves."""
        return self

    def defect_constants(self):
        """``(y_scale, phase_scale)`` of the space defect for this field."""
        return (1.0, 1.0)

    def boundary(self):
        """Region whose indicator multiplies the whole field, if any."""
        return None

    def __mul__(self, c):
        return SumField(((complex(c), self),))

    __rmul__ = __mul__

    def __add__(self, other):
        return SumField(((1.0, self), (1.0, other)))

    def __sub__(self, other):
        return SumField(((1.0, self), (-1.0, other)))


@dataclass(frozen=True)
class EmbedField(Field):
    """Closed-form embedding of a trigonometric polynomial."""

    freqs: np.ndarray
    coefs: np.ndarray
    layers: tuple
    chunk: int = 1 << 16

    @property
    def n_layers(self):
        return len(self.layers)

    def evaluate(self, eta, y, t, theta):
        eta, y, t, theta = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (eta, y, t, theta)))
        shape = eta.shape
        e, yy, tt, th = (a.ravel() for a in (eta, y, t, theta))
        out = np.zeros((self.n_layers, e.size), dtype=complex)
        if self.freqs.size == 0:
            return out.reshape((self.n_layers,) + shape)
        for s in range(0, e.size, self.chunk):
            sl = slice(s, s + self.chunk)
            w = tt[sl, None] * (e[sl, None] - self.freqs[None, :])
            phase = np.exp(2j * np.pi * np.multiply.outer(yy[sl], self.freqs)) * self.coefs
            ths = np.broadcast_to(th[sl, None], w.shape)
            for i, layer in enumerate(self.layers):
                out[i, sl] = np.sum(phase * layer.evaluate(w, ths), axis=1)
        return out.reshape((self.n_layers,) + shape)

    def map_layers(self, fn):
        return EmbedField(self.freqs, self.coefs, tuple(fn(l) for l in self.layers), self.chunk)

    def on_grid(self, grid: Grid3, layer_theta=0.0):
        """Materialize the field on a grid (``theta`` fixed to ``layer_theta``)."""
        E, Y, T = grid.mesh()
        return GridField(grid, self.evaluate(E, Y, T, np.full(E.shape, layer_theta)))


@dataclass(frozen=True)
class PullbackField(Field):
    """``Gamma^* G``: evaluate ``G`` at ``Gamma(p)`` with frequency ``theta_Gamma``."""

    inner: Field
    gamma: GammaMap

    @property
    def n_layers(self):
        return self.inner.n_layers

    def evaluate(self, eta, y, t, theta):
        e2, y2, t2 = gamma_apply(self.gamma, eta, y, t)
        return self.inner.evaluate(e2, y2, t2, self.gamma.theta(theta))

    def map_layers(self, fn):
        return PullbackField(self.inner.map_layers(fn), self.gamma)

    def defect_constants(self):
        g = self.gamma
        return (g.beta, g.alpha * g.beta)


@dataclass(frozen=True)
class MaskField(Field):
    """``1_E G`` for a region ``E`` exposing ``contains`` and a boundary function."""

    inner: Field
    region: object

    @property
    def n_layers(self):
        return self.inner.n_layers

    def evaluate(self, eta, y, t, theta):
        vals = self.inner.evaluate(eta, y, t, theta)
        return vals * self.region.contains(eta, y, t)

    def map_layers(self, fn):
        return MaskField(self.inner.map_layers(fn), self.region)

    def defect_constants(self):
        return self.inner.defect_constants()

    def boundary(self):
        return self.region


@dataclass(frozen=True)
class ProductField(Field):
    """Pointwise product with tensor layers ``(i, j)`` flattened row-major."""

    first: Field
    second: Field

    @property
    def n_layers(self):
        return self.first.n_layers * self.second.n_layers

    def evaluate(self, eta, y, t, theta):
        a = self.first.evaluate(eta, y, t, theta)
        b = self.second.evaluate(eta, y, t, theta)
        return (a[:, None] * b[None, :]).reshape((-1,) + a.shape[1:])

    def map_layers(self, fn):
        return ProductField(self.first.map_layers(fn), self.second.map_layers(fn))

    def map_first(self, fn):
        return ProductField(self.first.map_layers(fn), self.second)

    def map_second(self, fn):
        return ProductField(self.first, self.second.map_layers(fn))

    def defect_constants(self):
        k1, c1 = self.first.defect_constants()
        k2, c2 = self.second.defect_constants()
        if not np.isclose(k1, k2):
            raise ParameterError("factors carry different beta; the bilinear defect is undefined")
        return (k1, c1 + c2)


@dataclass(frozen=True)
class SumField(Field):
    """Linear combination of fields with equal layer counts."""

    terms: tuple

    def __post_init__(self):
        counts = {f.n_layers for _, f in self.terms}
        if len(counts) != 1:
            raise ParameterError("summed fields must have equal layer counts")

    @property
    def n_layers(self):
        return self.terms[0][1].n_layers

    def evaluate(self, eta, y, t, theta):
        return sum(c * f.evaluate(eta, y, t, theta) for c, f in self.terms)

    def map_layers(self, fn):
        return SumField(tuple((c, f.map_layers(fn)) for c, f in self.terms))

    def defect_constants(self):
        consts = {f.defect_constants() for _, f in self.terms}
        if len(consts) != 1:
            raise ParameterError("summands carry different defect constants")
        return consts.pop()

    def boundary(self):
        regions = {id(f.boundary()): f.boundary() for _, f in self.terms}
        if len(regions) == 1:
            return next(iter(regions.values()))
        if any(r is not None for r in regions.values()):
            raise ParameterError("summands carry different masks")
        return None


@dataclass(frozen=True)
class FunctionField(Field):
    """Field given by a vectorized callable ``func(eta, y, t, theta) -> (L, ...)``."""

    func: object
    n_layers: int = 1

    def evaluate(self, eta, y, t, theta):
        out = np.asarray(self.func(eta, y, t, theta), dtype=complex)
        shape = np.broadcast(np.asarray(eta), np.asarray(y), np.asarray(t)).shape
        return np.broadcast_to(out, (self.n_layers,) + shape).copy()


@dataclass(frozen=True)
class GridField(Field):
    """Values on a :class:`Grid3` with trilinear interpolation in ``(eta, y, log t)``.

    Points outside the grid are clamped to the boundary and counted in
    ``edge_hits`` (a one-element list, so the frozen instance can record it).
    """

    grid: Grid3
    values: np.ndarray
    edge_hits: list = dc_field(default_factory=lambda: [0], compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.ndim == 3:
            vals = vals[None]
        if vals.shape[1:] != self.grid.shape:
            raise ParameterError("values do not match the grid shape")
        if not np.all(np.isfinite(vals)):
            raise ParameterError("field values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def n_layers(self):
        return self.values.shape[0]

    def _axis(self, nodes, q):
        if nodes.size == 1:
            return np.zeros(q.shape, int), np.zeros(q.shape), np.zeros(q.shape, bool)
        pos = (q - nodes[0]) / (nodes[1] - nodes[0])
        edge = (pos < -1e-12) | (pos > nodes.size - 1 + 1e-12)
        pos = np.clip(pos, 0, nodes.size - 1)
        i = np.minimum(np.floor(pos).astype(int), nodes.size - 2)
        return i, pos - i, edge

    def evaluate(self, eta, y, t, theta=None):
        eta, y, t = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (eta, y, t)))
        g = self.grid
        ie, fe, ee = self._axis(g.eta_nodes, eta)
        iy, fy, ey = self._axis(g.y_nodes, y)
        it, ft, et = self._axis(np.log(g.t_nodes), np.log(t))
        self.edge_hits[0] += int(np.count_nonzero(ee | ey | et))
        out = 0
        for de, we in ((0, 1 - fe), (1, fe)):
            for dy, wy in ((0, 1 - fy), (1, fy)):
                for dt, wt in ((0, 1 - ft), (1, ft)):
                    ie2 = np.minimum(ie + de, g.shape[0] - 1)
                    iy2 = np.minimum(iy + dy, g.shape[1] - 1)
                    it2 = np.minimum(it + dt, g.shape[2] - 1)
                    out = out + self.values[:, ie2, iy2, it2] * (we * wy * wt)
        return out


# ---------------------------------------------------------------------------
# embedding and operators


def embed(f: SampledSignal, grid: Grid3 | None, family, rel_tol: float = 1e-13) -> EmbedField:
    """Embedding of a sampled signal against a finite packet family.

    Parameters
    ----------
    f : SampledSignal
        Input signal, read as a trigonometric polynomial.
    grid : Grid3 or None
        If given, checked for resolving the signal: the ``y`` step must be
        below ``1 / (2 max |xi|)`` and the ``eta`` step below ``r / t_max``.
    family : WavePacket, Layer or sequence of them
        Packet layers.

    Returns
    -------
    EmbedField
        Evaluable anywhere; use :meth:`EmbedField.on_grid` for grid values.
    """
    layers = as_layers(family)
    freqs, coefs = f.spectrum(rel_tol)
    if grid is not None and freqs.size:
        r = min(layer.radius for layer in layers)
        xmax = np.max(np.abs(freqs))
        if grid.y_nodes.size > 1 and (grid.y_nodes[1] - grid.y_nodes[0]) * 2 * xmax > 1:
            raise ResolutionError("y grid does not resolve the signal frequencies")
        if grid.eta_nodes.size > 1 and (grid.eta_nodes[1] - grid.eta_nodes[0]) * grid.t_nodes[-1] > r:
            raise ResolutionError("eta grid too coarse for the largest scale")
    return EmbedField(np.asarray(freqs, float), np.asarray(coefs, complex), layers)


def field_boost(F: Field, kind: str, gamma: GammaMap | None = None) -> Field:
    """Replace every packet layer by its ``zeta`` or ``sigma`` boost.

    The boost frequency is the ``theta`` argument supplied at evaluation.  For
    a pullback the leaves see ``theta_Gamma`` automatically; passing ``gamma``
    wraps ``F`` in the pullback first.
    """
    if kind not in ("zeta", "sigma"):
        raise ParameterError("kind must be 'zeta' or 'sigma'")
    if gamma is not None:
        F = PullbackField(F, gamma)
    return F.map_layers(lambda l: l.zeta() if kind == "zeta" else l.sigma())


def product_field(F2: Field, F3: Field) -> ProductField:
    """Pointwise product ``G2[phi2] G3[phi3]`` with tensor layers."""
    g2 = getattr(F2, "grid", None)
    g3 = getattr(F3, "grid", None)
    if g2 is not None and g3 is not None and g2 != g3:
        raise ParameterError("grid mismatch")
    return ProductField(F2, F3)


def _tensor_boost(F: Field, kind: str) -> Field:
    """Leibniz boost: sum over factors of a product, plain boost otherwise."""
    fn = (lambda l: l.zeta()) if kind == "zeta" else (lambda l: l.sigma())
    if isinstance(F, ProductField):
        return SumField(((1.0, F.map_first(fn)), (1.0, F.map_second(fn))))
    if isinstance(F, MaskField):
        return MaskField(_tensor_boost(F.inner, kind), F.region)
    if isinstance(F, SumField):
        return SumField(tuple((c, _tensor_boost(f, kind)) for c, f in F.terms))
    return F.map_layers(fn)


@dataclass(frozen=True)
class DefectField(Field):
    """Regular part of the space or scale defect of a field along a tree.

    ``zeta``: ``D_zeta F - k t d_y F + 2 pi i c xi_T t F``.
    ``sigma``: ``D_sigma F - t d_t F + (eta - xi_T) d_eta F``.

    ``(k, c)`` are the defect constants of the field (``(1, 1)`` for plain
    fields, ``(beta, alpha beta)`` for pullbacks, ``(beta, (alpha2+alpha3)
    beta)`` for products of pullbacks).  Derivatives are centered differences
    along model directions with relative step ``h``: ``t d_y`` uses the
    ``y``-step ``h t`` and the scale part is ``-sigma d_sigma`` at fixed
    ``theta``.  When ``F = 1_E G`` the indicator is moved outside and the jump
    across ``t = b_E(eta, y)`` is reported by :meth:`singular_weight`.
    """

    source: Field
    xi_T: float
    kind: str
    h: float = 1e-3

    @property
    def n_layers(self):
        return self.source.n_layers

    def _smooth(self):
        src = self.source
        if isinstance(src, MaskField):
            return src.inner, src.region
        return src, None

    def evaluate(self, eta, y, t, theta):
        G, region = self._smooth()
        eta, y, t, theta = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (eta, y, t, theta)))
        k, c = G.defect_constants()
        h = self.h
        boosted = _tensor_boost(G, self.kind).evaluate(eta, y, t, theta)
        if self.kind == "zeta":
            dy = (G.evaluate(eta, y + h * t, t, theta) - G.evaluate(eta, y - h * t, t, theta)) / (2 * h)
            out = boosted - k * dy + 2j * np.pi * c * self.xi_T * t * G.evaluate(eta, y, t, theta)
        else:
            model_theta = t * (eta - self.xi_T)
            tp, tm = t * np.exp(h), t * np.exp(-h)
            fp = G.evaluate(self.xi_T + model_theta / tp, y, tp, theta)
            fm = G.evaluate(self.xi_T + model_theta / tm, y, tm, theta)
            out = boosted - (fp - fm) / (2 * h)
        if region is not None:
            out = out * region.contains(eta, y, t)
        return out

    def singular_weight(self, eta, y):
        """Weight ``w`` of the graph measure ``w t delta(t - b) G`` (``None`` if unmasked)."""
        G, region = self._smooth()
        if region is None:
            return None
        k, _ = G.defect_constants()
        b, db_eta, db_y = region.boundary_value(eta, y, gradient=True)
        if self.kind == "zeta":
            return -k * db_y
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(b > 0, 1 + (np.asarray(eta) - self.xi_T) * db_eta / b, 0.0)

    def singular_jacobian(self, eta, y):
        """``1 + (eta - xi_T) d_eta b / b``: converts the graph measure to model ``sigma``."""
        G, region = self._smooth()
        b, db_eta, _ = region.boundary_value(eta, y, gradient=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(b > 0, 1 + (np.asarray(eta) - self.xi_T) * db_eta / b, 1.0)

    def smooth_part(self):
        return self._smooth()[0]


def defect_field(F: Field, T, kind: str, gamma: GammaMap | None = None, h: float = 1e-3) -> DefectField:
    """Defect of ``F`` along the tree ``T`` (any object with attribute ``xi``)."""
    if kind not in ("zeta", "sigma"):
        raise ParameterError("kind must be 'zeta' or 'sigma'")
    if gamma is not None:
        F = PullbackField(F, gamma)
    return DefectField(F, float(T.xi), kind, h)


# ---------------------------------------------------------------------------
# serialization


def save_grid_field(F: GridField, path_prefix) -> None:
    """Write ``<prefix>.json`` (grid header) and ``<prefix>.csv`` (values)."""
    g = F.grid
    header = {"eta_nodes": g.eta_nodes.tolist(), "y_nodes": g.y_nodes.tolist(),
              "t_nodes": g.t_nodes.tolist(), "n_layers": F.n_layers}
    with open(f"{path_prefix}.json", "w") as fh:
        json.dump(header, fh, indent=1)
    idx = np.indices(F.values.shape).reshape(4, -1)
    vals = F.values.reshape(-1)
    data = np.column_stack([idx[1], idx[2], idx[3], idx[0], vals.real, vals.imag])
    np.savetxt(f"{path_prefix}.csv", data, delimiter=",", header="i_eta,i_y,i_t,layer,re,im",
               comments="", fmt=["%d", "%d", "%d", "%d", "%.17g", "%.17g"])


def load_grid_field(path_prefix) -> GridField:
    with open(f"{path_prefix}.json") as fh:
        header = json.load(fh)
    grid = Grid3(header["eta_nodes"], header["y_nodes"], header["t_nodes"])
    data = np.loadtxt(f"{path_prefix}.csv", delimiter=",", skiprows=1, ndmin=2)
    vals = np.zeros((header["n_layers"],) + grid.shape, dtype=complex)
    ie, iy, it, il = (data[:, j].astype(int) for j in range(4))
    vals[il, ie, iy, it] = data[:, 4] + 1j * data[:, 5]
    return GridField(grid, vals)
