"""Trees, strips, regions and their boundary graphs.

Every region handled here is a subgraph ``{(eta, y, t): 0 < t < b(eta, y)}``
of a boundary function ``b``.  Trees use local coordinates::

    pi_T(theta, zeta, sigma) = (xi + theta / (s sigma), x + s zeta, s sigma)

and contain the points with ``theta`` in the band, ``0 < sigma < 1 - |zeta|``.
Strips ``D_beta(x, s)`` are the tents ``t < (s - |y - x|) / beta``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .signal import ParameterError

__all__ = [
    "Tree",
    "Strip",
    "Union",
    "Intersection",
    "Difference",
    "Forest",
    "StripUnion",
    "BoundaryFn",
    "PullbackBoundary",
    "CountingFunction",
    "tree_contains",
    "strip_contains",
    "model_coords",
    "from_model",
    "counting_function",
    "boundary_of",
    "pullback_boundary",
    "region_to_json",
    "region_from_json",
    "CertificateError",
]

_SLACK = 1e-9


class CertificateError(ParameterError):
    """A boundary regularity certificate failed or a root was not bracketed."""


class Region:
    """Base class for subgraph regions."""

    def contains(self, eta, y, t):  # pragma: no cover - interface
        raise NotImplementedError

    def boundary_value(self, eta, y, gradient=False):  # pragma: no cover - interface
        raise NotImplementedError

    def leaves(self):
        return [self]

    def __or__(self, other):
        return Union((self, other))

    def __and__(self, other):
        return Intersection((self, other))

    def __sub__(self, other):
        return Difference(self, other)


@dataclass(frozen=True)
class Tree(Region):
    """Tree with top ``(xi, x, s)`` and open frequency band ``band``."""

    xi: float
    x: float
    s: float
    band: tuple = (-4.0, 4.0)

    def __post_init__(self):
        if not self.s > 0:
            raise ParameterError("tree scale must be positive")
        lo, hi = self.band
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise ParameterError("band must be a bounded open interval")
        object.__setattr__(self, "band", (float(lo), float(hi)))

    @property
    def width(self) -> float:
        return self.band[1] - self.band[0]

    def check_uniform_band(self) -> None:
        """Require ``B_4`` strictly inside the band and the band strictly inside ``B_256``."""
        lo, hi = self.band
        if not (lo < -4 and hi > 4 and lo >= -256 and hi <= 256 and (lo > -256 or hi < 256)):
            raise ParameterError("band must satisfy B_4 < band < B_256")

    def model_coords(self, eta, y, t):
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0):
            raise ParameterError("t must be positive")
        return t * (np.asarray(eta) - self.xi), (np.asarray(y) - self.x) / self.s, t / self.s

    def from_model(self, theta, zeta, sigma):
        sigma = np.asarray(sigma, dtype=float)
        if np.any(sigma <= 0):
            raise ParameterError("sigma must be positive")
        t = self.s * sigma
        return self.xi + np.asarray(theta) / t, self.x + self.s * np.asarray(zeta), t

    def in_model(self, theta, zeta, sigma):
        theta, zeta, sigma = (np.asarray(a, dtype=float) for a in (theta, zeta, sigma))
        return ((theta > self.band[0]) & (theta < self.band[1]) & (sigma > 0)
                & (sigma < 1 - np.abs(zeta)))

    def contains(self, eta, y, t):
        t = np.asarray(t, dtype=float)
        tp = np.where(t > 0, t, 1.0)
        th, ze, si = self.model_coords(eta, y, tp)
        return self.in_model(th, ze, si) & (t > 0)

    def boundary_value(self, eta, y, gradient=False):
        lo, hi = self.band
        if not lo < 0 < hi:
            raise ParameterError("band must contain 0 for the tree to be a subgraph")
        eta, y = np.broadcast_arrays(np.asarray(eta, float), np.asarray(y, float))
        d = eta - self.xi
        dy = y - self.x
        space = self.s - np.abs(dy)
        with np.errstate(divide="ignore"):
            freq = np.where(d > 0, hi / np.where(d > 0, d, 1), np.where(d < 0, lo / np.where(d < 0, d, 1), np.inf))
        use_space = space <= freq
        b = np.where(use_space, space, freq)
        inside = space > 0
        b = np.where(inside, b, 0.0)
        if not gradient:
            return b
        db_y = np.where(inside & use_space, -np.sign(dy), 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            dfreq = np.where(d > 0, -hi / d**2, np.where(d < 0, -lo / d**2, 0.0))
        db_eta = np.where(inside & ~use_space, dfreq, 0.0)
        return b, db_eta, db_y

    def meta(self):
        return {"band": self.band}


@dataclass(frozen=True)
class Strip(Region):
    """Strip ``D_beta(x, s)``."""

    x: float
    s: float
    beta: float = 1.0

    def __post_init__(self):
        if not self.s > 0:
            raise ParameterError("strip scale must be positive")
        if not 0 < self.beta <= 1:
            raise ParameterError("beta must lie in (0, 1]")

    def contains(self, eta, y, t):
        t = np.asarray(t, dtype=float)
        return (t > 0) & (t < (self.s - np.abs(np.asarray(y) - self.x)) / self.beta) & np.ones_like(np.asarray(eta), bool)

    def boundary_value(self, eta, y, gradient=False):
        eta, y = np.broadcast_arrays(np.asarray(eta, float), np.asarray(y, float))
        dy = y - self.x
        b = np.maximum((self.s - np.abs(dy)) / self.beta, 0.0)
        if not gradient:
            return b
        return b, np.zeros_like(b), np.where(b > 0, -np.sign(dy) / self.beta, 0.0)

    def meta(self):
        return {"beta": self.beta}


def _check_meta(children):
    betas = {c.beta for leaf in children for c in leaf.leaves() if isinstance(c, Strip)}
    bands = {c.band for leaf in children for c in leaf.leaves() if isinstance(c, Tree)}
    if len(betas) > 1:
        raise ParameterError("strip leaves carry different beta")
    if len(bands) > 1:
        raise ParameterError("tree leaves carry different bands")


@dataclass(frozen=True)
class Union(Region):
    children: tuple

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        _check_meta(self.children)

    def leaves(self):
        return [l for c in self.children for l in c.leaves()]

    def contains(self, eta, y, t):
        out = np.zeros(np.broadcast(np.asarray(eta), np.asarray(y), np.asarray(t)).shape, bool)
        for c in self.children:
            out |= c.contains(eta, y, t)
        return out

    def boundary_value(self, eta, y, gradient=False):
        return _combine(self.children, eta, y, gradient, np.argmax)


@dataclass(frozen=True)
class Intersection(Region):
    children: tuple

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        _check_meta(self.children)

    def leaves(self):
        return [l for c in self.children for l in c.leaves()]

    def contains(self, eta, y, t):
        out = np.ones(np.broadcast(np.asarray(eta), np.asarray(y), np.asarray(t)).shape, bool)
        for c in self.children:
            out &= c.contains(eta, y, t)
        return out

    def boundary_value(self, eta, y, gradient=False):
        return _combine(self.children, eta, y, gradient, np.argmin)


@dataclass(frozen=True)
class Difference(Region):
    """Set difference; membership only, no boundary function."""

    plus: Region
    minus: Region

    def leaves(self):
        return self.plus.leaves() + self.minus.leaves()

    def contains(self, eta, y, t):
        return self.plus.contains(eta, y, t) & ~self.minus.contains(eta, y, t)

    def boundary_value(self, eta, y, gradient=False):
        raise ParameterError("a set difference is not a subgraph region")


def _combine(children, eta, y, gradient, pick):
    if not gradient:
        vals = np.stack([c.boundary_value(eta, y) for c in children])
        idx = pick(vals, axis=0)
        return np.take_along_axis(vals, idx[None], 0)[0]
    parts = [c.boundary_value(eta, y, gradient=True) for c in children]
    vals = np.stack([p[0] for p in parts])
    idx = pick(vals, axis=0)[None]
    out = [np.take_along_axis(np.stack([p[j] for p in parts]), idx, 0)[0] for j in range(3)]
    return tuple(out)


def Forest(trees) -> Union:
    """Finite union of trees sharing one band."""
    trees = tuple(trees)
    if not all(isinstance(t, Tree) for t in trees):
        raise ParameterError("a forest holds trees only")
    return Union(trees)


def StripUnion(strips) -> Union:
    """Finite union of strips sharing one beta."""
    strips = tuple(strips)
    if not all(isinstance(d, Strip) for d in strips):
        raise ParameterError("a strip union holds strips only")
    return Union(strips)


def tree_contains(T: Tree, eta, y, t):
    return T.contains(eta, y, t)


def strip_contains(D: Strip, eta, y, t):
    return D.contains(eta, y, t)


def model_coords(T: Tree, eta, y, t):
    return T.model_coords(eta, y, t)


def from_model(T: Tree, theta, zeta, sigma):
    return T.from_model(theta, zeta, sigma)


# ---------------------------------------------------------------------------
# counting functions


@dataclass(frozen=True)
class CountingFunction:
    """Step function ``N(z) = sum 1_{(x - s, x + s)}(z)`` of open intervals."""

    lo: np.ndarray
    hi: np.ndarray

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        return np.sum((self.lo[:, None] < z.ravel()) & (self.hi[:, None] > z.ravel()), axis=0).reshape(z.shape)

    @property
    def breaks(self) -> np.ndarray:
        return np.unique(np.concatenate([self.lo, self.hi]))

    @property
    def values(self) -> np.ndarray:
        """Counts on the open gaps between consecutive breaks."""
        b = self.breaks
        return self(0.5 * (b[:-1] + b[1:])) if b.size > 1 else np.zeros(0, int)

    @property
    def L1(self) -> float:
        return float(np.sum(self.hi - self.lo))

    @property
    def Linf(self) -> float:
        v = self.values
        return float(v.max()) if v.size else 0.0

    def support_measure(self) -> float:
        """Lebesgue measure of ``{N > 0}``."""
        b = self.breaks
        if b.size < 2:
            return 0.0
        return float(np.sum(np.diff(b)[self.values > 0]))


def counting_function(collection) -> CountingFunction:
    """Counting function of a forest or strip union (or a list of trees/strips).

    Examples
    --------
    >>> cf = counting_function([Tree(0.0, 0.0, 1.0), Tree(0.0, 0.0, 2.0)])
    >>> cf.L1, cf.Linf
    (6.0, 2.0)
    """
    items = collection.leaves() if isinstance(collection, Region) else list(collection)
    lo = np.array([it.x - it.s for it in items], float)
    hi = np.array([it.x + it.s for it in items], float)
    return CountingFunction(lo, hi)


# ---------------------------------------------------------------------------
# boundary functions


@dataclass(frozen=True)
class BoundaryFn:
    """Boundary values ``b`` on an ``(eta, y)`` grid with regularity certificates.

    ``certificates`` holds the worst observed ratios: ``y_lipschitz`` is
    ``max |db/dy| * beta`` (must be at most 1) and ``eta_slope`` is the largest
    violation of ``1/theta_- <= d(1/b)/d eta <= 1/theta_+`` relative to the
    bound (must be at most 0).
    """

    eta_nodes: np.ndarray
    y_nodes: np.ndarray
    values: np.ndarray
    beta: float
    band: tuple | None
    certificates: dict

    @property
    def valid(self) -> bool:
        c = self.certificates
        return c["y_lipschitz"] <= 1 + _SLACK and c["eta_slope"] <= _SLACK

    def to_csv(self, path) -> None:
        E, Y = np.meshgrid(self.eta_nodes, self.y_nodes, indexing="ij")
        np.savetxt(path, np.column_stack([E.ravel(), Y.ravel(), self.values.ravel()]),
                   delimiter=",", header="eta,y,b", comments="")


def _region_meta(E: Region):
    leaves = E.leaves()
    betas = {l.beta for l in leaves if isinstance(l, Strip)}
    bands = {l.band for l in leaves if isinstance(l, Tree)}
    if len(betas) > 1 or len(bands) > 1:
        raise ParameterError("inconsistent leaf metadata")
    beta = betas.pop() if betas else 1.0
    band = bands.pop() if bands else None
    return beta, band


def boundary_certificates(values, eta_nodes, y_nodes, beta, band):
    """Worst discrete ratios for both regularity bounds."""
    b = np.asarray(values, float)
    fin = np.isfinite(b)
    y_lip = 0.0
    if y_nodes.size > 1:
        both = fin[:, 1:] & fin[:, :-1]
        q = np.abs(np.diff(np.where(fin, b, 0), axis=1)) / np.diff(y_nodes)[None, :]
        if np.any(both):
            y_lip = float(np.max(q[both]) * beta)
    eta_viol = -np.inf
    if eta_nodes.size > 1:
        pos = fin & (b > 0)
        both = pos[1:, :] & pos[:-1, :]
        if np.any(both):
            with np.errstate(divide="ignore"):
                inv = np.where(pos, 1.0 / np.where(pos, b, 1.0), 0.0)
            q = np.diff(inv, axis=0) / np.diff(eta_nodes)[:, None]
            lo, hi = (1.0 / band[0], 1.0 / band[1]) if band is not None else (0.0, 0.0)
            scale = max(abs(lo), abs(hi), 1.0)
            viol = np.maximum(q - hi, lo - q) / scale
            eta_viol = float(np.max(viol[both]))
    return {"y_lipschitz": y_lip, "eta_slope": eta_viol if np.isfinite(eta_viol) else 0.0}


def boundary_of(E: Region, eta_nodes, y_nodes) -> BoundaryFn:
    """Closed-form boundary of a union/intersection region on an ``(eta, y)`` grid.

    Examples
    --------
    >>> D = Strip(0.0, 1.0, 0.5)
    >>> float(boundary_of(D, [0.0], [0.0]).values[0, 0])
    2.0
    """
    beta, band = _region_meta(E)
    eta_nodes = np.asarray(eta_nodes, float)
    y_nodes = np.asarray(y_nodes, float)
    Eg, Yg = np.meshgrid(eta_nodes, y_nodes, indexing="ij")
    vals = E.boundary_value(Eg, Yg)
    certs = boundary_certificates(vals, eta_nodes, y_nodes, beta, band)
    return BoundaryFn(eta_nodes, y_nodes, vals, beta, band, certs)


@dataclass(frozen=True)
class PullbackBoundary:
    """Boundary ``b*(theta, zeta)`` in model ``sigma`` units along a tree."""

    theta_nodes: np.ndarray
    zeta_nodes: np.ndarray
    values: np.ndarray
    certificates: dict

    @property
    def valid(self) -> bool:
        c = self.certificates
        return c["zeta_lipschitz"] <= 1 + _SLACK and c["theta_log_slope"] <= _SLACK


def solve_model_boundary(T: Tree, E: Region, theta, zeta, iters: int = 200):
    """Vectorized bisection in ``log sigma`` of ``s sigma = b(pi_T(theta, zeta, sigma))``.

    Returns ``sigma*`` (``0`` if the region misses the ray, ``inf`` if the ray
    never leaves it).  Raises :class:`CertificateError` when the sign pattern
    is not a single crossing on the sampled ray.
    """
    theta, zeta = np.broadcast_arrays(np.asarray(theta, float), np.asarray(zeta, float))

    def g(sig):
        eta, y, t = T.from_model(theta, zeta, sig)
        return t - E.boundary_value(eta, y)

    lo = np.full(theta.shape, 1e-12)
    hi = np.full(theta.shape, 1e6)
    glo, ghi = g(lo), g(hi)
    out = np.full(theta.shape, np.nan)
    out[glo >= 0] = 0.0
    out[(glo < 0) & (ghi < 0)] = np.inf
    active = (glo < 0) & (ghi >= 0)
    llo, lhi = np.log(lo), np.log(hi)
    for _ in range(iters):
        mid = 0.5 * (llo + lhi)
        gm = g(np.exp(mid))
        llo = np.where(active & (gm < 0), mid, llo)
        lhi = np.where(active & (gm >= 0), mid, lhi)
    out[active] = np.exp(0.5 * (llo + lhi))[active]
    # single crossing: sample the ray and count sign changes
    probe = np.exp(np.linspace(np.log(1e-6), np.log(4.0), 97))
    signs = np.stack([g(np.full(theta.shape, p)) >= 0 for p in probe])
    changes = np.sum(signs[1:] != signs[:-1], axis=0)
    if np.any(changes > 1):
        raise CertificateError("boundary crosses a model ray more than once")
    return out


def pullback_boundary(T: Tree, E: Region, theta_nodes, zeta_nodes) -> PullbackBoundary:
    """Boundary of ``E`` in the model coordinates of ``T`` with certificates.

    Certificates: ``zeta_lipschitz = beta * max |d b*/d zeta|`` and
    ``theta_log_slope``, the largest violation of
    ``ln((theta_+ - th2)/(theta_+ - th1)) <= ln b*(th2) - ln b*(th1)
    <= ln((th2 - theta_-)/(th1 - theta_-))`` over adjacent nodes in the band.
    """
    beta, _ = _region_meta(E)
    band = T.band
    th = np.asarray(theta_nodes, float)
    ze = np.asarray(zeta_nodes, float)
    TH, ZE = np.meshgrid(th, ze, indexing="ij")
    bstar = solve_model_boundary(T, E, TH, ZE)
    fin = np.isfinite(bstar)
    zl = 0.0
    if ze.size > 1:
        both = fin[:, 1:] & fin[:, :-1]
        if np.any(both):
            q = np.abs(np.diff(np.where(fin, bstar, 0), axis=1)) / np.diff(ze)[None, :]
            zl = float(np.max(q[both]) * beta)
    viol = -np.inf
    if th.size > 1:
        lo, hi = band
        pos = fin & (bstar > 0)
        t1, t2 = th[:-1, None], th[1:, None]
        ok = pos[1:, :] & pos[:-1, :] & (t1 > lo) & (t2 < hi)
        if np.any(ok):
            with np.errstate(divide="ignore", invalid="ignore"):
                dl = np.log(bstar[1:, :]) - np.log(bstar[:-1, :])
                lower = np.log((hi - t2) / (hi - t1))
                upper = np.log((t2 - lo) / (t1 - lo))
            v = np.maximum(lower - dl, dl - upper) - _SLACK * np.maximum(np.abs(dl), 1.0)
            viol = float(np.max(np.where(ok, v, -np.inf)))
    certs = {"zeta_lipschitz": zl, "theta_log_slope": viol if np.isfinite(viol) else 0.0}
    return PullbackBoundary(th, ze, bstar, certs)


# ---------------------------------------------------------------------------
# serialization


def region_to_json(E: Region) -> dict:
    if isinstance(E, Tree):
        return {"type": "tree", "xi": E.xi, "x": E.x, "s": E.s, "band": list(E.band)}
    if isinstance(E, Strip):
        return {"type": "strip", "x": E.x, "s": E.s, "beta": E.beta}
    if isinstance(E, Union):
        return {"type": "union", "children": [region_to_json(c) for c in E.children]}
    if isinstance(E, Intersection):
        return {"type": "intersection", "children": [region_to_json(c) for c in E.children]}
    if isinstance(E, Difference):
        return {"type": "difference", "plus": region_to_json(E.plus), "minus": region_to_json(E.minus)}
    raise ParameterError(f"cannot serialize {type(E).__name__}")


def region_from_json(obj) -> Region:
    if isinstance(obj, str):
        obj = json.loads(obj)
    kind = obj.get("type")
    if kind == "tree":
        return Tree(obj["xi"], obj["x"], obj["s"], tuple(obj.get("band", (-4.0, 4.0))))
    if kind == "strip":
        return Strip(obj["x"], obj["s"], obj.get("beta", 1.0))
    if kind == "union":
        return Union(tuple(region_from_json(c) for c in obj["children"]))
    if kind == "intersection":
        return Intersection(tuple(region_from_json(c) for c in obj["children"]))
    if kind == "difference":
        return Difference(region_from_json(obj["plus"]), region_from_json(obj["minus"]))
    raise ParameterError(f"unknown region type {kind!r}")
