"""Outer measures, outer Lebesgue quasi-norms and covering algorithms.

Outer measures are generated by trees (aggregated through the counting
function in ``L^1`` or ``L^inf``) or by strips (aggregated in ``L^1``).  Every
measure returned here comes from an explicit cover and is therefore an upper
bound for the infimum; the brute-force mode gives the exact minimum over a
supplied finite candidate collection.

Two computational engines are used:

* a *model-sample engine* for mask-commuting sizes (Lebesgue and lacunary):
  every candidate tree keeps its model-grid samples and the points they sit
  at, and excluding a tree only clears entries of those samples;
* a *point-cloud engine* for the covering arguments: the field is replaced by
  point masses ``|F| dV`` on a tensor grid (or on the graph of a boundary
  function), which makes the residual and mass certificates exact for the
  discretized measure.
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .embedding import (EmbedField, Field, GammaMap, MaskField, ProductField, PullbackField,
                        field_boost, gamma_apply, gamma_invert)
from .geometry import Forest, Region, Strip, StripUnion, Tree, counting_function
from .signal import ParameterError
from .sizes import (Quadrature, SizeSpec, _finalize, _mixed_norm, _pull, integral_size,
                    lacunary_size, lebesgue_size, model_sample)

__all__ = [
    "OuterSpec",
    "ExponentTuple",
    "CoverResult",
    "PointCloud",
    "UnboundedRegionError",
    "IterationCapError",
    "lattice_trees",
    "forest_measure",
    "nu_measure",
    "strip_components",
    "constructive_cover",
    "outer_measure",
    "superlevel_profile",
    "superlevel_measure",
    "outer_lp",
    "AtomicDecomposition",
    "atomic_decompose",
    "localized_norm",
    "field_point_cloud",
    "boundary_point_cloud",
    "greedy_cover",
    "maximal_function",
    "refine_to_linfty",
    "measure_compare",
    "RatioReport",
    "inequality_sampler",
]

log = logging.getLogger(__name__)


class UnboundedRegionError(ParameterError):
    """The region admits no finite cover by the requested generators."""


class IterationCapError(RuntimeError):
    """A greedy loop hit its iteration cap; ``partial`` holds what was built."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


# ---------------------------------------------------------------------------
# descriptors


@dataclass(frozen=True)
class OuterSpec:
    """Generating collection, aggregation and candidate lattice.

    Parameters
    ----------
    generator : {'trees', 'strips'}
    aggregation : 1 or inf
        ``L^p`` norm of the counting function for tree measures; strip
        measures always aggregate in ``L^1``.
    band : tuple
        Frequency band of the generating trees.
    beta : float
        Strip parameter.
    scales, x_range, xi_range, x_step, xi_step : lattice description
        Candidate tops ``(xi, x, s)``: ``s`` in ``scales``, ``x`` on the grid
        ``x_step * s * Z`` inside ``x_range`` and ``xi`` on
        ``xi_step * |band| / s * Z`` inside ``xi_range``.
    quad : Quadrature
        Model grid used by the size engine.
    max_iter : int
        Cap on greedy selections.
    """

    generator: str = "trees"
    aggregation: float = 1
    band: tuple = (-1.0, 1.0)
    beta: float = 1.0
    scales: tuple = (1.0, 2.0, 4.0)
    x_range: tuple = (-4.0, 4.0)
    xi_range: tuple = (-1.0, 1.0)
    x_step: float = 0.5
    xi_step: float = 0.5
    quad: Quadrature = field(default_factory=lambda: Quadrature(32, 8, 3, 2.0**-6))
    max_iter: int = 10_000

    def __post_init__(self):
        if self.generator not in ("trees", "strips"):
            raise ParameterError("generator must be 'trees' or 'strips'")
        if self.aggregation not in (1, np.inf):
            raise ParameterError("aggregation must be 1 or inf")
        if not 0 < self.beta <= 1:
            raise ParameterError("beta must lie in (0, 1]")


@dataclass(frozen=True)
class ExponentTuple:
    """Exponents ``p, q, r, u`` (``inf`` allowed)."""

    p: float = 2.0
    q: float = np.inf
    r: float = 2.0
    u: float = 1.0

    def validate(self, kind: str = "local") -> "ExponentTuple":
        """Check the constraints of a use case.

        ``'local'``: ``r <= q`` (X-sizes need it to be defined).
        ``'uniform'``: ``q > max(p', 2)`` and ``1 <= u < r < q``.
        """
        for name in ("p", "q", "r", "u"):
            if not getattr(self, name) >= 1:
                raise ParameterError(f"exponent {name} must be at least 1")
        if self.r > self.q:
            raise ParameterError("X-sizes require r <= q")
        if kind == "uniform":
            pp = np.inf if self.p == 1 else self.p / (self.p - 1)
            if not self.q > max(pp, 2.0):
                raise ParameterError("need q > max(p', 2)")
            if not (1 <= self.u < self.r < self.q):
                raise ParameterError("need 1 <= u < r < q")
        elif kind != "local":
            raise ParameterError(f"unknown exponent constraint set {kind!r}")
        return self


# ---------------------------------------------------------------------------
# measures of explicit collections


def lattice_trees(spec: OuterSpec):
    """Candidate trees of the lattice described by ``spec``."""
    out = []
    width = spec.band[1] - spec.band[0]
    for s in spec.scales:
        dx = spec.x_step * s
        dxi = spec.xi_step * width / s
        xs = dx * np.arange(np.ceil(spec.x_range[0] / dx), np.floor(spec.x_range[1] / dx) + 1)
        xis = dxi * np.arange(np.ceil(spec.xi_range[0] / dxi), np.floor(spec.xi_range[1] / dxi) + 1)
        for x in xs:
            for xi in xis:
                out.append(Tree(float(xi), float(x), float(s), spec.band))
    return out


def strip_components(V, beta: float | None = None):
    """Merge a strip union into strips over the connected components of its intervals.

    The strip over the hull of overlapping intervals contains their union, so
    the result covers ``V`` with ``L^1`` cost equal to the union length.
    """
    strips = V.leaves() if isinstance(V, Region) else list(V)
    if not strips:
        return []
    b = beta if beta is not None else strips[0].beta
    iv = sorted((d.x - d.s, d.x + d.s) for d in strips)
    merged = [list(iv[0])]
    for lo, hi in iv[1:]:
        if lo < merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [Strip(0.5 * (lo + hi), 0.5 * (hi - lo), b) for lo, hi in merged]


def nu_measure(V) -> float:
    """Strip measure of a strip union: the length of the union of its intervals."""
    return float(sum(2 * d.s for d in strip_components(V)))


def constructive_cover(trees, V, beta: float):
    """Cover of ``W cap V`` by the trees ``T(xi_T, x_DT, 2 s_DT / beta)``.

    For each tree the cheaper of ``{T}`` and its pieces over the components of
    ``V`` is kept; ``x_DT, s_DT`` are the centre and radius of the overlap of
    the spatial intervals.
    """
    comps = strip_components(V, beta)
    out = []
    for T in trees:
        pieces = []
        for D in comps:
            lo = max(T.x - T.s, D.x - D.s)
            hi = min(T.x + T.s, D.x + D.s)
            if hi > lo:
                pieces.append(Tree(T.xi, 0.5 * (lo + hi), 2.0 / beta * 0.5 * (hi - lo), T.band))
        if not pieces:
            continue
        if sum(2 * p.s for p in pieces) < 2 * T.s:
            out.extend(pieces)
        else:
            out.append(T)
    return out


def forest_measure(trees, aggregation=1, within=None, beta: float = 1.0) -> float:
    """Counting-function norm of an explicit forest.

    With ``within`` (a strip union) and ``aggregation=1`` the cheaper
    constructive cover of the part inside ``within`` is used.
    """
    trees = list(trees)
    if not trees:
        return 0.0
    cf = counting_function(trees)
    if aggregation == 1:
        val = cf.L1
        if within is not None:
            val = min(val, counting_function(constructive_cover(trees, within, beta)).L1)
        return float(val)
    return float(cf.Linf)


# ---------------------------------------------------------------------------
# outer measure of a region


def _sample_region(E: Region, n=(12, 8, 3), sigma_min=2.0**-6):
    """Points of ``E`` drawn from the model grids of its tree leaves."""
    leaves = E.leaves()
    trees = [L for L in leaves if isinstance(L, Tree)]
    strips = [L for L in leaves if isinstance(L, Strip)]
    # a strip piece not cut down by a tree reaches arbitrary frequencies
    for D in strips:
        ys = D.x + D.s * np.array([-0.5, 0.0, 0.5])
        ts = 0.25 * (D.s - np.abs(ys - D.x)) / D.beta
        for big in (-1e8, 1e8):
            if np.any(E.contains(np.full(3, big), ys, ts)):
                raise UnboundedRegionError("region is unbounded in frequency: no finite tree cover")
    pts = []
    q = Quadrature(n[0], n[1], n[2], sigma_min)
    for T in trees:
        th = T.band[0] + T.width * (np.arange(n[0]) + 0.5) / n[0]
        ze = -1 + 2 * (np.arange(n[1]) + 0.5) / n[1]
        TH, ZE, SI = np.meshgrid(th, ze, q.sigma_nodes(), indexing="ij")
        m = SI < 1 - np.abs(ZE)
        e, y, t = T.from_model(TH[m], ZE[m], SI[m])
        keep = E.contains(e, y, t)
        pts.append(np.stack([e[keep], y[keep], t[keep]], axis=1))
    if not pts:
        return np.zeros((0, 3))
    return np.concatenate(pts, axis=0)


def _coverage(cands, P):
    return np.array([c.contains(P[:, 0], P[:, 1], P[:, 2]) for c in cands], bool).reshape(len(cands), len(P))


def _greedy_set_cover(cands, cov, costs):
    """Cost-effectiveness greedy followed by pruning of redundant members."""
    n_pts = cov.shape[1]
    if not np.all(cov.any(axis=0)):
        raise ParameterError("candidate collection does not cover the region samples")
    covered = np.zeros(n_pts, bool)
    chosen = []
    while not covered.all():
        gain = (cov & ~covered).sum(axis=1) / costs
        i = int(np.argmax(gain))
        chosen.append(i)
        covered |= cov[i]
    for i in sorted(chosen, key=lambda j: costs[j]):
        rest = [j for j in chosen if j != i]
        if rest and cov[rest].any(axis=0).all():
            chosen = rest
    return chosen


def _cover_value(cands, chosen, aggregation):
    return forest_measure([cands[i] for i in chosen], aggregation)


def outer_measure(E: Region | None, spec: OuterSpec = OuterSpec(), mode: str = "greedy",
                  candidates=None, return_cover: bool = False):
    """Outer measure of a region from an explicit cover.

    Parameters
    ----------
    E : Region or None
        ``None`` is the empty set.
    mode : {'greedy', 'brute'}
        ``'brute'`` minimizes over all subsets of ``candidates`` (at most 16).
    candidates : list of Tree, optional
        Extra (greedy) or exclusive (brute) candidates; the tree leaves of
        ``E`` and the lattice of ``spec`` are always added in greedy mode.
    """
    if E is None:
        return (0.0, []) if return_cover else 0.0
    if spec.generator == "strips":
        if all(isinstance(L, Strip) for L in E.leaves()):
            val = nu_measure(E)
            return (val, strip_components(E)) if return_cover else val
        P = _sample_region(E)
        lo = P[:, 1] - spec.beta * P[:, 2]
        hi = P[:, 1] + spec.beta * P[:, 2]
        comps = strip_components([Strip(0.5 * (a + b), 0.5 * (b - a), spec.beta) for a, b in zip(lo, hi)])
        val = float(sum(2 * d.s for d in comps))
        return (val, comps) if return_cover else val
    P = _sample_region(E)
    if P.shape[0] == 0:
        return (0.0, []) if return_cover else 0.0
    if mode == "brute":
        cands = list(candidates or [])
        if not cands or len(cands) > 16:
            raise ParameterError("brute mode needs between 1 and 16 candidates")
        cov = _coverage(cands, P)
        masks = [int("".join("1" if b else "0" for b in row[::-1]), 2) for row in cov]
        full = (1 << P.shape[0]) - 1
        best, best_set = np.inf, None
        for k in range(1, len(cands) + 1):
            for sub in itertools.combinations(range(len(cands)), k):
                m = 0
                for i in sub:
                    m |= masks[i]
                if m == full:
                    v = _cover_value(cands, sub, spec.aggregation)
                    if v < best:
                        best, best_set = v, sub
        if best_set is None:
            raise ParameterError("candidates do not cover the region")
        cover = [cands[i] for i in best_set]
        return (float(best), cover) if return_cover else float(best)
    if mode != "greedy":
        raise ParameterError("mode must be 'greedy' or 'brute'")
    leaves = [L for L in E.leaves() if isinstance(L, Tree)]
    extra = list(candidates or [])
    cands = extra + leaves + lattice_trees(spec)
    cov = _coverage(cands, P)
    own = cov[len(extra):len(extra) + len(leaves)]
    own_value = _cover_value(leaves, range(len(leaves)), spec.aggregation) if leaves else np.inf
    useful = cov.any(axis=1)
    cands = [c for c, u in zip(cands, useful) if u]
    cov = cov[useful]
    costs = np.array([2 * c.s for c in cands])
    chosen = _greedy_set_cover(cands, cov, costs)
    best = _cover_value(cands, chosen, spec.aggregation)
    cover = [cands[i] for i in chosen]
    # a region that is a union of trees is covered by its own leaves
    if leaves and own.any(axis=0).all() and own_value < best:
        best, cover = own_value, list(leaves)
    return (float(best), cover) if return_cover else float(best)


# ---------------------------------------------------------------------------
# size engine for superlevel measures


_ENGINE_KINDS = ("lebesgue", "lacunary")


class _SizeEngine:
    """Cached model samples of one field on a candidate collection."""

    def __init__(self, F: Field, size: SizeSpec, spec: OuterSpec, candidates=None):
        if size.kind not in _ENGINE_KINDS:
            raise ParameterError("superlevel measures support mask-commuting sizes: lebesgue or lacunary")
        G = _pull(F, size)
        if size.kind == "lacunary":
            G = field_boost(G, "zeta")
        self.size = size
        self.trees = list(candidates) if candidates is not None else lattice_trees(spec)
        self.samples, self.points = [], []
        for T in self.trees:
            S = model_sample(G, T, spec.quad, size.restrict)
            TH, ZE, SI = np.meshgrid(S.theta, S.zeta, S.sigma, indexing="ij")
            self.samples.append(S)
            self.points.append(T.from_model(TH, ZE, SI))
        self.lo = np.array([T.x - T.s for T in self.trees])
        self.hi = np.array([T.x + T.s for T in self.trees])

    def keep(self, region=None, exclude=()):
        out = []
        for S, (e, y, t) in zip(self.samples, self.points):
            k = S.mask.copy()
            if region is not None:
                k &= region.contains(e, y, t)
            for T in exclude:
                k &= ~T.contains(e, y, t)
            out.append(k)
        return out

    def value(self, i, keep) -> float:
        S = self.samples[i]
        return _finalize(_mixed_norm(S, self.size.u, self.size.v, values=S.values * keep))

    def remove(self, T: Tree, keep, sizes):
        hit = (self.hi > T.x - T.s) & (self.lo < T.x + T.s)
        for j in np.flatnonzero(hit):
            e, y, t = self.points[j]
            inside = keep[j] & T.contains(e, y, t)
            if inside.any():
                keep[j] = keep[j] & ~inside
                sizes[j] = self.value(j, keep[j])


def _pick(trees, sizes, lam):
    """Largest size above ``lam``; ties by largest scale, then smallest ``x``."""
    top = sizes.max()
    if not top > lam:
        return None
    tied = np.flatnonzero(sizes >= top * (1 - 1e-12))
    return int(min(tied, key=lambda i: (-trees[i].s, trees[i].x, -trees[i].xi)))


@dataclass
class _Run:
    levels: np.ndarray
    counts: list  # number of selected trees after each level
    residuals: list
    selected: list  # indices into engine.trees, in selection order
    trees: list
    peaks: list = None  # size of each selected tree when it was picked (non-increasing)

    def forest(self, j):
        return [self.trees[i] for i in self.selected[: self.counts[j]]]


def _nested_run(engine: _SizeEngine, levels, keep, max_iter=10_000) -> _Run:
    keep = [k.copy() for k in keep]
    sizes = np.array([engine.value(i, k) for i, k in enumerate(keep)])
    selected, counts, residuals, peaks = [], [], [], []
    for lam in levels:
        while True:
            i = _pick(engine.trees, sizes, lam)
            if i is None:
                break
            if len(selected) >= max_iter:
                raise IterationCapError("superlevel selection hit the iteration cap",
                                        partial=[engine.trees[j] for j in selected])
            selected.append(i)
            peaks.append(float(sizes[i]))
            engine.remove(engine.trees[i], keep, sizes)
            sizes[i] = engine.value(i, keep[i])
        counts.append(len(selected))
        residuals.append(float(sizes.max()) if sizes.size else 0.0)
    return _Run(np.asarray(levels, float), counts, residuals, selected, engine.trees, peaks)


def superlevel_profile(F: Field, size: SizeSpec, lambdas, spec: OuterSpec = OuterSpec(),
                       region=None, candidates=None):
    """Nested greedy superlevel measures at several thresholds.

    Returns a list of ``(lambda, measure, residual, forest)`` sorted by
    decreasing ``lambda``; the forests are nested, so the measures are
    monotone.  The residual is the largest candidate size of ``1_{X \\ E} F``.
    """
    lambdas = np.sort(np.asarray(lambdas, float))[::-1]
    if np.any(lambdas <= 0):
        raise ParameterError("thresholds must be positive")
    eng = _SizeEngine(F, size, spec, candidates)
    run = _nested_run(eng, lambdas, eng.keep(region), spec.max_iter)
    mu = _profile(run, spec.aggregation)(lambdas)
    return [(float(l), float(m), r, run.forest(j)) for j, (l, m, r) in enumerate(zip(lambdas, mu, run.residuals))]


def superlevel_measure(F: Field, size: SizeSpec, lam: float, spec: OuterSpec = OuterSpec(),
                       region=None, candidates=None):
    """Greedy superlevel measure at one threshold: ``(value, witness_forest, residual)``."""
    (_, mu, res, forest), = superlevel_profile(F, size, [lam], spec, region, candidates)
    return mu, forest, res


def _levels(top, p, n=64, extra=()):
    base = top * 2.0 ** (-np.arange(n) / 2.0)
    bottom = base[-1]
    if np.isfinite(p):
        ks = np.arange(np.ceil(p * np.log2(bottom)), np.floor(p * np.log2(top)) + 1)
        dy = 2.0 ** (ks / p)
    else:
        dy = np.zeros(0)
    lv = np.unique(np.concatenate([base, dy, np.asarray(extra, float), [bottom / 2]]))
    return lv[::-1]


@dataclass
class _StepProfile:
    """``mu(l) = measures[#{peaks > l}]`` for ``l >= floor``, held at ``mu(floor)`` below.

    The greedy selection order does not depend on the threshold grid (the
    largest size is always taken and sizes only decrease), so this step
    function is the exact superlevel profile of a run down to its last level.
    """

    peaks: np.ndarray
    measures: np.ndarray  # measures[j] = measure of the first j selected trees
    floor: float

    def __call__(self, lam):
        lam = np.asarray(lam, float)
        count = np.searchsorted(-self.peaks, -np.maximum(lam, self.floor), side="left")
        return self.measures[count]


def _profile(run: _Run, aggregation, within=None, beta=1.0) -> _StepProfile:
    peaks = np.asarray(run.peaks, float)
    n = peaks.size
    if aggregation == 1 and within is None:
        sizes = np.array([2 * run.trees[i].s for i in run.selected])
        meas = np.concatenate([[0.0], np.cumsum(sizes)])
    else:
        meas = np.array([forest_measure([run.trees[i] for i in run.selected[:j]], aggregation, within, beta)
                         for j in range(n + 1)])
        meas = np.maximum.accumulate(meas)
    return _StepProfile(peaks, meas, float(run.levels[-1]) if len(run.levels) else 0.0)


def _step_integral(profiles, p, weak=False):
    """``int_0^inf p l^(p-1) mu(l) dl`` (or ``sup l mu(l)^(1/p)``) for the minimum of step profiles."""
    floor = max(pr.floor for pr in profiles)
    pk = np.concatenate([pr.peaks for pr in profiles] + [[floor]])
    b = np.unique(pk[pk >= floor])[::-1]
    if b.size == 0 or b[0] <= 0:
        return 0.0
    vals = np.min([pr(b) for pr in profiles], axis=0)  # value on [b_k, b_(k-1))
    if weak:
        return float(np.max(b[:-1] * vals[1:] ** (1.0 / p))) if b.size > 1 else 0.0
    upper = b[:-1] ** p - b[1:] ** p
    return float(np.sum(upper * vals[1:]) + b[-1] ** p * vals[-1])


@dataclass
class _LpState:
    engine: _SizeEngine
    run: _Run
    levels: np.ndarray
    mu: np.ndarray
    top: float
    keep: list
    spec: OuterSpec
    profile: _StepProfile = None

    def integral(self, p, weak=False):
        return _step_integral([self.profile], p, weak) if self.profile is not None else 0.0


def _lp_state(F, size, spec, p, region=None, candidates=None, exclude=(), engine=None, levels=None):
    eng = engine or _SizeEngine(F, size, spec, candidates)
    keep = eng.keep(region, exclude)
    top = max((eng.value(i, k) for i, k in enumerate(keep)), default=0.0)
    if top == 0:
        return _LpState(eng, None, np.zeros(0), np.zeros(0), 0.0, keep, spec)
    if not np.isfinite(top):
        raise ParameterError("the size of the field is infinite on some candidate tree")
    within = region if _is_strip_union(region) else None
    lv = levels if levels is not None else _levels(top, p)
    run = _nested_run(eng, lv, keep, spec.max_iter)
    prof = _profile(run, spec.aggregation, within, spec.beta)
    widen = 0
    while np.isfinite(p) and widen < 4 and levels is None:
        total = _step_integral([prof], p)
        if total == 0 or lv[-1] ** p * prof(lv[-1]) <= 1e-3 * total:
            break
        widen += 1
        lv = np.concatenate([lv, lv[-1] * 2.0 ** (-np.arange(1, 17) / 2.0)])
        log.info("widening the threshold grid to %d levels", lv.size)
        run = _nested_run(eng, lv, keep, spec.max_iter)
        prof = _profile(run, spec.aggregation, within, spec.beta)
    return _LpState(eng, run, lv, prof(lv), top, keep, spec, prof)


def _is_strip_union(region):
    return region is not None and all(isinstance(L, Strip) for L in region.leaves())


def outer_lp(F: Field, size: SizeSpec, spec: OuterSpec = OuterSpec(), p: float = 2.0,
             weak: bool = False, region=None, candidates=None, return_profile: bool = False):
    """Outer ``L^p`` (or weak ``L^p``) quasi-norm from nested greedy superlevel measures.

    The greedy run descends a threshold grid (``size * 2^(-j/2)``, 64 levels,
    plus the dyadic levels ``2^(k/p)`` and one level below, widened while the
    bottom still carries mass).  Its superlevel measure is a step function
    with jumps at the sizes of the selected trees, so the strong norm
    ``int p l^(p-1) mu(l) dl`` and the weak norm ``sup l mu(l)^(1/p)`` are
    integrated exactly; below the last level ``mu`` is held constant.
    ``region`` restricts the field (``1_region F``).
    """
    if not p > 0:
        raise ParameterError("p must be positive")
    st = _lp_state(F, size, spec, p, region, candidates)
    if np.isinf(p) or st.top == 0:
        val = st.top
        prof = []
    else:
        val = st.integral(p, weak) ** (1.0 if weak else 1.0 / p)
        prof = list(zip(st.levels.tolist(), st.mu.tolist(), st.run.residuals))
    return (val, prof) if return_profile else val


# ---------------------------------------------------------------------------
# atomic decomposition


@dataclass
class AtomicDecomposition:
    """Nested sets ``A_k`` (forests) at levels ``2^(k/p)`` and their slices.

    ``slice_measure[k]`` is the measure of the trees added between levels
    ``2^(k/p)`` and ``2^((k-1)/p)``, an upper bound for ``mu(A_{k-1} \\ A_k)``.
    """

    p: float
    ks: list
    forests: dict
    slice_measure: dict
    slice_size: dict
    norm_p: float
    top: float
    _state: object = None

    @property
    def weighted_sum(self) -> float:
        return float(sum(2.0**k * m for k, m in self.slice_measure.items()))

    def remainder(self, n: int) -> float:
        """Outer ``L^p`` norm of ``F`` minus its slices ``k > k_max - n``."""
        ks = sorted(self.forests)
        kmax = ks[-1]
        k0 = max(kmax - n, ks[0])
        st = self._state
        excl = self.forests[k0]
        sub = _lp_state(None, st.engine.size, st.spec, self.p, exclude=excl, engine=st.engine,
                        levels=st.levels) if excl else None
        if sub is None:
            return self.norm_p ** (1.0 / self.p)
        if sub.top == 0:
            return 0.0
        return sub.integral(self.p) ** (1.0 / self.p)


def atomic_decompose(F: Field, size: SizeSpec, spec: OuterSpec = OuterSpec(), p: float = 2.0,
                     region=None, candidates=None) -> AtomicDecomposition:
    """Decompose ``F`` along nested greedy superlevel sets at levels ``2^(k/p)``."""
    if not (p > 0 and np.isfinite(p)):
        raise ParameterError("atomic decomposition needs a finite positive p")
    st = _lp_state(F, size, spec, p, region, candidates)
    if st.top == 0:
        return AtomicDecomposition(p, [], {}, {}, {}, 0.0, 0.0, st)
    norm_p = st.integral(p)
    ks_all = np.round(p * np.log2(st.levels), 9)
    pos = {int(k): j for j, k in enumerate(ks_all) if float(k).is_integer()}
    ks = sorted(pos)
    kmax = ks[-1] + 1
    forests = {k: st.run.forest(pos[k]) for k in ks}
    forests[kmax] = []
    counts = {k: st.run.counts[pos[k]] for k in ks}
    counts[kmax] = 0
    slice_measure, slice_size = {}, {}
    agg = spec.aggregation
    for k in range(ks[0] + 1, kmax + 1):
        new = [st.run.trees[i] for i in st.run.selected[counts[k]:counts[k - 1]]]
        slice_measure[k] = forest_measure(new, agg)
        slice_size[k] = st.run.residuals[pos[k]] if k in pos else 0.0
    return AtomicDecomposition(p, list(range(ks[0] + 1, kmax + 1)), forests, slice_measure,
                               slice_size, norm_p, st.top, st)


# ---------------------------------------------------------------------------
# localized norms


def localized_norm(F: Field, size: SizeSpec, kind: str, exponents: ExponentTuple, V,
                   spec: OuterSpec = OuterSpec(), plus: bool = False, candidates=None,
                   return_parts: bool = False):
    """Localized outer Lebesgue sizes and X-sizes on a strip union ``V``.

    ``kind='fLq_mu1'``: ``nu(V)^(-1/q) ||1_V F||_{L^q_{mu^1}}``;
    ``kind='fLq_muinf'``: ``||1_V F||_{L^q_{mu^inf}}``; with ``plus`` the
    supremum over ``q, inf``.
    ``kind='X_qr'``: ``nu(V)^(-1/r) sup_W mu^inf(W)^(1/q - 1/r) ||1_{V cap W} F||_{L^r_{mu^1}}``
    with ``W`` ranging over the whole window and the ``mu^inf`` greedy
    witnesses of ``1_V F``; with ``plus`` the supremum over ``r, q``.
    """
    q, r = exponents.q, exponents.r
    nu = nu_measure(V)
    if nu == 0:
        return 0.0
    beta = V.leaves()[0].beta
    spec1 = replace(spec, aggregation=1, beta=beta)
    specinf = replace(spec, aggregation=np.inf, beta=beta)
    if kind in ("fLq_mu1", "fLq_muinf"):
        qs = [q, np.inf] if plus else [q]
        vals = []
        for qq in qs:
            if kind == "fLq_mu1":
                norm = outer_lp(F, size, spec1, qq, region=V, candidates=candidates)
                vals.append(norm * (nu ** (-1.0 / qq) if np.isfinite(qq) else 1.0))
            else:
                vals.append(outer_lp(F, size, specinf, qq, region=V, candidates=candidates))
        return max(vals)
    if kind != "X_qr":
        raise ParameterError(f"unknown localized norm {kind!r}")
    exponents.validate("local")
    rs = [r, q] if plus else [r]
    eng = _SizeEngine(F, size, spec, candidates)
    base = _lp_state(None, size, specinf, r, region=V, engine=eng)
    if base.top == 0:
        return (0.0, []) if return_parts else 0.0
    # the mu^1 profile of 1_V F on the same levels; restricted fields may
    # reuse its witnesses, which keeps the estimates monotone in W
    mu_v = _profile(_nested_run(eng, base.levels, eng.keep(V), spec.max_iter), 1, V, beta)
    lo = min(d.x - d.s for d in V.leaves())
    hi = max(d.x + d.s for d in V.leaves())
    window = [T for T in eng.trees if T.x - T.s < hi and T.x + T.s > lo]
    witnesses = [(None, forest_measure(window, np.inf))]
    for j in range(0, len(base.levels), 8):
        forest = base.run.forest(j)
        if forest and all(len(forest) != len(w or []) for w, _ in witnesses):
            witnesses.append((forest, forest_measure(forest, np.inf)))
    parts, best = [], 0.0
    for rr in rs:
        expo = (0.0 if np.isinf(q) else 1.0 / q) - 1.0 / rr
        for W, mu_w in witnesses:
            profs = [mu_v]
            if W is not None:
                run = _nested_run(eng, base.levels, eng.keep(V & Forest(W)), spec.max_iter)
                profs.append(_profile(run, 1, V, beta))
            norm = _step_integral(profs, rr) ** (1.0 / rr)
            val = nu ** (-1.0 / rr) * mu_w**expo * norm
            parts.append({"r": rr, "witness_trees": 0 if W is None else len(W), "mu_inf": mu_w,
                          "value": float(val)})
            best = max(best, float(val))
    return (best, parts) if return_parts else best


# ---------------------------------------------------------------------------
# point clouds and the tree selection algorithm


@dataclass
class PointCloud:
    """Point masses ``mass`` at ``(eta, y, t)`` with cell volumes ``volume``.

    ``grid`` holds ``(eta_nodes, y_nodes, t_nodes)`` for tensor clouds and
    ``(eta_nodes, y_nodes)`` for boundary clouds.
    """

    eta: np.ndarray
    y: np.ndarray
    t: np.ndarray
    mass: np.ndarray
    volume: np.ndarray
    grid: tuple = ()
    kind: str = "tensor"

    @property
    def support_radius(self) -> float:
        m = self.mass > 0
        if not m.any():
            return 1.0
        return float(max(np.abs(self.eta[m]).max(), np.abs(self.y[m]).max(), self.t[m].max(),
                         1.0 / self.t[m].min(), 1.0))


def field_point_cloud(F: Field, eta_range, y_range, t_range, n=(48, 32, 16), theta: float = 0.0):
    """Point masses ``max_layers |F| dV`` on a tensor grid (``dV = d eta dy t dlog t``).

    Outside the box the field is treated as zero; the box is the truncation
    window of the covering algorithm.
    """
    ne, ny, nt = n
    e = eta_range[0] + (eta_range[1] - eta_range[0]) * (np.arange(ne) + 0.5) / ne
    y = y_range[0] + (y_range[1] - y_range[0]) * (np.arange(ny) + 0.5) / ny
    lt = np.log(t_range[0]) + (np.log(t_range[1]) - np.log(t_range[0])) * (np.arange(nt) + 0.5) / nt
    t = np.exp(lt)
    E, Y, T = np.meshgrid(e, y, t, indexing="ij")
    vol = (e[1] - e[0] if ne > 1 else 1.0) * (y[1] - y[0] if ny > 1 else 1.0) * T * (
        lt[1] - lt[0] if nt > 1 else 1.0)
    vals = np.abs(F.evaluate(E, Y, T, np.full(E.shape, theta))).max(axis=0)
    return PointCloud(E.ravel(), Y.ravel(), T.ravel(), (vals * vol).ravel(), vol.ravel(), (e, y, t))


def boundary_point_cloud(F: Field, E: Region, eta_range, y_range, n=(96, 64), theta: float = 0.0):
    """Point masses of ``|F| t d_t 1_E`` on the graph ``t = b_E(eta, y)``: ``|F| b d eta dy``."""
    ne, ny = n
    e = eta_range[0] + (eta_range[1] - eta_range[0]) * (np.arange(ne) + 0.5) / ne
    y = y_range[0] + (y_range[1] - y_range[0]) * (np.arange(ny) + 0.5) / ny
    EE, YY = np.meshgrid(e, y, indexing="ij")
    b = E.boundary_value(EE, YY)
    ok = (b > 0) & np.isfinite(b)
    EE, YY, b = EE[ok], YY[ok], b[ok]
    vol = b * (e[1] - e[0]) * (y[1] - y[0])
    vals = np.abs(F.evaluate(EE, YY, b, np.full(b.shape, theta))).max(axis=0) if b.size else b
    return PointCloud(EE, YY, b, vals * vol, vol, (e, y), kind="graph")


def _in_tree(xi, x, s, band, cloud, idx=None):
    e, y, t = (cloud.eta, cloud.y, cloud.t) if idx is None else (cloud.eta[idx], cloud.y[idx], cloud.t[idx])
    th = t * (e - xi)
    return (t < s - np.abs(y - x)) & (th > band[0]) & (th < band[1])


def _in_neighbourhood(T: Tree, band, cloud):
    """Membership in the union of lattice trees ``W(T)``.

    ``W(T)``: tops ``(xi, x, s)`` with ``xi s, x / s`` integers, ``s`` dyadic,
    ``1 <= s / s_T < 16``, ``|x - x_T| <= 2 s_T`` and ``s_T |xi - xi_T| < 256``.
    """
    e, y, t = cloud.eta, cloud.y, cloud.t
    out = np.zeros(e.shape, bool)
    j0 = int(np.ceil(np.log2(T.s) - 1e-12))
    for j in range(j0, j0 + 5):
        s = 2.0**j
        if not (1 <= s / T.s < 16):
            continue
        klo, khi = np.ceil((T.x - 2 * T.s) / s), np.floor((T.x + 2 * T.s) / s)
        if klo > khi:
            continue
        xs = np.clip(np.round(y / s), klo, khi) * s
        space = t < s - np.abs(y - xs)
        lo = np.maximum(s * (e - band[1] / t), s * (T.xi - 256 / T.s))
        hi = np.minimum(s * (e - band[0] / t), s * (T.xi + 256 / T.s))
        freq = np.floor(lo) + 1 < hi
        out |= space & freq
    return out


@dataclass
class CoverResult:
    """Output of the tree selection algorithm.

    ``distinguished`` holds point indices into ``cloud`` (the sets ``X_T``);
    ``measure_estimate`` is ``sum mu^1(T)`` over the selected trees.
    """

    selected: list
    distinguished: list
    measure_estimate: float
    residual_size: float
    iterations: int
    lam: float
    band: tuple
    select_band: tuple
    eps_max: float
    cloud: PointCloud
    masses: list
    candidates: int

    def postconditions(self) -> dict:
        counts = np.zeros(self.cloud.eta.size, int)
        for idx in self.distinguished:
            np.add.at(counts, idx, 1)
        mass_ok = all(m >= self.lam * 2 * T.s * (1 - 1e-12) for m, T in zip(self.masses, self.selected))
        return {
            "terminated": True,
            "residual_ok": bool(self.residual_size <= self.lam),
            "disjoint": bool(counts.max(initial=0) <= 1),
            "mass_ok": bool(mass_ok),
            "max_overlap": int(counts.max(initial=0)),
        }

    def to_json(self) -> str:
        return json.dumps({
            "lambda": self.lam,
            "band": list(self.band),
            "select_band": list(self.select_band),
            "eps_max": self.eps_max,
            "selected": [[T.xi, T.x, T.s] for T in self.selected],
            "masses": [float(m) for m in self.masses],
            "measure_estimate": self.measure_estimate,
            "residual_size": self.residual_size,
            "iterations": self.iterations,
            "candidates": self.candidates,
            "postconditions": self.postconditions(),
        }, sort_keys=True)

    # summability certificates

    def exterior_count(self) -> int:
        """Largest number of distinguished sets through one cell (the ``(inf, inf)`` size of their sum)."""
        return self.postconditions()["max_overlap"]

    def ray_integrals(self, rays, gamma: GammaMap | None = None, n_t: int = 4096):
        """``int sum_T 1_{Gamma(X_T)}(xi' + theta' / t, x, t) dt / t`` along rays.

        ``rays`` are triples ``(xi, x, theta)`` in the original coordinates; the
        ray is taken in the ``Gamma`` coordinates through ``(alpha xi, x)`` with
        frequency ``theta_Gamma`` and pulled back cell by cell.  Needs a tensor
        cloud.
        """
        if self.cloud.kind != "tensor":
            raise ParameterError("ray integrals need a tensor point cloud")
        e_n, y_n, t_n = self.cloud.grid
        inX = np.zeros(self.cloud.eta.size, bool)
        for idx in self.distinguished:
            inX[idx] = True
        inX = inX.reshape(e_n.size, y_n.size, t_n.size)
        lt = np.log(t_n)
        dl = lt[1] - lt[0] if lt.size > 1 else 1.0
        g = gamma or GammaMap(1.0, 1.0, 0.0)
        ts = np.exp(np.linspace(lt[0] - dl / 2 + np.log(g.beta), lt[-1] + dl / 2 + np.log(g.beta), n_t))
        dlog = np.log(ts[1] / ts[0])
        out = []
        for xi, x, theta in rays:
            thg = g.theta(theta)
            e2 = g.alpha * xi + thg / ts
            e0, y0, t0 = gamma_invert(g, e2, np.full(ts.shape, x), ts)
            ie = np.floor((e0 - (e_n[0] - (e_n[1] - e_n[0]) / 2)) / (e_n[1] - e_n[0])).astype(int)
            iy = np.floor((y0 - (y_n[0] - (y_n[1] - y_n[0]) / 2)) / (y_n[1] - y_n[0])).astype(int)
            it = np.floor((np.log(t0) - (lt[0] - dl / 2)) / dl).astype(int)
            ok = ((ie >= 0) & (ie < e_n.size) & (iy >= 0) & (iy < y_n.size) & (it >= 0) & (it < t_n.size))
            hits = np.zeros(ts.shape, bool)
            hits[ok] = inX[ie[ok], iy[ok], it[ok]]
            out.append(float(hits.sum() * dlog))
        return np.array(out)

    def ray_constant(self, inner_band, rays, gamma=None) -> float:
        """Fitted constant ``C`` in ``ray integral <= C (1 + log(1 + |band_ex| / dist(theta, band_ex)))``."""
        lo, hi = self.select_band
        width = hi - lo
        vals = self.ray_integrals(rays, gamma)
        ratios = []
        for v, (_, _, th) in zip(vals, rays):
            dist = max(lo - th, th - hi, 0.0)
            if dist <= 0:
                continue
            ratios.append(v / (1 + np.log(1 + width / dist)))
        return float(max(ratios, default=0.0))

    def tree_certificate(self, test_band, gamma: GammaMap | None = None, tests=None) -> float:
        """``(1, 1)`` size of ``sum_T 1_{Gamma(X_T)}`` (cell masses) over ``test_band``.

        Evaluated on the image trees ``T_{band_Gamma}(alpha xi, x, s)`` of the
        test tops ``tests`` (default: the selected tops and their frequency
        translates by multiples of ``|band| / (4 s)``); the cell volumes carry
        the Jacobian ``|alpha beta|`` of ``Gamma``.  Returns the largest value.
        """
        if tests is None:
            w = self.band[1] - self.band[0]
            tests = [Tree(T.xi + j * w / (4 * T.s), T.x, T.s, T.band)
                     for T in self.selected for j in range(-8, 9)]
        g = gamma or GammaMap(1.0, 1.0, 0.0)
        idx = np.unique(np.concatenate(self.distinguished)) if self.distinguished else np.zeros(0, int)
        if idx.size == 0:
            return 0.0
        e2, y2, t2 = gamma_apply(g, self.cloud.eta[idx], self.cloud.y[idx], self.cloud.t[idx])
        vol = np.abs(g.alpha * g.beta) * self.cloud.volume[idx]
        band_g = tuple(sorted(g.band(self.band)))
        tb = tuple(sorted(g.band(test_band)))
        width = band_g[1] - band_g[0]
        best = 0.0
        for T in tests:
            xi = g.alpha * T.xi
            th = t2 * (e2 - xi)
            m = (t2 < T.s - np.abs(y2 - T.x)) & (th > tb[0]) & (th < tb[1])
            best = max(best, float(vol[m].sum() / (width * T.s)))
        return best


def _select_band(band, inner_band, side):
    if side == "+":
        return (inner_band[1], band[1])
    if side == "-":
        return (band[0], inner_band[0])
    if side == "in":
        return tuple(inner_band)
    raise ParameterError("side must be '+', '-' or 'in'")


def greedy_cover(cloud: PointCloud, lam: float, band=(-4.5, 4.5), inner_band=(-0.1, 0.1),
                 side: str = "+", spec: OuterSpec | None = None, eps_max: float | None = None,
                 max_iter: int = 10_000) -> CoverResult:
    """Quasi-maximal tree selection on a point cloud.

    The size of a candidate tree is ``sum of masses in K cap T`` with model
    frequency in the selection band, divided by ``|band| s_T``.  While some
    candidate has size ``>= lam``, a quasi-maximal one (largest ``xi`` up to
    ``eps_max``; mirrored for ``side='-'``; ties by largest ``s``, then
    smallest ``x``) is selected, ``X_T = K cap T_select`` is recorded and the
    union of the lattice neighbourhood ``W(T)`` is removed from ``K``.

    ``side='in'`` selects on the inner band, as used for graph (boundary)
    clouds.  ``eps_max`` defaults to ``(lam / size_0) |select band| / (2 S)``
    with ``size_0`` the initial largest candidate size and ``S`` the support
    radius of the cloud.
    """
    if not lam > 0:
        raise ParameterError("lambda must be positive")
    lo, hi = band
    if not hi - lo >= 2:
        raise ParameterError("the band must have length at least 2 for the mass bound")
    sel = _select_band(band, inner_band, side)
    if not (lo <= sel[0] < sel[1] <= hi):
        raise ParameterError("inner band must lie inside the band")
    width = hi - lo
    if spec is None:
        m = cloud.mass > 0
        ey = (cloud.y[m].min(), cloud.y[m].max()) if m.any() else (-1.0, 1.0)
        ee = (cloud.eta[m].min(), cloud.eta[m].max()) if m.any() else (-1.0, 1.0)
        tmax = cloud.t[m].max() if m.any() else 1.0
        top = 2.0 ** np.ceil(np.log2(2 * tmax))
        scales = tuple(2.0 ** np.arange(np.floor(np.log2(max(cloud.t[m].min(), 1e-3))) if m.any() else 0,
                                        np.log2(top) + 1))
        spec = OuterSpec(band=band, scales=scales, x_range=(ey[0] - 1, ey[1] + 1),
                         xi_range=(ee[0] - 1, ee[1] + 1), xi_step=0.25)
    cands = [T for T in lattice_trees(replace(spec, band=band))]
    xis = np.array([T.xi for T in cands])
    ss = np.array([T.s for T in cands])
    xs = np.array([T.x for T in cands])
    members = [np.flatnonzero(_in_tree(T.xi, T.x, T.s, sel, cloud)) for T in cands]
    keep = [mb.size > 0 for mb in members]
    cands = [c for c, k in zip(cands, keep) if k]
    members = [mb for mb, k in zip(members, keep) if k]
    xis, ss, xs = xis[keep], ss[keep], xs[keep]
    K = np.ones(cloud.eta.size, bool)

    def sizes():
        mk = cloud.mass * K
        return np.array([mk[mb].sum() for mb in members]) / (width * ss) if members else np.zeros(0)

    sz = sizes()
    size0 = float(sz.max()) if sz.size else 0.0
    if eps_max is None:
        S = cloud.support_radius
        eps_max = (lam / size0 if size0 > 0 else 1.0) * (sel[1] - sel[0]) / (2 * S)
    selected, dist, masses = [], [], []
    it = 0
    sign = -1.0 if side == "-" else 1.0
    while sz.size and sz.max() >= lam:
        if it >= max_iter:
            raise IterationCapError("tree selection hit the iteration cap", partial=selected)
        X = np.flatnonzero(sz >= lam)
        key = sign * xis[X]
        Q = X[key >= key.max() - eps_max]
        i = int(min(Q, key=lambda j: (-ss[j], xs[j], -sign * xis[j])))
        T = cands[i]
        idx = members[i][K[members[i]]]
        selected.append(T)
        dist.append(idx)
        masses.append(float(cloud.mass[idx].sum()))
        K &= ~_in_neighbourhood(T, band, cloud)
        if K[idx].any():
            raise RuntimeError("neighbourhood removal failed to cover the selected tree")
        sz = sizes()
        it += 1
    residual = float(sz.max()) if sz.size else 0.0
    res = CoverResult(selected, dist, float(sum(2 * T.s for T in selected)), residual, it, lam,
                      tuple(band), sel, float(eps_max), cloud, masses, len(cands))
    pc = res.postconditions()
    if not (pc["residual_ok"] and pc["disjoint"] and pc["mass_ok"]):
        raise RuntimeError(f"cover postconditions failed: {pc}")
    return res


# ---------------------------------------------------------------------------
# counting-function improvement


def maximal_function(cf, x):
    """Centred Hardy-Littlewood maximal function of a counting function, exactly.

    Between breakpoints the average over ``(x - r, x + r)`` is monotone in
    ``r``, so the supremum is attained at ``r -> 0`` or at a breakpoint
    distance.
    """
    x = np.atleast_1d(np.asarray(x, float))
    b = cf.breaks
    if b.size == 0:
        return np.zeros(x.shape)
    vals = cf.values
    cum = np.concatenate([[0.0], np.cumsum(np.diff(b) * vals)])

    def integral(z):
        z = np.clip(z, b[0], b[-1])
        k = np.clip(np.searchsorted(b, z, side="right") - 1, 0, b.size - 2)
        return cum[k] + (z - b[k]) * vals[k] if vals.size else np.zeros(z.shape)

    eps = 1e-12 * max(1.0, np.abs(b).max())
    small = 0.5 * (cf(x - eps) + cf(x + eps))
    r = np.abs(x[:, None] - b[None, :])
    r = np.where(r > 0, r, np.nan)
    avg = (integral(x[:, None] + r) - integral(x[:, None] - r)) / (2 * r)
    best = np.nanmax(np.where(np.isnan(avg), -np.inf, avg), axis=1)
    return np.maximum(small, best)


@dataclass
class Refinement:
    """Result of the counting-function improvement."""

    strips: list
    forest: list
    dropped: list
    threshold: float
    components: list
    checks: dict


def refine_to_linfty(cover, q0: float, qbar: float, k: int = 0, C: float | None = None,
                     budget: float | None = None, dilation: float = 100.0, beta: float = 1.0,
                     resolution: int = 4096) -> Refinement:
    """Split a forest into eccentric strips and a forest with bounded counting function.

    ``Lambda = C 2^((qbar / q0) k)``; ``{M N > Lambda}`` has components
    ``B_{s_n}(x_n)``.  ``V = U D(x_n, dilation s_n)`` and ``W^inf`` keeps the
    trees whose intervals meet only components of radius below ``s_T / 10``.
    With ``C=None`` the constant is ``4 dilation ||N||_1 / budget`` so that
    the weak type bound of the maximal function forces ``nu(V) <= budget / 2``;
    ``budget`` defaults to the length of the support of ``N``.
    """
    trees = list(cover.leaves() if isinstance(cover, Region) else cover)
    if not trees:
        return Refinement([], [], [], 0.0, [], {"nu_ok": True, "cap_ok": True, "contained": True})
    cf = counting_function(trees)
    budget = budget if budget is not None else cf.support_measure()
    auto = C is None
    if auto:
        C = 4 * dilation * cf.L1 / budget
    lam = C * 2.0 ** (qbar / q0 * k)
    b = cf.breaks
    span = b[-1] - b[0]
    xs = np.linspace(b[0] - 0.05 * span, b[-1] + 0.05 * span, resolution)
    xs = np.unique(np.concatenate([xs, b - 1e-9 * span, b + 1e-9 * span]))
    M = maximal_function(cf, xs)
    above = M > lam
    comps = []
    j = 0
    while j < xs.size:
        if above[j]:
            i0 = j
            while j + 1 < xs.size and above[j + 1]:
                j += 1
            lo = _refine_edge(cf, lam, xs[i0 - 1] if i0 > 0 else xs[i0] - span, xs[i0])
            hi = _refine_edge(cf, lam, xs[j + 1] if j + 1 < xs.size else xs[j] + span, xs[j])
            comps.append((0.5 * (lo + hi), 0.5 * (hi - lo)))
        j += 1
    strips = [Strip(xc, dilation * sc, beta) for xc, sc in comps]
    keep, drop = [], []
    for T in trees:
        small = any(abs(T.x - xc) < T.s + sc and T.s <= 10 * sc for xc, sc in comps)
        (drop if small else keep).append(T)
    nu = nu_measure(strips) if strips else 0.0
    cap = (10.0 / 3.0) * lam
    kcf = counting_function(keep) if keep else None
    nmax = kcf.Linf if kcf is not None else 0.0
    contained = True
    if drop and strips:
        V = StripUnion(strips)
        for T in drop:
            P = _sample_region(T, n=(4, 8, 2))
            if P.size and not V.contains(P[:, 0], P[:, 1], P[:, 2]).all():
                contained = False
    elif drop:
        contained = False
    checks = {"nu": nu, "budget": budget, "nu_ok": bool(nu <= 0.5 * budget * (1 + 1e-12)),
              "max_count": nmax, "cap": cap, "cap_ok": bool(nmax <= cap), "contained": contained,
              "auto_constant": auto}
    if auto and not (checks["nu_ok"] and checks["cap_ok"] and contained):
        raise RuntimeError(f"refinement checks failed: {checks}")
    return Refinement(strips, keep, drop, lam, comps, checks)


def _refine_edge(cf, lam, outside, inside, iters=50):
    a, b = outside, inside
    for _ in range(iters):
        m = 0.5 * (a + b)
        if maximal_function(cf, m)[0] > lam:
            b = m
        else:
            a = m
    return b


# ---------------------------------------------------------------------------
# measure comparison


def measure_compare(W, V, beta: float | None = None, spec: OuterSpec | None = None) -> dict:
    """Check ``mu^1(W cap V) <= 4 beta^-1 nu_beta(V) mu^inf(W cap V)``.

    The left side is the smaller of the greedy cover of sampled points of
    ``W cap V`` and the constructive cover; the right side uses the exact
    strip measure and the counting function of the trees of ``W`` that meet
    ``V``.
    """
    trees = list(W.leaves() if isinstance(W, Region) else W)
    strips = list(V.leaves() if isinstance(V, Region) else V)
    beta = beta if beta is not None else strips[0].beta
    comps = strip_components(strips, beta)
    meet = [T for T in trees if any(abs(T.x - D.x) < T.s + D.s for D in comps)]
    nu = nu_measure(strips)
    if not meet:
        return {"lhs": 0.0, "rhs": 0.0, "nu": nu, "mu_inf": 0.0, "holds": True, "constant": 4.0}
    mu_inf = forest_measure(meet, np.inf)
    region = Forest(meet) & StripUnion(strips)
    cons = constructive_cover(meet, strips, beta)
    lhs = forest_measure(cons, 1)
    spec = spec or OuterSpec(band=meet[0].band)
    try:
        g = outer_measure(region, replace(spec, aggregation=1), candidates=cons + meet)
        lhs = min(lhs, g)
    except ParameterError:
        pass
    rhs = 4.0 / beta * nu * mu_inf
    return {"lhs": float(lhs), "rhs": float(rhs), "nu": nu, "mu_inf": mu_inf,
            "holds": bool(lhs <= rhs), "constant": 4.0}


# ---------------------------------------------------------------------------
# inequality samplers


@dataclass
class RatioReport:
    """Ratios of sampled inequalities.

    ``profile`` maps a parameter (``beta`` for sweeps) to the largest ratio
    observed at that value; ``uniform`` compares the largest ratio over the
    sweep with the ratio at the first parameter value.
    """

    kind: str
    ratios: list
    params: list
    skipped: int
    factor: float = 3.0

    @property
    def max(self) -> float:
        return float(max(self.ratios)) if self.ratios else 0.0

    @property
    def median(self) -> float:
        return float(np.median(self.ratios)) if self.ratios else 0.0

    @property
    def profile(self) -> dict:
        out = {}
        for p, r in zip(self.params, self.ratios):
            out[p] = max(out.get(p, 0.0), r)
        return out

    @property
    def uniform(self) -> bool:
        prof = self.profile
        if not prof:
            return True
        ref = prof[self.params[0]]
        return bool(max(prof.values()) <= self.factor * ref) if ref > 0 else False

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "ratios": self.ratios, "params": self.params,
                           "skipped": self.skipped, "max": self.max, "median": self.median,
                           "uniform": self.uniform}, sort_keys=True)


_PATTERNS = tuple(itertools.product("ol", repeat=3))


def _integral_over_tree(factors, T, spec):
    H = ProductField(ProductField(factors[0], factors[1]), factors[2])
    S = model_sample(H, T, spec.quad, spec.restrict)
    tot = np.sum(S.values, axis=(1, 2, 3)) * S.dtheta * S.dzeta * S.inner_weight * T.s
    return np.abs(tot)


def _si_total(factors, T, spec):
    return sum(integral_size(factors, T, p, spec) for p in _PATTERNS)


def _ratio(num, den):
    return None if den == 0 and num == 0 else (np.inf if den == 0 else num / den)


def inequality_sampler(kind: str, inputs, trials: int | None = None, spec: SizeSpec | None = None,
                       outer: OuterSpec | None = None, factor: float = 3.0) -> RatioReport:
    """Sample a family of inequalities and record LHS / RHS ratios.

    ``inputs`` is a sequence of cases; each case is a dict whose keys depend
    on ``kind``:

    ``rn_domination``: ``factors`` (three fields), ``tree``.  Ratio
    ``|int_T H| / (mu^1(T) SI(H)(T))`` with ``SI`` summed over all eight
    overlap/lacunary patterns, which is at most ``|band| / 2``.
    ``outer_holder``: ``F``, ``G``, ``p1``, ``p2``.  Ratio
    ``||F G||_{L^r L^(1,inf)} / (||F||_{L^p1 L^(inf,inf)} ||G||_{L^p2 L^(1,inf)})``.
    ``single_tree``: ``factors`` (BHT triple with pullbacks), ``tree``,
    ``beta``.  Ratio ``SI(T) / prod_j (L^(inf,inf) + L^(2,2) D)(F_j)(T)``.
    ``uniform_embedding``: ``f`` (signal), ``family``, ``beta``, ``p``.  Ratio
    ``||E[f] o Gamma||_{L^p_{mu^inf} L^(p,inf)} / ||f||_p`` with
    ``Gamma = Gamma_2(beta)``.
    """
    cases = list(inputs)[: trials] if trials is not None else list(inputs)
    spec = spec or SizeSpec()
    outer = outer or OuterSpec()
    ratios, params, skipped = [], [], 0
    for case in cases:
        if kind == "rn_domination":
            T = case["tree"]
            num = float(_integral_over_tree(case["factors"], T, spec).max())
            den = 2 * T.s * _si_total(case["factors"], T, spec)
            r = _ratio(num, den)
            param = case.get("param", T.s)
        elif kind == "outer_holder":
            p1, p2 = case["p1"], case["p2"]
            rr = 1.0 / (1.0 / p1 + 1.0 / p2)
            F, G = case["F"], case["G"]
            s_prod = replace(spec, kind="lebesgue", u=1.0, v=np.inf)
            num = outer_lp(ProductField(F, G), s_prod, outer, rr)
            den = (outer_lp(F, replace(spec, kind="lebesgue", u=np.inf, v=np.inf), outer, p1)
                   * outer_lp(G, s_prod, outer, p2))
            r = _ratio(num, den)
            param = case.get("param", (p1, p2))
        elif kind == "single_tree":
            fs = case["factors"]
            T = case["tree"]
            num = _si_total(fs, T, spec)
            den = 1.0
            for F in fs:
                a = lebesgue_size(F, T, replace(spec, kind="lebesgue", u=np.inf, v=np.inf, gamma=None))
                b = lacunary_size(F, T, replace(spec, kind="lacunary", u=2.0, v=2.0, gamma=None))
                den *= a + b
            r = _ratio(num, den)
            param = case["beta"]
        elif kind == "uniform_embedding":
            f, beta, p = case["f"], case["beta"], case.get("p", 2.0)
            F = PullbackField(_embed_signal(f, case["family"]), GammaMap.bht(2, beta))
            num = outer_lp(F, replace(spec, kind="lebesgue", u=p, v=np.inf),
                           replace(outer, aggregation=np.inf), p)
            den = f.lp_norm(p)
            r = _ratio(num, den)
            param = beta
        else:
            raise ParameterError(f"unknown inequality kind {kind!r}")
        if r is None:
            skipped += 1
            continue
        ratios.append(float(r))
        params.append(param)
    return RatioReport(kind, ratios, params, skipped, factor)


def _embed_signal(f, family):
    from .embedding import embed
    return embed(f, None, family)
