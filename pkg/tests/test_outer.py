from dataclasses import replace

import numpy as np
import pytest

from tfkit.embedding import embed
from tfkit.geometry import Strip, StripUnion, Tree, Union, counting_function
from tfkit.outer import (ExponentTuple, OuterSpec, atomic_decompose, field_point_cloud, forest_measure,
                         greedy_cover, inequality_sampler, lattice_trees, localized_norm,
                         maximal_function, measure_compare, nu_measure, outer_lp, outer_measure,
                         refine_to_linfty, superlevel_profile)
from tfkit.signal import ParameterError, SampledSignal
from tfkit.sizes import SizeSpec
from tfkit.wavepacket import make_mother_packet

from conftest import trig_signal

BAND = (-1.0, 1.0)
SPEC = OuterSpec(band=BAND)
# the L^(u,2) size of a plain embedding diverges at small scales; L^(2,inf) is finite
SIZE = SizeSpec(kind="lebesgue", u=2.0, v=np.inf)


@pytest.fixture(scope="module")
def field():
    rng = np.random.default_rng(11)
    return embed(trig_signal(rng, 64, 0.25, kmax=8, modes=6), None, make_mother_packet(0.25))


class TestOuterMeasure:
    def test_empty(self):
        assert outer_measure(None) == 0.0

    def test_single_tree(self):
        assert outer_measure(Tree(0.0, 0.0, 2.0, BAND), SPEC) == 4.0

    def test_strip_generator(self):
        V = StripUnion([Strip(0, 1), Strip(1.5, 1), Strip(10, 0.5)])
        assert outer_measure(V, replace(SPEC, generator="strips")) == 4.5 == nu_measure(V)

    def test_greedy_within_twice_brute(self):
        rng = np.random.default_rng(5)
        for _ in range(3):
            leaves = [Tree(float(rng.integers(-1, 2)) * 0.5, float(rng.uniform(-2, 2)), float(rng.choice([0.5, 1.0])), BAND)
                      for _ in range(3)]
            E = Union(tuple(leaves))
            extra = [Tree(T.xi, T.x, 2 * T.s, BAND) for T in leaves] + lattice_trees(
                OuterSpec(band=BAND, scales=(4.0,), x_range=(-4, 4), x_step=1.0, xi_range=(0, 0)))[:6]
            cands = (leaves + extra)[:12]
            brute = outer_measure(E, SPEC, "brute", candidates=cands)
            greedy = outer_measure(E, SPEC, "greedy", candidates=cands)
            assert greedy <= 2 * brute

    def test_brute_limits(self):
        with pytest.raises(ParameterError):
            outer_measure(Tree(0, 0, 1, BAND), SPEC, "brute", candidates=[Tree(0, 0, 1, BAND)] * 17)

    def test_forest_measure_aggregation(self):
        trees = [Tree(0, 0, 1), Tree(0, 0.5, 1)]
        assert forest_measure(trees, 1) == 4.0
        assert forest_measure(trees, np.inf) == 2.0


class TestOuterLp:
    def test_superlevel_profile_monotone(self, field):
        prof = superlevel_profile(field, SIZE, [0.05, 0.1, 0.2, 0.4], SPEC)
        mus = [m for _, m, _, _ in prof]
        assert all(a <= b for a, b in zip(mus, mus[1:]))
        assert all(res <= lam for lam, _, res, _ in prof)

    def test_weak_below_strong(self, field):
        for p in (1.0, 2.0, 4.0):
            assert outer_lp(field, SIZE, SPEC, p, weak=True) <= outer_lp(field, SIZE, SPEC, p) * (1 + 1e-12)

    def test_homogeneity(self, field):
        a = outer_lp(field, SIZE, SPEC, 2.0)
        assert outer_lp(field * 3.0, SIZE, SPEC, 2.0) == pytest.approx(3 * a, rel=1e-9)

    def test_infinite_exponent_is_top_size(self, field):
        from tfkit.sizes import lebesgue_size
        top = max(lebesgue_size(field, T, replace(SIZE, quad=SPEC.quad)) for T in lattice_trees(SPEC))
        assert outer_lp(field, SIZE, SPEC, np.inf) == pytest.approx(top, rel=1e-12)

    def test_atomic_decomposition(self, field):
        dec = atomic_decompose(field, SIZE, SPEC, p=2.0)
        assert dec.weighted_sum <= 4 * dec.norm_p
        rem = [dec.remainder(n) for n in (0, 2, 4, 8)]
        assert all(a >= b - 1e-12 for a, b in zip(rem, rem[1:]))

    def test_localized_X_equals_Lq_when_r_is_q(self, field):
        V = StripUnion([Strip(0.0, 2.0)])
        e = ExponentTuple(p=2.0, q=2.0, r=2.0)
        x = localized_norm(field, SIZE, "X_qr", e, V, SPEC)
        l = localized_norm(field, SIZE, "fLq_mu1", e, V, SPEC)
        assert x == pytest.approx(l, rel=1e-9)

    def test_unsupported_size(self, field):
        with pytest.raises(ParameterError):
            outer_lp(field, SizeSpec(kind="sio"), SPEC)


class TestCover:
    def test_postconditions(self, field):
        cloud = field_point_cloud(field, (-1.5, 1.5), (-8, 8), (0.05, 2.0), n=(24, 32, 8))
        spec = OuterSpec(band=(-4.5, 4.5), scales=(0.25, 0.5, 1.0, 2.0), x_range=(-8, 8),
                         xi_range=(-2, 2), xi_step=0.25)
        lam = 0.2 * cloud.mass.sum() / (9 * 2.0)
        res = greedy_cover(cloud, lam, spec=spec)
        pc = res.postconditions()
        assert pc["residual_ok"] and pc["disjoint"] and pc["mass_ok"]
        assert res.selected
        assert res.exterior_count() <= 1

    def test_zero_field_has_empty_cover(self):
        F = embed(SampledSignal(np.zeros(64), 0.25), None, make_mother_packet(0.25))
        cloud = field_point_cloud(F, (-1, 1), (-4, 4), (0.1, 1), n=(8, 8, 4))
        res = greedy_cover(cloud, 0.1)
        assert res.selected == [] and res.measure_estimate == 0.0

    def test_band_checks(self, field):
        cloud = field_point_cloud(field, (-1, 1), (-4, 4), (0.1, 1), n=(8, 8, 4))
        with pytest.raises(ParameterError):
            greedy_cover(cloud, 0.1, band=(-0.5, 0.5))
        with pytest.raises(ParameterError):
            greedy_cover(cloud, -1.0)


class TestRefinement:
    def test_maximal_function_of_interval(self):
        cf = counting_function([Tree(0, 0, 1)])
        assert maximal_function(cf, [0.0, 3.0]) == pytest.approx([1.0, 0.25])

    def test_single_tree_is_kept(self):
        ref = refine_to_linfty([Tree(0, 0, 1)], 2.0, 2.0)
        assert ref.forest == [Tree(0, 0, 1)] and not ref.strips
        assert ref.checks["nu_ok"] and ref.checks["cap_ok"]

    def test_stack_is_moved_into_strips(self):
        stack = [Tree(0, 0.0, 2.0**-j) for j in range(12)] + [Tree(0, 20.0, 1.0)]
        ref = refine_to_linfty(stack, 2.0, 2.0, C=3.0)
        assert ref.checks["cap_ok"] and ref.checks["contained"]
        assert ref.dropped and Tree(0, 20.0, 1.0) in ref.forest

    def test_empty(self):
        assert refine_to_linfty([], 2.0, 2.0).checks["nu_ok"]


class TestMisc:
    def test_measure_compare(self):
        W = [Tree(0, 0, 2), Tree(0.5, 3, 1), Tree(0, -2, 0.5)]
        out = measure_compare(W, StripUnion([Strip(0, 1, 0.5)]), 0.5)
        assert out["holds"] and out["lhs"] > 0

    def test_measure_compare_disjoint(self):
        out = measure_compare([Tree(0, 10, 1)], StripUnion([Strip(0, 1)]))
        assert out["holds"] and out["lhs"] == 0.0

    def test_exponent_validation(self):
        ExponentTuple(p=2, q=4, r=3, u=1).validate("uniform")
        with pytest.raises(ParameterError):
            ExponentTuple(q=2, r=3).validate()
        with pytest.raises(ParameterError):
            ExponentTuple(p=2, q=2, r=1.5, u=1).validate("uniform")
        with pytest.raises(ParameterError):
            ExponentTuple(p=0.5).validate()

    def test_spec_validation(self):
        with pytest.raises(ParameterError):
            OuterSpec(generator="disks")
        with pytest.raises(ParameterError):
            OuterSpec(aggregation=2)

    def test_sampler_skips_zero_cases(self):
        Z = embed(SampledSignal(np.zeros(64), 0.25), None, make_mother_packet(0.25))
        rep = inequality_sampler("outer_holder", [{"F": Z, "G": Z, "p1": 2.0, "p2": 2.0}], outer=SPEC)
        assert rep.skipped == 1 and rep.ratios == [] and rep.uniform

    def test_sampler_unknown_kind(self):
        with pytest.raises(ParameterError):
            inequality_sampler("bogus", [{}])
