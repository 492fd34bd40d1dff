import json

import numpy as np
import pytest

from tfkit.geometry import (Difference, Forest, Intersection, Strip, StripUnion, Tree, Union,
                            boundary_of, counting_function, pullback_boundary, region_from_json,
                            region_to_json, solve_model_boundary)
from tfkit.signal import ParameterError


def cloud(rng, m=4000, eta=(-3, 3), y=(-4, 4), t=(1e-3, 8)):
    return rng.uniform(*eta, m), rng.uniform(*y, m), np.exp(rng.uniform(np.log(t[0]), np.log(t[1]), m))


class TestMembership:
    def test_tree_examples(self):
        T = Tree(0.0, 0.0, 2.0)
        assert T.contains(0.0, 0.0, 1.0)
        assert T.contains(1.0, 1.5, 0.4)
        assert not T.contains(0.0, 0.0, 2.0)     # top scale excluded
        assert not T.contains(3.0, 0.0, 1.5)     # t (eta - xi) = 4.5 outside the band
        assert not T.contains(0.0, 2.5, 0.1)     # outside the spatial cone
        assert not T.contains(0.0, 0.0, -1.0)

    def test_strip_examples(self):
        D = Strip(1.0, 2.0, 0.5)
        assert D.contains(100.0, 1.0, 3.9)
        assert not D.contains(0.0, 1.0, 4.0)
        assert not D.contains(0.0, 3.5, 0.1)

    def test_model_round_trip(self, rng):
        T = Tree(0.3, -1.0, 1.5, (-5, 5))
        eta, y, t = cloud(rng, 200)
        back = T.from_model(*T.model_coords(eta, y, t))
        for a, b in zip(back, (eta, y, t)):
            assert np.allclose(a, b, rtol=1e-12, atol=1e-12)

    def test_contains_agrees_with_boundary(self, rng):
        regions = [Tree(0.2, 0.5, 2.0), Strip(0.0, 1.5, 0.25),
                   Union((Tree(0, 0, 1), Tree(1, 1, 2))), Intersection((Strip(0, 2), Strip(1, 2)))]
        eta, y, t = cloud(rng)
        for E in regions:
            b = E.boundary_value(eta, y)
            away = np.abs(t - b) > 1e-9
            assert np.array_equal(E.contains(eta, y, t)[away], (t < b)[away])

    def test_set_operators(self, rng):
        A, B = Strip(0, 2), Strip(1, 2)
        eta, y, t = cloud(rng, 500)
        a, b = A.contains(eta, y, t), B.contains(eta, y, t)
        assert np.array_equal((A | B).contains(eta, y, t), a | b)
        assert np.array_equal((A & B).contains(eta, y, t), a & b)
        assert np.array_equal((A - B).contains(eta, y, t), a & ~b)

    def test_validation(self):
        with pytest.raises(ParameterError):
            Tree(0, 0, 0)
        with pytest.raises(ParameterError):
            Tree(0, 0, 1, (1, -1))
        with pytest.raises(ParameterError):
            Strip(0, 1, 1.5)
        with pytest.raises(ParameterError):
            Union((Strip(0, 1, 0.5), Strip(0, 1, 1.0)))
        with pytest.raises(ParameterError):
            Forest([Tree(0, 0, 1, (-4, 4)), Tree(0, 0, 1, (-5, 5))])
        with pytest.raises(ParameterError):
            StripUnion([Tree(0, 0, 1)])
        with pytest.raises(ParameterError):
            Tree(0, 0, 1, (-4, 4)).check_uniform_band()
        Tree(0, 0, 1, (-5, 5)).check_uniform_band()


class TestCounting:
    def test_overlapping_intervals(self):
        cf = counting_function([Tree(0, 0.0, 1.0), Tree(0, 1.75, 1.25)])
        assert cf.L1 == 4.5
        assert cf.Linf == 2.0
        assert cf.support_measure() == 4.0
        assert cf(np.array([-2.0, 0.0, 0.75, 2.0])).tolist() == [0, 1, 2, 1]

    def test_forest_and_empty(self):
        assert counting_function(Forest([Tree(0, 0, 2)])).L1 == 4.0
        empty = counting_function([])
        assert empty.L1 == 0.0 and empty.Linf == 0.0 and empty.support_measure() == 0.0


class TestBoundary:
    eta = np.linspace(-3, 3, 61)
    y = np.linspace(-4, 4, 81)

    def test_strip_value(self):
        b = boundary_of(Strip(0.0, 1.0, 0.5), [0.0, 1.0], [0.0, 0.5, 2.0])
        assert b.values.tolist() == [[2.0, 1.0, 0.0], [2.0, 1.0, 0.0]]
        assert b.valid

    def test_tree_value(self):
        T = Tree(0.0, 0.0, 2.0, (-4, 4))
        b = T.boundary_value(np.array([0.0, 1.0, 3.0, -2.0]), np.zeros(4))
        assert b.tolist() == pytest.approx([2.0, 2.0, 4 / 3, 2.0])

    def test_union_idempotent_and_monotone(self):
        T = Tree(0.5, 0.0, 2.0)
        assert np.array_equal(boundary_of(T | T, self.eta, self.y).values, boundary_of(T, self.eta, self.y).values)
        small, big = boundary_of(Strip(0, 1), self.eta, self.y), boundary_of(Strip(0, 2), self.eta, self.y)
        assert np.all(small.values <= big.values)

    def test_certificates(self):
        E = Union((Tree(0, 0, 1), Tree(1, 1, 2), Tree(-1, -2, 0.5)))
        assert boundary_of(E, self.eta, self.y).valid
        E2 = Intersection((Strip(0, 2, 0.5), Strip(1, 2, 0.5)))
        assert boundary_of(E2, self.eta, self.y).valid

    def test_difference_has_no_boundary(self):
        with pytest.raises(ParameterError):
            boundary_of(Difference(Strip(0, 2), Strip(0, 1)), self.eta, self.y)

    def test_to_csv(self, tmp_path):
        b = boundary_of(Strip(0, 1), [0.0, 1.0], [0.0, 0.5])
        b.to_csv(tmp_path / "b.csv")
        data = np.loadtxt(tmp_path / "b.csv", delimiter=",", skiprows=1)
        assert data.shape == (4, 3)


class TestPullback:
    def test_own_tree_is_a_cone(self):
        T = Tree(0.2, 1.0, 2.0, (-4, 4))
        th = np.linspace(-3.5, 3.5, 15)
        ze = np.linspace(-0.9, 0.9, 19)
        pb = pullback_boundary(T, T, th, ze)
        assert np.allclose(pb.values, (1 - np.abs(ze))[None, :], rtol=1e-9)
        assert pb.valid

    def test_strip_pullback_and_misses(self):
        T = Tree(0.0, 0.0, 1.0)
        D = Strip(0.0, 0.5)
        s = solve_model_boundary(T, D, np.zeros(3), np.array([0.0, 0.25, 0.9]))
        assert s == pytest.approx([0.5, 0.25, 0.0])

    def test_valid_for_unions(self):
        T = Tree(0.0, 0.0, 2.0)
        E = Union((Tree(0.5, 0.5, 1.0), Tree(-0.5, -1.0, 0.75)))
        pb = pullback_boundary(T, E, np.linspace(-3.5, 3.5, 29), np.linspace(-0.95, 0.95, 39))
        assert pb.valid


class TestSerialization:
    def test_round_trip(self):
        E = Difference(Union((Tree(0, 0, 1), Tree(1, 2, 3))), Intersection((Tree(0, 0, 0.5), Tree(0.5, 0, 1))))
        obj = region_to_json(E)
        assert region_from_json(json.dumps(obj)) == E
        D = StripUnion([Strip(0, 1, 0.5), Strip(2, 1, 0.5)])
        assert region_from_json(region_to_json(D)) == D

    def test_errors(self):
        with pytest.raises(ParameterError):
            region_from_json({"type": "disk"})
        with pytest.raises(ParameterError):
            region_from_json({"type": "union", "children": [
                {"type": "strip", "x": 0, "s": 1, "beta": 0.5}, {"type": "strip", "x": 0, "s": 1, "beta": 1.0}]})
