import numpy as np
from hypothesis import given, settings, strategies as st

from tfkit.embedding import GammaMap, gamma_apply, gamma_invert
from tfkit.geometry import Strip, Tree, boundary_of, counting_function
from tfkit.signal import SampledSignal
from tfkit.transform import direct_bht

N, DX = 128, 0.25
L = N * DX

finite = dict(allow_nan=False, allow_infinity=False)
coef = st.complex_numbers(max_magnitude=10, **finite)
modes = st.lists(st.tuples(st.integers(-20, 20), coef), min_size=1, max_size=6, unique_by=lambda m: m[0])
betas = st.floats(2.0**-8, 1.0)


def signal(ms):
    ks = np.array([k for k, _ in ms], float)
    cs = np.array([c for _, c in ms], complex)
    return SampledSignal.from_spectrum(ks / L, cs, N, DX)


@settings(max_examples=40, deadline=None)
@given(modes)
def test_spectrum_round_trip(ms):
    f = signal(ms)
    xi, c = f.spectrum()
    g = SampledSignal.from_spectrum(xi, c, N, DX)
    assert np.allclose(g.samples, f.samples, atol=1e-10 * (1 + np.abs(f.samples).max()))


@settings(max_examples=40, deadline=None)
@given(modes, modes, betas, st.integers(0, N - 1))
def test_bht_commutes_with_grid_translation(m1, m2, beta, shift):
    f1, f2 = signal(m1), signal(m2)
    lhs = direct_bht(f1.like(np.roll(f1.samples, shift)), f2.like(np.roll(f2.samples, shift)), beta).samples
    rhs = np.roll(direct_bht(f1, f2, beta).samples, shift)
    assert np.allclose(lhs, rhs, atol=1e-9 * (1 + np.abs(rhs).max()))


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([1, 2, 3]), betas, st.floats(-50, 50), st.floats(-50, 50), st.floats(1e-3, 1e3))
def test_gamma_round_trip(index, beta, eta, y, t):
    g = GammaMap.bht(index, beta)
    e2, y2, t2 = gamma_invert(g, *gamma_apply(g, eta, y, t))
    assert np.isclose(t2, t, rtol=1e-12) and np.isclose(y2, y)
    assert np.isclose(e2, eta, rtol=1e-9, atol=1e-9 * (1 + 1 / (beta * t)))


@settings(max_examples=60, deadline=None)
@given(st.floats(-5, 5), st.floats(-20, 20), st.floats(0.01, 10), st.floats(-3.9, 3.9),
       st.floats(-0.99, 0.99), st.floats(1e-3, 0.99))
def test_tree_model_round_trip(xi, x, s, theta, zeta, sigma):
    T = Tree(xi, x, s)
    back = T.model_coords(*T.from_model(theta, zeta, sigma))
    assert np.allclose(back, (theta, zeta, sigma), rtol=1e-9, atol=1e-9)


intervals = st.lists(st.tuples(st.floats(-10, 10), st.floats(0.01, 5)), min_size=1, max_size=8)


@settings(max_examples=60, deadline=None)
@given(intervals, intervals)
def test_counting_function_additivity(a, b):
    ta = [Tree(0, x, s) for x, s in a]
    tb = [Tree(0, x, s) for x, s in b]
    both = counting_function(ta + tb)
    assert np.isclose(both.L1, counting_function(ta).L1 + counting_function(tb).L1)
    assert both.Linf <= counting_function(ta).Linf + counting_function(tb).Linf
    assert both.support_measure() <= both.L1 + 1e-9


@settings(max_examples=40, deadline=None)
@given(intervals, betas)
def test_strip_union_boundary_is_lipschitz(iv, beta):
    E = Strip(iv[0][0], iv[0][1], beta)
    for x, s in iv[1:]:
        E = E | Strip(x, s, beta)
    b = boundary_of(E, np.linspace(-1, 1, 3), np.linspace(-16, 16, 257))
    assert b.valid


@settings(max_examples=30, deadline=None)
@given(modes, st.floats(0.1, 10))
def test_signal_norm_homogeneity(ms, c):
    f = signal(ms)
    assert np.isclose(f.like(c * f.samples).l2_norm(), c * f.l2_norm(), rtol=1e-12)
