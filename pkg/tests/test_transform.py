import numpy as np
import pytest
from scipy import integrate

from tfkit.signal import ParameterError, ResolutionError, SampledSignal
from tfkit.transform import (AliasingError, SupportSeparationError, TruncationRegion,
                             bht_zero_limit_check, bilinear_sgn_multiplier, c_beta, direct_bht,
                             halfplane_multiplier, hilbert_transform, small_scale_vanishing,
                             support_separation, wp_representation)
from tfkit.wavepacket import make_mother_packet

from conftest import trig_signal

R = 2.0**-5
N, DX = 256, 0.25
L = N * DX


def modes(ks, coefs, n=N, dx=DX):
    return SampledSignal.from_spectrum(np.asarray(ks) / (n * dx), coefs, n, dx)


def brute_bht(f1, f2, beta, x):
    """Double sum of the multiplier form at points ``x``, mode by mode."""
    xi1, c1 = f1.spectrum()
    xi2, c2 = f2.spectrum()
    out = np.zeros(x.shape, complex)
    for a, ca in zip(xi1, c1):
        for b, cb in zip(xi2, c2):
            out += -np.pi * 1j * ca * cb * np.sign(a - beta * b) * np.exp(2j * np.pi * (a + b) * x)
    return out


@pytest.fixture(scope="module")
def phi():
    return make_mother_packet(R)


class TestDirect:
    def test_zero_input(self, rng):
        f2 = trig_signal(rng, N, DX)
        out = direct_bht(modes([], []), f2, 0.5)
        assert np.all(out.samples == 0)

    def test_positive_halfplane_collapses_to_product(self):
        f1 = modes([20, 25, 31], [1.0, 2j, -0.5])
        f2 = modes([-3, 2, 5], [0.3, 1.0, 1j])
        out = direct_bht(f1, f2, 1.0)
        assert np.allclose(out.samples, -np.pi * 1j * f1.samples * f2.samples, atol=1e-12)

    @pytest.mark.parametrize("beta", [1.0, 0.5, 2.0**-5])
    def test_against_brute_force_double_sum(self, rng, beta):
        f1 = trig_signal(rng, N, DX, kmax=20, modes=8)
        f2 = trig_signal(rng, N, DX, kmax=20, modes=8)
        idx = rng.choice(N, 16, replace=False)
        ref = brute_bht(f1, f2, beta, f1.x[idx])
        out = direct_bht(f1, f2, beta).samples[idx]
        assert np.linalg.norm(out - ref) / np.linalg.norm(ref) < 1e-6

    def test_parameter_errors(self, rng):
        f = trig_signal(rng, N, DX)
        for beta in (0.0, -0.5, 1.5):
            with pytest.raises(ParameterError):
                direct_bht(f, f, beta)
        with pytest.raises(ParameterError):
            direct_bht(f, trig_signal(rng, 128, DX), 0.5)

    def test_aliasing_guard(self):
        f = modes([120], [1.0])
        with pytest.raises(AliasingError):
            direct_bht(f, f, 1.0)

    def test_sgn_squared_energy(self, rng):
        # a single-mode second factor keeps output modes distinct, so
        # |sgn| = 1 off the diagonal preserves the energy of the product
        f1 = trig_signal(rng, N, DX, kmax=20, modes=9, exclude=(6,))
        f2 = modes([6], [1.3 - 0.2j])
        out = bilinear_sgn_multiplier(f1, f2, 1.0)
        assert out.l2_norm() == pytest.approx(f1.like(f1.samples * f2.samples).l2_norm(), rel=1e-12)


class TestZeroLimit:
    def test_analytic_signal(self):
        f1 = modes([3, 7, 12], [1.0, 0.5j, -2.0])
        h = hilbert_transform(f1)
        assert np.allclose(h.samples, -1j * f1.samples, atol=1e-12)

    def test_zero_second_factor(self, rng):
        f1 = trig_signal(rng, N, DX, exclude=(0,))
        rep = bht_zero_limit_check(f1, modes([], []))
        assert rep["max_deviation"] == 0.0

    def test_trend(self, rng):
        f1 = trig_signal(rng, N, DX, kmax=30, modes=10, exclude=(0,))
        f2 = trig_signal(rng, N, DX, kmax=60, modes=10)
        rep = bht_zero_limit_check(f1, f2, betas=[2.0**-k for k in range(2, 11)])
        assert rep["decreasing_trend"]
        assert rep["deviation"][-1] < rep["deviation"][0]


class TestMultiplier:
    def test_vanishes_off_support(self, phi):
        xt = np.concatenate([np.linspace(0, 1 - 2 * R, 50), np.linspace(1 + 2 * R, 3, 50)])
        assert np.all(halfplane_multiplier(phi, 0.5, xt) == 0)

    def test_bounds(self, phi):
        # the theta-window has length at most 2r/(1+beta), which exceeds r for beta < 1
        for beta in (1.0, 0.5, 2.0**-8):
            assert halfplane_multiplier(phi, beta, 1.0) >= R / 4
            xt = np.linspace(1 - 3 * R, 1 + 3 * R, 2048)
            assert np.all(halfplane_multiplier(phi, beta, xt) <= 2 * R / (1 + beta) + 1e-15)

    def test_underresolved_quadrature(self, phi):
        with pytest.raises(ResolutionError):
            halfplane_multiplier(phi, 0.5, 1.0, points_per_r=4)

    def test_c_beta_interval(self, phi):
        for beta in (1.0, 0.25, 2.0**-8):
            C = c_beta(phi, beta)
            assert R**2 / 8 < C < 8 * R**2

    def test_c_beta_xi_independence(self, phi):
        a = c_beta(phi, 0.5, xi_samples=(1.0,))
        b = c_beta(phi, 0.5, xi_samples=(2.0,))
        assert a == pytest.approx(b, rel=1e-10)

    def test_c_beta_regression(self, phi):
        # frozen value of the lattice quadrature at r = 2^-5, beta = 1/2
        assert c_beta(phi, 0.5) == pytest.approx(0.0018938307033308343, rel=1e-10)

    def test_c_beta_adaptive_quadrature_oracle(self, phi):
        # independent nested adaptive quadrature over theta and log t
        beta = 0.5
        prof = lambda z: float(phi.hat(z).real)

        def m(xt):
            f = lambda th: prof(th) * prof(th + xt - 1) * prof(1 - xt - (1 + beta) * th)
            return integrate.quad(f, -R, R, epsabs=1e-14, limit=200)[0]

        val = integrate.quad(lambda u: m(np.exp(u)), np.log(1 - 2 * R), np.log(1 + 2 * R),
                             epsabs=1e-14, limit=200)[0]
        assert c_beta(phi, beta) == pytest.approx(val, rel=1e-6)


class TestRepresentation:
    def test_region_validation(self):
        with pytest.raises(ParameterError):
            TruncationRegion((-1, 1), (0.0, 2.0))
        with pytest.raises(ParameterError):
            TruncationRegion((1, -1), (0.5, 2.0))

    def test_support_separation_predicate(self, phi):
        assert support_separation(R, 1.0)
        assert not support_separation(0.4, 1.0)
        big = make_mother_packet(0.4)
        f = modes([3], [1.0])
        with pytest.raises(SupportSeparationError):
            wp_representation(f, f, 1.0, big, TruncationRegion((-1, 1), (0.5, 2.0)))

    def test_zero_input(self, phi, rng):
        f2 = trig_signal(rng, N, DX)
        out, tail = wp_representation(modes([], []), f2, 0.5, phi, TruncationRegion((-10, 10), (0.5, 4)))
        assert np.all(out.samples == 0) and tail == 0.0

    def test_small_scale_vanishing(self, phi):
        S = 2.0
        assert small_scale_vanishing(phi, 0.5, S, [1 / (100 * S), 1e-3, 1e-4])
        assert not small_scale_vanishing(phi, 0.5, S, [1.0 / S])

    def test_error_decreases_with_region(self, phi, rng):
        n, dx = 256, 0.125
        Lp = n * dx
        f1 = SampledSignal.from_spectrum(np.array([1, 3, 5, -2]) * 8 / Lp / 8, [1, 0.5j, -0.7, 0.3], n, dx)
        f2 = SampledSignal.from_spectrum(np.array([-3, 2, 6, -5]) * 8 / Lp / 8, [0.4, 1j, 0.8, -0.2], n, dx)
        beta = 0.125
        target = direct_bht(f1, f2, beta).samples / (np.pi * 1j)
        C = c_beta(phi, beta)
        errs = []
        for tr in [(0.5, 4.0), (0.1, 20.0), (0.001, 2000.0)]:
            out, _ = wp_representation(f1, f2, beta, phi, TruncationRegion((-50, 50), tr), const=C)
            errs.append(np.linalg.norm(out.samples - target) / np.linalg.norm(target))
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] < 1e-6
