from dataclasses import replace

import numpy as np
import pytest

from tfkit.embedding import FunctionField, embed
from tfkit.geometry import Strip, Tree
from tfkit.signal import ParameterError
from tfkit.sizes import (Quadrature, SizeSpec, composite_size, default_family, defect_size,
                         lacunary_size, lebesgue_size, model_sample, sio_size, size)
from tfkit.wavepacket import make_mother_packet

from conftest import trig_signal

QUAD = Quadrature(n_theta=32, n_zeta=24, per_octave=6, sigma_min=2.0**-8)
T = Tree(0.0, 0.0, 4.0, (-5.0, 5.0))


def spec(**kw):
    return SizeSpec(quad=QUAD, **kw)


def constant(c=1.0):
    return FunctionField(lambda eta, y, t, th: c * np.ones(np.shape(eta)))


def model_sigma(T):
    # model scale sigma = t / s as a field
    return FunctionField(lambda eta, y, t, th: np.asarray(t) / T.s)


@pytest.fixture(scope="module")
def field():
    rng = np.random.default_rng(7)
    return embed(trig_signal(rng, 256, 1 / 16, kmax=30, modes=8), None, make_mother_packet(0.25))


class TestAnalytic:
    def test_zero_field(self):
        for kind, fn in [("lebesgue", lebesgue_size), ("lacunary", lacunary_size), ("sio", sio_size)]:
            assert fn(constant(0.0), T, spec(kind=kind)) == 0.0

    def test_constant_sup(self):
        assert lebesgue_size(constant(3.0), T, spec(u=np.inf, v=np.inf)) == 3.0

    def test_constant_l1_sup(self):
        # every zeta column meets the mask, so the outer integral is 2
        assert lebesgue_size(constant(), T, spec(u=1.0, v=np.inf)) == pytest.approx(2.0, rel=1e-12)

    def test_constant_diverges_in_dsigma_over_sigma(self):
        assert lebesgue_size(constant(), T, spec(u=1.0, v=1.0)) == np.inf

    def test_quadratic_scale_profile(self):
        # int_{-1}^{1} int_0^{1-|zeta|} sigma^2 dsigma/sigma dzeta = 1/3
        F = model_sigma(T)
        sq = FunctionField(lambda *a: F.evaluate(*a)[0] ** 2)
        assert lebesgue_size(sq, T, spec(u=1.0, v=1.0)) == pytest.approx(1 / 3, rel=3e-2)

    def test_slow_decay_is_reported_divergent(self):
        # a sigma^1 column leaves more than the tolerated share in the last octave
        assert lebesgue_size(model_sigma(T), T, spec(u=1.0, v=1.0)) == np.inf

    def test_restrict_keeps_normalization(self):
        half = lebesgue_size(constant(), T, spec(u=1.0, v=np.inf, restrict=(0.0, 5.0)))
        assert half == pytest.approx(1.0, rel=1e-12)


class TestNormAxioms:
    @pytest.mark.parametrize("kind", ["lebesgue", "lacunary", "sio"])
    def test_homogeneity(self, field, kind):
        s = spec(kind=kind, u=2.0, v=2.0)
        assert size(field * (2 - 1j), T, s) == pytest.approx(abs(2 - 1j) * size(field, T, s), rel=1e-12)

    @pytest.mark.parametrize("uv", [(1.0, 1.0), (2.0, np.inf), (np.inf, 2.0)])
    def test_triangle(self, field, uv):
        other = embed(trig_signal(np.random.default_rng(3), 256, 1 / 16, kmax=30), None, make_mother_packet(0.25))
        s = spec(u=uv[0], v=uv[1])
        assert lebesgue_size(field + other, T, s) <= lebesgue_size(field, T, s) + lebesgue_size(other, T, s) + 1e-12

    def test_exclusion_is_monotone(self, field):
        s = spec(u=2.0, v=2.0)
        full = lebesgue_size(field, T, s)
        cut = lebesgue_size(field, T, s, exclude=Strip(0.0, 2.0))
        more = lebesgue_size(field, T, s, exclude=Strip(0.0, 3.0))
        assert more <= cut <= full

    def test_layer_maximum(self, field):
        fam = default_family(0.25, 4, 2)
        F = embed(trig_signal(np.random.default_rng(1), 256, 1 / 16, kmax=30), None, fam)
        per = lebesgue_size(F, T, spec(u=2.0, v=2.0), return_layers=True)
        assert per.shape == (len(fam),)
        assert lebesgue_size(F, T, spec(u=2.0, v=2.0)) == per.max()


class TestFamilyAndDefects:
    def test_family_unit_sup(self):
        xi = np.linspace(-0.25, 0.25, 2049)
        for m in default_family(0.25, 4, 2):
            assert np.max(np.abs(m.hat(xi))) == pytest.approx(1.0, rel=1e-12)

    def test_plain_embedding_defect_is_small(self, field):
        s = spec(u=1.0, v=1.0)
        d = defect_size(field, T, s, "total")
        ref = lebesgue_size(field, T, spec(u=1.0, v=2.0))
        assert d < 1e-3 * ref


class TestComposite:
    def test_beta_prefactor_scales_sup_part(self, field):
        s = spec(kind="composite_uniform_linear", u=2.0, inner_band=(-0.1, 0.1))
        _, p1 = composite_size(field, T, replace(s, beta_prefactor=1.0), breakdown=True)
        _, p4 = composite_size(field, T, replace(s, beta_prefactor=0.25), breakdown=True)
        assert p4["lebesgue_u_inf"] == pytest.approx(0.5 * p1["lebesgue_u_inf"], rel=1e-12)
        assert p4["lacunary_u_2"] == p1["lacunary_u_2"]

    def test_inner_band_checked(self, field):
        with pytest.raises(ParameterError):
            composite_size(field, T, spec(kind="composite_uniform_linear", inner_band=(-1.0, 1.0)))

    def test_nonuniform_breakdown_sums(self, field):
        total, parts = composite_size(field, T, spec(kind="composite_nonuniform", u=2.0), breakdown=True)
        assert set(parts) == {"lebesgue_inf_inf", "lacunary_u_2", "defect_u_1", "sio_u"}
        assert total == pytest.approx(sum(parts.values()))


class TestValidation:
    def test_spec_errors(self):
        with pytest.raises(ParameterError):
            SizeSpec(kind="holder")
        with pytest.raises(ParameterError):
            SizeSpec(u=0.5)

    def test_restrict_inside_band(self, field):
        with pytest.raises(ParameterError):
            lebesgue_size(field, T, spec(restrict=(-6.0, 0.0)))

    def test_model_sample_mask(self):
        S = model_sample(constant(), T, QUAD)
        Z = S.zeta[None, :, None]
        assert np.array_equal(S.mask, np.broadcast_to(S.sigma[None, None, :] < 1 - np.abs(Z), S.mask.shape))
