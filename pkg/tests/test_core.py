from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zimaging import (
    CovarianceMode,
    NoiseModel,
    ObjectModel,
    Psf,
    Scenario,
    fwhm,
    make_gaussian_psf,
    mandel_q,
    paper_scenario,
    z_quantity,
)
from zimaging.errors import InvalidArgumentError, UndefinedQError


class TestGaussianPsf:
    def test_reference_kernel_fwhm(self):
        psf = make_gaussian_psf(3.0, 12)
        assert abs(fwhm(psf.weights) - 6.9) <= 0.3

    def test_symmetric_exactly(self):
        psf = make_gaussian_psf(3.0, 12)
        assert psf[5] == psf[-5]
        assert np.array_equal(psf.weights, psf.weights[::-1])

    @given(st.floats(0.2, 20.0), st.integers(1, 40))
    def test_normalized(self, sigma, J):
        psf = make_gaussian_psf(sigma, J)
        assert abs(math.fsum(psf.weights) - 1.0) < 1e-12
        assert psf.half_width == J

    @given(st.floats(0.2, 20.0))
    def test_renormalization_idempotent(self, sigma):
        psf = make_gaussian_psf(sigma)
        again = Psf(psf.weights)
        assert np.max(np.abs(again.weights - psf.weights)) <= 1e-15

    def test_default_half_width(self):
        assert make_gaussian_psf(3.0).half_width == 12
        assert make_gaussian_psf(2.1).half_width == 9

    @pytest.mark.parametrize("sigma,J", [(0.0, 3), (-1.0, 3), (1.0, 0), (1.0, -2), (1.0, 2.5)])
    def test_rejects_bad_arguments(self, sigma, J):
        with pytest.raises(InvalidArgumentError):
            make_gaussian_psf(sigma, J)


class TestPsf:
    def test_offsets_and_lookup(self):
        psf = Psf([1, 2, 1])
        assert psf.half_width == 1
        assert list(psf.offsets) == [-1, 0, 1]
        assert psf[0] == 0.5 and psf[-1] == 0.25 and psf[2] == 0.0

    def test_autocorrelation(self):
        a = Psf([1, 2, 1]).autocorrelation()
        np.testing.assert_allclose(a, [0.0625, 0.25, 0.375, 0.25, 0.0625], rtol=0, atol=1e-15)
        assert Psf([1, 2, 1]).squared_sum() == pytest.approx(0.375, abs=1e-15)

    def test_read_only(self):
        psf = Psf([1, 2, 1])
        with pytest.raises(ValueError):
            psf.weights[0] = 3

    @pytest.mark.parametrize("w", [[1, 1], [1, -1, 1], [0, 0, 0]])
    def test_rejects_invalid(self, w):
        with pytest.raises(InvalidArgumentError):
            Psf(w)


class TestScalars:
    @pytest.mark.parametrize("mean,var,z", [(10, 12, 2), (10, 10, 0), (10, 8, -2)])
    def test_z_quantity(self, mean, var, z):
        assert z_quantity(mean, var) == z

    @pytest.mark.parametrize("mean,var,q", [(10, 12, 0.2), (5, 5, 0.0)])
    def test_mandel_q(self, mean, var, q):
        assert mandel_q(mean, var) == pytest.approx(q, abs=1e-15)

    def test_mandel_q_dark_pixel(self):
        with pytest.raises(UndefinedQError):
            mandel_q(0, 0)

    @given(st.floats(0, 1e6), st.floats(-1, 10))
    def test_z_of_scaled_variance(self, m, q):
        assert abs(z_quantity(m, m * (1 + q)) - m * q) <= 1e-12 * max(1.0, m * (1 + abs(q)))

    @given(st.floats(1e-3, 1e6), st.floats(-1, 10))
    def test_q_and_z_consistent(self, m, q):
        var = m * (1 + q)
        assert z_quantity(m, var) == pytest.approx(m * mandel_q(m, var), rel=1e-9, abs=1e-9)


class TestModels:
    def test_object_derived(self):
        obj = ObjectModel([10.0, 0.0], [0.2, -1.0])
        np.testing.assert_allclose(obj.z, [2.0, 0.0])
        np.testing.assert_allclose(obj.variance, [12.0, 0.0])

    @pytest.mark.parametrize("mean,q", [([-1.0], [0.0]), ([1.0], [-1.5]), ([1.0, 2.0], [0.0])])
    def test_object_rejects(self, mean, q):
        with pytest.raises(InvalidArgumentError):
            ObjectModel(mean, q)

    def test_noise_flat(self):
        n = NoiseModel.flat(4, 5, 0.1)
        np.testing.assert_allclose(n.z, 0.5)

    def test_scenario_length_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            Scenario(ObjectModel.zeros(3), Psf.delta(), NoiseModel.flat(4, 0))

    def test_scenario_needs_samples(self):
        with pytest.raises(InvalidArgumentError):
            Scenario(ObjectModel.zeros(3), Psf.delta(), NoiseModel.flat(3, 0), n_samples=0)


class TestCovarianceMode:
    @pytest.mark.parametrize("text", ["full", "off", "slices=48,72,64,96"])
    def test_round_trip(self, text):
        assert str(CovarianceMode.parse(text)) == text

    def test_row_indices(self):
        assert CovarianceMode.off().row_indices(5) is None
        assert list(CovarianceMode.full().row_indices(3)) == [0, 1, 2]
        assert list(CovarianceMode.parse("slices 4, 1").row_indices(5)) == [4, 1]

    @pytest.mark.parametrize("text", ["sometimes", "slices=", "slices=a", "slices=1,1"])
    def test_rejects(self, text):
        with pytest.raises(InvalidArgumentError):
            CovarianceMode.parse(text)

    def test_out_of_range(self):
        with pytest.raises(InvalidArgumentError):
            CovarianceMode.slices(9).row_indices(5)


class TestReferenceScenario:
    def test_values(self):
        sc = paper_scenario()
        obj = sc.object
        assert sc.length == 128
        assert obj.mean_flux[64] == 500
        assert obj.mean_flux[21] == obj.mean_flux[28] == 250
        assert obj.mean_flux[46] == obj.mean_flux[51] == 300
        assert np.all(sc.noise.mean == 5) and np.all(sc.noise.q == 0.1)
        assert sc.psf.half_width == 12
        assert abs(fwhm(sc.psf.weights) - 6.9) <= 0.3

    def test_extended_source(self):
        obj = paper_scenario().object
        k = np.arange(81, 114)
        np.testing.assert_allclose(obj.mean_flux[k], 30 + 5 * np.sin(2 * np.pi * (k - 81) / 32))
        assert obj.mean_flux[80] == 10 and obj.mean_flux[114] == 10

    @pytest.mark.parametrize("qf", [-0.2, 0.0, 0.2])
    def test_foreground_q(self, qf):
        obj = paper_scenario(qf).object
        fg = obj.mean_flux != 10
        assert np.all(obj.q[fg] == qf)
        assert np.all(obj.q[~fg] == 0.2)

    def test_fwhm_of_flat_top_rejected(self):
        with pytest.raises(InvalidArgumentError):
            fwhm(np.ones(5))
