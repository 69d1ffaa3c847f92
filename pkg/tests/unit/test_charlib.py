import math

import numpy as np
import pytest
from scipy.integrate import quad

from app.fournet.charlib import (
    apply_transform,
    cf_eval,
    characteristic_function,
    check_branch_continuity,
    compensator,
    cumulants,
    marginal_cf,
    merton_density_reference,
    price_convention,
    queue_hawkes_factor,
    risk_neutral_drift,
    validate_model,
)
from app.fournet.errors import EvaluationError, ParameterError
from app.schemas.models import CGMYSpec, HQHSpec, KouSpec, LinearTransform, MertonSpec


class TestCatalogIdentities:
    """G(0) = 1 and conjugate symmetry for every model."""

    @pytest.mark.parametrize("kind", ["merton", "kou", "cgmy", "heston", "hqh"])
    def test_unit_at_origin(self, catalog, kind):
        value = cf_eval(catalog[kind], 0.0)
        assert abs(value - 1.0) <= 1e-12

    @pytest.mark.parametrize("kind", ["merton", "kou", "cgmy", "heston", "hqh"])
    @pytest.mark.parametrize("fraction", [0.01, 0.25, 0.5, 0.9, 1.0])
    def test_unit_at_origin_for_every_horizon(self, catalog, kind, fraction):
        model = catalog[kind]
        value = cf_eval(model, 0.0, t=fraction * model.T)
        assert abs(value - 1.0) <= 1e-12

    @pytest.mark.parametrize("kind", ["merton", "kou", "cgmy", "heston", "hqh"])
    def test_conjugate_symmetry(self, catalog, kind):
        eta = np.linspace(0.1, 40.0, 97)
        cf = characteristic_function(catalog[kind])
        assert np.max(np.abs(cf(-eta) - np.conj(cf(eta)))) <= 1e-12

    @pytest.mark.parametrize("kind", ["merton", "kou", "cgmy", "heston", "hqh"])
    def test_modulus_bounded_by_one(self, catalog, kind):
        eta = np.linspace(-60.0, 60.0, 1201)
        assert np.all(np.abs(cf_eval(catalog[kind], eta)) <= 1.0 + 1e-12)

    def test_bivariate_unit_and_symmetry(self, merton2d_model):
        cf = characteristic_function(merton2d_model)
        assert abs(cf(np.zeros(2)) - 1.0) <= 1e-12
        pts = np.array([[1.0, -2.0], [3.5, 0.7], [-4.0, 5.0]])
        assert np.max(np.abs(cf(-pts) - np.conj(cf(pts)))) <= 1e-12


class TestMartingale:
    """E[e^X] = e^{rT} for the risk-neutral Lévy models, i.e. G(-i) = e^{rT}."""

    @pytest.mark.parametrize("kind", ["merton", "kou", "cgmy"])
    def test_discounted_spot(self, catalog, kind):
        model = catalog[kind]
        value = cf_eval(model, -1j)
        assert value.real == pytest.approx(math.exp(model.r * model.T), rel=1e-12)

    def test_heston_forward(self, heston_model):
        value = cf_eval(heston_model, -1j)
        expected = heston_model.s0 * math.exp(heston_model.r * heston_model.T)
        assert value.real == pytest.approx(expected, rel=1e-10)

    def test_drift_helpers(self, merton_model):
        kappa = math.exp(-1.08 + 0.5 * 0.4**2) - 1.0
        assert compensator(merton_model) == pytest.approx(kappa)
        assert risk_neutral_drift(merton_model, 0.05) == pytest.approx(0.05 - 0.1 * kappa)
        assert merton_model.mu == pytest.approx(0.05 - 0.1 * kappa)

    def test_compensator_undefined_for_cgmy(self, cgmy_model):
        with pytest.raises(ParameterError):
            compensator(cgmy_model)


class TestMertonDensity:
    def test_integrates_to_one(self, merton_model):
        total, _ = quad(lambda x: merton_density_reference(x, 1.0, merton_model), -14, 5, limit=200)
        assert total == pytest.approx(1.0, abs=1e-10)

    def test_fourier_pair(self, merton_model):
        """The series and the closed-form cf describe the same law."""
        for eta in (0.5, 2.0, 7.5):
            re, _ = quad(lambda x: np.cos(eta * x) * merton_density_reference(x, 1.0, merton_model), -14, 5, limit=400)
            im, _ = quad(lambda x: np.sin(eta * x) * merton_density_reference(x, 1.0, merton_model), -14, 5, limit=400)
            assert abs(complex(re, im) - cf_eval(merton_model, eta)) <= 1e-9

    def test_zero_intensity_is_normal(self):
        model = MertonSpec(T=1.0, mu=0.0, sigma=0.2, lam=0.0, jump_mean=0.0, jump_std=0.1)
        x = np.array([-0.3, 0.0, 0.25])
        expected = np.exp(-0.5 * ((x + 0.02) / 0.2) ** 2) / (0.2 * math.sqrt(2 * math.pi))
        assert np.allclose(merton_density_reference(x, 1.0, model), expected, rtol=1e-12)

    def test_rejects_bad_terms(self, merton_model):
        with pytest.raises(ParameterError):
            merton_density_reference(0.0, 1.0, merton_model, n_terms=0)


class TestTransform:
    def test_identity(self, merton_model):
        eta = np.linspace(-20, 20, 41)
        cf = characteristic_function(merton_model)
        assert np.array_equal(apply_transform(merton_model, LinearTransform())(eta), cf(eta))

    def test_scaled_and_shifted(self, merton_model):
        eta = np.linspace(-20, 20, 41)
        lt = LinearTransform(a=0.6, c=0.08)
        expected = np.exp(1j * 0.08 * eta) * cf_eval(merton_model, 0.6 * eta)
        assert np.allclose(apply_transform(merton_model, lt)(eta), expected, rtol=0, atol=1e-15)

    def test_non_positive_scale_rejected(self, merton_model):
        bad = LinearTransform.model_construct(a=0.0, c=0.0)
        with pytest.raises(ParameterError):
            apply_transform(merton_model, bad)


class TestValidation:
    def test_negative_sigma(self):
        bad = MertonSpec.model_construct(kind="merton", T=1.0, sigma=-0.1, lam=0.1, jump_mean=0.0, jump_std=0.1, mu=0.0)
        with pytest.raises(ParameterError):
            characteristic_function(bad)

    def test_horizon_outside_range(self, merton_model):
        with pytest.raises(ParameterError):
            characteristic_function(merton_model, t=2.0)

    @pytest.mark.parametrize("Y", [0.0, 1.0])
    def test_cgmy_degenerate_y(self, Y):
        with pytest.raises(ValueError):
            CGMYSpec(T=1.0, r=0.1, C=1.0, G=5.0, M=5.0, Y=Y)

    def test_kou_rates(self):
        with pytest.raises(ValueError):
            KouSpec(T=1.0, r=0.05, sigma=0.1, lam=0.1, q1=0.3, xi1=0.9, xi2=3.0)

    def test_validate_model_round_trip(self, merton_model):
        assert validate_model(merton_model) == merton_model


class TestStochasticVolatility:
    def test_price_convention(self, catalog):
        assert price_convention(catalog["heston"]) == "log_price"
        assert price_convention(catalog["hqh"]) == "log_price"
        assert price_convention(catalog["merton"]) == "log_return"

    def test_heston_large_frequency_is_finite(self, heston_model):
        values = cf_eval(heston_model, np.array([200.0, 1000.0, 5000.0]))
        assert np.all(np.isfinite(values))
        assert np.all(np.abs(values) < 1e-10)

    def test_queue_factor_unit_at_origin(self, hqh_model):
        assert abs(queue_hawkes_factor(hqh_model, 0.0) - 1.0) <= 1e-12

    def test_hqh_without_jumps_is_heston(self, hqh_model):
        quiet = hqh_model.model_copy(update={"lam_star": 0.0, "q0": 0.0})
        eta = np.linspace(-30, 30, 61)
        heston = characteristic_function(quiet.embedded_heston())(eta)
        assert np.max(np.abs(characteristic_function(quiet)(eta) - heston)) <= 1e-12

    @pytest.mark.parametrize("t", [0.3, 1.0])
    def test_hqh_factorizes_with_active_jumps(self, hqh_model, t):
        eta = np.linspace(-30, 30, 61)
        heston = characteristic_function(hqh_model.embedded_heston(), t)(eta)
        queue = queue_hawkes_factor(hqh_model, eta, t)
        assert np.max(np.abs(queue - 1.0)) > 1e-3
        assert np.max(np.abs(characteristic_function(hqh_model, t)(eta) - heston * queue)) <= 1e-12

    def test_hqh_branch_continuity(self, hqh_model):
        check_branch_continuity(characteristic_function(hqh_model), 60.0)

    def test_branch_jump_detected(self):
        def broken(eta):
            eta = np.asarray(eta, dtype=float)
            return np.where(eta > 1.0, -1.0, 1.0) * np.exp(-0.5 * eta**2) + 0j

        with pytest.raises(EvaluationError):
            check_branch_continuity(broken, 5.0, points=2001)


class TestCumulants:
    def test_standard_normal(self):
        c1, c2, c4 = cumulants(lambda eta: np.exp(-0.5 * np.asarray(eta) ** 2))
        assert c1 == pytest.approx(0.0, abs=1e-8)
        assert c2 == pytest.approx(1.0, rel=1e-6)
        assert abs(c4) < 1e-3

    def test_shift_moves_first_cumulant(self):
        base = lambda eta: np.exp(-0.5 * np.asarray(eta) ** 2)
        c1, _, _ = cumulants(lambda eta: np.exp(1.5j * np.asarray(eta)) * base(eta))
        assert c1 == pytest.approx(1.5, abs=1e-8)

    def test_merton_variance(self, merton_model):
        m = merton_model
        variance = m.sigma**2 + m.lam * (m.jump_mean**2 + m.jump_std**2)
        _, c2, _ = cumulants(characteristic_function(m))
        assert c2 == pytest.approx(variance, rel=1e-6)


class TestBivariate:
    def test_marginal_is_univariate_merton(self, merton2d_model):
        m = merton2d_model
        cf1 = marginal_cf(characteristic_function(m), 0)
        single = MertonSpec(T=1.0, r=m.r, sigma=m.sigma1, lam=m.lam, jump_mean=m.jump_mean1, jump_std=m.jump_std1)
        eta = np.linspace(-25, 25, 51)
        assert np.max(np.abs(cf1(eta) - cf_eval(single, eta))) <= 1e-12

    def test_wrong_shape(self, merton2d_model):
        with pytest.raises(ParameterError):
            cf_eval(merton2d_model, np.array([1.0, 2.0, 3.0]))

    def test_bad_axis(self, merton2d_model):
        with pytest.raises(ParameterError):
            marginal_cf(characteristic_function(merton2d_model), 2)


def test_hqh_requires_positive_rates():
    with pytest.raises(ValueError):
        HQHSpec(
            T=1.0, r=0.1, kappa=5.0, vbar=0.16, sigma=0.9, rho=0.1, v0=0.0625, s0=9.0,
            q0=2.0, alpha=0.0, beta=3.0, lam_star=1.1, jump_mean=-0.3, jump_std=0.4,
        )
