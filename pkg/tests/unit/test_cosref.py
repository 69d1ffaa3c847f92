import math

import numpy as np
import pytest

from app.fournet.charlib import characteristic_function, merton_density_reference
from app.fournet.cosref import (
    CosConfig,
    cos_density,
    cos_price_european,
    cumulant_range,
    density_comparison,
    inversion_price_european,
    merton_reference_price,
)
from app.fournet.errors import DomainError, ParameterError
from app.fournet.pricer import PayoffSpec
from app.schemas.models import LinearTransform

from conftest import normal_network


def gaussian_cf(eta):
    return np.exp(-0.5 * np.asarray(eta) ** 2)


class TestRange:
    def test_standard_normal(self):
        a, b = cumulant_range(gaussian_cf)
        assert a == pytest.approx(-10.0, abs=0.05)
        assert b == pytest.approx(10.0, abs=0.05)

    def test_shift_moves_range(self):
        a, b = cumulant_range(gaussian_cf)
        shifted = lambda eta: np.exp(0.7j * np.asarray(eta)) * gaussian_cf(eta)
        sa, sb = cumulant_range(shifted)
        assert sa - a == pytest.approx(0.7, abs=1e-6)
        assert sb - b == pytest.approx(0.7, abs=1e-6)

    def test_config_validation(self):
        with pytest.raises(ParameterError):
            CosConfig(n_terms=1, a=-1.0, b=1.0)
        with pytest.raises(ParameterError):
            CosConfig(n_terms=64, a=1.0, b=-1.0)


class TestDensity:
    def test_merton_series(self, merton_model):
        cf = characteristic_function(merton_model)
        cfg = CosConfig.from_cumulants(cf, 512)
        x = np.linspace(-3.0, 1.0, 401)
        error = np.max(np.abs(cos_density(cf, x, cfg) - merton_density_reference(x, 1.0, merton_model)))
        assert error <= 1e-8

    def test_point_mass_proxy_oscillates(self):
        """A unit cf has no density; the truncated series rings below zero."""
        cfg = CosConfig(n_terms=64, a=-1.0, b=1.0)
        x = np.linspace(-1.0, 1.0, 2001)
        values = cos_density(lambda u: np.ones_like(u, dtype=complex), x, cfg)
        assert values.min() < 0

    def test_outside_range(self):
        cfg = CosConfig(n_terms=64, a=-1.0, b=1.0)
        with pytest.raises(DomainError):
            cos_density(gaussian_cf, np.array([0.0, 1.5]), cfg)


class TestPrices:
    def test_merton_analytic_series(self, merton_model):
        assert merton_reference_price(merton_model, 100.0, 100.0, 0.05) == pytest.approx(12.10782, abs=5e-5)

    def test_cos_matches_merton_series(self, merton_model):
        cf = characteristic_function(merton_model)
        cfg = CosConfig.from_cumulants(cf, 2048)
        for strike in (96.0, 100.0, 104.0):
            payoff = PayoffSpec("call", strike, s0=100.0)
            reference = merton_reference_price(merton_model, 100.0, strike, 0.05)
            assert cos_price_european(cf, payoff, 0.05, 1.0, cfg) == pytest.approx(reference, abs=5e-5)

    def test_inversion_matches_cos(self, merton_model):
        cf = characteristic_function(merton_model)
        cfg = CosConfig.from_cumulants(cf, 2048)
        for kind in ("call", "put"):
            payoff = PayoffSpec(kind, 98.0, s0=100.0)
            cos = cos_price_european(cf, payoff, 0.05, 1.0, cfg)
            assert inversion_price_european(cf, payoff, 0.05, 1.0) == pytest.approx(cos, rel=1e-6)

    def test_heston_log_price(self, heston_model):
        cf = characteristic_function(heston_model)
        cfg = CosConfig.from_cumulants(cf, 2048)
        payoff = PayoffSpec("call", 100.0, convention="log_price")
        cos = cos_price_european(cf, payoff, 0.15, 5.0, cfg)
        assert inversion_price_european(cf, payoff, 0.15, 5.0) == pytest.approx(cos, rel=1e-6)

    def test_put_call_parity(self, cgmy_model):
        cf = characteristic_function(cgmy_model)
        cfg = CosConfig.from_cumulants(cf, 2048)
        call = cos_price_european(cf, PayoffSpec("call", 100.0, s0=100.0), 0.1, 1.0, cfg)
        put = cos_price_european(cf, PayoffSpec("put", 100.0, s0=100.0), 0.1, 1.0, cfg)
        assert call - put == pytest.approx(100.0 - 100.0 * math.exp(-0.1), abs=1e-6)

    def test_bad_kind(self, merton_model):
        with pytest.raises(ParameterError):
            merton_reference_price(merton_model, 100.0, 100.0, 0.05, kind="digital")


class TestComparison:
    def test_columns_and_minima(self):
        theta = normal_network(0.0, 1.0)
        grid = np.linspace(-3.0, 3.0, 61)
        comparison = density_comparison(gaussian_cf, theta, LinearTransform(), grid, (64, 128), (-10.0, 10.0))
        assert list(comparison.table.columns) == ["x", "fournet", "cos_64", "cos_128"]
        assert set(comparison.minima) == {"fournet", "cos_64", "cos_128"}
        assert np.allclose(comparison.table["cos_128"], comparison.table["fournet"], rtol=0, atol=1e-10)

    def test_transformed_network_is_mapped_back(self):
        lt = LinearTransform(a=20.0, c=0.0)
        theta = normal_network(0.0, 20.0 * 0.01)
        narrow = lambda eta: np.exp(-0.5 * (0.01 * np.asarray(eta)) ** 2)
        grid = np.linspace(-0.03, 0.03, 31)
        comparison = density_comparison(narrow, theta, lt, grid, (1200,), (-0.1, 0.1))
        expected = np.exp(-0.5 * (grid / 0.01) ** 2) / (0.01 * math.sqrt(2 * math.pi))
        assert np.allclose(comparison.table["fournet"], expected, rtol=1e-12)

    def test_empty_grid(self):
        with pytest.raises(ParameterError):
            density_comparison(gaussian_cf, normal_network(0.0, 1.0), LinearTransform(), np.array([]))
