import math

import numpy as np
import pytest
from scipy.integrate import quad

from app.fournet.charlib import apply_transform, characteristic_function
from app.fournet.errors import ParameterError
from app.fournet.gaussnet import (
    MixtureView,
    NetParams1D,
    NetParams2D,
    RawNet1D,
    RawNet2D,
    SQRT_PI,
    density_window,
    eval_cf,
    eval_cf_2d,
    eval_density,
    eval_density_2d,
    grad_loss,
    grad_loss_2d,
    initialize_1d,
    initialize_2d,
    loss_eval,
    loss_eval_2d,
    mass_outside,
    recover_original,
    total_mass,
)
from app.schemas.models import LinearTransform

from conftest import normal_network, random_network

QUAD_OPTS = dict(epsabs=1e-13, epsrel=1e-13, limit=400)


class TestNetParams:
    def test_rejects_mismatched_lengths(self):
        with pytest.raises(ParameterError):
            NetParams1D(beta=[1.0, 2.0], w=[1.0], b=[0.0, 0.0])

    def test_rejects_zero_entries(self):
        with pytest.raises(ParameterError):
            NetParams1D(beta=[0.0], w=[1.0], b=[0.0])
        with pytest.raises(ParameterError):
            NetParams1D(beta=[1.0], w=[0.0], b=[0.0])

    def test_rejects_non_finite(self):
        with pytest.raises(ParameterError):
            NetParams1D(beta=[np.nan], w=[1.0], b=[0.0])

    def test_arrays_are_read_only(self, std_normal_net):
        with pytest.raises(ValueError):
            std_normal_net.beta[0] = 2.0

    def test_bivariate_rejects_bad_correlation(self):
        with pytest.raises(ParameterError):
            NetParams2D(beta=[1.0], mu=[[0.0, 0.0]], sigma=[[1.0, 1.0]], rho=[1.0])


class TestDensityAndTransform:
    def test_normal_network_is_normal_pdf(self):
        net = normal_network(0.3, 0.7)
        x = np.linspace(-3, 3, 31)
        expected = np.exp(-0.5 * ((x - 0.3) / 0.7) ** 2) / (0.7 * math.sqrt(2 * math.pi))
        assert np.allclose(eval_density(net, x), expected, rtol=1e-13)

    def test_normal_cf(self):
        net = normal_network(0.3, 0.7)
        eta = np.linspace(-10, 10, 41)
        expected = np.exp(0.3j * eta - 0.5 * (0.7 * eta) ** 2)
        assert np.allclose(eval_cf(net, eta), expected, rtol=0, atol=1e-14)

    @pytest.mark.parametrize("seed", range(100))
    def test_cf_matches_numerical_transform(self, seed):
        """Closed-form transform equals the quadrature of e^{i eta x} g(x)."""
        net = random_network(np.random.default_rng(seed))
        lo, hi = density_window(net)
        for eta in (0.0, 0.5, 1.0, 3.0):
            re, _ = quad(lambda x: np.cos(eta * x) * eval_density(net, x), lo, hi, **QUAD_OPTS)
            im, _ = quad(lambda x: np.sin(eta * x) * eval_density(net, x), lo, hi, **QUAD_OPTS)
            assert abs(eval_cf(net, eta) - complex(re, im)) <= 1e-9

    def test_negative_w_same_function(self, rng):
        net = random_network(rng)
        flipped = NetParams1D(beta=net.beta, w=-net.w, b=-net.b)
        eta = np.linspace(-12, 12, 25)
        assert np.allclose(eval_cf(flipped, eta), eval_cf(net, eta), rtol=0, atol=1e-14)

    def test_mass_equals_cf_at_origin(self, rng):
        net = random_network(rng)
        assert total_mass(net) == pytest.approx(eval_cf(net, 0.0).real, rel=1e-14)

    def test_scalar_in_scalar_out(self, std_normal_net):
        assert np.shape(eval_density(std_normal_net, 0.0)) == ()
        assert np.shape(eval_cf(std_normal_net, 1.0)) == ()


class TestMixtureView:
    def test_round_trip(self, rng):
        net = random_network(rng)
        back = MixtureView.from_params(net).to_params()
        x = np.linspace(-4, 4, 81)
        assert np.allclose(eval_density(back, x), eval_density(net, x), rtol=1e-12)

    def test_density_agrees(self, rng):
        net = random_network(rng)
        x = np.linspace(-4, 4, 81)
        assert np.allclose(MixtureView.from_params(net).density(x), eval_density(net, x), rtol=1e-12)

    def test_mass_outside(self):
        net = normal_network(0.0, 1.0)
        assert mass_outside(net, -1.96, 1.96) == pytest.approx(0.04999579, rel=1e-6)
        assert mass_outside(net, -40.0, 40.0) == pytest.approx(0.0, abs=1e-300)


class TestLossAndGradient:
    def test_zero_loss_at_exact_fit(self, rng):
        net = random_network(rng)
        eta = np.linspace(-8, 8, 33)
        value = loss_eval(net, eta, eval_cf(net, eta))
        assert value.mse == pytest.approx(0.0, abs=1e-28)
        assert value.total == pytest.approx(0.0, abs=1e-13)

    def test_loss_components(self, std_normal_net):
        eta = np.array([0.0, 1.0])
        targets = eval_cf(std_normal_net, eta) + np.array([0.1, 0.2j])
        value = loss_eval(std_normal_net, eta, targets)
        assert value.mse == pytest.approx((0.01 + 0.04) / 2)
        assert value.mae == pytest.approx((0.1 + 0.2) / 2)

    def test_empty_batch(self, std_normal_net):
        with pytest.raises(ParameterError):
            loss_eval(std_normal_net, np.array([]), np.array([]))

    @pytest.mark.parametrize("seed", range(100))
    def test_gradient_matches_finite_differences(self, seed, merton_model, merton_transform):
        rng = np.random.default_rng(seed)
        net = random_network(rng, 4)
        cf = apply_transform(merton_model, merton_transform)
        # keep every residual component away from the MAE kink
        while True:
            eta = rng.uniform(-6.0, 6.0, 8)
            targets = cf(eta)
            residual = targets - eval_cf(net, eta)
            if min(np.abs(residual.real).min(), np.abs(residual.imag).min()) > 1e-3:
                break
        g_beta, g_w, g_b = grad_loss(net, eta, targets)

        def loss_at(beta, w, b):
            return loss_eval(NetParams1D(beta=beta, w=w, b=b), eta, targets).total

        for name, grad in (("beta", g_beta), ("w", g_w), ("b", g_b)):
            for n in range(net.N):
                value = getattr(net, name)[n]
                h = 1e-6 * max(abs(value), 0.1)
                plus = {k: getattr(net, k).copy() for k in ("beta", "w", "b")}
                minus = {k: getattr(net, k).copy() for k in ("beta", "w", "b")}
                plus[name][n] += h
                minus[name][n] -= h
                numeric = (loss_at(**plus) - loss_at(**minus)) / (2 * h)
                assert grad[n] == pytest.approx(numeric, rel=1e-6, abs=1e-8)

    def test_gradient_descent_decreases_loss(self):
        """Single neuron fitted to one sample of a shifted neuron's transform."""
        net = normal_network(0.0, 1.0)
        eta = np.array([1.0])
        targets = eval_cf(normal_network(0.5, 1.0), eta)
        losses = [loss_eval(net, eta, targets).total]
        for _ in range(200):
            g_beta, g_w, g_b = grad_loss(net, eta, targets)
            net = NetParams1D(beta=net.beta - 5e-5 * g_beta, w=net.w - 5e-5 * g_w, b=net.b - 5e-5 * g_b)
            losses.append(loss_eval(net, eta, targets).total)
        assert np.all(np.diff(losses) < 0)

    def test_gradient_requires_positive_w(self, std_normal_net):
        flipped = NetParams1D(beta=std_normal_net.beta, w=-std_normal_net.w, b=std_normal_net.b)
        with pytest.raises(ParameterError):
            grad_loss(flipped, np.array([1.0]), np.array([0.5 + 0j]))

    def test_raw_chain_rule(self, rng):
        net = random_network(rng, 3)
        raw = RawNet1D(net.N)
        vec = raw.pack(net)
        eta = np.linspace(-5, 5, 17) + 0.01
        targets = np.exp(-0.5 * eta**2) + 0j
        _, _, g_raw = raw.chunk_sums(vec, eta, targets)
        h = 1e-7
        for i in range(vec.size):
            step = np.zeros_like(vec)
            step[i] = h
            numeric = (raw.loss(vec + step, eta, targets).total - raw.loss(vec - step, eta, targets).total) / (2 * h)
            assert g_raw[i] / eta.size == pytest.approx(numeric, rel=1e-5, abs=1e-7)


class TestBivariateNetwork:
    @pytest.fixture
    def net2(self):
        return NetParams2D(
            beta=[0.6, 0.4],
            mu=[[0.1, -0.2], [-0.3, 0.25]],
            sigma=[[0.2, 0.3], [0.25, 0.15]],
            rho=[0.3, -0.5],
        )

    def test_density_integrates_to_beta_sum(self, net2):
        ticks = np.linspace(-3, 3, 601)
        gx, gy = np.meshgrid(ticks, ticks, indexing="ij")
        density = eval_density_2d(net2, np.stack([gx, gy], axis=-1))
        h = ticks[1] - ticks[0]
        assert density.sum() * h * h == pytest.approx(1.0, rel=1e-6)

    def test_cf_at_origin(self, net2):
        assert eval_cf_2d(net2, np.zeros(2)) == pytest.approx(1.0)

    def test_gradient_matches_finite_differences(self, net2, merton2d_model):
        cf = characteristic_function(merton2d_model)
        grid = np.array([[0.5, -1.0], [2.0, 0.3], [-1.5, 3.0], [4.0, 4.0], [0.0, 0.0]])
        targets = cf(grid)
        raw = RawNet2D(net2.N)
        vec = raw.pack(net2)
        _, _, g_raw = raw.chunk_sums(vec, grid, targets)
        h = 1e-7
        for i in range(vec.size):
            step = np.zeros_like(vec)
            step[i] = h
            numeric = (raw.loss(vec + step, grid, targets).total - raw.loss(vec - step, grid, targets).total) / (2 * h)
            assert g_raw[i] / len(grid) == pytest.approx(numeric, rel=1e-5, abs=1e-7)

    def test_grad_shapes(self, net2):
        grads = grad_loss_2d(net2, np.ones((3, 2)), np.ones(3, dtype=complex))
        assert [g.shape for g in grads] == [(2,), (2, 2), (2, 2), (2,)]

    def test_loss_zero_at_fit(self, net2):
        grid = np.array([[0.5, -1.0], [2.0, 0.3]])
        assert loss_eval_2d(net2, grid, eval_cf_2d(net2, grid)).total == pytest.approx(0.0, abs=1e-14)


class TestInitialization:
    def test_unit_mass_lattice(self, merton_model, merton_transform):
        cf = apply_transform(merton_model, merton_transform)
        net = initialize_1d(cf, 20)
        assert net.N == 20
        assert total_mass(net) == pytest.approx(1.0, rel=1e-12)
        assert np.all(net.w > 0)

    def test_single_neuron(self):
        net = initialize_1d(lambda eta: np.exp(-0.5 * np.asarray(eta) ** 2), 1)
        assert MixtureView.from_params(net).stds[0] == pytest.approx(1.0, rel=1e-5)

    def test_rejects_empty(self):
        with pytest.raises(ParameterError):
            initialize_1d(lambda eta: np.ones_like(eta), 0)

    def test_bivariate_lattice(self, merton2d_model):
        net = initialize_2d(characteristic_function(merton2d_model), 10)
        assert net.N == 10
        assert np.sum(net.beta) == pytest.approx(1.0)

    def test_jitter_keeps_unit_mass(self, merton_model, merton_transform):
        cf = apply_transform(merton_model, merton_transform)
        lattice = initialize_1d(cf, 20)
        first = initialize_1d(cf, 20, jitter=0.3, rng=np.random.default_rng(4))
        again = initialize_1d(cf, 20, jitter=0.3, rng=np.random.default_rng(4))
        assert total_mass(first) == pytest.approx(1.0, rel=1e-12)
        assert np.array_equal(first.b, again.b)
        assert np.array_equal(first.w, again.w)
        shift = MixtureView.from_params(first).means - MixtureView.from_params(lattice).means
        spacing = np.diff(MixtureView.from_params(lattice).means)[0]
        assert np.all(np.abs(shift) <= 0.3 * spacing + 1e-12)
        assert np.any(shift != 0.0)

    def test_bivariate_jitter(self, merton2d_model):
        cf = characteristic_function(merton2d_model)
        lattice = initialize_2d(cf, 9)
        moved = initialize_2d(cf, 9, jitter=0.2, rng=np.random.default_rng(1))
        assert np.all(np.abs(moved.mu - lattice.mu) <= 0.2 * lattice.sigma + 1e-12)
        assert not np.array_equal(moved.mu, lattice.mu)


class TestRecoverOriginal:
    def test_change_of_variables(self, rng):
        net = random_network(rng)
        lt = LinearTransform(a=0.6, c=0.08)
        recovered = recover_original(net, lt)
        x = np.linspace(-3, 3, 41)
        assert np.allclose(eval_density(recovered, x), 0.6 * eval_density(net, 0.6 * x + 0.08), rtol=1e-13)
        assert total_mass(recovered) == pytest.approx(total_mass(net), rel=1e-13)

    def test_transform_consistency_in_fourier(self, rng):
        """G_X(eta) = e^{-i eta c/a} G_Y(eta / a)."""
        net = random_network(rng)
        lt = LinearTransform(a=20.0, c=0.0)
        recovered = recover_original(net, lt)
        eta = np.linspace(-50, 50, 21)
        assert np.allclose(eval_cf(recovered, eta), eval_cf(net, eta / 20.0), rtol=0, atol=1e-13)

    def test_identity(self, rng):
        net = random_network(rng)
        recovered = recover_original(net, LinearTransform())
        assert np.array_equal(recovered.beta, net.beta)
        assert np.array_equal(recovered.w, net.w)
        assert np.array_equal(recovered.b, net.b)


def test_sqrt_pi_constant():
    assert SQRT_PI**2 == pytest.approx(math.pi)
