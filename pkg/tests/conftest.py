import numpy as np
import pytest

from app.common.config import reset_settings
from app.fournet.gaussnet import NetParams1D, SQRT_PI
from app.schemas.models import (
    CGMYSpec,
    HestonSpec,
    HQHSpec,
    KouSpec,
    LinearTransform,
    Merton2DSpec,
    MertonSpec,
)


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    """Every test starts from default settings."""
    for name in ("FOURNET_LOG_LEVEL", "FOURNET_DETERMINISTIC", "FOURNET_WORKERS", "FOURNET_OUTPUT_DIR"):
        monkeypatch.delenv(name, raising=False)
    reset_settings()
    yield
    reset_settings()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# --- catalog models ---
@pytest.fixture
def merton_model():
    return MertonSpec(T=1.0, r=0.05, sigma=0.15, lam=0.1, jump_mean=-1.08, jump_std=0.4)


@pytest.fixture
def merton_transform():
    return LinearTransform(a=0.6, c=0.08)


@pytest.fixture
def kou_model():
    return KouSpec(T=1.0, r=0.05, sigma=0.15, lam=0.1, q1=0.3445, xi1=3.0465, xi2=3.0775)


@pytest.fixture
def kou_short_model():
    return KouSpec(T=0.001, r=0.05, sigma=0.15, lam=0.1, q1=0.3445, xi1=3.0465, xi2=3.0775)


@pytest.fixture
def cgmy_model():
    return CGMYSpec(T=1.0, r=0.1, C=1.0, G=5.0, M=5.0, Y=0.5)


@pytest.fixture
def heston_model():
    return HestonSpec(T=5.0, r=0.15, kappa=3.0, vbar=0.09, sigma=0.3, rho=0.4, v0=0.2, s0=100.0)


@pytest.fixture
def hqh_model():
    return HQHSpec(
        T=1.0, r=0.1, kappa=5.0, vbar=0.16, sigma=0.9, rho=0.1, v0=0.0625, s0=9.0,
        q0=2.0, alpha=2.0, beta=3.0, lam_star=1.1, jump_mean=-0.3, jump_std=0.4,
    )


@pytest.fixture
def merton2d_model():
    return Merton2DSpec(
        T=1.0, r=0.05, sigma1=0.12, sigma2=0.15, rho=0.3, lam=0.6,
        jump_mean1=-0.1, jump_mean2=0.1, jump_std1=0.17, jump_std2=0.13, jump_rho=-0.2,
    )


@pytest.fixture
def catalog(merton_model, kou_model, cgmy_model, heston_model, hqh_model):
    return {
        "merton": merton_model,
        "kou": kou_model,
        "cgmy": cgmy_model,
        "heston": heston_model,
        "hqh": hqh_model,
    }


# --- reference networks ---
def normal_network(mean: float, std: float, mass: float = 1.0) -> NetParams1D:
    """Single-neuron network equal to mass * N(mean, std^2)."""
    w = 1.0 / (np.sqrt(2.0) * std)
    return NetParams1D(beta=[mass * w / SQRT_PI], w=[w], b=[-mean * w])


def random_network(rng: np.random.Generator, n: int = 5) -> NetParams1D:
    """Mixture-like network with positive weights and moderate spreads."""
    beta = rng.uniform(0.05, 0.6, n)
    w = rng.uniform(0.8, 4.0, n)
    b = rng.uniform(-1.5, 1.5, n)
    return NetParams1D(beta=beta, w=w, b=b)


@pytest.fixture
def std_normal_net():
    return normal_network(0.0, 1.0)
