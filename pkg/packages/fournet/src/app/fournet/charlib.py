"""Closed-form characteristic functions, the linear transform and the Merton density.

Every characteristic function built here is a vectorized callable taking real or
complex ``eta`` (shape ``(...,)`` for one-dimensional models, ``(..., 2)`` for the
bivariate model) and returning ``E[exp(i eta X_t)]`` as complex128.

Lévy models are written as ``exp(t * psi(eta))``. Heston and HQH describe
``X_t = ln S_t`` and embed ``S0``; all other one-dimensional models describe the
log-return ``ln(S_t / S0)``.
"""

from typing import Callable, Optional, Tuple, Union

import numpy as np
import structlog
from pydantic import BaseModel, ValidationError
from scipy.special import gamma
from scipy.stats import norm, poisson

from app.schemas.models import (
    CGMYSpec,
    HestonSpec,
    HQHSpec,
    KouSpec,
    LinearTransform,
    Merton2DSpec,
    MertonSpec,
)

from .errors import EvaluationError, ParameterError, RangeError

logger = structlog.get_logger()

CharFn = Callable[[np.ndarray], np.ndarray]

_DEGENERATE = 1e-280


def validate_model(model: BaseModel) -> BaseModel:
    """Re-run the model invariants, raising ParameterError on violation.

    Models built through ``model_construct`` skip pydantic validation; everything
    entering the catalog goes through here first.
    """
    try:
        return type(model).model_validate(model.model_dump())
    except ValidationError as exc:
        raise ParameterError(f"invalid {type(model).__name__}: {exc}") from exc


def compensator(model: Union[MertonSpec, KouSpec]) -> float:
    """kappa = E[e^J] - 1 of the jump size distribution."""
    if not isinstance(model, (MertonSpec, KouSpec)):
        raise ParameterError(f"{type(model).__name__} has no single jump compensator")
    return model.compensator


def risk_neutral_drift(model: Union[MertonSpec, KouSpec], r: float) -> float:
    """Drift ``r - lam * kappa`` that makes ``S0 exp(X_t - r t)`` a martingale."""
    return float(r) - model.lam * compensator(model)


def _horizon(model: BaseModel, t: Optional[float]) -> float:
    horizon = model.T if t is None else float(t)
    if not (0.0 < horizon <= model.T * (1.0 + 1e-12)):
        raise ParameterError(f"t={horizon} outside (0, T={model.T}]")
    return horizon


def _as_eta(eta: Union[float, np.ndarray]) -> np.ndarray:
    arr = np.asarray(eta)
    if not np.iscomplexobj(arr):
        arr = arr.astype(float)
    if not np.all(np.isfinite(arr)):
        raise ParameterError("eta must be finite")
    return arr


# --- characteristic exponents of the Lévy models ---
def _merton_exponent(m: MertonSpec) -> CharFn:
    drift = m.mu - 0.5 * m.sigma**2

    def psi(eta: np.ndarray) -> np.ndarray:
        jump = np.exp(1j * m.jump_mean * eta - 0.5 * (m.jump_std * eta) ** 2) - 1.0
        return 1j * drift * eta - 0.5 * (m.sigma * eta) ** 2 + m.lam * jump

    return psi


def _kou_exponent(m: KouSpec) -> CharFn:
    drift = m.mu - 0.5 * m.sigma**2

    def psi(eta: np.ndarray) -> np.ndarray:
        jump = m.q1 * m.xi1 / (m.xi1 - 1j * eta) + m.q2 * m.xi2 / (m.xi2 + 1j * eta) - 1.0
        return 1j * drift * eta - 0.5 * (m.sigma * eta) ** 2 + m.lam * jump

    return psi


def _complex_power(z: np.ndarray, y: float) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    out = np.zeros_like(z)
    nonzero = z != 0
    out[nonzero] = np.exp(y * np.log(z[nonzero]))
    return out


def _cgmy_exponent(m: CGMYSpec) -> CharFn:
    scale = m.C * gamma(-m.Y)

    def cg(eta: np.ndarray) -> np.ndarray:
        return scale * (
            _complex_power(m.M - 1j * eta, m.Y)
            - m.M**m.Y
            + _complex_power(m.G + 1j * eta, m.Y)
            - m.G**m.Y
        )

    # CG(-i) in closed form: M - i(-i) = M - 1, G + i(-i) = G + 1
    varpi = -scale * ((m.M - 1.0) ** m.Y - m.M**m.Y + (m.G + 1.0) ** m.Y - m.G**m.Y)

    def psi(eta: np.ndarray) -> np.ndarray:
        return cg(eta) + 1j * eta * (m.r + varpi)

    return psi


# --- stochastic volatility ---
def _heston_log_cf(m: HestonSpec, t: float, eta: np.ndarray) -> np.ndarray:
    """log G for ln S_t, arranged with exp(-d t) so nothing overflows for large |eta|."""
    iu = 1j * eta
    xi = m.kappa - m.sigma * m.rho * iu
    d = np.sqrt(xi**2 + m.sigma**2 * (iu + eta**2))
    small = np.abs(d) < _DEGENERATE
    if np.any(small):
        raise EvaluationError("Heston d(eta) is degenerate", eta=np.asarray(eta)[small].ravel()[0])
    z = 0.5 * d * t
    ratio = xi / d
    decay = np.exp(-2.0 * z)
    bracket = (1.0 + ratio) + (1.0 - ratio) * decay
    power = 2.0 * m.kappa * m.vbar / m.sigma**2
    log_power = power * (0.5 * xi * t - z + np.log(2.0) - np.log(bracket))
    variance_term = m.v0 * (iu + eta**2) * (1.0 - decay) / (d * bracket)
    return iu * (m.r * t + np.log(m.s0)) + log_power - variance_term


def _queue_hawkes_log_cf(m: HQHSpec, t: float, eta: np.ndarray) -> np.ndarray:
    """log G_M for the compensated Queue-Hawkes jump sum.

    Solves the Riccati system of the queue with unit terminal condition, so that
    G_M(0) = 1 for any initial queue length.
    """
    psi_y = np.exp(1j * m.jump_mean * eta - 0.5 * (m.jump_std * eta) ** 2)
    a = m.alpha * psi_y
    g = m.beta + m.alpha * (1.0 + 1j * eta * m.jump_mean)
    f = np.sqrt(g**2 - 4.0 * m.alpha * m.beta * psi_y)
    small = np.abs(f) < 1e-12
    if np.any(small):
        raise EvaluationError("Queue-Hawkes root f(eta) is degenerate", eta=np.asarray(eta)[small].ravel()[0])
    decay = np.exp(-t * f)
    denom = (g + f - 2.0 * a) + (f - g + 2.0 * a) * decay
    queue = ((2.0 * m.beta + f - g) + (g + f - 2.0 * m.beta) * decay) / denom
    ratio = m.lam_star / m.alpha
    return (
        0.5 * ratio * t * (m.beta - m.alpha - 1j * m.alpha * m.jump_mean * eta - f)
        + ratio * (np.log(2.0 * f) - np.log(denom))
        + m.q0 * np.log(queue)
    )


def queue_hawkes_factor(model: HQHSpec, eta: Union[float, np.ndarray], t: Optional[float] = None) -> np.ndarray:
    """G_M(eta): the jump factor of the HQH characteristic function."""
    model = validate_model(model)
    horizon = _horizon(model, t)
    return np.exp(_queue_hawkes_log_cf(model, horizon, _as_eta(eta)))


# --- bivariate Merton ---
def _merton2d_log_cf(m: Merton2DSpec, t: float, eta: np.ndarray) -> np.ndarray:
    if eta.shape[-1:] != (2,):
        raise ParameterError(f"bivariate model expects eta of shape (..., 2), got {eta.shape}")
    e1, e2 = eta[..., 0], eta[..., 1]
    k1, k2 = m.compensators
    mu1 = (m.r - m.lam * k1 - 0.5 * m.sigma1**2) * t
    mu2 = (m.r - m.lam * k2 - 0.5 * m.sigma2**2) * t
    diffusion = m.sigma1**2 * e1**2 + 2.0 * m.rho * m.sigma1 * m.sigma2 * e1 * e2 + m.sigma2**2 * e2**2
    jump_quad = (
        m.jump_std1**2 * e1**2
        + 2.0 * m.jump_rho * m.jump_std1 * m.jump_std2 * e1 * e2
        + m.jump_std2**2 * e2**2
    )
    jump = np.exp(1j * (m.jump_mean1 * e1 + m.jump_mean2 * e2) - 0.5 * jump_quad) - 1.0
    return 1j * (mu1 * e1 + mu2 * e2) - 0.5 * diffusion * t + m.lam * t * jump


def characteristic_function(model: BaseModel, t: Optional[float] = None) -> CharFn:
    """Validate ``model`` once and return its characteristic function at horizon ``t``.

    Args:
        model: any catalog specification.
        t: horizon in (0, T]; defaults to ``model.T``.

    Returns:
        Vectorized callable ``eta -> G(eta)``.
    """
    model = validate_model(model)
    horizon = _horizon(model, t)

    if isinstance(model, MertonSpec):
        exponent = _merton_exponent(model)
    elif isinstance(model, KouSpec):
        exponent = _kou_exponent(model)
    elif isinstance(model, CGMYSpec):
        exponent = _cgmy_exponent(model)
    elif isinstance(model, HQHSpec):
        def log_cf(eta: np.ndarray) -> np.ndarray:
            return _heston_log_cf(model, horizon, eta) + _queue_hawkes_log_cf(model, horizon, eta)
        return lambda eta: np.exp(log_cf(_as_eta(eta)))
    elif isinstance(model, HestonSpec):
        return lambda eta: np.exp(_heston_log_cf(model, horizon, _as_eta(eta)))
    elif isinstance(model, Merton2DSpec):
        return lambda eta: np.exp(_merton2d_log_cf(model, horizon, _as_eta(eta)))
    else:
        raise ParameterError(f"unsupported model {type(model).__name__}")

    return lambda eta: np.exp(horizon * exponent(_as_eta(eta)))


def cf_eval(model: BaseModel, eta: Union[float, np.ndarray], t: Optional[float] = None) -> np.ndarray:
    """G_X(eta) at horizon ``t`` (one-shot form of ``characteristic_function``)."""
    return characteristic_function(model, t)(eta)


def apply_transform(
    source: Union[BaseModel, CharFn], lt: LinearTransform, t: Optional[float] = None
) -> CharFn:
    """Characteristic function of Y = aX + c: ``G_Y(eta) = exp(i eta c) G_X(a eta)``.

    ``source`` is a model specification or an already built characteristic function.
    """
    a, c = float(lt.a), float(lt.c)
    if not a > 0:
        raise ParameterError(f"transform scale a must be positive, got {a}")
    base = source if callable(source) else characteristic_function(source, t)

    def transformed(eta: Union[float, np.ndarray]) -> np.ndarray:
        eta = _as_eta(eta)
        return np.exp(1j * c * eta) * base(a * eta)

    return transformed


def marginal_cf(cf: CharFn, axis: int) -> CharFn:
    """One-dimensional marginal of a bivariate characteristic function."""
    if axis not in (0, 1):
        raise ParameterError(f"axis must be 0 or 1, got {axis}")

    def marginal(eta: Union[float, np.ndarray]) -> np.ndarray:
        eta = _as_eta(eta)
        points = np.zeros(eta.shape + (2,), dtype=eta.dtype)
        points[..., axis] = eta
        return cf(points)

    return marginal


def price_convention(model: BaseModel) -> str:
    """'log_price' when the cf describes ln S_T, 'log_return' otherwise."""
    return "log_price" if isinstance(model, HestonSpec) else "log_return"


def merton_density_reference(
    x: Union[float, np.ndarray], t: float, params: MertonSpec, n_terms: int = 15
) -> np.ndarray:
    """Poisson-weighted normal series for the Merton log-return density.

    The series is written with the drift of the exponent, so the k-th normal has
    mean ``(mu - sigma^2/2) t + k jump_mean``; with ``mu = r - lam*kappa`` this is the
    classic compensated form.
    """
    if n_terms < 1:
        raise ParameterError("n_terms must be at least 1")
    if not t > 0:
        raise ParameterError("t must be positive")
    params = validate_model(params)
    x = np.asarray(x, dtype=float)
    k = np.arange(n_terms)
    weights = poisson.pmf(k, params.lam * t)
    mean = (params.mu - 0.5 * params.sigma**2) * t + k * params.jump_mean
    std = np.sqrt(params.sigma**2 * t + k * params.jump_std**2)
    return np.sum(weights * norm.pdf(x[..., None], mean, std), axis=-1)


def cumulants(cf: CharFn, step: float = 1e-4) -> Tuple[float, float, float]:
    """First, second and fourth cumulants from finite differences of log G at 0.

    Central differences are Richardson-extrapolated. The first two use ``step``
    relative to the distribution scale; the fourth uses a wider stencil since its
    h^4 denominator is roundoff-bound at small steps.
    """

    def log_cf(h: float, orders: Tuple[int, ...]) -> dict:
        nodes = np.array(sorted({o * h for o in orders} | {-o * h for o in orders} | {0.0}))
        values = cf(nodes)
        if not np.all(np.isfinite(values)) or np.any(values == 0):
            raise RangeError("characteristic function not finite or zero near the origin")
        phase = np.unwrap(np.angle(values))
        phase -= phase[len(nodes) // 2]
        logs = np.log(np.abs(values)) + 1j * phase
        return dict(zip(nodes.tolist(), logs))

    def first_second(h: float) -> Tuple[float, float]:
        k = log_cf(h, (1,))
        d1 = (k[h] - k[-h]) / (2.0 * h)
        d2 = (k[h] - 2.0 * k[0.0] + k[-h]) / h**2
        return d1, d2

    def estimate(h: float) -> Tuple[float, float]:
        d1_h, d2_h = first_second(h)
        d1_half, d2_half = first_second(0.5 * h)
        d1 = (4.0 * d1_half - d1_h) / 3.0
        d2 = (4.0 * d2_half - d2_h) / 3.0
        return float(d1.imag), float(-d2.real)

    c1, c2 = estimate(step)
    scale = np.sqrt(abs(c2)) if np.isfinite(c2) and c2 > 0 else 1.0
    if scale < 1.0:
        c1, c2 = estimate(step / scale)
        scale = np.sqrt(abs(c2)) if c2 > 0 else scale

    def fourth(h: float) -> complex:
        k = log_cf(h, (1, 2))
        return (k[2 * h] - 4.0 * k[h] + 6.0 * k[0.0] - 4.0 * k[-h] + k[-2 * h]) / h**4

    h4 = 0.05 / scale
    c4 = float(((4.0 * fourth(0.5 * h4) - fourth(h4)) / 3.0).real)

    if not all(np.isfinite(v) for v in (c1, c2, c4)):
        raise RangeError(f"non-finite cumulant estimate (c1={c1}, c2={c2}, c4={c4})")
    return c1, c2, c4


def check_branch_continuity(cf: CharFn, eta_max: float, points: int = 20_001) -> None:
    """Raise EvaluationError if ``cf`` jumps anywhere on [-eta_max, eta_max].

    A jump is a step much larger than both neighbouring steps; smooth functions on
    a fine grid have steps of comparable size.
    """
    grid = np.linspace(-eta_max, eta_max, points)
    values = cf(grid)
    steps = np.abs(np.diff(values))
    floor = 1e-6 * float(np.max(np.abs(values)))
    neighbour = np.maximum(np.concatenate(([0.0], steps[:-1])), np.concatenate((steps[1:], [0.0])))
    jumps = steps > 10.0 * neighbour + floor
    if np.any(jumps):
        where = int(np.argmax(jumps))
        raise EvaluationError("characteristic function is discontinuous", eta=float(grid[where]))
    logger.debug("Branch continuity verified", eta_max=eta_max, points=points)
