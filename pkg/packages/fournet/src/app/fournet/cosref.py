"""Reference densities and prices: COS expansion, Merton series, Gil-Pelaez inversion.

These are the baselines the trained networks are compared against. The COS
functions take any characteristic function of the density variable ``x`` (the
same callables ``charlib`` builds), so every catalog model is covered.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import structlog
from scipy.stats import norm, poisson

from app.schemas.models import LinearTransform, MertonSpec

from .charlib import CharFn, cumulants, validate_model
from .errors import DomainError, ParameterError, RangeError
from .gaussnet import NetParams1D, recovered_density
from .pricer import PayoffSpec
from .quadint import integrate

logger = structlog.get_logger()

_BLOCK = 4096


@dataclass(frozen=True)
class CosConfig:
    n_terms: int
    a: float
    b: float

    def __post_init__(self):
        if self.n_terms < 2:
            raise ParameterError(f"n_terms must be at least 2, got {self.n_terms}")
        if not (np.isfinite(self.a) and np.isfinite(self.b) and self.a < self.b):
            raise ParameterError(f"COS range must satisfy a < b (got {self.a}, {self.b})")

    @classmethod
    def from_cumulants(cls, cf: CharFn, n_terms: int, L: float = 10.0) -> "CosConfig":
        a, b = cumulant_range(cf, L)
        return cls(n_terms=n_terms, a=a, b=b)

    @property
    def width(self) -> float:
        return self.b - self.a

    def frequencies(self) -> np.ndarray:
        return np.arange(self.n_terms) * np.pi / self.width


def cumulant_range(cf: CharFn, L: float = 10.0) -> Tuple[float, float]:
    """[c1 - L sqrt(|c2| + sqrt|c4|), c1 + L sqrt(|c2| + sqrt|c4|)]."""
    if not L > 0:
        raise ParameterError("L must be positive")
    c1, c2, c4 = cumulants(cf)
    half = L * np.sqrt(abs(c2) + np.sqrt(abs(c4)))
    if not (np.isfinite(half) and half > 0):
        raise RangeError(f"degenerate cumulant range (c2={c2}, c4={c4})")
    return float(c1 - half), float(c1 + half)


def _density_coefficients(cf: CharFn, cfg: CosConfig) -> np.ndarray:
    u = cfg.frequencies()
    coeff = 2.0 / cfg.width * np.real(cf(u) * np.exp(-1j * u * cfg.a))
    coeff[0] *= 0.5
    return coeff


def cos_density(cf: CharFn, x: Union[float, np.ndarray], cfg: CosConfig) -> np.ndarray:
    """Cosine-series density of the variable whose characteristic function is ``cf``.

    Raises:
        DomainError: some ``x`` lies outside ``[cfg.a, cfg.b]``.
    """
    x = np.asarray(x, dtype=float)
    if np.any((x < cfg.a) | (x > cfg.b)):
        bad = x[(x < cfg.a) | (x > cfg.b)].ravel()[0]
        raise DomainError(f"x={bad} outside the COS range [{cfg.a}, {cfg.b}]")
    coeff = _density_coefficients(cf, cfg)
    u = cfg.frequencies()
    flat = x.ravel()
    out = np.empty(flat.shape)
    for start in range(0, flat.size, _BLOCK):
        chunk = flat[start:start + _BLOCK]
        out[start:start + _BLOCK] = np.cos(np.outer(chunk - cfg.a, u)) @ coeff
    return out.reshape(x.shape)


def _chi(k_u: np.ndarray, a: float, c: float, d: float) -> np.ndarray:
    """int_c^d e^y cos(u_k (y - a)) dy."""
    return (
        np.cos(k_u * (d - a)) * np.exp(d)
        - np.cos(k_u * (c - a)) * np.exp(c)
        + k_u * np.sin(k_u * (d - a)) * np.exp(d)
        - k_u * np.sin(k_u * (c - a)) * np.exp(c)
    ) / (1.0 + k_u**2)


def _psi(k_u: np.ndarray, a: float, c: float, d: float) -> np.ndarray:
    """int_c^d cos(u_k (y - a)) dy."""
    out = np.empty_like(k_u)
    out[0] = d - c
    rest = k_u[1:]
    out[1:] = (np.sin(rest * (d - a)) - np.sin(rest * (c - a))) / rest
    return out


def cos_price_european(cf: CharFn, payoff: PayoffSpec, r: float, T: float, cfg: CosConfig) -> float:
    """COS price of a vanilla call or put with analytic payoff coefficients.

    ``cfg`` holds the truncation range of the density variable; it is shifted to
    ``y = ln(S_T / E)`` internally.
    """
    if not T > 0:
        raise ParameterError(f"maturity must be positive, got {T}")
    strike = payoff.strike
    shift = -payoff.kink  # y = x + shift
    a, b = cfg.a + shift, cfg.b + shift
    u = cfg.frequencies()

    if payoff.kind == "call":
        lo, hi = max(a, 0.0), b
        sign = 1.0
    else:
        lo, hi = a, min(b, 0.0)
        sign = -1.0
    if hi <= lo:
        return 0.0
    coeff = sign * 2.0 / cfg.width * strike * (_chi(u, a, lo, hi) - _psi(u, a, lo, hi))

    terms = np.real(cf(u) * np.exp(1j * u * (shift - a))) * coeff
    terms[0] *= 0.5
    return float(np.exp(-r * T) * np.sum(terms))


# --- independent oracles ---
def merton_reference_price(
    model: MertonSpec,
    s0: float,
    strike: float,
    r: float,
    T: Optional[float] = None,
    kind: str = "call",
    n_terms: int = 60,
) -> float:
    """Merton's series of Black-Scholes prices weighted by Poisson(lam (1 + kappa) T).

    The k-th term uses ``sigma_k^2 = sigma^2 + k s^2 / T`` and
    ``r_k = r - lam kappa + k ln(1 + kappa) / T``.
    """
    model = validate_model(model)
    T = model.T if T is None else float(T)
    if not (s0 > 0 and strike > 0 and T > 0):
        raise ParameterError("need s0 > 0, strike > 0 and T > 0")
    kappa = model.compensator
    lam_prime = model.lam * (1.0 + kappa)
    k = np.arange(n_terms)
    weights = poisson.pmf(k, lam_prime * T)
    sigma_k = np.sqrt(model.sigma**2 + k * model.jump_std**2 / T)
    r_k = r - model.lam * kappa + k * np.log1p(kappa) / T

    d1 = (np.log(s0 / strike) + (r_k + 0.5 * sigma_k**2) * T) / (sigma_k * np.sqrt(T))
    d2 = d1 - sigma_k * np.sqrt(T)
    discount = np.exp(-r_k * T)
    if kind == "call":
        terms = s0 * norm.cdf(d1) - strike * discount * norm.cdf(d2)
    elif kind == "put":
        terms = strike * discount * norm.cdf(-d2) - s0 * norm.cdf(-d1)
    else:
        raise ParameterError(f"unknown payoff kind {kind!r}")
    return float(np.sum(weights * terms))


def _half_line(f, tol: float, first: float = 64.0, octaves: int = 40) -> float:
    """int_0^inf f by doubling octaves until one contributes less than ``tol``."""
    total = integrate(f, 0.0, first, abs_tol=tol, rel_tol=1e-12).value
    lo, hi = first, 2.0 * first
    for _ in range(octaves):
        part = integrate(f, lo, hi, abs_tol=tol, rel_tol=1e-12).value
        total += part
        if abs(part) < tol:
            return float(np.real(total))
        lo, hi = hi, 2.0 * hi
    raise RangeError("Gil-Pelaez integrand does not decay")


def inversion_price_european(
    cf: CharFn, payoff: PayoffSpec, r: float, T: float, tol: float = 1e-11
) -> float:
    """Gil-Pelaez price: ``C = e^{-rT}(F P1 - E P2)`` with F = E[S_T].

    Needs ``cf`` at complex arguments (``cf(u - i)``); the put follows by parity.
    """
    scale = payoff.spot_scale
    log_k = np.log(payoff.strike / scale)
    forward_factor = cf(np.array([-1j]))[0]
    forward = float(np.real(forward_factor)) * scale
    if not forward > 0:
        raise RangeError(f"E[S_T] estimate is not positive: {forward}")

    def p1_integrand(u):
        return np.real(np.exp(-1j * u * log_k) * cf(u - 1j) / (1j * u * forward_factor))

    def p2_integrand(u):
        return np.real(np.exp(-1j * u * log_k) * cf(u) / (1j * u))

    p1 = 0.5 + _half_line(p1_integrand, tol) / np.pi
    p2 = 0.5 + _half_line(p2_integrand, tol) / np.pi
    discount = np.exp(-r * T)
    call = discount * (forward * p1 - payoff.strike * p2)
    if payoff.kind == "call":
        return float(call)
    return float(call - discount * (forward - payoff.strike))


@dataclass(frozen=True)
class DensityComparison:
    table: pd.DataFrame
    minima: Dict[str, float]


def density_comparison(
    cf: CharFn,
    theta: NetParams1D,
    lt: LinearTransform,
    grid: np.ndarray,
    terms: Sequence[int] = (800, 1200),
    cos_range: Optional[Tuple[float, float]] = None,
) -> DensityComparison:
    """FourNet and COS densities of X side by side on ``grid``.

    ``cf`` is the untransformed characteristic function; ``theta`` was fitted under
    ``lt`` and is mapped back with the recovered network. Columns: ``x``,
    ``fournet`` and one ``cos_<n>`` per term count.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ParameterError("evaluation grid must be non-empty")
    a, b = cos_range if cos_range is not None else cumulant_range(cf)
    columns = {"x": grid, "fournet": recovered_density(theta, lt)(grid)}
    for n in terms:
        columns[f"cos_{n}"] = cos_density(cf, grid, CosConfig(n_terms=int(n), a=a, b=b))
    table = pd.DataFrame(columns)
    minima = {name: float(table[name].min()) for name in table.columns if name != "x"}
    logger.info("Density comparison built", points=int(grid.size), cos_range=(a, b), minima=minima)
    return DensityComparison(table=table, minima=minima)
