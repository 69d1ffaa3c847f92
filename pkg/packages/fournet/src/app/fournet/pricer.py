"""European and Bermudan pricing against a trained transition density.

A network ``theta`` is always fitted to ``Y = aX + c``. Expectations are taken
directly against the fitted density: ``E[f(X)] = int f((y - c)/a) g_Y(y) dy``, so
the transform never has to be undone before pricing.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
import structlog

from app.common.logging import pricing_logger
from app.schemas.models import LinearTransform

from .errors import ParameterError
from .gaussnet import NetParams1D, density_window, eval_density, mass_outside
from .quadint import integrate

logger = structlog.get_logger()

PRICE_ABS_TOL = 1e-10
PRICE_REL_TOL = 1e-12
WINDOW_MASS_TOL = 1e-6


@dataclass(frozen=True)
class PayoffSpec:
    """Vanilla payoff on ``S_T``.

    With ``convention="log_return"`` the density variable is ``ln(S_T / s0)`` and
    ``s0`` is required; with ``"log_price"`` it is ``ln S_T`` itself.
    """

    kind: Literal["call", "put"]
    strike: float
    convention: Literal["log_return", "log_price"] = "log_return"
    s0: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("call", "put"):
            raise ParameterError(f"unknown payoff kind {self.kind!r}")
        if not self.strike > 0:
            raise ParameterError(f"strike must be positive, got {self.strike}")
        if self.convention not in ("log_return", "log_price"):
            raise ParameterError(f"unknown convention {self.convention!r}")
        if self.convention == "log_return" and (self.s0 is None or not self.s0 > 0):
            raise ParameterError("log_return payoffs need a positive s0")

    @property
    def spot_scale(self) -> float:
        return float(self.s0) if self.convention == "log_return" else 1.0

    @property
    def kink(self) -> float:
        """Density variable x at which S_T equals the strike."""
        return float(np.log(self.strike / self.spot_scale))

    def underlying(self, x: np.ndarray) -> np.ndarray:
        return self.spot_scale * np.exp(x)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        spread = self.underlying(x) - self.strike
        if self.kind == "put":
            spread = -spread
        return np.maximum(spread, 0.0)


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform partition x_0 < ... < x_Q of [x_min, x_max]."""

    x_min: float
    x_max: float
    Q: int

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ParameterError(f"x_min must be below x_max (got {self.x_min}, {self.x_max})")
        if self.Q < 2:
            raise ParameterError(f"Q must be at least 2, got {self.Q}")

    @classmethod
    def centred(cls, centre: float, half_width: float, Q: int) -> "SpatialGrid":
        return cls(x_min=centre - half_width, x_max=centre + half_width, Q=Q)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.Q + 1)

    @property
    def spacing(self) -> float:
        return (self.x_max - self.x_min) / self.Q


@dataclass(frozen=True)
class PriceResult:
    price: float
    mass_outside: float
    window_warning: bool
    evaluations: int


@dataclass(frozen=True)
class PriceRow:
    strike: float
    reference: Optional[float]
    computed: float
    rel_error: Optional[float]


@dataclass(frozen=True)
class ConvergenceRow:
    Q: int
    price: float
    change: Optional[float]
    ratio: Optional[float]


def _scale_shift(lt: LinearTransform) -> Tuple[float, float]:
    a, c = float(lt.a), float(lt.c)
    if not a > 0:
        raise ParameterError(f"transform scale a must be positive, got {a}")
    return a, c


def _window(x_min: float, x_max: float) -> None:
    if not x_min < x_max:
        raise ParameterError(f"x_min must be below x_max (got {x_min}, {x_max})")


def _check_window(theta: NetParams1D, lo: float, hi: float, x_min: float, x_max: float):
    outside = mass_outside(theta, lo, hi)
    warn = outside > WINDOW_MASS_TOL
    if warn:
        pricing_logger.log_window_warning(x_min, x_max, outside)
    return outside, warn


def price_european(
    theta: NetParams1D,
    lt: LinearTransform,
    payoff: PayoffSpec,
    r: float,
    T: float,
    x_min: float,
    x_max: float,
) -> PriceResult:
    """Discounted expectation of ``payoff`` under the fitted density.

    Args:
        theta: network fitted to the characteristic function of ``Y = aX + c``.
        lt: the transform the network was fitted under.
        payoff: call or put; its convention must match the model's density variable.
        r: risk-free rate used for discounting.
        T: maturity in years.
        x_min, x_max: integration window in the transformed variable y = a x + c.

    Returns:
        PriceResult; ``window_warning`` is set (and logged) when more than 1e-6 of
        the density mass lies outside the window.
    """
    if not T > 0:
        raise ParameterError(f"maturity must be positive, got {T}")
    a, c = _scale_shift(lt)
    _window(x_min, x_max)
    outside, warn = _check_window(theta, x_min, x_max, x_min, x_max)

    integrand = lambda y: payoff((y - c) / a) * eval_density(theta, y)
    result = integrate(
        integrand, x_min, x_max, abs_tol=PRICE_ABS_TOL, rel_tol=PRICE_REL_TOL,
        points=[a * payoff.kink + c],
    )
    price = float(np.exp(-r * T) * np.real(result.value))
    return PriceResult(price=price, mass_outside=outside, window_warning=warn, evaluations=result.evaluations)


def expected_underlying(
    theta: NetParams1D,
    lt: LinearTransform,
    payoff: PayoffSpec,
    x_min: float,
    x_max: float,
) -> float:
    """E[S_T] under the fitted density, by quadrature over the y window."""
    a, c = _scale_shift(lt)
    _window(x_min, x_max)
    value = integrate(
        lambda y: payoff.underlying((y - c) / a) * eval_density(theta, y),
        x_min, x_max, abs_tol=PRICE_ABS_TOL, rel_tol=PRICE_REL_TOL,
    ).value
    return float(np.real(value))


def price_table(
    theta: NetParams1D,
    lt: LinearTransform,
    payoffs: Sequence[PayoffSpec],
    r: float,
    T: float,
    x_min: float,
    x_max: float,
    references: Optional[Sequence[Optional[float]]] = None,
) -> List[PriceRow]:
    """One row (strike, reference, computed, relative error) per payoff."""
    if references is not None and len(references) != len(payoffs):
        raise ParameterError("references must align with payoffs")
    rows = []
    for i, payoff in enumerate(payoffs):
        computed = price_european(theta, lt, payoff, r, T, x_min, x_max).price
        reference = None if references is None else references[i]
        rel_error = None
        if reference is not None and reference != 0:
            rel_error = abs(computed - reference) / abs(reference)
        pricing_logger.log_price(payoff.strike, computed, reference)
        rows.append(PriceRow(strike=payoff.strike, reference=reference, computed=computed, rel_error=rel_error))
    return rows


# --- Bermudan put ---
def _put(strike: float, x: np.ndarray) -> np.ndarray:
    return np.maximum(strike - np.exp(x), 0.0)


def _ex_dividend(x: np.ndarray, dividend: float, floor: float) -> np.ndarray:
    """ln(max(e^x - D, e^floor)): the log-price just after the dividend."""
    return np.log(np.maximum(np.exp(x) - dividend, np.exp(floor)))


def intervention(values: np.ndarray, D: float, E: float, grid: SpatialGrid) -> np.ndarray:
    """Dividend shift of the continuation values followed by the exercise max.

    ``v(x, t_m) = max(v(ln(max(e^x - D, e^x_min)), t_m+), max(E - e^x, 0))``; the
    shifted lookup interpolates linearly and is clamped at both grid ends.
    """
    x = grid.points
    values = np.asarray(values, dtype=float)
    if values.shape != x.shape:
        raise ParameterError(f"values must have shape {x.shape}, got {values.shape}")
    if D < 0:
        raise ParameterError(f"dividend must be non-negative, got {D}")
    shifted = values if D == 0 else np.interp(_ex_dividend(x, D, grid.x_min), x, values)
    return np.maximum(shifted, _put(E, x))


def _terminal_value(x: np.ndarray, D: float, E: float, x_min: float) -> np.ndarray:
    """Closed-form value at the last exercise date (intervention applied to the payoff)."""
    return np.maximum(_put(E, _ex_dividend(x, D, x_min)), _put(E, x))


class _Advance:
    """Step 1 of the backward induction for one time interval."""

    def __init__(self, theta: NetParams1D, lt: LinearTransform, discount: float, y_window, workers: int):
        self.theta = theta
        self.a, self.c = float(lt.a), float(lt.c)
        self.discount = discount
        self.lo, self.hi = y_window
        self.workers = workers

    def _integral(self, x: float, value_at, breakpoints: np.ndarray) -> float:
        a, c = self.a, self.c
        y_points = a * (breakpoints - x) + c
        inside = y_points[(y_points > self.lo) & (y_points < self.hi)]
        result = integrate(
            lambda y: value_at(x + (y - c) / a) * eval_density(self.theta, y),
            self.lo, self.hi, abs_tol=PRICE_ABS_TOL, rel_tol=PRICE_REL_TOL, points=inside,
        )
        return self.discount * float(np.real(result.value))

    def __call__(self, targets: np.ndarray, value_at, breakpoints: np.ndarray) -> np.ndarray:
        run = lambda x: self._integral(float(x), value_at, breakpoints)
        if self.workers > 1 and targets.size > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                return np.array(list(pool.map(run, targets)))
        return np.array([run(x) for x in targets])


def price_bermudan(
    theta: NetParams1D,
    lt: LinearTransform,
    E: float,
    D: float,
    r: float,
    dates: Sequence[float],
    grid: SpatialGrid,
    s0: float,
    workers: int = 1,
) -> float:
    """Bermudan put on a log-return transition density fitted for one date spacing.

    Args:
        theta: network of the log-return density over ``dt`` (fitted under ``lt``).
        E: strike. D: dividend paid at every exercise date.
        r: risk-free rate.
        dates: exercise dates t_1 < ... < t_M = T, equally spaced from t_0 = 0.
        grid: log-price grid, typically ``SpatialGrid.centred(ln s0, 10, Q)``.
        s0: spot; the price is the time-t_0 value at ``ln s0``.
        workers: threads used for the independent grid-point integrals.

    Returns:
        The option value. No exercise happens at t_0.
    """
    dates = np.asarray(dates, dtype=float)
    if dates.size < 1:
        raise ParameterError("at least one exercise date is required")
    steps = np.diff(np.concatenate([[0.0], dates]))
    dt = float(steps[0])
    if not dt > 0 or not np.allclose(steps, dt, rtol=1e-9, atol=0.0):
        raise ParameterError("exercise dates must be equally spaced starting one interval after t_0")
    if not (E > 0 and s0 > 0 and D >= 0):
        raise ParameterError("need E > 0, s0 > 0 and D >= 0")
    x0 = float(np.log(s0))
    if not grid.x_min <= x0 <= grid.x_max:
        raise ParameterError(f"ln(s0)={x0} outside the grid")

    a, c = _scale_shift(lt)
    # the density seen from ln(s0) must fit inside the grid
    _check_window(theta, a * (grid.x_min - x0) + c, a * (grid.x_max - x0) + c, grid.x_min, grid.x_max)
    lo, hi = density_window(theta)
    advance = _Advance(theta, lt, float(np.exp(-r * dt)), (lo, hi), workers)

    x = grid.points
    kinks = np.array([np.log(E), np.log(E + D), np.log(D + np.exp(grid.x_min))]) if D > 0 else np.array([np.log(E)])
    terminal = lambda z: _terminal_value(z, D, E, grid.x_min)
    M = dates.size

    if M == 1:
        return float(advance(np.array([x0]), terminal, kinks)[0])

    # t_{M-1}: continuation from the closed-form terminal value
    values = intervention(advance(x, terminal, kinks), D, E, grid)
    pricing_logger.log_time_step(1, M, x.size)
    for step in range(2, M):
        interpolant = lambda z, v=values: np.interp(z, x, v)
        values = intervention(advance(x, interpolant, x), D, E, grid)
        pricing_logger.log_time_step(step, M, x.size)

    price = float(advance(np.array([x0]), lambda z: np.interp(z, x, values), x)[0])
    pricing_logger.log_time_step(M, M, 1)
    logger.info("Bermudan price computed", price=price, Q=grid.Q, dates=M)
    return price


def convergence_table(grid_sizes: Sequence[int], prices: Sequence[float]) -> List[ConvergenceRow]:
    """Changes between successive Q and the quotient of successive changes.

    A change is ``|price_k - price_{k-1}|``; the ratio at row k is
    ``change_{k-1} / change_k`` and is None when either change is unavailable or zero.
    """
    if len(grid_sizes) != len(prices):
        raise ParameterError("grid sizes and prices must align")
    if any(b <= a for a, b in zip(grid_sizes, grid_sizes[1:])):
        raise ParameterError("grid sizes must be increasing")
    rows: List[ConvergenceRow] = []
    previous_change: Optional[float] = None
    for k, (Q, price) in enumerate(zip(grid_sizes, prices)):
        change = abs(price - prices[k - 1]) if k else None
        ratio = None
        if change and previous_change:
            ratio = previous_change / change
        rows.append(ConvergenceRow(Q=int(Q), price=float(price), change=change, ratio=ratio))
        pricing_logger.log_convergence_row(int(Q), float(price), change, ratio)
        previous_change = change
    return rows


def bermudan_convergence(
    theta: NetParams1D,
    lt: LinearTransform,
    E: float,
    D: float,
    r: float,
    dates: Sequence[float],
    s0: float,
    grid_sizes: Sequence[int],
    half_width: float = 10.0,
    workers: int = 1,
) -> List[ConvergenceRow]:
    """price_bermudan on grids ln(s0) -/+ half_width for each Q, tabulated."""
    prices = []
    for Q in grid_sizes:
        grid = SpatialGrid.centred(float(np.log(s0)), half_width, int(Q))
        prices.append(price_bermudan(theta, lt, E, D, r, dates, grid, s0, workers))
    return convergence_table(list(grid_sizes), prices)
