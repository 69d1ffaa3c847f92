"""Adaptive Gauss–Kronrod quadrature and the error metrics built on it.

``integrate`` evaluates every active panel in one vectorized call, accepts panels
whose Kronrod/Gauss disagreement fits their share of the tolerance and bisects
the rest, until the summed error estimate meets
``max(abs_tol, rel_tol * |value|)`` or the panel cap is reached.
"""

from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import structlog

from app.common.config import get_settings

from .charlib import CharFn
from .errors import IntegrationError, ParameterError
from .gaussnet import MixtureView, NetParams1D, eval_cf, eval_density, envelope

logger = structlog.get_logger()

Integrand = Callable[[np.ndarray], np.ndarray]
Number = Union[float, complex]

# 15-point Kronrod abscissae on [0, 1] and weights (QUADPACK qk15), with the
# embedded 7-point Gauss weights for the odd-indexed abscissae.
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

NODES = np.concatenate([-_XGK[:-1], [0.0], _XGK[:-1][::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], [_WGK[-1]], _WGK[:-1][::-1]])
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[[1, 3, 5]] = _WG[:3]
GAUSS_WEIGHTS[7] = _WG[3]
GAUSS_WEIGHTS[[9, 11, 13]] = _WG[:3][::-1]


@dataclass(frozen=True)
class QuadResult:
    value: Number
    abs_error_estimate: float
    evaluations: int
    intervals: int = 1
    converged: bool = True

    def __post_init__(self):
        if not self.abs_error_estimate >= 0:
            raise ValueError(f"error estimate must be non-negative: {self.abs_error_estimate}")


def _panels(f: Integrand, lo: np.ndarray, hi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    centre = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    x = centre[:, None] + half[:, None] * NODES
    values = np.asarray(f(x.ravel())).reshape(x.shape)
    finite = np.isfinite(values)
    if not np.all(finite):
        bad = x[~finite][0]
        raise IntegrationError("integrand returned a non-finite value", abscissa=float(bad))
    kronrod = half * (values @ KRONROD_WEIGHTS)
    gauss = half * (values @ GAUSS_WEIGHTS)
    return kronrod, np.abs(kronrod - gauss)


def gauss_kronrod_panel(f: Integrand, a: float, b: float) -> Tuple[Number, float]:
    """Single 15-point panel: (Kronrod value, |Kronrod - Gauss|)."""
    value, err = _panels(f, np.array([float(a)]), np.array([float(b)]))
    return value[0], float(err[0])


def integrate(
    f: Integrand,
    a: float,
    b: float,
    abs_tol: Optional[float] = None,
    rel_tol: Optional[float] = None,
    limit: Optional[int] = None,
    points: Optional[Sequence[float]] = None,
) -> QuadResult:
    """Adaptive GK15 integral of a vectorized ``f`` over [a, b].

    Args:
        f: maps an array of abscissae to an array of real or complex values.
        a, b: limits, a < b.
        abs_tol, rel_tol: tolerances; settings defaults when omitted.
        limit: panel cap; hitting it logs a warning and returns ``converged=False``.
        points: interior breakpoints (kinks) that seed the initial subdivision.

    Returns:
        QuadResult with value, error estimate, integrand evaluations and panel count.
    """
    settings = get_settings()
    abs_tol = settings.quad_abs_tol if abs_tol is None else abs_tol
    rel_tol = settings.quad_rel_tol if rel_tol is None else rel_tol
    limit = settings.quad_limit if limit is None else limit
    a, b = float(a), float(b)
    if not a < b:
        raise ParameterError(f"integration limits must satisfy a < b (got {a}, {b})")
    if abs_tol <= 0 or rel_tol <= 0:
        raise ParameterError("tolerances must be positive")

    edges = [a]
    if points is not None:
        edges.extend(sorted(float(p) for p in np.unique(np.asarray(points, dtype=float)) if a < p < b))
    edges.append(b)
    lo = np.array(edges[:-1])
    hi = np.array(edges[1:])

    width = b - a
    min_width = 1e-13 * max(width, abs(a), abs(b))
    accepted_value: Number = 0.0
    accepted_error = 0.0
    accepted_count = 0
    evaluations = 0
    converged = True

    while lo.size:
        values, errors = _panels(f, lo, hi)
        evaluations += 15 * lo.size
        total = accepted_value + values.sum()
        tol = max(abs_tol, rel_tol * abs(total))
        if accepted_error + errors.sum() <= tol:
            accepted_value = total
            accepted_error += float(errors.sum())
            accepted_count += lo.size
            break
        budget = tol * (hi - lo) / width
        done = (errors <= budget) | ((hi - lo) <= min_width)
        accepted_value = accepted_value + values[done].sum()
        accepted_error += float(errors[done].sum())
        accepted_count += int(done.sum())
        lo, hi = lo[~done], hi[~done]
        if accepted_count + 2 * lo.size > limit:
            rest_values, rest_errors = values[~done], errors[~done]
            accepted_value = accepted_value + rest_values.sum()
            accepted_error += float(rest_errors.sum())
            accepted_count += lo.size
            converged = False
            logger.warning(
                "Quadrature subdivision cap reached",
                a=a,
                b=b,
                intervals=accepted_count,
                error_estimate=accepted_error,
                tolerance=tol,
            )
            break
        mid = 0.5 * (lo + hi)
        lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])

    value = accepted_value
    if isinstance(value, np.generic):
        value = value.item()
    return QuadResult(
        value=value,
        abs_error_estimate=accepted_error,
        evaluations=evaluations,
        intervals=accepted_count,
        converged=converged,
    )


def tensor_integrate_2d(
    f: Callable[[np.ndarray], np.ndarray],
    box: Tuple[Tuple[float, float], Tuple[float, float]],
    panels: Tuple[int, int] = (64, 64),
    order: int = 20,
) -> Number:
    """Composite Gauss–Legendre tensor rule; ``f`` takes points of shape (k, 2)."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    axes = []
    for (lo, hi), count in zip(box, panels):
        if not lo < hi or count < 1:
            raise ParameterError("box sides must satisfy lo < hi with at least one panel")
        edges = np.linspace(lo, hi, count + 1)
        half = 0.5 * np.diff(edges)
        centre = 0.5 * (edges[:-1] + edges[1:])
        axes.append(((centre[:, None] + half[:, None] * nodes).ravel(), (half[:, None] * weights).ravel()))
    (xs, wx), (ys, wy) = axes
    total: Number = 0.0
    for start in range(0, xs.size, 64):
        bx = xs[start:start + 64]
        gx, gy = np.meshgrid(bx, ys, indexing="ij")
        values = np.asarray(f(np.stack([gx.ravel(), gy.ravel()], axis=1))).reshape(gx.shape)
        if not np.all(np.isfinite(values)):
            raise IntegrationError("integrand returned a non-finite value")
        total = total + wx[start:start + 64] @ values @ wy
    return total.item() if isinstance(total, np.generic) else total


# --- metrics ---
def metric_L1(f1: Integrand, f2: Integrand, A: float, **tolerances) -> float:
    """Integral of |f1 - f2| over [-A, A]."""
    if not A > 0:
        raise ParameterError("A must be positive")
    return float(integrate(lambda x: np.abs(f1(x) - f2(x)), -A, A, **tolerances).value)


def metric_L2(f1: Integrand, f2: Integrand, A: float, **tolerances) -> float:
    """Integral of |f1 - f2|^2 over [-A, A]; squared, no root taken."""
    if not A > 0:
        raise ParameterError("A must be positive")
    return float(integrate(lambda x: np.abs(f1(x) - f2(x)) ** 2, -A, A, **tolerances).value)


def metric_MPE(f1: Integrand, f2: Integrand, grid: np.ndarray) -> float:
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ParameterError("evaluation grid must be non-empty")
    return float(np.max(np.abs(f1(grid) - f2(grid))))


def default_grid(theta: NetParams1D, points: int = 4001) -> np.ndarray:
    A = envelope(theta)
    return np.linspace(-A, A, points)


def nonneg_loss(theta: NetParams1D, grid: Optional[np.ndarray] = None) -> float:
    """max over the grid of |min(g(x), 0)|."""
    grid = default_grid(theta) if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ParameterError("evaluation grid must be non-empty")
    return float(max(0.0, -np.min(eval_density(theta, grid))))


@dataclass(frozen=True)
class PlancherelResult:
    spatial: float
    fourier: float
    rel_gap: float


def plancherel_check(
    theta1: NetParams1D,
    theta2: NetParams1D,
    A_x: Optional[float] = None,
    A_eta: Optional[float] = None,
) -> PlancherelResult:
    """Compare int |g1 - g2|^2 dx with (1/2pi) int |G1 - G2|^2 d eta."""
    need_x = max(envelope(theta1), envelope(theta2))
    need_eta = 12.0 * float(max(np.max(np.abs(theta1.w)), np.max(np.abs(theta2.w))))
    A_x = need_x if A_x is None else A_x
    A_eta = need_eta if A_eta is None else A_eta
    if A_x < need_x or A_eta < need_eta:
        logger.warning(
            "Plancherel window narrower than the mixture envelope",
            A_x=A_x,
            A_eta=A_eta,
            envelope_x=need_x,
            envelope_eta=need_eta,
        )

    spatial = integrate(
        lambda x: (eval_density(theta1, x) - eval_density(theta2, x)) ** 2,
        -A_x, A_x, abs_tol=1e-16, rel_tol=1e-11,
        points=np.concatenate([MixtureView.from_params(theta1).means, MixtureView.from_params(theta2).means]),
    ).value
    fourier = integrate(
        lambda e: np.abs(eval_cf(theta1, e) - eval_cf(theta2, e)) ** 2,
        -A_eta, A_eta, abs_tol=1e-16, rel_tol=1e-11,
    ).value / (2.0 * np.pi)
    spatial, fourier = float(spatial), float(fourier)
    return PlancherelResult(
        spatial=spatial,
        fourier=fourier,
        rel_gap=abs(spatial - fourier) / max(spatial, 1e-300),
    )


def fourier_metrics(cf: CharFn, theta: NetParams1D, eta_prime: float, points: int = 4001) -> Dict[str, float]:
    """L1, squared L2 and MPE of the Re and Im residuals over [-eta', eta']."""
    grid = np.linspace(-eta_prime, eta_prime, points)
    tol = dict(abs_tol=1e-14, rel_tol=1e-6)
    metrics = {}
    for part, pick in (("re", np.real), ("im", np.imag)):
        target = lambda e, pick=pick: pick(cf(e))
        fitted = lambda e, pick=pick: pick(eval_cf(theta, e))
        metrics[f"l1_{part}"] = metric_L1(target, fitted, eta_prime, **tol)
        metrics[f"l2_{part}"] = metric_L2(target, fitted, eta_prime, **tol)
        metrics[f"mpe_{part}"] = metric_MPE(target, fitted, grid)
    return metrics


def fourier_metrics_2d(cf: CharFn, fitted: CharFn, eta_prime: float, panels: int = 48) -> Dict[str, float]:
    """Squared L2 and MPE of the Re and Im residuals over [-eta', eta']^2."""
    box = ((-eta_prime, eta_prime), (-eta_prime, eta_prime))
    ticks = np.linspace(-eta_prime, eta_prime, 201)
    gx, gy = np.meshgrid(ticks, ticks, indexing="ij")
    grid = np.stack([gx.ravel(), gy.ravel()], axis=1)
    residual = cf(grid) - fitted(grid)
    return {
        "l2_re": float(tensor_integrate_2d(lambda p: (cf(p) - fitted(p)).real ** 2, box, (panels, panels), 16)),
        "l2_im": float(tensor_integrate_2d(lambda p: (cf(p) - fitted(p)).imag ** 2, box, (panels, panels), 16)),
        "mpe_re": float(np.max(np.abs(residual.real))),
        "mpe_im": float(np.max(np.abs(residual.imag))),
    }
