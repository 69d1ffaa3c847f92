"""Fourier-domain truncation, critical-region detection and sinh-stretched partitions.

The training grid is fixed before training: ``find_eta_prime`` picks the half-width
``eta'`` outside of which the characteristic function is negligible,
``detect_critical_points`` locates where ``Re G``/``Im G`` turn or bend, and
``partition_multi`` clusters samples around those points with sinh stretching.
"""

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog

from app.schemas.run import SamplerConfig

from .charlib import CharFn
from .errors import NonIntegrableTailError, ParameterError
from .quadint import integrate

logger = structlog.get_logger()

# lattice step of the eta' search
_ETA_STEP = 0.125
_MAX_OCTAVES = 40


@dataclass(frozen=True)
class Region:
    """Per-region parameters of one concentration point."""

    eta: float
    budget: int
    position: int
    d_lower: float
    d_upper: float


@dataclass(frozen=True)
class Partition:
    points: np.ndarray
    eta_prime: float
    regions: Tuple[Region, ...] = field(default_factory=tuple)

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim != 1 or points.size < 2:
            raise ParameterError("a partition needs at least two points")
        if np.any(np.diff(points) <= 0):
            raise ParameterError("partition points must be strictly increasing")
        object.__setattr__(self, "points", points)

    @property
    def size(self) -> int:
        return int(self.points.size)

    @property
    def spacing_ratio(self) -> float:
        steps = np.diff(self.points)
        return float(steps.max() / steps.min())

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.points).tobytes()).hexdigest()

    def to_csv(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame({"eta": self.points}).to_csv(path, header=False, index=False, float_format="%.17g")
        return path


# --- truncation search ---
def _tail_below(cf: CharFn, eta_prime: float, eps1: float) -> bool:
    """True when all three two-sided tails beyond eta' are below eps1."""
    integrands = (
        lambda e: np.abs(cf(e).real),
        lambda e: np.abs(cf(e).imag),
        lambda e: np.abs(cf(e)) ** 2,
    )
    for integrand in integrands:
        total = 0.0
        for sign in (1.0, -1.0):
            side = lambda e, sign=sign, integrand=integrand: integrand(sign * e)
            lo, hi = eta_prime, 16.0 * eta_prime
            total += integrate(side, lo, hi, abs_tol=eps1 * 1e-3, rel_tol=1e-6).value
            if total >= eps1:
                return False
            for _ in range(_MAX_OCTAVES):
                lo, hi = hi, 2.0 * hi
                octave = integrate(side, lo, hi, abs_tol=eps1 * 1e-3, rel_tol=1e-6).value
                total += octave
                if total >= eps1:
                    return False
                if octave < eps1 / 100.0:
                    break
            else:
                return False
    return True


def find_eta_prime(cf: CharFn, eps1: float = 1e-7, cap: float = 4096.0) -> float:
    """Smallest eta' on a 1/8 lattice whose Fourier tails are each below eps1.

    Tails are integrated over [eta', 16 eta'] and then over doubling octaves until
    an octave contributes less than eps1/100. The lattice search (exponential then
    binary) makes the result monotone in eps1.
    """
    if not eps1 > 0:
        raise ParameterError("eps1 must be positive")
    max_index = int(math.floor(cap / _ETA_STEP))

    upper = 8
    while not _tail_below(cf, upper * _ETA_STEP, eps1):
        if upper >= max_index:
            raise NonIntegrableTailError(f"Fourier tails exceed eps1={eps1} up to eta'={cap}")
        upper = min(2 * upper, max_index)

    lower = upper // 2 if upper > 8 else 0
    # invariant: predicate false at lower (or lower == 0), true at upper
    while upper - lower > 1:
        middle = (lower + upper) // 2
        if _tail_below(cf, middle * _ETA_STEP, eps1):
            upper = middle
        else:
            lower = middle
    eta_prime = upper * _ETA_STEP
    logger.info("Truncation half-width found", eta_prime=eta_prime, eps1=eps1)
    return eta_prime


# --- critical points ---
def _sign_changes(grid: np.ndarray, values: np.ndarray) -> np.ndarray:
    prod = values[:-1] * values[1:]
    idx = np.nonzero(prod < 0)[0]
    left, right = values[idx], values[idx + 1]
    return grid[idx] + (grid[idx + 1] - grid[idx]) * left / (left - right)


def detect_critical_points(
    cf: CharFn,
    eta_prime: float,
    prescan: int = 4096,
    max_points: int = 16,
    amplitude_floor: float = 1e-8,
) -> List[float]:
    """Interior extrema and inflections of Re G and Im G on a uniform pre-scan.

    Candidates closer than eta'/64 are merged, features where |G| is below
    ``amplitude_floor * max|G|`` are ignored, the largest-|G| points are kept up to
    ``max_points`` and 0 is always included.
    """
    if prescan < 256:
        raise ParameterError("prescan must be at least 256")
    grid = np.linspace(-eta_prime, eta_prime, prescan)
    values = cf(grid)
    step = grid[1] - grid[0]
    candidates = []
    for part in (values.real, values.imag):
        first = np.gradient(part, step)
        second = np.gradient(first, step)
        candidates.append(_sign_changes(grid, first))
        candidates.append(_sign_changes(grid, second))
    found = np.concatenate(candidates) if candidates else np.empty(0)

    tolerance = eta_prime / 64.0
    magnitude = np.abs(cf(found)) if found.size else np.empty(0)
    keep = (np.abs(found) < eta_prime - tolerance) & (magnitude >= amplitude_floor * np.max(np.abs(values)))
    found, magnitude = found[keep], magnitude[keep]

    # merge clusters; the representative is the member with the largest |G|
    order = np.argsort(found)
    found, magnitude = found[order], magnitude[order]
    merged: List[Tuple[float, float]] = []
    start = 0
    for i in range(1, found.size + 1):
        if i == found.size or found[i] - found[i - 1] > tolerance:
            best = start + int(np.argmax(magnitude[start:i]))
            merged.append((float(found[best]), float(magnitude[best])))
            start = i

    merged = [(x, m) for x, m in merged if abs(x) > tolerance]
    merged.sort(key=lambda item: -item[1])
    points = sorted([0.0] + [x for x, _ in merged[: max_points - 1]])
    logger.info("Critical points detected", count=len(points), eta_prime=eta_prime)
    return points


# --- partitions ---
def partition_one(
    eta_l: float, eta_u: float, eta_c: float, M: int, m: int, d_l: float, d_u: float
) -> np.ndarray:
    """M + 1 sinh-stretched points on [eta_l, eta_u], point m exactly eta_c.

    With m = 0 (or m = M) and eta_c strictly inside the interval the partition is
    one-sided: a single sinh map from eta_l to eta_u centred on eta_c, using the
    density of the nonempty side. Its endpoints are exact; eta_c is not a grid point.
    """
    if not (eta_l <= eta_c <= eta_u):
        raise ParameterError(f"concentration point {eta_c} outside [{eta_l}, {eta_u}]")
    if not (0 <= m <= M) or M < 1:
        raise ParameterError(f"need 0 <= m <= M and M >= 1 (m={m}, M={M})")
    if d_l <= 0 or d_u <= 0:
        raise ParameterError("density parameters must be positive")
    if (m > 0 and eta_c == eta_l) or (m < M and eta_c == eta_u):
        raise ParameterError("a side with subintervals needs a nonzero width")

    if (m == 0 and eta_c > eta_l) or (m == M and eta_c < eta_u):
        d = d_u if m == 0 else d_l
        alpha_l = math.asinh((eta_l - eta_c) / d)
        alpha_u = math.asinh((eta_u - eta_c) / d)
        points = eta_c + d * np.sinh(alpha_l + (alpha_u - alpha_l) * np.arange(M + 1) / M)
        points[0] = eta_l
        points[M] = eta_u
    else:
        points = np.empty(M + 1)
        points[m] = eta_c
        if m > 0:
            alpha_l = math.asinh((eta_l - eta_c) / d_l)
            j = np.arange(1, m)
            points[1:m] = eta_c + d_l * np.sinh(alpha_l * (1.0 - j / m))
            points[0] = eta_l
        if m < M:
            alpha_u = math.asinh((eta_u - eta_c) / d_u)
            j = np.arange(1, M - m)
            points[m + 1:M] = eta_c + d_u * np.sinh(alpha_u * j / (M - m))
            points[M] = eta_u
    if np.any(np.diff(points) <= 0):
        raise ParameterError("partition is not strictly increasing; reduce M or widen the region")
    return points


def partition_multi(
    eta_min: float,
    eta_max: float,
    concentration: Sequence[float],
    budgets: Sequence[int],
    positions: Sequence[int],
    d_lower: Sequence[float],
    d_upper: Sequence[float],
) -> Partition:
    """Concatenate one sinh segment per concentration point.

    Regions are split at midpoints between consecutive concentration points; each
    junction appears once. ``budgets[j]`` is the subinterval count of region j and
    ``positions[j]`` the index of its concentration point inside the region.
    """
    etas = [float(e) for e in concentration]
    J = len(etas)
    if J == 0 or not (len(budgets) == len(positions) == len(d_lower) == len(d_upper) == J):
        raise ParameterError("per-region parameters must match the concentration points")
    if any(b <= a for a, b in zip(etas, etas[1:])):
        raise ParameterError("concentration points must be strictly increasing")
    if etas[0] < eta_min or etas[-1] > eta_max:
        raise ParameterError("concentration points must lie in [eta_min, eta_max]")

    bounds = [eta_min] + [0.5 * (x + y) for x, y in zip(etas, etas[1:])] + [eta_max]
    pieces = []
    regions = []
    for j in range(J):
        segment = partition_one(bounds[j], bounds[j + 1], etas[j], budgets[j], positions[j], d_lower[j], d_upper[j])
        pieces.append(segment if j == 0 else segment[1:])
        regions.append(Region(etas[j], int(budgets[j]), int(positions[j]), float(d_lower[j]), float(d_upper[j])))
    points = np.concatenate(pieces)
    return Partition(points=points, eta_prime=max(abs(eta_min), abs(eta_max)), regions=tuple(regions))


def _allocate(total: int, weights: np.ndarray, minimum: np.ndarray) -> np.ndarray:
    """Integer split of ``total`` proportional to ``weights`` (largest remainder)."""
    spare = total - int(minimum.sum())
    if spare < 0:
        raise ParameterError(f"P={total} too small for {weights.size} regions")
    raw = spare * weights / weights.sum()
    counts = np.floor(raw).astype(int)
    remainder = spare - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:remainder]] += 1
    return counts + minimum


def build_partition(
    cf: CharFn, eta_prime: float, P: int, config: Optional[SamplerConfig] = None
) -> Partition:
    """P samples on [-eta', eta'] clustered around the critical points of ``cf``.

    Region budgets are proportional to region width and each concentration point
    sits at the proportional position inside its region; d_l = d_u = width times
    ``density_fraction``.
    """
    config = config or SamplerConfig()
    if config.critical_points is not None:
        points = sorted({float(x) for x in config.critical_points if -eta_prime <= x <= eta_prime})
        points = points or [0.0]
    else:
        points = detect_critical_points(cf, eta_prime, config.prescan, config.max_points)

    etas = np.array(points)
    bounds = np.concatenate([[-eta_prime], 0.5 * (etas[1:] + etas[:-1]), [eta_prime]])
    widths = np.diff(bounds)
    at_lower = etas == bounds[:-1]
    at_upper = etas == bounds[1:]
    minimum = np.where(at_lower | at_upper, 1, 2)
    budgets = _allocate(P - 1, widths, minimum)

    positions = np.rint(budgets * (etas - bounds[:-1]) / widths).astype(int)
    positions = np.where(at_lower, 0, np.where(at_upper, budgets, np.clip(positions, 1, budgets - 1)))
    d = config.density_fraction * widths
    partition = partition_multi(-eta_prime, eta_prime, etas, budgets, positions, d, d)
    logger.info(
        "Partition built",
        points=partition.size,
        regions=len(points),
        spacing_ratio=partition.spacing_ratio,
    )
    return partition


def tensor_grid(px: Partition, py: Partition) -> np.ndarray:
    """All (eta_x, eta_y) pairs of two axis partitions, shape (Px * Py, 2)."""
    gx, gy = np.meshgrid(px.points, py.points, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel()], axis=1)
