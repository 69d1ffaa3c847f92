"""Pipeline commands behind the ``fournet`` subcommands.

Each command takes a validated RunConfig (plus a theta document where it prices)
and writes its artifacts under the output directory, returning the written paths.
"""

import hashlib
import math
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
import structlog

from app.fournet.charlib import (
    CharFn,
    apply_transform,
    characteristic_function,
    check_branch_continuity,
    marginal_cf,
    merton_density_reference,
    price_convention,
)
from app.fournet.cosref import (
    CosConfig,
    cos_price_european,
    density_comparison,
    inversion_price_european,
    merton_reference_price,
)
from app.fournet.errors import ConfigError
from app.fournet.gaussnet import (
    NetParams1D,
    NetParams2D,
    density_window,
    envelope,
    eval_cf_2d,
    eval_density,
    eval_density_2d,
    recover_original,
    total_mass,
)
from app.fournet.pricer import PayoffSpec, bermudan_convergence, price_table
from app.fournet.quadint import (
    default_grid,
    fourier_metrics,
    fourier_metrics_2d,
    metric_L1,
    metric_L2,
    metric_MPE,
    nonneg_loss,
)
from app.fournet.sampler import build_partition, find_eta_prime, tensor_grid
from app.fournet.trainer import (
    TrainResult,
    fit_with_restarts,
    loss_history_monotonicity_report,
    train,
    train_2d,
)
from app.schemas.artifacts import Diagnostics, ThetaDocument
from app.schemas.models import HestonSpec, MertonSpec
from app.schemas.run import RunConfig, SamplerConfig

from .artifacts import (
    check_theta,
    network_from_document,
    theta_document,
    write_history,
    write_json,
    write_partition,
    write_table,
)

logger = structlog.get_logger()


def _eta_prime(cf: CharFn, sampler: SamplerConfig) -> float:
    if sampler.eta_prime is not None:
        return float(sampler.eta_prime)
    return find_eta_prime(cf, sampler.eps1, sampler.eta_cap)


def _phase_summary(result: TrainResult) -> Tuple[Dict[str, float], Optional[float]]:
    if not result.history:
        return {}, None
    report = loss_history_monotonicity_report(result.history)
    return report.best_by_phase, report.improvement_fraction


def _density_errors(model: MertonSpec, recovered: NetParams1D) -> Dict[str, float]:
    """Spatial L1, squared L2 and MPE against the Merton series."""
    reference = lambda x: merton_density_reference(x, model.T, model)
    fitted = lambda x: eval_density(recovered, x)
    A = envelope(recovered)
    tol = dict(abs_tol=1e-14, rel_tol=1e-8)
    return {
        "density_l1": metric_L1(reference, fitted, A, **tol),
        "density_l2": metric_L2(reference, fitted, A, **tol),
        "density_mpe": metric_MPE(reference, fitted, default_grid(recovered)),
    }


def _fit_1d(config: RunConfig) -> Tuple[TrainResult, Diagnostics, str, float, object]:
    cf_y = apply_transform(characteristic_function(config.model), config.transform)
    eta_prime = _eta_prime(cf_y, config.sampler)
    if isinstance(config.model, HestonSpec):
        check_branch_continuity(cf_y, eta_prime)
    partition = build_partition(cf_y, eta_prime, config.train.P, config.sampler)
    result = fit_with_restarts(lambda tc: train(cf_y, partition, tc), config.train)

    theta = result.theta
    recovered = recover_original(theta, config.transform)
    best, fraction = _phase_summary(result)
    extra = _density_errors(config.model, recovered) if isinstance(config.model, MertonSpec) else {}
    diagnostics = Diagnostics(
        final_mse=None if result.final_loss is None else result.final_loss.mse,
        final_mae=None if result.final_loss is None else result.final_loss.mae,
        final_loss=None if result.final_loss is None else result.final_loss.total,
        loss_threshold=config.train.loss_threshold,
        passed=result.passed,
        restarts=result.restarts,
        eta_prime=eta_prime,
        concentration_points=[region.eta for region in partition.regions],
        mass=total_mass(recovered),
        nonneg_loss=nonneg_loss(recovered),
        density_window=list(density_window(recovered)),
        fourier=fourier_metrics(cf_y, theta, eta_prime),
        phase_best=best,
        improvement_fraction=fraction,
        **extra,
    )
    return result, diagnostics, partition.digest(), eta_prime, partition


def _fit_2d(config: RunConfig) -> Tuple[TrainResult, Diagnostics, str, float, None]:
    cf = characteristic_function(config.model)
    side = math.isqrt(config.train.P)
    partitions = []
    for axis in range(2):
        marginal = marginal_cf(cf, axis)
        partitions.append(build_partition(marginal, _eta_prime(marginal, config.sampler), side, config.sampler))
    eta_prime = max(p.eta_prime for p in partitions)
    grid = tensor_grid(*partitions)
    digest = hashlib.sha256(np.ascontiguousarray(grid).tobytes()).hexdigest()
    result = fit_with_restarts(lambda tc: train_2d(cf, grid, tc), config.train)

    theta: NetParams2D = result.theta
    fitted = lambda p: eval_cf_2d(theta, p)
    spread = float(np.max(np.abs(theta.mu) + 8.0 * theta.sigma))
    ticks = np.linspace(-spread, spread, 201)
    gx, gy = np.meshgrid(ticks, ticks, indexing="ij")
    density = eval_density_2d(theta, np.stack([gx, gy], axis=-1))
    best, fraction = _phase_summary(result)
    diagnostics = Diagnostics(
        final_mse=None if result.final_loss is None else result.final_loss.mse,
        final_mae=None if result.final_loss is None else result.final_loss.mae,
        final_loss=None if result.final_loss is None else result.final_loss.total,
        loss_threshold=config.train.loss_threshold,
        passed=result.passed,
        restarts=result.restarts,
        eta_prime=eta_prime,
        concentration_points=[],
        mass=float(np.sum(theta.beta)),
        nonneg_loss=float(max(0.0, -np.min(density))),
        fourier=fourier_metrics_2d(cf, fitted, eta_prime),
        phase_best=best,
        improvement_fraction=fraction,
    )
    return result, diagnostics, digest, eta_prime, None


def cmd_fit(config: RunConfig, out_dir: Path) -> Dict[str, Path]:
    """Sample, train and write theta.json, history.csv, diagnostics.json."""
    fit = _fit_2d if config.model.dimension == 2 else _fit_1d
    result, diagnostics, digest, eta_prime, partition = fit(config)
    paths = {
        "theta": write_json(out_dir / "theta.json", theta_document(result, config, digest, eta_prime)),
        "history": write_history(out_dir / "history.csv", result.history),
        "diagnostics": write_json(out_dir / "diagnostics.json", diagnostics),
    }
    if partition is not None:
        paths["partition"] = write_partition(out_dir / "partition.csv", partition)
    logger.info(
        "Fit completed",
        model=config.model.kind,
        final_loss=diagnostics.final_loss,
        passed=diagnostics.passed,
        restarts=diagnostics.restarts,
    )
    return paths


def _network_1d(config: RunConfig, doc: ThetaDocument) -> NetParams1D:
    check_theta(doc, config)
    theta = network_from_document(doc)
    if not isinstance(theta, NetParams1D):
        raise ConfigError("pricing needs a one-dimensional network")
    return theta


def _reference(config: RunConfig, cf: CharFn, payoff: PayoffSpec, T: float, index: int) -> Optional[float]:
    section = config.european
    if section.reference_method == "given":
        return section.references[index]
    if section.reference_method == "merton_analytic":
        if not isinstance(config.model, MertonSpec):
            raise ConfigError("merton_analytic references need a merton model")
        return merton_reference_price(config.model, section.s0, payoff.strike, section.r, T, section.kind)
    if section.reference_method == "inversion":
        return inversion_price_european(cf, payoff, section.r, T)
    return cos_price_european(cf, payoff, section.r, T, CosConfig.from_cumulants(cf, section.cos_terms))


def cmd_price(config: RunConfig, doc: ThetaDocument, out_dir: Path) -> Dict[str, Path]:
    """European price table: strike, reference, computed, relative error."""
    section = config.european
    if section is None:
        raise ConfigError("config has no 'european' section")
    if section.convention != price_convention(config.model):
        raise ConfigError(
            f"european.convention={section.convention} but {config.model.kind} describes "
            f"{price_convention(config.model)}"
        )
    theta = _network_1d(config, doc)
    T = section.maturity or config.model.T
    cf = characteristic_function(config.model, T)
    payoffs = [PayoffSpec(section.kind, k, section.convention, section.s0) for k in section.strikes]
    references = [_reference(config, cf, p, T, i) for i, p in enumerate(payoffs)]
    rows = price_table(theta, config.transform, payoffs, section.r, T, section.x_min, section.x_max, references)
    return {"prices": write_table(out_dir / "prices.csv", rows)}


def cmd_bermudan(config: RunConfig, doc: ThetaDocument, out_dir: Path, workers: int = 1) -> Dict[str, Path]:
    """Bermudan put convergence table over the configured grid sizes."""
    section = config.bermudan
    if section is None:
        raise ConfigError("config has no 'bermudan' section")
    if price_convention(config.model) != "log_return":
        raise ConfigError("Bermudan pricing needs a log-return transition density")
    if not math.isclose(config.model.T, section.dt, rel_tol=1e-12):
        raise ConfigError(f"network horizon T={config.model.T} differs from bermudan.dt={section.dt}")
    theta = _network_1d(config, doc)
    rows = bermudan_convergence(
        theta, config.transform, section.strike, section.dividend, section.r,
        section.dates, section.s0, section.grid_sizes, section.half_width, workers,
    )
    if section.benchmark is not None:
        logger.info(
            "Bermudan benchmark comparison",
            finest_Q=rows[-1].Q,
            price=rows[-1].price,
            benchmark=section.benchmark,
            abs_error=abs(rows[-1].price - section.benchmark),
        )
    return {"convergence": write_table(out_dir / "bermudan.csv", rows)}


def cmd_compare_cos(config: RunConfig, doc: ThetaDocument, out_dir: Path) -> Dict[str, Path]:
    """FourNet vs COS densities on a grid, plus a summary of their minima."""
    section = config.compare_cos
    if section is None:
        raise ConfigError("config has no 'compare_cos' section")
    theta = _network_1d(config, doc)
    grid = np.linspace(section.x_min, section.x_max, section.points)
    comparison = density_comparison(
        characteristic_function(config.model), theta, config.transform, grid,
        section.terms, section.cos_range,
    )
    summary = [{"method": name, "min_density": value} for name, value in comparison.minima.items()]
    return {
        "densities": write_table(out_dir / "compare_cos.csv", comparison.table),
        "summary": write_table(out_dir / "compare_cos_summary.csv", summary),
    }


def parse_grid(spec: str) -> Tuple[float, float, int]:
    """``x_min:x_max:n`` -> (x_min, x_max, n); rejects empty grids."""
    try:
        lo, hi, n = spec.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError as exc:
        raise ConfigError(f"grid must look like x_min:x_max:n, got {spec!r}") from exc
    if n < 1 or lo > hi or (n > 1 and lo == hi):
        raise ConfigError(f"empty evaluation grid {spec!r}")
    return lo, hi, n


def cmd_export_density(doc: ThetaDocument, grid: Tuple[float, float, int], out_dir: Path) -> Dict[str, Path]:
    """(x, density) pairs of the recovered network on a uniform grid."""
    lo, hi, n = grid
    if n < 1:
        raise ConfigError("empty evaluation grid")
    x = np.linspace(lo, hi, n)
    theta = network_from_document(doc)
    if isinstance(theta, NetParams1D):
        recovered = recover_original(theta, doc.transform)
        table = [{"x": float(v), "density": float(d)} for v, d in zip(x, eval_density(recovered, x))]
    else:
        gx, gy = np.meshgrid(x, x, indexing="ij")
        density = eval_density_2d(theta, np.stack([gx, gy], axis=-1))
        table = [
            {"x1": float(a), "x2": float(b), "density": float(d)}
            for a, b, d in zip(gx.ravel(), gy.ravel(), density.ravel())
        ]
    return {"density": write_table(out_dir / "density.csv", table)}
