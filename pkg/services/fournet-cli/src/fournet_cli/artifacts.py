"""Reading and writing run configurations and artifacts.

theta.json is written with sorted keys and ``repr`` floats so identical parameters
always produce byte-identical files; tables go through pandas.
"""

import json
from dataclasses import asdict, is_dataclass
from pathlib import Path
from typing import Any, Iterable, Optional, Union

import numpy as np
import pandas as pd
import structlog
import yaml
from pydantic import BaseModel, ValidationError

from app.fournet.errors import ConfigError, StaleThetaError
from app.fournet.gaussnet import NetParams1D, NetParams2D
from app.fournet.sampler import Partition
from app.fournet.trainer import TrainResult
from app.schemas.artifacts import HistoryRow, ThetaDocument
from app.schemas.models import model_hash
from app.schemas.run import RunConfig

logger = structlog.get_logger()

NetParams = Union[NetParams1D, NetParams2D]


def _describe(exc: ValidationError) -> str:
    parts = []
    for error in exc.errors():
        where = ".".join(str(p) for p in error["loc"]) or "<root>"
        parts.append(f"{where}: {error['msg']}")
    return "; ".join(parts)


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """Parse a YAML run configuration into a RunConfig.

    Raises:
        ConfigError: the file is missing, is not YAML or violates a field invariant
            (the message names the offending field).
    """
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid config {path}: {_describe(exc)}") from exc


# --- theta.json ---
def theta_document(
    result: TrainResult,
    config: RunConfig,
    digest: str,
    eta_prime: float,
) -> ThetaDocument:
    theta = result.theta
    common = dict(
        transform=config.transform,
        model_kind=config.model.kind,
        model_hash=model_hash(config.model),
        partition_digest=digest,
        eta_prime=float(eta_prime),
        seed=result.seed,
        final_loss=None if result.final_loss is None else float(result.final_loss.total),
        passed=result.passed,
    )
    if isinstance(theta, NetParams1D):
        return ThetaDocument(
            network="gaussian_1d",
            beta=theta.beta.tolist(),
            w=theta.w.tolist(),
            b=theta.b.tolist(),
            **common,
        )
    return ThetaDocument(
        network="gaussian_2d",
        beta=theta.beta.tolist(),
        mu1=theta.mu[:, 0].tolist(),
        mu2=theta.mu[:, 1].tolist(),
        sigma1=theta.sigma[:, 0].tolist(),
        sigma2=theta.sigma[:, 1].tolist(),
        rho=theta.rho.tolist(),
        **common,
    )


def network_from_document(doc: ThetaDocument) -> NetParams:
    if doc.network == "gaussian_1d":
        return NetParams1D(beta=np.array(doc.beta), w=np.array(doc.w), b=np.array(doc.b))
    return NetParams2D(
        beta=np.array(doc.beta),
        mu=np.column_stack([doc.mu1, doc.mu2]),
        sigma=np.column_stack([doc.sigma1, doc.sigma2]),
        rho=np.array(doc.rho),
    )


def write_json(path: Path, document: BaseModel) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(document.model_dump(mode="json"), sort_keys=True, indent=2)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def read_theta(path: Union[str, Path]) -> ThetaDocument:
    path = Path(path)
    try:
        return ThetaDocument.model_validate_json(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"theta file not found: {path}") from exc
    except ValidationError as exc:
        raise ConfigError(f"invalid theta file {path}: {_describe(exc)}") from exc


def check_theta(doc: ThetaDocument, config: RunConfig) -> None:
    """Refuse a theta.json fitted for another model or transform."""
    if doc.model_hash != model_hash(config.model):
        raise StaleThetaError(
            f"theta was fitted for a different {doc.model_kind} specification (model hash mismatch)"
        )
    if doc.transform != config.transform:
        raise StaleThetaError(
            f"theta was fitted under transform a={doc.transform.a}, c={doc.transform.c}; "
            f"config asks for a={config.transform.a}, c={config.transform.c}"
        )


# --- tables ---
def write_table(path: Path, rows: Iterable[Any], columns: Optional[list] = None) -> Path:
    """CSV of dataclass or pydantic rows (or a ready DataFrame)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(rows, pd.DataFrame):
        frame = rows
    else:
        records = []
        for row in rows:
            if is_dataclass(row):
                records.append(asdict(row))
            elif isinstance(row, BaseModel):
                records.append(row.model_dump())
            else:
                records.append(dict(row))
        frame = pd.DataFrame.from_records(records, columns=columns)
    frame.to_csv(path, index=False, float_format="%.10g")
    logger.info("Table written", path=str(path), rows=len(frame))
    return path


def write_history(path: Path, history: Iterable[HistoryRow]) -> Path:
    return write_table(path, history, columns=["epoch", "phase", "mse", "mae", "total"])


def write_partition(path: Path, partition: Partition) -> Path:
    return partition.to_csv(path)
