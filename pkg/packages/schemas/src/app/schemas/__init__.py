"""Pydantic contracts for model specifications, run configurations and artifacts"""

from .artifacts import Diagnostics, HistoryRow, ThetaDocument
from .models import (
    CGMYSpec,
    HestonSpec,
    HQHSpec,
    KouSpec,
    LinearTransform,
    Merton2DSpec,
    MertonSpec,
    ModelSpec,
    model_hash,
    parse_model_spec,
)
from .run import (
    BermudanConfig,
    CompareCosConfig,
    EuropeanConfig,
    ExportConfig,
    RunConfig,
    SamplerConfig,
    TrainConfig,
)

__all__ = [
    "BermudanConfig",
    "CGMYSpec",
    "CompareCosConfig",
    "Diagnostics",
    "EuropeanConfig",
    "ExportConfig",
    "HestonSpec",
    "HistoryRow",
    "HQHSpec",
    "KouSpec",
    "LinearTransform",
    "Merton2DSpec",
    "MertonSpec",
    "ModelSpec",
    "RunConfig",
    "SamplerConfig",
    "ThetaDocument",
    "TrainConfig",
    "model_hash",
    "parse_model_spec",
]
