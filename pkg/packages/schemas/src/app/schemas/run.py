"""Run configuration sections.

One YAML document fully specifies a reproduction: the model, the transform, how
the Fourier grid is sampled, how the network is trained and which pricing
commands read which windows.
"""

import math
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .models import LinearTransform, ModelSpec


class TrainConfig(BaseModel):
    """Optimizer and grid settings. Defaults are the one-dimensional setup."""

    model_config = ConfigDict(extra="forbid")

    N: int = Field(45, ge=1, description="Neurons / mixture components")
    P: int = Field(1_000_000, ge=2, description="Fourier samples (2D: total over the tensor grid)")
    epochs1: int = Field(5, ge=0, description="AMSGrad epochs")
    epochs2: int = Field(100, ge=0, description="Adam epochs")
    lr1: float = Field(0.0015, gt=0)
    lr2: float = Field(0.0012, gt=0)
    batch_size: int = Field(1024, ge=1)
    seed: int = 0
    loss_threshold: float = Field(1e-6, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps_adam: float = Field(1e-8, gt=0)
    clip_gradients: bool = False
    clip_value: float = Field(1e3, gt=0)
    max_restarts: int = Field(3, ge=0)
    init_jitter: float = Field(
        0.0, ge=0, lt=0.5, description="Random shift of the initial lattice, as a fraction of its spacing"
    )
    restart_jitter: float = Field(0.25, ge=0, lt=0.5, description="init_jitter used by reseeded restarts")
    deterministic: bool = False
    workers: int = Field(1, ge=1)
    chunk_size: int = Field(256, ge=1, description="Samples per gradient chunk")

    @classmethod
    def defaults_1d(cls, **overrides) -> "TrainConfig":
        return cls(**overrides)

    @classmethod
    def defaults_2d(cls, **overrides) -> "TrainConfig":
        values = dict(epochs1=6, epochs2=40, lr1=0.04, lr2=0.00025)
        values.update(overrides)
        return cls(**values)


class SamplerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    eps1: float = Field(1e-7, gt=0, description="Fourier tail tolerance")
    eta_cap: float = Field(4096.0, gt=0)
    eta_prime: Optional[float] = Field(None, gt=0, description="Skip the search and use this value")
    prescan: int = Field(4096, ge=256)
    critical_points: Optional[List[float]] = Field(
        None, description="Override the detected concentration points"
    )
    density_fraction: float = Field(0.125, gt=0, description="d_l = d_u = fraction * region width")
    max_points: int = Field(16, ge=1)


class EuropeanConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["call", "put"] = "call"
    convention: Literal["log_return", "log_price"] = "log_return"
    s0: Optional[float] = Field(None, gt=0)
    r: float
    maturity: Optional[float] = Field(None, gt=0, description="Defaults to the model horizon")
    strikes: List[float] = Field(..., min_length=1)
    references: Optional[List[float]] = None
    reference_method: Literal["given", "merton_analytic", "cos", "inversion"] = "cos"
    x_min: float
    x_max: float
    cos_terms: int = Field(2048, ge=2)

    @model_validator(mode="after")
    def _consistent(self) -> "EuropeanConfig":
        if self.x_min >= self.x_max:
            raise ValueError("x_min must be below x_max")
        if self.convention == "log_return" and self.s0 is None:
            raise ValueError("s0 is required for the log_return convention")
        if self.references is not None and len(self.references) != len(self.strikes):
            raise ValueError("references must align with strikes")
        if self.reference_method == "given" and self.references is None:
            raise ValueError("reference_method 'given' needs references")
        if any(k <= 0 for k in self.strikes):
            raise ValueError("strikes must be positive")
        return self


class BermudanConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    s0: float = Field(..., gt=0)
    strike: float = Field(..., gt=0)
    dividend: float = Field(0.0, ge=0)
    r: float
    maturity: float = Field(..., gt=0)
    dt: float = Field(..., gt=0, description="Spacing between exercise dates")
    grid_sizes: List[int] = Field(default_factory=lambda: [200, 400, 800, 1600, 3200])
    half_width: float = Field(10.0, gt=0, description="Grid spans ln(s0) -/+ half_width")
    benchmark: Optional[float] = None

    @model_validator(mode="after")
    def _consistent(self) -> "BermudanConfig":
        steps = self.maturity / self.dt
        if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
            raise ValueError("maturity must be a positive multiple of dt")
        if any(q < 2 for q in self.grid_sizes) or sorted(self.grid_sizes) != self.grid_sizes:
            raise ValueError("grid_sizes must be increasing and at least 2")
        return self

    @property
    def dates(self) -> List[float]:
        steps = int(round(self.maturity / self.dt))
        return [self.dt * (m + 1) for m in range(steps)]


class CompareCosConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    terms: List[int] = Field(default_factory=lambda: [800, 1200])
    cos_range: Optional[Tuple[float, float]] = Field(
        None, description="Explicit truncation range; cumulant rule when omitted"
    )
    x_min: float
    x_max: float
    points: int = Field(2001, ge=2)


class ExportConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    x_min: float
    x_max: float
    points: int = Field(2001, ge=1)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = "run"
    model: ModelSpec
    transform: LinearTransform = Field(default_factory=LinearTransform)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    european: Optional[EuropeanConfig] = None
    bermudan: Optional[BermudanConfig] = None
    compare_cos: Optional[CompareCosConfig] = None
    export: Optional[ExportConfig] = None
    output_dir: str = "artifacts"

    @model_validator(mode="after")
    def _two_dimensional_limits(self) -> "RunConfig":
        if self.model.dimension == 2:
            if not self.transform.is_identity:
                raise ValueError("transform must be the identity for two-dimensional models")
            if any(s is not None for s in (self.european, self.bermudan, self.compare_cos)):
                raise ValueError("pricing sections are not supported for two-dimensional models")
            side = math.isqrt(self.train.P)
            if side < 2:
                raise ValueError("train.P too small for a two-dimensional grid")
        return self
