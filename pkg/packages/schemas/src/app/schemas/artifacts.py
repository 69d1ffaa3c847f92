from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .models import LinearTransform

THETA_SCHEMA_VERSION = 1


# --- Trained parameters, persisted as theta.json ---
class ThetaDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: int = THETA_SCHEMA_VERSION
    network: Literal["gaussian_1d", "gaussian_2d"]
    # 1D network: beta * exp(-(w x + b)^2)
    beta: List[float]
    w: Optional[List[float]] = None
    b: Optional[List[float]] = None
    # 2D mixture: beta * N(mu, Sigma(sigma, rho))
    mu1: Optional[List[float]] = None
    mu2: Optional[List[float]] = None
    sigma1: Optional[List[float]] = None
    sigma2: Optional[List[float]] = None
    rho: Optional[List[float]] = None

    transform: LinearTransform = Field(default_factory=LinearTransform)
    model_kind: str
    model_hash: str = Field(..., description="SHA-256 of the model specification JSON")
    partition_digest: str = Field(..., description="SHA-256 of the Fourier sample grid")
    eta_prime: float
    seed: int
    final_loss: Optional[float] = None
    passed: bool = False

    @model_validator(mode="after")
    def _fields_for_network(self) -> "ThetaDocument":
        n = len(self.beta)
        if self.network == "gaussian_1d":
            required = (self.w, self.b)
        else:
            required = (self.mu1, self.mu2, self.sigma1, self.sigma2, self.rho)
        if any(v is None or len(v) != n for v in required):
            raise ValueError(f"{self.network} parameters must all have length {n}")
        return self


class HistoryRow(BaseModel):
    epoch: int
    phase: Literal["amsgrad", "adam"]
    mse: float
    mae: float
    total: float


# --- Diagnostics block written next to theta.json ---
class Diagnostics(BaseModel):
    final_mse: Optional[float] = None
    final_mae: Optional[float] = None
    final_loss: Optional[float] = None
    loss_threshold: float
    passed: bool
    restarts: int = 0
    eta_prime: float
    concentration_points: List[float] = Field(default_factory=list)
    mass: float
    nonneg_loss: Optional[float] = None
    density_window: Optional[List[float]] = None
    # Spatial errors against a density oracle, when one exists
    density_l1: Optional[float] = None
    density_l2: Optional[float] = None
    density_mpe: Optional[float] = None
    # Fourier-domain errors on [-eta', eta'] (squared-integral convention for L2)
    fourier: Dict[str, float] = Field(default_factory=dict)
    phase_best: Dict[str, float] = Field(default_factory=dict)
    improvement_fraction: Optional[float] = None
