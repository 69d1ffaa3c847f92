"""Model specifications for the characteristic-function catalog.

Field names are the keys used in the YAML run configurations (see
docs/CONFIGURATION.md). Every model carries its horizon ``T`` in years.
"""

import hashlib
import math
from typing import Annotated, Any, ClassVar, Dict, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, model_validator


class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dimension: ClassVar[int] = 1


# --- Lévy models with an explicit drift inside the exponent ---
class MertonSpec(_Spec):
    """Merton jump diffusion: Brownian part plus Poisson-driven normal log-jumps.

    ``mu`` is the drift of the exponent ``i(mu - sigma^2/2)eta``; when it is omitted
    the risk-neutral value ``r - lam*kappa`` is derived from ``r``.
    """

    kind: Literal["merton"] = "merton"
    T: float = Field(..., gt=0, description="Horizon in years")
    sigma: float = Field(..., gt=0, description="Diffusion volatility per sqrt(year)")
    lam: float = Field(..., ge=0, description="Jump intensity per year")
    jump_mean: float = Field(..., description="Mean of the normal log-jump")
    jump_std: float = Field(..., gt=0, description="Std of the normal log-jump")
    mu: Optional[float] = Field(None, description="Drift; derived from r when omitted")
    r: Optional[float] = Field(None, description="Risk-free rate used to derive mu")

    @property
    def compensator(self) -> float:
        return math.exp(self.jump_mean + 0.5 * self.jump_std**2) - 1.0

    @model_validator(mode="after")
    def _derive_drift(self) -> "MertonSpec":
        if self.mu is None:
            if self.r is None:
                raise ValueError("either mu or r must be given")
            self.mu = self.r - self.lam * self.compensator
        return self

    @classmethod
    def risk_neutral(
        cls, r: float, sigma: float, lam: float, jump_mean: float, jump_std: float, T: float
    ) -> "MertonSpec":
        return cls(T=T, sigma=sigma, lam=lam, jump_mean=jump_mean, jump_std=jump_std, r=r)


class KouSpec(_Spec):
    """Kou double-exponential jump diffusion (rate parameters xi1 up, xi2 down)."""

    kind: Literal["kou"] = "kou"
    T: float = Field(..., gt=0)
    sigma: float = Field(..., gt=0)
    lam: float = Field(..., ge=0)
    q1: float = Field(..., gt=0, lt=1, description="Probability of an upward jump")
    xi1: float = Field(..., gt=1, description="Rate of upward jumps")
    xi2: float = Field(..., gt=0, description="Rate of downward jumps")
    mu: Optional[float] = None
    r: Optional[float] = None

    @property
    def q2(self) -> float:
        return 1.0 - self.q1

    @property
    def compensator(self) -> float:
        return self.q1 * self.xi1 / (self.xi1 - 1.0) + self.q2 * self.xi2 / (self.xi2 + 1.0) - 1.0

    @model_validator(mode="after")
    def _derive_drift(self) -> "KouSpec":
        if self.mu is None:
            if self.r is None:
                raise ValueError("either mu or r must be given")
            self.mu = self.r - self.lam * self.compensator
        return self

    @classmethod
    def risk_neutral(
        cls, r: float, sigma: float, lam: float, q1: float, xi1: float, xi2: float, T: float
    ) -> "KouSpec":
        return cls(T=T, sigma=sigma, lam=lam, q1=q1, xi1=xi1, xi2=xi2, r=r)


class CGMYSpec(_Spec):
    kind: Literal["cgmy"] = "cgmy"
    T: float = Field(..., gt=0)
    r: float
    C: float = Field(..., ge=0)
    G: float = Field(..., ge=0)
    M: float = Field(..., gt=1, description="Must exceed 1 for the martingale correction")
    Y: float = Field(..., lt=2)

    @model_validator(mode="after")
    def _non_degenerate(self) -> "CGMYSpec":
        if self.Y in (0.0, 1.0):
            raise ValueError(f"Y={self.Y} is degenerate (Gamma(-Y) has a pole)")
        if self.G == 0 and self.Y < 0:
            raise ValueError("G = 0 requires Y > 0")
        return self


# --- Stochastic volatility models (cf of ln S_T, S0 embedded) ---
class HestonSpec(_Spec):
    kind: Literal["heston"] = "heston"
    T: float = Field(..., gt=0)
    r: float
    kappa: float = Field(..., gt=0, description="Mean-reversion speed")
    vbar: float = Field(..., gt=0, description="Long-run variance")
    sigma: float = Field(..., gt=0, description="Volatility of variance")
    rho: float = Field(..., ge=-1, le=1)
    v0: float = Field(..., gt=0, description="Initial variance")
    s0: float = Field(..., gt=0, description="Initial asset price")


class HQHSpec(HestonSpec):
    """Heston dynamics plus Queue-Hawkes clustered normal jumps."""

    kind: Literal["hqh"] = "hqh"  # type: ignore[assignment]
    q0: float = Field(..., ge=0, description="Initial queue length")
    alpha: float = Field(..., gt=0, description="Clustering rate")
    beta: float = Field(..., gt=0, description="Expiration rate")
    lam_star: float = Field(..., ge=0, description="Baseline intensity")
    jump_mean: float
    jump_std: float = Field(..., gt=0)

    def embedded_heston(self) -> HestonSpec:
        return HestonSpec(
            T=self.T, r=self.r, kappa=self.kappa, vbar=self.vbar, sigma=self.sigma,
            rho=self.rho, v0=self.v0, s0=self.s0,
        )


# --- Two-dimensional model ---
class Merton2DSpec(_Spec):
    kind: Literal["merton2d"] = "merton2d"
    dimension: ClassVar[int] = 2

    T: float = Field(..., gt=0)
    r: float
    sigma1: float = Field(..., gt=0)
    sigma2: float = Field(..., gt=0)
    rho: float = Field(..., ge=-1, le=1)
    lam: float = Field(..., ge=0)
    jump_mean1: float
    jump_mean2: float
    jump_std1: float = Field(..., gt=0)
    jump_std2: float = Field(..., gt=0)
    jump_rho: float = Field(..., ge=-1, le=1)

    @property
    def compensators(self) -> tuple:
        return (
            math.exp(self.jump_mean1 + 0.5 * self.jump_std1**2) - 1.0,
            math.exp(self.jump_mean2 + 0.5 * self.jump_std2**2) - 1.0,
        )


ModelSpec = Annotated[
    Union[MertonSpec, KouSpec, CGMYSpec, HestonSpec, HQHSpec, Merton2DSpec],
    Field(discriminator="kind"),
]

_model_adapter: TypeAdapter = TypeAdapter(ModelSpec)


def parse_model_spec(data: Dict[str, Any]) -> Any:
    """Build the model variant selected by ``data['kind']``."""
    return _model_adapter.validate_python(data)


def model_hash(model: BaseModel) -> str:
    """SHA-256 of the canonical JSON form of a model specification."""
    return hashlib.sha256(model.model_dump_json().encode("utf-8")).hexdigest()


class LinearTransform(BaseModel):
    """Y = aX + c applied to the underlying before fitting."""

    model_config = ConfigDict(extra="forbid")

    a: float = Field(1.0, gt=0, description="Scale, strictly positive")
    c: float = Field(0.0, description="Shift")

    @property
    def is_identity(self) -> bool:
        return self.a == 1.0 and self.c == 0.0
