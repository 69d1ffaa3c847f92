from functools import lru_cache
from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide settings with environment variable support (prefix ``FOURNET_``)."""

    model_config = SettingsConfigDict(
        env_prefix="FOURNET_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Logging
    log_level: str = "INFO"
    log_format: Literal["json", "console"] = "json"

    # Execution
    deterministic: bool = False
    workers: int = Field(1, ge=1)
    output_dir: str = "artifacts"

    # Quadrature defaults
    quad_abs_tol: float = Field(1e-10, gt=0)
    quad_rel_tol: float = Field(1e-10, gt=0)
    quad_limit: int = Field(10_000, ge=1)


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()


def reset_settings() -> None:
    """Drop the cached instance so the next ``get_settings`` re-reads the environment."""
    get_settings.cache_clear()
