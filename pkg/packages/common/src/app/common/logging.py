import logging
import sys
from typing import Optional

import structlog

from .config import Settings, get_settings


def setup_logging(
    settings: Optional[Settings] = None,
    log_level: Optional[str] = None,
    log_format: Optional[str] = None,
) -> None:
    """Setup structured logging configuration.

    Explicit ``log_level``/``log_format`` arguments win over the settings values
    (the CLI passes its flags through here).
    """
    settings = settings or get_settings()
    level = (log_level or settings.log_level).upper()
    fmt = (log_format or settings.log_format).lower()

    logging.basicConfig(
        format="%(message)s",
        stream=sys.stderr,
        level=getattr(logging, level, logging.INFO),
        force=True,
    )

    if fmt == "json":
        processors = [
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            structlog.processors.JSONRenderer(),
        ]
    else:
        processors = [
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="%Y-%m-%d %H:%M:%S"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.dev.ConsoleRenderer(),
        ]

    structlog.configure(
        processors=processors,
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )


class TrainingLogger:
    """Logger for network training runs."""

    def __init__(self):
        self.logger = structlog.get_logger("fournet.training")

    def log_phase_start(self, phase: str, epochs: int, lr: float, batches: int) -> None:
        """Log start of an optimizer phase."""
        self.logger.info(
            "Training phase started",
            phase=phase,
            epochs=epochs,
            lr=lr,
            batches_per_epoch=batches,
        )

    def log_epoch(self, epoch: int, phase: str, mse: float, mae: float, total: float) -> None:
        """Log full-grid loss at the end of an epoch."""
        self.logger.debug(
            "Epoch completed",
            epoch=epoch,
            phase=phase,
            mse=mse,
            mae=mae,
            total=total,
        )

    def log_threshold_miss(self, final_loss: float, threshold: float, seed: int) -> None:
        """Log a run that finished above the loss threshold."""
        self.logger.warning(
            "Final loss above threshold",
            final_loss=final_loss,
            threshold=threshold,
            seed=seed,
        )

    def log_abort(self, epoch: int, phase: str, reason: str) -> None:
        """Log an aborted run."""
        self.logger.error(
            "Training aborted",
            epoch=epoch,
            phase=phase,
            reason=reason,
        )

    def log_restart(self, attempt: int, seed: int, best_loss: float) -> None:
        """Log a reseeded restart."""
        self.logger.info(
            "Training restarted",
            attempt=attempt,
            seed=seed,
            best_loss=best_loss,
        )


class PricingLogger:
    """Logger for pricing and reference computations."""

    def __init__(self):
        self.logger = structlog.get_logger("fournet.pricing")

    def log_window_warning(self, x_min: float, x_max: float, mass_outside: float) -> None:
        """Log an integration window that misses density mass."""
        self.logger.warning(
            "Pricing window too small",
            x_min=x_min,
            x_max=x_max,
            mass_outside=mass_outside,
        )

    def log_price(self, strike: float, price: float, reference: Optional[float] = None) -> None:
        """Log a single computed price."""
        self.logger.info(
            "Price computed",
            strike=strike,
            price=price,
            reference=reference,
        )

    def log_time_step(self, step: int, steps: int, grid_points: int) -> None:
        """Log a completed backward-induction step."""
        self.logger.debug(
            "Time step completed",
            step=step,
            steps=steps,
            grid_points=grid_points,
        )

    def log_convergence_row(self, Q: int, price: float, change: Optional[float], ratio: Optional[float]) -> None:
        """Log one row of a grid-refinement table."""
        self.logger.info(
            "Convergence row",
            Q=Q,
            price=price,
            change=change,
            ratio=ratio,
        )


# Global logger instances
training_logger = TrainingLogger()
pricing_logger = PricingLogger()
