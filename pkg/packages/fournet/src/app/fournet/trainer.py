"""Two-phase training of the network over a fixed Fourier sample grid.

Phase one runs AMSGrad at ``lr1`` for ``epochs1`` epochs, phase two Adam at ``lr2``
for ``epochs2`` epochs. Each epoch visits every grid point once in seeded shuffled
mini-batches; the full-grid loss is recorded at the end of every epoch.
"""

from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Tuple, Union

import numpy as np
import structlog

from app.common.logging import training_logger
from app.schemas.artifacts import HistoryRow
from app.schemas.run import TrainConfig

from .charlib import CharFn
from .errors import ParameterError, TrainingAbortedError
from .gaussnet import (
    LossValue,
    NetParams1D,
    NetParams2D,
    RawNet1D,
    RawNet2D,
    initialize_1d,
    initialize_2d,
)
from .sampler import Partition

logger = structlog.get_logger()

NetParams = Union[NetParams1D, NetParams2D]
RESEED_STRIDE = 7919


# --- optimizers ---
@dataclass(frozen=True)
class OptimState:
    m: np.ndarray
    v: np.ndarray
    v_max: Optional[np.ndarray] = None
    step: int = 0

    @classmethod
    def zeros(cls, size: int, amsgrad: bool = False) -> "OptimState":
        return cls(
            m=np.zeros(size),
            v=np.zeros(size),
            v_max=np.zeros(size) if amsgrad else None,
            step=0,
        )


def _check_step(state: OptimState, params: np.ndarray, grad: np.ndarray, lr: float) -> None:
    if not lr > 0:
        raise ParameterError("learning rate must be positive")
    if params.shape != grad.shape or state.m.shape != params.shape:
        raise ParameterError("optimizer shapes disagree")
    if not np.all(np.isfinite(grad)):
        bad = int(np.argmax(~np.isfinite(grad)))
        raise TrainingAbortedError(f"non-finite gradient component at index {bad}")


def adam_step(
    state: OptimState,
    params: np.ndarray,
    grad: np.ndarray,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> Tuple[OptimState, np.ndarray]:
    """Adam with bias correction. Pure: returns new state and parameters."""
    _check_step(state, params, grad, lr)
    step = state.step + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad**2
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + eps)
    return OptimState(m=m, v=v, v_max=state.v_max, step=step), new_params


def amsgrad_step(
    state: OptimState,
    params: np.ndarray,
    grad: np.ndarray,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> Tuple[OptimState, np.ndarray]:
    """AMSGrad: running element-wise max of the second moment, no bias correction."""
    _check_step(state, params, grad, lr)
    v_prev_max = state.v_max if state.v_max is not None else np.zeros_like(params)
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad**2
    v_max = np.maximum(v_prev_max, v)
    new_params = params - lr * m / (np.sqrt(v_max) + eps)
    return OptimState(m=m, v=v, v_max=v_max, step=state.step + 1), new_params


# --- gradient reduction ---
class GradientEngine:
    """Loss and gradient over a batch, evaluated in fixed-size chunks.

    With ``workers > 1`` chunks run on a thread pool. The deterministic flag sums
    chunk results in index order; otherwise they are summed as they complete.
    """

    def __init__(self, net: Union[RawNet1D, RawNet2D], chunk_size: int, workers: int, deterministic: bool):
        self.net = net
        self.chunk_size = chunk_size
        self.workers = workers
        self.deterministic = deterministic
        self._pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=True)

    def __call__(self, vec: np.ndarray, eta: np.ndarray, target: np.ndarray) -> Tuple[LossValue, np.ndarray]:
        size = target.shape[0]
        spans = [(s, min(s + self.chunk_size, size)) for s in range(0, size, self.chunk_size)]
        run = lambda span: self.net.chunk_sums(vec, eta[span[0]:span[1]], target[span[0]:span[1]])

        if self._pool is None or len(spans) == 1:
            results = map(run, spans)
        elif self.deterministic:
            results = self._pool.map(run, spans)
        else:
            results = (f.result() for f in as_completed([self._pool.submit(run, s) for s in spans]))

        sq = ab = 0.0
        grad = np.zeros_like(vec)
        for chunk_sq, chunk_ab, chunk_grad in results:
            sq += chunk_sq
            ab += chunk_ab
            grad += chunk_grad
        return LossValue(mse=sq / size, mae=ab / size), grad / size


def epoch_batches(rng: np.random.Generator, P: int, batch_size: int) -> Iterator[np.ndarray]:
    """Index batches of a seeded permutation of range(P); each index once."""
    order = rng.permutation(P)
    for start in range(0, P, batch_size):
        yield order[start:start + batch_size]


# --- training ---
@dataclass
class TrainResult:
    theta: NetParams
    history: List[HistoryRow] = field(default_factory=list)
    final_loss: Optional[LossValue] = None
    passed: bool = False
    seed: int = 0
    restarts: int = 0


@dataclass(frozen=True)
class MonotonicityReport:
    best_by_phase: Dict[str, float]
    improvement_fraction: float


def _phase_schedule(config: TrainConfig):
    return [
        ("amsgrad", config.epochs1, config.lr1, amsgrad_step),
        ("adam", config.epochs2, config.lr2, adam_step),
    ]


def _run(
    net: Union[RawNet1D, RawNet2D],
    theta0: NetParams,
    etas: np.ndarray,
    targets: np.ndarray,
    config: TrainConfig,
) -> TrainResult:
    vec = net.pack(theta0)
    last_finite = vec.copy()
    history: List[HistoryRow] = []
    rng = np.random.default_rng(config.seed)
    engine = GradientEngine(net, config.chunk_size, config.workers, config.deterministic)
    P = targets.shape[0]
    batches = -(-P // config.batch_size)
    epoch = 0
    final: Optional[LossValue] = None
    try:
        for phase, epochs, lr, step_fn in _phase_schedule(config):
            if epochs == 0:
                continue
            training_logger.log_phase_start(phase, epochs, lr, batches)
            state = OptimState.zeros(vec.size, amsgrad=phase == "amsgrad")
            for _ in range(epochs):
                epoch += 1
                for idx in epoch_batches(rng, P, config.batch_size):
                    _, grad = engine(vec, etas[idx], targets[idx])
                    if config.clip_gradients:
                        grad = np.clip(grad, -config.clip_value, config.clip_value)
                    try:
                        state, vec = step_fn(state, vec, grad, lr, config.beta1, config.beta2, config.eps_adam)
                    except TrainingAbortedError as exc:
                        training_logger.log_abort(epoch, phase, str(exc))
                        raise TrainingAbortedError(str(exc), net.unpack(last_finite), history) from exc
                loss = net.loss(vec, etas, targets)
                if not np.isfinite(loss.total) or not np.all(np.isfinite(vec)):
                    training_logger.log_abort(epoch, phase, "non-finite loss")
                    raise TrainingAbortedError(
                        f"non-finite loss at epoch {epoch}", net.unpack(last_finite), history
                    )
                last_finite = vec.copy()
                final = loss
                history.append(HistoryRow(epoch=epoch, phase=phase, mse=loss.mse, mae=loss.mae, total=loss.total))
                training_logger.log_epoch(epoch, phase, loss.mse, loss.mae, loss.total)
    finally:
        engine.close()

    theta = net.unpack(vec) if history else theta0
    passed = final is not None and final.total <= config.loss_threshold
    if not passed:
        training_logger.log_threshold_miss(
            final.total if final is not None else float("nan"), config.loss_threshold, config.seed
        )
    return TrainResult(theta=theta, history=history, final_loss=final, passed=passed, seed=config.seed)


def train(
    cf_transformed: CharFn,
    partition: Partition,
    config: TrainConfig,
    init: Optional[NetParams1D] = None,
) -> TrainResult:
    """Fit a one-dimensional network to ``cf_transformed`` sampled on ``partition``.

    Args:
        cf_transformed: characteristic function of the (transformed) variable.
        partition: fixed Fourier sample grid built from the same function.
        config: optimizer settings.
        init: starting parameters; lattice initialization (jittered by
            ``config.init_jitter``) when omitted.

    Returns:
        TrainResult with the fitted parameters and the per-epoch history. A final
        loss above ``config.loss_threshold`` is logged as a warning and reported
        through ``passed``.
    """
    etas = partition.points
    targets = cf_transformed(etas)
    theta0 = init if init is not None else initialize_1d(
        cf_transformed, config.N, config.init_jitter, _init_rng(config)
    )
    return _run(RawNet1D(theta0.N), theta0, etas, targets, config)


def train_2d(
    cf: CharFn,
    grid: np.ndarray,
    config: TrainConfig,
    init: Optional[NetParams2D] = None,
) -> TrainResult:
    """Fit a bivariate mixture to ``cf`` sampled on ``grid`` of shape (P, 2)."""
    grid = np.asarray(grid, dtype=float)
    targets = cf(grid)
    theta0 = init if init is not None else initialize_2d(
        cf, config.N, config.init_jitter, _init_rng(config)
    )
    return _run(RawNet2D(theta0.N), theta0, grid, targets, config)


def fit_with_restarts(
    fit: Callable[[TrainConfig], TrainResult],
    config: TrainConfig,
) -> TrainResult:
    """Call ``fit`` with seeds seed, seed + 7919, ... until a run passes.

    Restarts also jitter the initial lattice by ``config.restart_jitter`` (unless
    ``init_jitter`` is already larger). At most ``config.max_restarts`` extra runs;
    the best run (lowest final loss) is returned with the number of restarts used.
    """
    best: Optional[TrainResult] = None
    for attempt in range(config.max_restarts + 1):
        attempt_config = restart_config(config, attempt)
        if attempt:
            training_logger.log_restart(
                attempt, attempt_config.seed, best.final_loss.total if best and best.final_loss else float("nan")
            )
        result = fit(attempt_config)
        if best is None or result.passed or _loss_of(result) < _loss_of(best):
            best = result
        if result.passed:
            break
    best.restarts = attempt
    return best


def restart_config(config: TrainConfig, attempt: int) -> TrainConfig:
    """Config for restart ``attempt``; attempt 0 is ``config`` itself."""
    if attempt == 0:
        return config
    return config.model_copy(
        update={
            "seed": config.seed + attempt * RESEED_STRIDE,
            "init_jitter": max(config.init_jitter, config.restart_jitter),
        }
    )


def _init_rng(config: TrainConfig) -> np.random.Generator:
    # separate stream from the batch shuffler seeded with config.seed
    return np.random.default_rng([config.seed, 1])


def _loss_of(result: TrainResult) -> float:
    return result.final_loss.total if result.final_loss is not None else float("inf")


def loss_history_monotonicity_report(history: List[HistoryRow]) -> MonotonicityReport:
    """Per-phase best loss and the fraction of epochs after the first that set a new best."""
    if not history:
        raise ParameterError("history must be non-empty")
    best_by_phase: Dict[str, float] = {}
    for row in history:
        best_by_phase[row.phase] = min(best_by_phase.get(row.phase, float("inf")), row.total)
    running = history[0].total
    improved = 0
    for row in history[1:]:
        if row.total < running:
            improved += 1
            running = row.total
    fraction = improved / (len(history) - 1) if len(history) > 1 else 0.0
    return MonotonicityReport(best_by_phase=best_by_phase, improvement_fraction=fraction)
