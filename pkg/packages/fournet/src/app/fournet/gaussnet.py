"""Gaussian-activation single-layer network and its exact Fourier transform.

The one-dimensional network is ``g(x) = sum_n beta_n exp(-(w_n x + b_n)^2)``. It is
a Gaussian mixture with means ``-b/w``, variances ``1/(2 w^2)`` and masses
``beta sqrt(pi)/|w|``, so its characteristic function has a closed form and the
loss over Fourier samples can be differentiated by hand.

The two-dimensional network is a weighted sum of bivariate normals parameterized by
means, spreads and correlations.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy.stats import norm

from app.schemas.models import LinearTransform

from .charlib import CharFn, cumulants, marginal_cf
from .errors import EvaluationError, ParameterError

SQRT_PI = math.sqrt(math.pi)

# rows per block when a (samples x neurons) matrix would get large
_BLOCK = 65_536


def _as_float_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    arr.setflags(write=False)
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class NetParams1D:
    """Network parameters theta = {beta_n, w_n, b_n}."""

    beta: np.ndarray
    w: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        beta = _as_float_array(self.beta, "beta")
        w = _as_float_array(self.w, "w")
        b = _as_float_array(self.b, "b")
        if beta.ndim != 1 or beta.size < 1:
            raise ParameterError("beta must be a non-empty vector")
        if w.shape != beta.shape or b.shape != beta.shape:
            raise ParameterError("beta, w and b must have the same length")
        if np.any(beta == 0):
            raise ParameterError("beta entries must be non-zero")
        if np.any(w == 0):
            raise ParameterError("w entries must be non-zero")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)

    @property
    def N(self) -> int:
        return int(self.beta.size)


@dataclass(frozen=True)
class NetParams2D:
    """Bivariate mixture: weights, means (N, 2), spreads (N, 2) and correlations."""

    beta: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        beta = _as_float_array(self.beta, "beta")
        mu = _as_float_array(self.mu, "mu")
        sigma = _as_float_array(self.sigma, "sigma")
        rho = _as_float_array(self.rho, "rho")
        n = beta.size
        if beta.ndim != 1 or n < 1:
            raise ParameterError("beta must be a non-empty vector")
        if mu.shape != (n, 2) or sigma.shape != (n, 2) or rho.shape != (n,):
            raise ParameterError("mu/sigma must be (N, 2) and rho (N,)")
        if np.any(sigma <= 0):
            raise ParameterError("sigma entries must be positive")
        if np.any(np.abs(rho) >= 1):
            raise ParameterError("rho entries must lie in (-1, 1)")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "rho", rho)

    @property
    def N(self) -> int:
        return int(self.beta.size)


@dataclass(frozen=True)
class MixtureView:
    """Gaussian-mixture reading of a NetParams1D."""

    means: np.ndarray
    variances: np.ndarray
    masses: np.ndarray

    @classmethod
    def from_params(cls, theta: NetParams1D) -> "MixtureView":
        return cls(
            means=-theta.b / theta.w,
            variances=1.0 / (2.0 * theta.w**2),
            masses=theta.beta * SQRT_PI / np.abs(theta.w),
        )

    @property
    def stds(self) -> np.ndarray:
        return np.sqrt(self.variances)

    def to_params(self) -> NetParams1D:
        """Back to network form with positive w."""
        w = 1.0 / np.sqrt(2.0 * self.variances)
        return NetParams1D(beta=self.masses * w / SQRT_PI, w=w, b=-self.means * w)

    def density(self, x: Union[float, np.ndarray]) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.sum(self.masses * norm.pdf(x[..., None], self.means, self.stds), axis=-1)


# --- one-dimensional evaluation ---
def eval_density(theta: NetParams1D, x: Union[float, np.ndarray]) -> np.ndarray:
    """Sum_n beta_n exp(-(w_n x + b_n)^2). May be negative."""
    x = np.asarray(x, dtype=float)
    flat = x.reshape(-1)
    out = np.empty(flat.shape)
    for start in range(0, flat.size, _BLOCK):
        z = flat[start:start + _BLOCK, None] * theta.w + theta.b
        out[start:start + _BLOCK] = np.exp(-(z**2)) @ theta.beta
    return out.reshape(x.shape)


def _cf_parts(theta: NetParams1D, eta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    amplitude = theta.beta * SQRT_PI / np.abs(theta.w)
    s = eta[:, None] / theta.w
    envelope = np.exp(-0.25 * s**2)
    phase = s * theta.b
    return np.cos(phase) * envelope @ amplitude, -np.sin(phase) * envelope @ amplitude


def eval_cf(theta: NetParams1D, eta: Union[float, np.ndarray]) -> np.ndarray:
    """Closed-form Fourier transform of ``eval_density``.

    Re = sum (beta sqrt(pi)/w) cos(eta b/w) exp(-eta^2/(4w^2)),
    Im = sum (beta sqrt(pi)/w) sin(-b eta/w) exp(-eta^2/(4w^2)).
    """
    eta = np.asarray(eta, dtype=float)
    flat = eta.reshape(-1)
    out = np.empty(flat.shape, dtype=complex)
    for start in range(0, flat.size, _BLOCK):
        re, im = _cf_parts(theta, flat[start:start + _BLOCK])
        out[start:start + _BLOCK] = re + 1j * im
    return out.reshape(eta.shape)


def total_mass(theta: NetParams1D) -> float:
    return float(np.sum(theta.beta * SQRT_PI / np.abs(theta.w)))


def envelope(theta: NetParams1D, k: float = 8.0) -> float:
    """max_n(|mu_n| + k sigma_n): half-width of a window holding the whole mixture."""
    view = MixtureView.from_params(theta)
    return float(np.max(np.abs(view.means) + k * view.stds))


def density_window(theta: NetParams1D, k: float = 10.0) -> Tuple[float, float]:
    view = MixtureView.from_params(theta)
    return float(np.min(view.means - k * view.stds)), float(np.max(view.means + k * view.stds))


def mass_outside(theta: NetParams1D, lo: float, hi: float) -> float:
    """Absolute mixture mass outside [lo, hi] (exact for the mixture)."""
    view = MixtureView.from_params(theta)
    tails = norm.cdf(lo, view.means, view.stds) + norm.sf(hi, view.means, view.stds)
    return float(np.sum(np.abs(view.masses) * tails))


# --- loss and gradients ---
@dataclass(frozen=True)
class LossValue:
    mse: float
    mae: float

    @property
    def total(self) -> float:
        return self.mse + self.mae


def _residual_loss(res_re: np.ndarray, res_im: np.ndarray) -> Tuple[float, float]:
    return float(np.sum(res_re**2 + res_im**2)), float(np.sum(np.abs(res_re) + np.abs(res_im)))


def loss_eval(theta: NetParams1D, etas: np.ndarray, targets: np.ndarray) -> LossValue:
    """MSE + MAE between sampled G and the network transform.

    ``|z|^2`` is accumulated as Re^2 + Im^2.
    """
    etas = np.asarray(etas, dtype=float).reshape(-1)
    targets = np.asarray(targets, dtype=complex).reshape(-1)
    if etas.size == 0 or etas.shape != targets.shape:
        raise ParameterError("samples must be non-empty with one target per eta")
    sq = ab = 0.0
    for start in range(0, etas.size, _BLOCK):
        re, im = _cf_parts(theta, etas[start:start + _BLOCK])
        chunk = targets[start:start + _BLOCK]
        s, a = _residual_loss(chunk.real - re, chunk.imag - im)
        sq += s
        ab += a
    return LossValue(mse=sq / etas.size, mae=ab / etas.size)


def _loss_and_grad_sums(
    beta: np.ndarray, w: np.ndarray, b: np.ndarray, eta: np.ndarray, target: np.ndarray
) -> Tuple[float, float, np.ndarray, np.ndarray, np.ndarray]:
    """Un-normalized loss sums and gradient sums over one chunk (w > 0)."""
    s = eta[:, None] / w
    phase = s * b
    unit = SQRT_PI / w * np.exp(-0.25 * s**2)
    cos_u = np.cos(phase) * unit
    sin_u = np.sin(phase) * unit
    re_n = cos_u * beta
    im_n = -sin_u * beta
    res_re = target.real - re_n.sum(axis=1)
    res_im = target.imag - im_n.sum(axis=1)
    sq, ab = _residual_loss(res_re, res_im)

    # dL/dRe(G_hat), dL/dIm(G_hat); sign(0) = 0 is the MAE subgradient
    c_re = -(2.0 * res_re + np.sign(res_re))
    c_im = -(2.0 * res_im + np.sign(res_im))

    g_beta = c_re @ cos_u - c_im @ sin_u
    g_b = c_re @ (im_n * s) - c_im @ (re_n * s)
    k = (0.5 * s**2 - 1.0) / w
    g_w = c_re @ (re_n * k - im_n * phase / w) + c_im @ (im_n * k + re_n * phase / w)
    return sq, ab, g_beta, g_w, g_b


def grad_loss(
    theta: NetParams1D, etas: np.ndarray, targets: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact gradient of the batch loss with respect to (beta, w, b).

    Requires w > 0 (the training sign convention).
    """
    etas = np.asarray(etas, dtype=float).reshape(-1)
    targets = np.asarray(targets, dtype=complex).reshape(-1)
    if etas.size == 0 or etas.shape != targets.shape:
        raise ParameterError("batch must be non-empty with one target per eta")
    if np.any(theta.w <= 0):
        raise ParameterError("gradients are defined for positive w")
    _, _, g_beta, g_w, g_b = _loss_and_grad_sums(theta.beta, theta.w, theta.b, etas, targets)
    return g_beta / etas.size, g_w / etas.size, g_b / etas.size


# --- two-dimensional evaluation ---
def _bivariate_terms(theta: NetParams2D):
    s1, s2 = theta.sigma[:, 0], theta.sigma[:, 1]
    det = (s1 * s2) ** 2 * (1.0 - theta.rho**2)
    if np.any(det <= 1e-300) or np.any(np.abs(theta.rho) >= 1.0):
        raise EvaluationError("singular component covariance")
    return s1, s2, det


def eval_density_2d(theta: NetParams2D, x: np.ndarray) -> np.ndarray:
    """Weighted sum of bivariate normal densities at points ``x`` of shape (..., 2)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (2,):
        raise ParameterError("x must have shape (..., 2)")
    s1, s2, det = _bivariate_terms(theta)
    flat = x.reshape(-1, 2)
    out = np.empty(flat.shape[0])
    one_minus = 1.0 - theta.rho**2
    for start in range(0, flat.shape[0], _BLOCK):
        d1 = (flat[start:start + _BLOCK, 0:1] - theta.mu[:, 0]) / s1
        d2 = (flat[start:start + _BLOCK, 1:2] - theta.mu[:, 1]) / s2
        quad = (d1**2 - 2.0 * theta.rho * d1 * d2 + d2**2) / one_minus
        out[start:start + _BLOCK] = (np.exp(-0.5 * quad) / (2.0 * np.pi * np.sqrt(det))) @ theta.beta
    return out.reshape(x.shape[:-1])


def _cf2_parts(theta: NetParams2D, eta: np.ndarray):
    e1, e2 = eta[:, 0:1], eta[:, 1:2]
    s1, s2 = theta.sigma[:, 0], theta.sigma[:, 1]
    phase = e1 * theta.mu[:, 0] + e2 * theta.mu[:, 1]
    quad = (s1 * e1) ** 2 + 2.0 * theta.rho * s1 * s2 * e1 * e2 + (s2 * e2) ** 2
    env = np.exp(-0.5 * quad)
    return phase, env, e1, e2


def eval_cf_2d(theta: NetParams2D, eta: np.ndarray) -> np.ndarray:
    """Re = sum beta cos(eta'mu) exp(-eta'Sigma eta/2), Im = sum beta sin(eta'mu) exp(...)."""
    eta = np.asarray(eta, dtype=float)
    if eta.shape[-1:] != (2,):
        raise ParameterError("eta must have shape (..., 2)")
    _bivariate_terms(theta)
    flat = eta.reshape(-1, 2)
    out = np.empty(flat.shape[0], dtype=complex)
    for start in range(0, flat.shape[0], _BLOCK):
        phase, env, _, _ = _cf2_parts(theta, flat[start:start + _BLOCK])
        out[start:start + _BLOCK] = (np.cos(phase) * env) @ theta.beta + 1j * ((np.sin(phase) * env) @ theta.beta)
    return out.reshape(eta.shape[:-1])


def loss_eval_2d(theta: NetParams2D, etas: np.ndarray, targets: np.ndarray) -> LossValue:
    etas = np.asarray(etas, dtype=float).reshape(-1, 2)
    targets = np.asarray(targets, dtype=complex).reshape(-1)
    if targets.size == 0 or etas.shape[0] != targets.size:
        raise ParameterError("samples must be non-empty with one target per eta")
    fitted = eval_cf_2d(theta, etas)
    sq, ab = _residual_loss(targets.real - fitted.real, targets.imag - fitted.imag)
    return LossValue(mse=sq / targets.size, mae=ab / targets.size)


def _loss_and_grad_sums_2d(beta, mu, sigma, rho, eta, target):
    """Loss sums and gradient sums over one chunk for (beta, mu, sigma, rho)."""
    s1, s2 = sigma[:, 0], sigma[:, 1]
    e1, e2 = eta[:, 0:1], eta[:, 1:2]
    phase = e1 * mu[:, 0] + e2 * mu[:, 1]
    quad = (s1 * e1) ** 2 + 2.0 * rho * s1 * s2 * e1 * e2 + (s2 * e2) ** 2
    env = np.exp(-0.5 * quad)
    cos_e = np.cos(phase) * env
    sin_e = np.sin(phase) * env
    re_n = cos_e * beta
    im_n = sin_e * beta
    res_re = target.real - re_n.sum(axis=1)
    res_im = target.imag - im_n.sum(axis=1)
    sq, ab = _residual_loss(res_re, res_im)
    c_re = -(2.0 * res_re + np.sign(res_re))
    c_im = -(2.0 * res_im + np.sign(res_im))

    g_beta = c_re @ cos_e + c_im @ sin_e
    g_mu = np.stack(
        [c_re @ (-im_n * e1) + c_im @ (re_n * e1), c_re @ (-im_n * e2) + c_im @ (re_n * e2)],
        axis=1,
    )
    dq_s1 = 2.0 * s1 * e1**2 + 2.0 * rho * s2 * e1 * e2
    dq_s2 = 2.0 * s2 * e2**2 + 2.0 * rho * s1 * e1 * e2
    dq_rho = 2.0 * s1 * s2 * e1 * e2

    def through_quad(dq: np.ndarray) -> np.ndarray:
        return -0.5 * (c_re @ (re_n * dq) + c_im @ (im_n * dq))

    g_sigma = np.stack([through_quad(dq_s1), through_quad(dq_s2)], axis=1)
    g_rho = through_quad(dq_rho)
    return sq, ab, g_beta, g_mu, g_sigma, g_rho


def grad_loss_2d(theta: NetParams2D, etas: np.ndarray, targets: np.ndarray):
    """Gradient of the batch loss with respect to (beta, mu, sigma, rho)."""
    etas = np.asarray(etas, dtype=float).reshape(-1, 2)
    targets = np.asarray(targets, dtype=complex).reshape(-1)
    if targets.size == 0 or etas.shape[0] != targets.size:
        raise ParameterError("batch must be non-empty with one target per eta")
    _, _, g_beta, g_mu, g_sigma, g_rho = _loss_and_grad_sums_2d(
        theta.beta, theta.mu, theta.sigma, theta.rho, etas, targets
    )
    n = targets.size
    return g_beta / n, g_mu / n, g_sigma / n, g_rho / n


# --- unconstrained views used by the optimizer ---
class RawNet1D:
    """theta <-> flat vector [beta, log w, b]."""

    dimension = 1

    def __init__(self, n: int):
        self.n = n

    def pack(self, theta: NetParams1D) -> np.ndarray:
        if np.any(theta.w <= 0):
            raise ParameterError("raw packing requires positive w")
        return np.concatenate([theta.beta, np.log(theta.w), theta.b])

    def unpack(self, vec: np.ndarray) -> NetParams1D:
        n = self.n
        return NetParams1D(beta=vec[:n], w=np.exp(vec[n:2 * n]), b=vec[2 * n:])

    def chunk_sums(self, vec: np.ndarray, eta: np.ndarray, target: np.ndarray):
        """(squared sum, absolute sum, gradient sum) over one chunk."""
        n = self.n
        beta, w, b = vec[:n], np.exp(vec[n:2 * n]), vec[2 * n:]
        sq, ab, g_beta, g_w, g_b = _loss_and_grad_sums(beta, w, b, eta, target)
        return sq, ab, np.concatenate([g_beta, g_w * w, g_b])

    def loss(self, vec: np.ndarray, etas: np.ndarray, targets: np.ndarray) -> LossValue:
        return loss_eval(self.unpack(vec), etas, targets)


class RawNet2D:
    """theta <-> flat vector [beta, mu (2N), log sigma (2N), atanh rho]."""

    dimension = 2

    def __init__(self, n: int):
        self.n = n

    def pack(self, theta: NetParams2D) -> np.ndarray:
        return np.concatenate(
            [theta.beta, theta.mu.ravel(), np.log(theta.sigma).ravel(), np.arctanh(theta.rho)]
        )

    def _split(self, vec: np.ndarray):
        n = self.n
        beta = vec[:n]
        mu = vec[n:3 * n].reshape(n, 2)
        sigma = np.exp(vec[3 * n:5 * n]).reshape(n, 2)
        rho = np.tanh(vec[5 * n:])
        return beta, mu, sigma, rho

    def unpack(self, vec: np.ndarray) -> NetParams2D:
        beta, mu, sigma, rho = self._split(vec)
        return NetParams2D(beta=beta, mu=mu, sigma=sigma, rho=rho)

    def chunk_sums(self, vec: np.ndarray, eta: np.ndarray, target: np.ndarray):
        beta, mu, sigma, rho = self._split(vec)
        sq, ab, g_beta, g_mu, g_sigma, g_rho = _loss_and_grad_sums_2d(beta, mu, sigma, rho, eta, target)
        return sq, ab, np.concatenate(
            [g_beta, g_mu.ravel(), (g_sigma * sigma).ravel(), g_rho * (1.0 - rho**2)]
        )

    def loss(self, vec: np.ndarray, etas: np.ndarray, targets: np.ndarray) -> LossValue:
        return loss_eval_2d(self.unpack(vec), etas, targets)


# --- initialization ---
def initialize_1d(
    cf: CharFn, n: int, jitter: float = 0.0, rng: Optional[np.random.Generator] = None
) -> NetParams1D:
    """Lattice of equal-mass atoms over mean -/+ 6 std of the target.

    Mean and std come from the cumulants of ``cf``; spreads are half the lattice
    spacing and the total mass is 1. A positive ``jitter`` moves each mean by up to
    that fraction of the spacing and scales each spread by a factor in
    [exp(-jitter), exp(jitter)], drawn from ``rng``.
    """
    if n < 1:
        raise ParameterError("N must be at least 1")
    c1, c2, _ = cumulants(cf)
    std = math.sqrt(c2) if c2 > 0 else 1.0
    if n == 1:
        means = np.array([c1])
        spacing = std
        sigma = np.full(1, std)
    else:
        means = np.linspace(c1 - 6.0 * std, c1 + 6.0 * std, n)
        spacing = means[1] - means[0]
        sigma = np.full(n, 0.5 * spacing)
    if jitter > 0:
        rng = rng if rng is not None else np.random.default_rng()
        means = means + jitter * spacing * rng.uniform(-1.0, 1.0, n)
        sigma = sigma * np.exp(jitter * rng.uniform(-1.0, 1.0, n))
    w = 1.0 / (math.sqrt(2.0) * sigma)
    return NetParams1D(beta=w / (n * SQRT_PI), w=w, b=-means * w)


def initialize_2d(
    cf: CharFn, n: int, jitter: float = 0.0, rng: Optional[np.random.Generator] = None
) -> NetParams2D:
    """Centre-most n nodes of a ceil(sqrt(n))^2 lattice over mean -/+ 3 std per axis.

    ``jitter`` moves each node by up to that fraction of its spread on each axis.
    """
    if n < 1:
        raise ParameterError("N must be at least 1")
    axes = []
    for axis in range(2):
        c1, c2, _ = cumulants(marginal_cf(cf, axis))
        axes.append((c1, math.sqrt(c2) if c2 > 0 else 1.0))
    side = math.ceil(math.sqrt(n))
    if side == 1:
        nodes = np.array([[axes[0][0], axes[1][0]]])
        spreads = np.array([[axes[0][1], axes[1][1]]])
    else:
        ticks = [np.linspace(m - 3.0 * s, m + 3.0 * s, side) for m, s in axes]
        gx, gy = np.meshgrid(ticks[0], ticks[1], indexing="ij")
        lattice = np.column_stack([gx.ravel(), gy.ravel()])
        centre = np.array([axes[0][0], axes[1][0]])
        scale = np.array([axes[0][1], axes[1][1]])
        order = np.argsort(np.sum(((lattice - centre) / scale) ** 2, axis=1), kind="stable")
        nodes = lattice[order[:n]]
        spreads = np.tile([0.5 * (t[1] - t[0]) for t in ticks], (n, 1))
    if jitter > 0:
        rng = rng if rng is not None else np.random.default_rng()
        nodes = nodes + jitter * spreads * rng.uniform(-1.0, 1.0, nodes.shape)
    return NetParams2D(beta=np.full(n, 1.0 / n), mu=nodes, sigma=spreads, rho=np.zeros(n))


def recover_original(theta: NetParams1D, lt: LinearTransform) -> NetParams1D:
    """Network for X from a network fitted to Y = aX + c: g_X(x) = a g_Y(a x + c)."""
    a, c = float(lt.a), float(lt.c)
    if not a > 0:
        raise ParameterError(f"transform scale a must be positive, got {a}")
    return NetParams1D(beta=a * theta.beta, w=a * theta.w, b=theta.w * c + theta.b)


def recovered_density(theta: NetParams1D, lt: LinearTransform) -> Callable[[np.ndarray], np.ndarray]:
    recovered = recover_original(theta, lt)
    return lambda x: eval_density(recovered, x)
