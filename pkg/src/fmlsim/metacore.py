"""Analytic loss families and meta-gradient estimators.

Model parameters are plain 1-D numpy arrays.  Two loss families are
supported, chosen so that gradients, Hessians and all smoothness constants
are available in closed form:

* quadratic regression, per-sample loss ``0.5 * (x @ theta - y) ** 2``
* binary logistic regression with labels in {-1, +1}

For both families a device's expected loss is identified with the mean
loss over its full local dataset, so full-batch estimates are exact and
serve as analytic oracles for the stochastic estimators.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, InvalidInputError, NumericalError

MODE_HESSIAN = "hessian"
MODE_FIRST_ORDER = "first-order"
MODE_HESSIAN_FREE = "hessian-free"
ESTIMATOR_MODES = (MODE_HESSIAN, MODE_FIRST_ORDER, MODE_HESSIAN_FREE)


@dataclass(frozen=True)
class Batch:
    """A batch of samples: inputs ``x`` of shape (size, d), labels ``y``."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if self.x.ndim != 2 or self.y.ndim != 1 or self.x.shape[0] != self.y.shape[0]:
            raise InvalidInputError("batch inputs and labels have inconsistent shapes")
        if self.size < 1:
            raise InvalidInputError("batch must contain at least one sample")

    @property
    def size(self) -> int:
        return self.x.shape[0]


@dataclass
class MetaHyper:
    """Stepsizes and estimator settings for the local-update loop."""

    alpha: float
    beta: float
    tau: int = 1
    lambda1: float = 1.0
    lambda2: float = 1.0
    hv_epsilon: float = 1e-4
    mode: str = MODE_HESSIAN

    def __post_init__(self):
        if self.alpha < 0:
            raise InvalidInputError("alpha must be nonnegative")
        if self.beta < 0:
            raise InvalidInputError("beta must be nonnegative")
        if self.tau < 1:
            raise InvalidInputError("tau must be at least 1")
        if self.hv_epsilon <= 0:
            raise InvalidInputError("hv_epsilon must be positive")
        if self.mode not in ESTIMATOR_MODES:
            raise InvalidInputError(f"unknown estimator mode {self.mode!r}")


@dataclass
class SmoothnessConstants:
    """Smoothness, variance and similarity constants of a device population.

    ``zeta`` and ``gamma_G`` are only meaningful along visited iterates for
    the quadratic family; they start as NaN and are filled with empirical
    suprema during a run.
    """

    alpha: float
    L: float
    rho: float = 0.0
    zeta: float = float("nan")
    sigma_G: float = 0.0
    sigma_H: float = 0.0
    gamma_G: float = float("nan")
    gamma_H: float = 0.0

    @property
    def L_F(self) -> float:
        rho_term = self.alpha * self.rho * self.zeta if self.rho > 0 else 0.0
        return (1.0 + self.alpha * self.L) ** 2 * self.L + rho_term


class LossModel:
    """Base class: an analytic loss family bound to a device's full dataset."""

    family = "abstract"

    def __init__(self, x: np.ndarray, y: np.ndarray):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise InvalidInputError("dataset inputs and labels have inconsistent shapes")
        self.x = x
        self.y = y

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def n_samples(self) -> int:
        return self.x.shape[0]

    def full_batch(self) -> Batch:
        return Batch(self.x, self.y)

    # per-sample quantities; subclasses implement these on arbitrary batches
    def per_sample_loss(self, theta, x, y) -> np.ndarray:
        raise NotImplementedError

    def per_sample_grad(self, theta, x, y) -> np.ndarray:
        raise NotImplementedError

    def per_sample_hessian(self, theta, x, y) -> np.ndarray:
        raise NotImplementedError

    # exact (full-dataset) quantities
    def grad(self, theta: np.ndarray) -> np.ndarray:
        return self.per_sample_grad(theta, self.x, self.y).mean(axis=0)

    def hessian(self, theta: np.ndarray) -> np.ndarray:
        return self.per_sample_hessian(theta, self.x, self.y).mean(axis=0)

    def loss(self, theta: np.ndarray) -> float:
        return float(self.per_sample_loss(theta, self.x, self.y).mean())


class QuadraticModel(LossModel):
    """Least-squares regression; constant Hessian, zero third derivative."""

    family = "quadratic-regression"

    def per_sample_loss(self, theta, x, y):
        r = x @ theta - y
        return 0.5 * r * r

    def per_sample_grad(self, theta, x, y):
        r = x @ theta - y
        return x * r[:, None]

    def per_sample_hessian(self, theta, x, y):
        return x[:, :, None] * x[:, None, :]


class LogisticModel(LossModel):
    """Binary logistic regression with labels in {-1, +1}."""

    family = "logistic-regression"

    def per_sample_loss(self, theta, x, y):
        z = -y * (x @ theta)
        # log(1 + e^z) computed stably
        return np.logaddexp(0.0, z)

    def per_sample_grad(self, theta, x, y):
        z = y * (x @ theta)
        s = _sigmoid(-z)
        return -(y * s)[:, None] * x

    def per_sample_hessian(self, theta, x, y):
        z = y * (x @ theta)
        s = _sigmoid(z)
        w = s * (1.0 - s)
        return w[:, None, None] * (x[:, :, None] * x[:, None, :])


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _check_dims(model: LossModel, theta: np.ndarray, batch: Batch) -> None:
    if theta.shape != (model.dim,) or batch.x.shape[1] != model.dim:
        raise InvalidInputError(
            f"dimension mismatch: model d={model.dim}, theta {theta.shape}, "
            f"batch inputs {batch.x.shape}"
        )


def loss_value(model: LossModel, theta: np.ndarray, batch: Batch) -> float:
    """Mean per-sample loss over the batch."""
    _check_dims(model, theta, batch)
    return float(model.per_sample_loss(theta, batch.x, batch.y).mean())


def grad_estimate(model: LossModel, theta: np.ndarray, batch: Batch) -> np.ndarray:
    """Batch-mean per-sample gradient (unbiased for the full-data loss)."""
    _check_dims(model, theta, batch)
    return model.per_sample_grad(theta, batch.x, batch.y).mean(axis=0)


def hessian_estimate(model: LossModel, theta: np.ndarray, batch: Batch) -> np.ndarray:
    """Batch-mean per-sample Hessian; symmetric by construction."""
    _check_dims(model, theta, batch)
    return model.per_sample_hessian(theta, batch.x, batch.y).mean(axis=0)


def finite_difference_hvp(
    grad_fn: Callable[[np.ndarray], np.ndarray],
    theta: np.ndarray,
    direction: np.ndarray,
    eps: float,
) -> np.ndarray:
    """Central-difference estimate of (Hessian of the potential of grad_fn) @ direction."""
    if eps <= 0:
        raise InvalidInputError("eps must be positive")
    return (grad_fn(theta + eps * direction) - grad_fn(theta - eps * direction)) / (2.0 * eps)


def meta_gradient(
    model: LossModel,
    theta: np.ndarray,
    d_batch: Batch,
    d_prime_batch: Batch,
    d_double_batch: Batch,
    hyper: MetaHyper,
) -> np.ndarray:
    """Stochastic gradient of the post-adaptation loss from three independent batches.

    hessian mode:      (I - a * H(theta, D'')) @ g
    first-order mode:  g
    hessian-free mode: g - a * central-difference estimate of H(theta) @ g
    where g = grad(theta - a * grad(theta, D), D').
    """
    alpha = hyper.alpha
    inner = grad_estimate(model, theta, d_batch)
    adapted = theta - alpha * inner
    g = grad_estimate(model, adapted, d_prime_batch)

    if hyper.mode == MODE_FIRST_ORDER:
        out = g
    elif hyper.mode == MODE_HESSIAN:
        h = hessian_estimate(model, theta, d_double_batch)
        out = g - alpha * (h @ g)
    else:
        hvp = finite_difference_hvp(
            lambda t: grad_estimate(model, t, d_double_batch), theta, g, hyper.hv_epsilon
        )
        out = g - alpha * hvp
    if not np.all(np.isfinite(out)):
        raise NumericalError("meta-gradient produced non-finite values")
    return out


def exact_meta_gradient(model: LossModel, theta: np.ndarray, alpha: float) -> np.ndarray:
    """Population meta-gradient (I - a*H(theta)) @ grad(theta - a*grad(theta)), no sampling noise."""
    _check_dims(model, theta, model.full_batch())
    g0 = model.grad(theta)
    g = model.grad(theta - alpha * g0)
    h = model.hessian(theta)
    return g - alpha * (h @ g)


def draw_batch(model: LossModel, rng: np.random.Generator, size: int) -> Batch:
    """Draw `size` samples from the device's dataset without replacement."""
    if size > model.n_samples:
        raise ConfigurationError(
            f"batch size {size} exceeds dataset size {model.n_samples}"
        )
    idx = rng.choice(model.n_samples, size=size, replace=False)
    return Batch(model.x[idx], model.y[idx])


def local_update(
    model: LossModel,
    theta0: np.ndarray,
    hyper: MetaHyper,
    batch_rng: Callable[[int, int], np.random.Generator],
    batch_size: int | None = None,
) -> tuple[np.ndarray, float]:
    """Run tau local meta-gradient steps and accumulate the contribution score.

    ``batch_rng(step, role)`` must return an independent RNG stream for each
    (step, role) pair; roles 0/1/2 are the three batch draws of one step.
    Returns the updated parameters and
    u = sum_t ||g_t||^2 - 2*(lambda1 + lambda2/sqrt(D)) * ||g_t||.
    """
    if model.n_samples < 1:
        raise ConfigurationError("device has no samples")
    if batch_size is not None and batch_size > model.n_samples:
        raise ConfigurationError(
            f"batch size {batch_size} exceeds dataset size {model.n_samples}"
        )
    size = model.n_samples if batch_size is None else batch_size
    theta = np.array(theta0, dtype=float, copy=True)
    u = 0.0
    penalty = 2.0 * (hyper.lambda1 + hyper.lambda2 / np.sqrt(size))
    for t in range(hyper.tau):
        batches = [draw_batch(model, batch_rng(t, role), size) for role in (0, 1, 2)]
        g = meta_gradient(model, theta, batches[0], batches[1], batches[2], hyper)
        gn = float(np.linalg.norm(g))
        u += gn * gn - penalty * gn
        theta -= hyper.beta * g
    return theta, u
