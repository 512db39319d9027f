"""Segmentation losses with analytic gradients.

Implements the pairwise Youden's-J surrogate, plain cross entropy, their
sum (the JC training loss), and the two comparison baselines: class-balanced
weighted cross entropy (BWM) and cross entropy with soft-Dice
regularization (DSC).

Every loss accepts a one-hot target field together with either a logit
field or a bare probability field.  Logits are pushed through softmax
internally and the returned gradient is taken with respect to the logits,
i.e. the trainable parameters; probability input yields the forward value
only.  Every logarithm argument is clamped at ``LOG_EPS`` and the analytic
gradients are the exact gradients of the clamped forward functions, so
they match central finite differences away from the (measure-zero) clamp
boundaries.

Reductions use numpy's fixed-order pairwise summation; results do not
depend on thread counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grids import LogitField, ProbabilityField, softmax

__all__ = [
    "LOG_EPS",
    "PairWeights",
    "LossValue",
    "cross_entropy",
    "j_loss",
    "jc_loss",
    "bwm_loss",
    "dsc_loss",
    "LOSSES",
    "evaluate_loss",
    "finite_difference_gradient",
    "gradient_check",
]

#: Clamp applied to every logarithm argument.
LOG_EPS = 1e-7


@dataclass(frozen=True)
class PairWeights:
    """Non-negative pairwise class weights for the J surrogate.

    Entry ``[i, k]`` weights the binary problem with ``i`` positive and
    ``k`` negative.  The diagonal never contributes: its pair term is the
    constant ``-w * log(1/2)`` with zero gradient, so it is skipped.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64, order="C", copy=True)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("pair weights must form a square matrix")
        if not np.all(np.isfinite(m)) or m.min() < 0:
            raise ValueError("pair weights must be finite and non-negative")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def default(cls, channels: int) -> "PairWeights":
        """Weight 1 for every off-diagonal pair."""
        return cls(np.ones((channels, channels)) - np.eye(channels))

    @property
    def channels(self) -> int:
        return int(self.matrix.shape[0])


@dataclass(frozen=True)
class LossValue:
    """Scalar loss, its named parts, and (optionally) the logit gradient."""

    total: float
    components: dict[str, float] = field(default_factory=dict)
    gradient: np.ndarray | None = None

    def __post_init__(self):
        if abs(self.total - sum(self.components.values())) > 1e-12 * max(1.0, abs(self.total)):
            raise ValueError("total must equal the sum of the components")
        if self.gradient is not None:
            g = np.array(self.gradient, dtype=np.float64, order="C", copy=True)
            g.setflags(write=False)
            object.__setattr__(self, "gradient", g)

    @property
    def grad_norm(self) -> float:
        if self.gradient is None:
            raise ValueError("loss was evaluated without a gradient")
        return float(np.linalg.norm(self.gradient.ravel()))


def _resolve(target: ProbabilityField, pred) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Validate inputs and return (y, z, logits-or-None)."""
    if not isinstance(target, ProbabilityField):
        raise TypeError("target must be a ProbabilityField")
    if not target.is_one_hot():
        raise ValueError("target must be one-hot")
    if isinstance(pred, LogitField):
        theta = pred.values
        z = softmax(pred).values
    elif isinstance(pred, ProbabilityField):
        theta = None
        z = pred.values
    else:
        raise TypeError("prediction must be a LogitField or a ProbabilityField")
    if z.shape != target.values.shape:
        raise ValueError(f"shape mismatch: target {target.values.shape}, prediction {z.shape}")
    return target.values, z, theta


def _softmax_vjp(z: np.ndarray, dz: np.ndarray) -> np.ndarray:
    """Pull a gradient in probabilities back through softmax to the logits."""
    return z * (dz - (dz * z).sum(axis=-1, keepdims=True))


def _softmax_array(theta: np.ndarray) -> np.ndarray:
    shifted = theta - theta.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _wrap(total: float, components: dict[str, float], dz: np.ndarray, z, theta) -> LossValue:
    grad = _softmax_vjp(z, dz) if theta is not None else None
    return LossValue(total=total, components=components, gradient=grad)


def _weighted_ce(y: np.ndarray, z: np.ndarray, class_weights: np.ndarray | None):
    """Mean (optionally class-weighted) negative log likelihood and dL/dz."""
    n = float(np.prod(y.shape[:-1]))
    w = np.ones(y.shape[-1]) if class_weights is None else class_weights
    clamped = np.maximum(z, LOG_EPS)
    value = float(-(w * y * np.log(clamped)).sum() / n)
    active = z > LOG_EPS  # below the clamp the log is constant
    dz = -(w * y) / clamped * active / n
    return value, dz


def cross_entropy(target: ProbabilityField, pred) -> LossValue:
    """Mean negative log likelihood over elements.

    With logit input the gradient reduces to ``(z - y) / n`` per element
    wherever the clamp is inactive.
    """
    y, z, theta = _resolve(target, pred)
    value, dz = _weighted_ce(y, z, None)
    return _wrap(value, {"ce": value}, dz, z, theta)


def _j_core(y: np.ndarray, z: np.ndarray, weights: PairWeights):
    channels = y.shape[-1]
    if weights.channels != channels:
        raise ValueError(
            f"pair weights are {weights.channels}x{weights.channels}, field has {channels} channels"
        )
    axes = tuple(range(y.ndim - 1))
    counts = y.sum(axis=axes)
    present = counts > 0
    # phi_l = y_l / n_l for present classes; absent classes never enter a pair.
    phi = np.divide(y, np.where(present, counts, 1.0), where=present)

    total = 0.0
    dz = np.zeros_like(z)
    lam = weights.matrix
    for i in range(channels):
        if not present[i]:
            continue
        for k in range(channels):
            if k == i or not present[k] or lam[i, k] == 0.0:
                continue
            delta = 0.5 * (phi[..., i] - phi[..., k])
            a = 0.5 + float((z[..., i] * delta).sum())
            a_cl = min(max(a, LOG_EPS), 1.0)
            total += -lam[i, k] * np.log(a_cl)
            if LOG_EPS < a < 1.0:
                dz[..., i] += -lam[i, k] * delta / a
    return float(total), dz


def j_loss(target: ProbabilityField, pred, weights: PairWeights | None = None) -> LossValue:
    """Pairwise surrogate of Youden's J statistic.

    For every ordered pair of present classes (i positive, k negative) the
    soft true-positive and true-negative rates combine into a log term
    ``-w[i,k] * log(1/2 + sum_p z_i(p) * (phi_i(p) - phi_k(p)) / 2)`` with
    ``phi_l = y_l / n_l``.  Pairs with an absent class contribute exactly
    zero, and the diagonal is skipped.
    """
    y, z, theta = _resolve(target, pred)
    weights = weights or PairWeights.default(y.shape[-1])
    value, dz = _j_core(y, z, weights)
    return _wrap(value, {"j": value}, dz, z, theta)


def jc_loss(target: ProbabilityField, pred, weights: PairWeights | None = None) -> LossValue:
    """Cross entropy plus the J surrogate; components report both parts."""
    y, z, theta = _resolve(target, pred)
    weights = weights or PairWeights.default(y.shape[-1])
    ce_value, ce_dz = _weighted_ce(y, z, None)
    j_value, j_dz = _j_core(y, z, weights)
    return _wrap(
        ce_value + j_value, {"ce": ce_value, "j": j_value}, ce_dz + j_dz, z, theta
    )


def bwm_loss(target: ProbabilityField, pred) -> LossValue:
    """Cross entropy with per-class balance weights ``n / (channels * n_l)``.

    Absent classes get weight zero.  With perfectly balanced targets every
    weight collapses to one and the loss equals plain cross entropy.
    """
    y, z, theta = _resolve(target, pred)
    axes = tuple(range(y.ndim - 1))
    counts = y.sum(axis=axes)
    n = float(np.prod(y.shape[:-1]))
    channels = y.shape[-1]
    w = np.divide(n, channels * counts, out=np.zeros(channels), where=counts > 0)
    value, dz = _weighted_ce(y, z, w)
    return _wrap(value, {"bwm": value}, dz, z, theta)


def dsc_loss(target: ProbabilityField, pred) -> LossValue:
    """Cross entropy plus one minus the mean soft Dice over present classes.

    Soft Dice of class l is ``2 * sum(z_l y_l) / (sum(z_l^2) + sum(y_l^2))``.
    """
    y, z, theta = _resolve(target, pred)
    ce_value, dz = _weighted_ce(y, z, None)
    axes = tuple(range(y.ndim - 1))
    counts = y.sum(axis=axes)
    present = np.flatnonzero(counts > 0)
    dice_mean = 0.0
    for l in present:
        inter = float((z[..., l] * y[..., l]).sum())
        denom = float((z[..., l] ** 2).sum()) + float(counts[l])  # sum(y^2) = n_l
        dice_mean += 2.0 * inter / denom
        # d dice_l / d z_l = (2 y_l denom - 4 inter z_l) / denom^2
        dz[..., l] -= (2.0 * y[..., l] * denom - 4.0 * inter * z[..., l]) / denom**2 / present.size
    dice_mean /= present.size
    dice_part = 1.0 - dice_mean
    return _wrap(ce_value + dice_part, {"ce": ce_value, "dice": dice_part}, dz, z, theta)


LOSSES: dict[str, Callable[..., LossValue]] = {
    "ce": cross_entropy,
    "j": j_loss,
    "jc": jc_loss,
    "bwm": bwm_loss,
    "dsc": dsc_loss,
}


def evaluate_loss(
    loss_id: str, target: ProbabilityField, pred, weights: PairWeights | None = None
) -> LossValue:
    """Evaluate a loss by identifier: ce | j | jc | bwm | dsc."""
    if loss_id not in LOSSES:
        raise ValueError(f"unknown loss {loss_id!r}; expected one of {sorted(LOSSES)}")
    if loss_id in ("j", "jc"):
        return LOSSES[loss_id](target, pred, weights)
    return LOSSES[loss_id](target, pred)


def _forward_total(loss_id: str, y: np.ndarray, theta: np.ndarray, weights: PairWeights) -> float:
    """Loss value from bare arrays; the same math as the public functions
    without container validation.  Used for the many forward evaluations of
    a finite-difference sweep."""
    z = _softmax_array(theta)
    if loss_id == "ce":
        return _weighted_ce(y, z, None)[0]
    if loss_id == "j":
        return _j_core(y, z, weights)[0]
    if loss_id == "jc":
        return _weighted_ce(y, z, None)[0] + _j_core(y, z, weights)[0]
    if loss_id == "bwm":
        axes = tuple(range(y.ndim - 1))
        counts = y.sum(axis=axes)
        n = float(np.prod(y.shape[:-1]))
        channels = y.shape[-1]
        w = np.divide(n, channels * counts, out=np.zeros(channels), where=counts > 0)
        return _weighted_ce(y, z, w)[0]
    if loss_id == "dsc":
        total = _weighted_ce(y, z, None)[0]
        axes = tuple(range(y.ndim - 1))
        counts = y.sum(axis=axes)
        present = np.flatnonzero(counts > 0)
        dice_mean = 0.0
        for l in present:
            inter = float((z[..., l] * y[..., l]).sum())
            denom = float((z[..., l] ** 2).sum()) + float(counts[l])
            dice_mean += 2.0 * inter / denom
        return total + 1.0 - dice_mean / present.size
    raise ValueError(f"unknown loss {loss_id!r}")


def finite_difference_gradient(
    fn: Callable[[np.ndarray], float], theta: np.ndarray, step: float = 1e-5
) -> np.ndarray:
    """Central finite differences of a scalar function of a logit array."""
    grad = np.zeros_like(theta, dtype=np.float64)
    flat = grad.ravel()
    base = theta.astype(np.float64).copy()
    for idx in range(base.size):
        orig = base.flat[idx]
        base.flat[idx] = orig + step
        hi = fn(base)
        base.flat[idx] = orig - step
        lo = fn(base)
        base.flat[idx] = orig
        flat[idx] = (hi - lo) / (2.0 * step)
    return grad


#: Grid shapes cycled through by the gradient checker.
_CHECK_SHAPES = ((4, 4), (6, 5), (8, 8), (3, 3, 3), (4, 4, 4))


def gradient_check(
    loss_id: str,
    seed: int = 0,
    trials: int = 100,
    step: float = 1e-5,
    channels: int = 4,
    rel_floor: float = 1e-6,
) -> dict:
    """Compare analytic and finite-difference gradients on random fields.

    Relative error per entry uses ``max(|analytic|, |numeric|, rel_floor)``
    as the denominator, so near-zero entries are compared at the floor
    scale.  Returns the maximum and mean over all trials.
    """
    rng = np.random.default_rng(seed)
    weights = PairWeights.default(channels)
    worst = 0.0
    total = 0.0
    for trial in range(trials):
        dims = _CHECK_SHAPES[trial % len(_CHECK_SHAPES)]
        classes = rng.integers(0, channels, size=dims).astype(np.int32)
        y = np.zeros(dims + (channels,))
        np.put_along_axis(y, classes[..., None].astype(np.intp), 1.0, axis=-1)
        target = ProbabilityField(y)
        theta = rng.normal(0.0, 1.5, size=dims + (channels,))

        analytic = evaluate_loss(loss_id, target, LogitField(theta), weights).gradient

        def forward(arr: np.ndarray) -> float:
            return _forward_total(loss_id, y, arr, weights)

        numeric = finite_difference_gradient(forward, theta, step=step)
        scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), rel_floor)
        rel = float((np.abs(analytic - numeric) / scale).max())
        worst = max(worst, rel)
        total += rel
    return {
        "loss": loss_id,
        "trials": trials,
        "step": step,
        "grad_max_rel_err": worst,
        "grad_mean_rel_err": total / trials,
    }
