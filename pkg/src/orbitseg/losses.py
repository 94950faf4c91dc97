"""Training objectives over per-pixel class probability fields.

All four losses return (value, grad) where grad is the exact analytic
derivative of the computed (clamped) expression with respect to every
probability entry. Cross-entropy and focal normalize by pixel count; the
soft Dice averages over classes present in the target. Inputs are
probabilities, not logits; softmax (and its Jacobian) lives with the model.

Gradients are defined for fields slightly off the simplex so that
finite-difference probes of single entries stay valid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

MIX_MODES = ("add", "convex")


@dataclass(frozen=True)
class LossParams:
    gamma: float = 2.0     # focal exponent
    alpha: float = 1.0     # Dice:focal mixing weight
    epsilon: float = 1e-7  # log clamp and Dice smoothing
    mix_mode: str = "add"  # "add": dice + alpha*focal; "convex": (1-alpha)*dice + alpha*focal

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError("gamma must be >= 0")
        if not self.alpha >= 0:
            raise ValueError("alpha must be >= 0")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must be in (0, 1)")
        if self.mix_mode not in MIX_MODES:
            raise ValueError(f"mix_mode must be one of {MIX_MODES}")
        if self.mix_mode == "convex" and self.alpha > 1:
            raise ValueError("convex mixing needs alpha <= 1")


class LossResult(NamedTuple):
    value: float
    grad: np.ndarray  # same shape as probs


def validate_prob_field(probs: np.ndarray, atol: float = 1e-6) -> None:
    """Strict simplex check for callers that want the invariant enforced."""
    if (probs < 0).any():
        raise ValueError("probability field has negative entries")
    err = np.abs(probs.sum(axis=-1) - 1.0).max()
    if err > atol:
        raise ValueError(f"probability field off the simplex by {err:.3g}")


def _check_shapes(probs: np.ndarray, target: np.ndarray):
    probs = np.asarray(probs, dtype=np.float64)
    target = np.asarray(target)
    if probs.ndim != 3:
        raise ValueError("probs must be (H, W, K)")
    if target.shape != probs.shape[:2]:
        raise ValueError(f"target shape {target.shape} does not match probs {probs.shape[:2]}")
    k = probs.shape[2]
    target = target.astype(np.int64)
    if target.size and (target.min() < 0 or target.max() >= k):
        raise ValueError("target indices out of range")
    return probs, target


def _gather_true(probs: np.ndarray, target: np.ndarray) -> np.ndarray:
    return np.take_along_axis(probs, target[..., None], axis=2)[..., 0]


def cce_loss(probs: np.ndarray, target: np.ndarray,
             params: LossParams = LossParams()) -> LossResult:
    """Mean over pixels of -log(clamp(p_true, eps, 1))."""
    probs, target = _check_shapes(probs, target)
    n = target.size
    p_true = _gather_true(probs, target)
    q = np.clip(p_true, params.epsilon, 1.0)
    value = float(np.mean(-np.log(q)))
    # clamped entries are flat: zero derivative outside (eps, 1)
    in_range = (p_true > params.epsilon) & (p_true < 1.0)
    g_true = np.where(in_range, -1.0 / (q * n), 0.0)
    grad = np.zeros_like(probs)
    np.put_along_axis(grad, target[..., None], g_true[..., None], axis=2)
    return LossResult(value=value, grad=grad)


def focal_loss(probs: np.ndarray, target: np.ndarray,
               params: LossParams = LossParams()) -> LossResult:
    """Mean over pixels of (1 - p_true)^gamma * -log(clamp(p_true, eps, 1)).

    gamma = 0 reduces to the cross-entropy code path, so the two are
    identical bit for bit, values and gradients.
    """
    if params.gamma == 0:
        return cce_loss(probs, target, params)
    probs, target = _check_shapes(probs, target)
    n = target.size
    p_true = _gather_true(probs, target)
    q = np.clip(p_true, params.epsilon, 1.0)
    one_minus = 1.0 - q
    log_q = np.log(q)
    value = float(np.mean(one_minus ** params.gamma * -log_q))
    # d/dq [(1-q)^g * -log q] = g*(1-q)^(g-1)*log q - (1-q)^g / q
    with np.errstate(divide="ignore", invalid="ignore"):
        dq = (params.gamma * one_minus ** (params.gamma - 1.0) * log_q
              - one_minus ** params.gamma / q)
    in_range = (p_true > params.epsilon) & (p_true < 1.0)
    g_true = np.where(in_range, dq / n, 0.0)
    grad = np.zeros_like(probs)
    np.put_along_axis(grad, target[..., None], g_true[..., None], axis=2)
    return LossResult(value=value, grad=grad)


def dice_loss(probs: np.ndarray, target: np.ndarray,
              params: LossParams = LossParams()) -> LossResult:
    """1 - mean soft Dice over classes present in the target.

    Per class: D_k = (2 sum(p_k t_k) + eps) / (sum p_k + sum t_k + eps),
    a smooth relaxation that equals the hard coefficient at one-hot inputs.
    Classes with no target pixels are excluded, matching the evaluation
    module's default absent-class policy.
    """
    probs, target = _check_shapes(probs, target)
    k = probs.shape[2]
    eps = params.epsilon
    counts = np.bincount(target.reshape(-1), minlength=k).astype(np.float64)
    present = counts > 0
    n_present = int(present.sum())
    if n_present == 0:
        raise ValueError("target has no pixels")

    onehot_sum = counts                                   # sum over pixels of t_k
    p_sum = probs.sum(axis=(0, 1))                        # sum over pixels of p_k
    inter = np.zeros(k, dtype=np.float64)                 # sum over pixels of p_k * t_k
    p_true = _gather_true(probs, target)
    np.add.at(inter, target.reshape(-1), p_true.reshape(-1))

    denom = p_sum + onehot_sum + eps
    dice_k = (2.0 * inter + eps) / denom
    value = float(1.0 - dice_k[present].mean())

    # dD_k/dp[i,k] = (2 t[i,k] * denom_k - (2 inter_k + eps)) / denom_k^2
    scale = -1.0 / n_present
    base = -(2.0 * inter + eps) / (denom * denom)         # t[i,k] = 0 part
    grad = np.where(present, scale * base, 0.0) * np.ones_like(probs)
    with_t = scale * (2.0 * denom - (2.0 * inter + eps)) / (denom * denom)
    g_true_cls = np.where(present, with_t, 0.0)
    np.put_along_axis(grad, target[..., None], g_true_cls[target][..., None], axis=2)
    return LossResult(value=value, grad=grad)


def dice_focal_loss(probs: np.ndarray, target: np.ndarray,
                    params: LossParams = LossParams()) -> LossResult:
    """Dice + alpha * focal (default), or the convex (1-alpha)/alpha blend."""
    d = dice_loss(probs, target, params)
    f = focal_loss(probs, target, params)
    if params.mix_mode == "convex":
        w_d, w_f = 1.0 - params.alpha, params.alpha
    else:
        w_d, w_f = 1.0, params.alpha
    return LossResult(value=w_d * d.value + w_f * f.value,
                      grad=w_d * d.grad + w_f * f.grad)


LOSS_FUNCTIONS = {
    "cce": cce_loss,
    "dice": dice_loss,
    "focal": focal_loss,
    "dice_focal": dice_focal_loss,
}
