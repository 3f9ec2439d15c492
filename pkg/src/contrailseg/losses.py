"""Region-based segmentation losses with analytic gradients.

Every loss takes a probability map ``p`` (values in [0, 1]), a binary
ground-truth mask ``g`` of the same shape and a :class:`LossParams`, and
returns a :class:`LossResult` holding the scalar value and the gradient of
that value with respect to each entry of ``p``.

All arithmetic is carried out in float64. Sums are taken over the flattened
(row-major) arrays so that values are reproducible run to run.

Worked example used throughout the tests (2x2, flattened)::

    g = [1, 1, 0, 0]      p = [1, 0, 1, 0]
    tp = 1, fn = 1, fp = 1, sum(p) = 2, sum(g) = 2

    dice (conventional, eps=0)   1 - 2*1 / (2 + 2)              = 0.5
    tversky (a=0.7, b=0.3)       1 - 1 / (1 + 0.7 + 0.3)        = 0.5
    focal tversky (gamma=4/3)    0.5 ** 0.75                    = 0.594604
    combined (delta=0.5)         0.5*0.5 + 0.5*0.594604         = 0.547302
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

CONVENTIONAL = "conventional"
VERBATIM = "verbatim"

# below this distance from a perfect Tversky index the focal gradient is singular
_FT_SINGULAR = 1e-12


@dataclass(frozen=True)
class LossParams:
    """Hyperparameters shared by the loss family.

    ``alpha`` weighs false negatives and ``beta`` false positives in the
    Tversky index; the focal-Tversky term is raised to ``1 / gamma``.
    ``delta`` mixes Dice (``delta``) with focal-Tversky (``1 - delta``).
    ``dice_variant`` selects between the usual ``2 * tp`` numerator and the
    form without the factor two.
    """

    alpha: float = 0.7
    beta: float = 0.3
    gamma: float = 4.0 / 3.0
    delta: float = 0.5
    epsilon: float = 1e-6
    dice_variant: str = CONVENTIONAL
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    focal_clamp: float = 1e-7

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.dice_variant not in (CONVENTIONAL, VERBATIM):
            raise ValueError(f"unknown dice_variant {self.dice_variant!r}")
        if not 0.0 <= self.focal_alpha <= 1.0:
            raise ValueError("focal_alpha must lie in [0, 1]")
        if self.focal_gamma < 0:
            raise ValueError("focal_gamma must be non-negative")
        if not 0.0 < self.focal_clamp < 0.5:
            raise ValueError("focal_clamp must lie in (0, 0.5)")

    def with_(self, **changes) -> "LossParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class LossResult:
    value: float
    grad: np.ndarray


LossFn = Callable[[np.ndarray, np.ndarray, LossParams], LossResult]


def _prepare(p, g):
    p = np.asarray(p, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: prediction {p.shape} vs mask {g.shape}")
    return p, g


def _ratio_grad(num, den, dnum, dden):
    if den == 0:
        raise ValueError("degenerate overlap ratio (0/0); use epsilon > 0")
    return num / den, (dnum * den - num * dden) / (den * den)


def tversky_index(p, g, params: LossParams):
    """Return the Tversky index and its gradient with respect to ``p``."""
    p, g = _prepare(p, g)
    eps = params.epsilon
    s_tp = np.sum(p * g)
    s_fn = np.sum((1.0 - p) * g)
    s_fp = np.sum(p * (1.0 - g))
    num = s_tp + eps
    den = s_tp + params.alpha * s_fn + params.beta * s_fp + eps
    dden = g - params.alpha * g + params.beta * (1.0 - g)
    return _ratio_grad(num, den, g, dden)


def dice_loss(p, g, params: LossParams) -> LossResult:
    p, g = _prepare(p, g)
    eps = params.epsilon
    k = 2.0 if params.dice_variant == CONVENTIONAL else 1.0
    num = k * np.sum(p * g) + eps
    den = np.sum(p) + np.sum(g) + eps
    coef, dcoef = _ratio_grad(num, den, k * g, np.ones_like(p))
    return LossResult(float(1.0 - coef), -dcoef)


def tversky_loss(p, g, params: LossParams) -> LossResult:
    ti, dti = tversky_index(p, g, params)
    return LossResult(float(1.0 - ti), -dti)


def focal_tversky_loss(p, g, params: LossParams) -> LossResult:
    ti, dti = tversky_index(p, g, params)
    expo = 1.0 / params.gamma
    base = max(1.0 - ti, 0.0)
    value = base**expo
    if base < _FT_SINGULAR and expo < 1.0:
        # minimum of the loss; the true derivative diverges here
        grad = np.zeros_like(dti)
    else:
        grad = expo * base ** (expo - 1.0) * -dti
    return LossResult(float(value), grad)


def jaccard_loss(p, g, params: LossParams) -> LossResult:
    p, g = _prepare(p, g)
    eps = params.epsilon
    s_tp = np.sum(p * g)
    num = s_tp + eps
    den = np.sum(p) + np.sum(g) - s_tp + eps
    coef, dcoef = _ratio_grad(num, den, g, 1.0 - g)
    return LossResult(float(1.0 - coef), -dcoef)


def focal_loss(p, g, params: LossParams) -> LossResult:
    """Mean binary focal loss.

    Probabilities are clamped to ``[focal_clamp, 1 - focal_clamp]`` so the
    logarithms stay finite; the gradient is zero where the clamp is active.
    """
    p, g = _prepare(p, g)
    a, gam, c = params.focal_alpha, params.focal_gamma, params.focal_clamp
    q = np.clip(p, c, 1.0 - c)
    u = 1.0 - q
    log_q, log_u = np.log(q), np.log(u)
    pos = -a * u**gam * log_q
    neg = -(1.0 - a) * q**gam * log_u
    n = p.size
    value = np.sum(g * pos + (1.0 - g) * neg) / n

    if gam == 0:
        dpos = -a / q
        dneg = (1.0 - a) / u
    else:
        dpos = -a * (-gam * u ** (gam - 1.0) * log_q + u**gam / q)
        dneg = -(1.0 - a) * (gam * q ** (gam - 1.0) * log_u - q**gam / u)
    grad = (g * dpos + (1.0 - g) * dneg) / n
    grad = np.where((p > c) & (p < 1.0 - c), grad, 0.0)
    return LossResult(float(value), grad)


def combined_loss(p, g, params: LossParams) -> LossResult:
    """``delta * dice + (1 - delta) * focal_tversky`` for the single contrail class."""
    d = dice_loss(p, g, params)
    ft = focal_tversky_loss(p, g, params)
    w = params.delta
    return LossResult(w * d.value + (1.0 - w) * ft.value, w * d.grad + (1.0 - w) * ft.grad)


LOSSES: dict[str, LossFn] = {
    "dice": dice_loss,
    "jaccard": jaccard_loss,
    "tversky": tversky_loss,
    "focal_tversky": focal_tversky_loss,
    "focal": focal_loss,
    "combined": combined_loss,
}


def get_loss(name: str) -> LossFn:
    try:
        return LOSSES[name]
    except KeyError:
        raise ValueError(f"unknown loss {name!r}; choose from {sorted(LOSSES)}") from None


def batch_loss(loss_fn: LossFn, p, g, params: LossParams) -> LossResult:
    """Per-image loss averaged over the leading (batch) axis."""
    p = np.asarray(p)
    g = np.asarray(g)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: prediction {p.shape} vs mask {g.shape}")
    n = p.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    grad = np.empty(p.shape, dtype=np.float64)
    total = 0.0
    for i in range(n):
        r = loss_fn(p[i], g[i], params)
        total += r.value
        grad[i] = r.grad / n
    return LossResult(total / n, grad)


def finite_difference_gradient(loss_fn, p, g, params, h: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of ``loss_fn(p, g, params).value`` w.r.t. ``p``.

    ``loss_fn`` may return a :class:`LossResult` or a plain float.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    p = np.array(p, dtype=np.float64)
    flat = p.reshape(-1)
    out = np.empty_like(flat)

    def f(x):
        r = loss_fn(x, g, params)
        return r.value if isinstance(r, LossResult) else float(r)

    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(p)
        flat[i] = orig - h
        down = f(p)
        flat[i] = orig
        out[i] = (up - down) / (2.0 * h)
    return out.reshape(p.shape)


def max_relative_error(a, b, floor: float = 1e-8) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0
