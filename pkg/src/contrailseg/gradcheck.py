"""Finite-difference checks of the loss and network gradients.

Losses are checked entrywise in float64: relative error
``|a - b| / max(|a|, |b|, 1e-8)`` against central differences.

The network runs in float32; its analytic gradients are compared to central
differences of a float64 copy. ReLU and max-pool make the network piecewise
smooth, so when a +-h probe changes any gating decision the difference
quotient straddles a kink and measures nothing. For those entries the probes
replay the gates of the unperturbed pass, i.e. they differentiate the smooth
piece backprop differentiates. Errors are reported per parameter tensor as
``max |a - b| / max(max |a|, max |b|)``, which is the scale float32 rounding
acts on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .losses import (
    CONVENTIONAL,
    VERBATIM,
    LossParams,
    batch_loss,
    combined_loss,
    dice_loss,
    finite_difference_gradient,
    focal_loss,
    focal_tversky_loss,
    get_loss,
    jaccard_loss,
    max_relative_error,
    tversky_loss,
)
from .nn import NetConfig, UNet, init_params

LOSS_TOLERANCE = 1e-4
NETWORK_TOLERANCE = 1e-3

LOSS_SUITE = (
    ("dice[conventional]", dice_loss, {"dice_variant": CONVENTIONAL}),
    ("dice[verbatim]", dice_loss, {"dice_variant": VERBATIM}),
    ("jaccard", jaccard_loss, {}),
    ("tversky", tversky_loss, {}),
    ("focal_tversky", focal_tversky_loss, {}),
    ("focal", focal_loss, {}),
    ("combined", combined_loss, {}),
)


@dataclass
class CheckResult:
    name: str
    max_error: float
    tolerance: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.max_error < self.tolerance)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return f"{status}  {self.name:<22} max err {self.max_error:.3e}  (tol {self.tolerance:g}){extra}"


def random_pair(rng, size: int, lo: float = 0.01, hi: float = 0.99):
    p = rng.uniform(lo, hi, size=(size, size))
    g = (rng.uniform(size=(size, size)) < 0.4).astype(np.uint8)
    return p, g


def check_losses(n_pairs: int = 20, size: int = 8, h: float = 1e-4, seed: int = 0,
                 tolerance: float = LOSS_TOLERANCE, params: LossParams = LossParams()):
    rng = np.random.default_rng(seed)
    pairs = [random_pair(rng, size) for _ in range(n_pairs)]
    results = []
    for name, fn, overrides in LOSS_SUITE:
        lp = params.with_(**overrides)
        worst = 0.0
        for p, g in pairs:
            analytic = fn(p, g, lp).grad
            numeric = finite_difference_gradient(fn, p, g, lp, h)
            worst = max(worst, max_relative_error(analytic, numeric))
        results.append(CheckResult(name, worst, tolerance, f"{n_pairs} pairs {size}x{size}"))
    return results


@dataclass
class NetworkCheck:
    per_tensor: dict = field(default_factory=dict)
    checked: int = 0
    frozen: int = 0
    tolerance: float = NETWORK_TOLERANCE

    @property
    def max_error(self) -> float:
        return max(self.per_tensor.values()) if self.per_tensor else 0.0

    @property
    def passed(self) -> bool:
        return bool(self.max_error < self.tolerance)

    def result(self) -> CheckResult:
        return CheckResult("network", self.max_error, self.tolerance,
                           f"{self.checked} entries, {self.frozen} with frozen gates")


def _same_gates(a, b) -> bool:
    for name, entry in a.layers.items():
        if entry[2] is not None and not np.array_equal(entry[2], b.layers[name][2]):
            return False
    return all(np.array_equal(a.pools[k], b.pools[k]) for k in a.pools)


def check_network(net: UNet | None = None, x=None, g=None, loss: str = "combined",
                  params: LossParams = LossParams(), h: float = 1e-3,
                  max_entries: int | None = None, seed: int = 0,
                  tolerance: float = NETWORK_TOLERANCE) -> NetworkCheck:
    """Compare ``backward`` against finite differences for one input batch.

    Defaults: a depth-2, width-4 network on one random 3x16x16 input.
    ``max_entries`` caps the sampled entries per parameter tensor (None: all).
    """
    rng = np.random.default_rng(seed)
    if net is None:
        net = init_params(NetConfig(base_width=4, depth=2, seed=seed))
    if x is None:
        x = rng.uniform(0, 1, size=(1, net.config.in_channels, 16, 16)).astype(np.float32)
    if g is None:
        g = (rng.uniform(size=(x.shape[0], x.shape[2], x.shape[3])) < 0.2).astype(np.uint8)
    loss_fn = get_loss(loss)

    probs, cache = net.forward(x)
    res = batch_loss(loss_fn, probs[:, 0], g, params)
    grads = net.backward(cache, res.grad[:, None])

    ref = net.astype(np.float64)
    _, base_gates = ref.forward(x)

    def value(gates=None):
        p, c = ref.forward(x, gates)
        return batch_loss(loss_fn, p[:, 0], g, params).value, c

    report = NetworkCheck(tolerance=tolerance)
    for name, arr in ref.params.items():
        flat = arr.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, max_entries, replace=False))
        analytic = grads[name].reshape(-1)[idx].astype(np.float64)
        numeric = np.empty(len(idx))
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + h
            up, c_up = value()
            flat[i] = orig - h
            down, c_down = value()
            if not (_same_gates(c_up, base_gates) and _same_gates(c_down, base_gates)):
                report.frozen += 1
                flat[i] = orig + h
                up, _ = value(base_gates)
                flat[i] = orig - h
                down, _ = value(base_gates)
            flat[i] = orig
            numeric[j] = (up - down) / (2 * h)
        scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)))
        err = 0.0 if scale == 0 else float(np.max(np.abs(analytic - numeric)) / scale)
        report.per_tensor[name] = err
        report.checked += len(idx)
    return report
