"""Splitting, augmentation, training, evaluation and overlay rendering."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import config as config_mod
from .dataset import load_scenes
from .losses import batch_loss, get_loss
from .metrics import EvalReport, evaluate_dataset
from .nn import AdamState, UNet, init_params, load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)

LOG_HEADER = ("step", "loss", "train_iou")


# --------------------------------------------------------------------------
# splitting


def has_contrail(item) -> bool:
    """Scene records: any polygon. Scene triples: any positive mask pixel."""
    if hasattr(item, "polygons"):
        return len(item.polygons) > 0
    return bool(np.any(item[2]))


def split_dataset(records, ratio: float = 0.8, seed: int = 0, filter_empty: bool = True):
    """Seeded shuffle, then the first ``floor(ratio * n)`` items train and the rest test.

    With ``filter_empty`` items without contrails are dropped first.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie strictly between 0 and 1")
    items = [r for r in records if has_contrail(r)] if filter_empty else list(records)
    n = len(items)
    if n < 2:
        raise ValueError(f"need at least 2 records to split, have {n}")
    # decimal reading of the ratio avoids 0.29 * 100 -> 28.999...
    n_train = math.floor(Fraction(repr(float(ratio))) * n)
    perm = np.random.default_rng(seed).permutation(n)
    train = [items[i] for i in perm[:n_train]]
    test = [items[i] for i in perm[n_train:]]
    return train, test


# --------------------------------------------------------------------------
# augmentation


def dihedral(arr, k: int):
    """Element ``k`` (0..7) of the square's symmetry group on the first two axes.

    ``k % 4`` quarter turns, followed by a left-right flip when ``k >= 4``.
    """
    out = np.rot90(arr, k % 4, axes=(0, 1))
    if k >= 4:
        out = out[:, ::-1]
    return np.ascontiguousarray(out)


def dihedral_inverse(k: int) -> int:
    return k if k >= 4 else (4 - k) % 4


def augment_pair(img, mask, mode: str = "none", seed: int = 0):
    if mode == "none":
        return img, mask
    if mode != "rot90_flip":
        raise ValueError(f"unknown augmentation mode {mode!r}")
    if img.shape[0] != img.shape[1] or mask.shape[0] != mask.shape[1]:
        raise ValueError("rot90_flip needs square inputs")
    k = int(np.random.default_rng(seed).integers(8))
    return dihedral(img, k), dihedral(mask, k)


# --------------------------------------------------------------------------
# training


def batch_schedule(n: int, batch_size: int, steps: int, seed: int):
    """Index batches for each step: consecutive slices of per-epoch permutations."""
    rng = np.random.default_rng(seed)
    order = np.empty(0, dtype=np.int64)
    batches = []
    for _ in range(steps):
        while len(order) < batch_size:
            order = np.concatenate([order, rng.permutation(n)])
        batches.append(order[:batch_size])
        order = order[batch_size:]
    return batches


def to_tensor(images) -> np.ndarray:
    """Stack ``(H, W, C)`` images into a ``(N, C, H, W)`` float32 batch."""
    return np.ascontiguousarray(np.stack(images).transpose(0, 3, 1, 2), dtype=np.float32)


def mean_iou(net: UNet, scenes, threshold: float) -> float:
    return evaluate(net, scenes, threshold).mean_iou


@dataclass
class TrainResult:
    net: UNet
    state: AdamState
    log_rows: list
    train_scenes: list
    test_scenes: list
    checkpoint_path: str | None = None
    log_path: str | None = None

    @property
    def final_train_iou(self) -> float:
        for row in reversed(self.log_rows):
            if row[2] is not None:
                return row[2]
        return float("nan")

    def log_csv(self) -> str:
        return format_log(self.log_rows)


def format_log(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LOG_HEADER)
    for step, loss, iou in rows:
        writer.writerow([step, repr(loss), "" if iou is None else repr(iou)])
    return buf.getvalue()


def train(cfg, out_dir=None, scenes=None, initial_net: UNet | None = None) -> TrainResult:
    """Run the training loop described by ``cfg``.

    ``scenes`` overrides the configured data source; ``initial_net`` overrides
    the seeded initialization. Writes ``checkpoint.cnet`` and ``train_log.csv``
    to ``out_dir`` when given.
    """
    cfg.validate()
    if scenes is None:
        scenes = load_scenes(cfg)
    train_set, test_set = split_dataset(scenes, cfg.split.ratio, cfg.split.seed, cfg.split.filter_empty)
    if not train_set:
        raise ValueError("training split is empty")
    size = cfg.data.size
    for sid, img, mask in train_set:
        if img.shape != (size, size, cfg.net.in_channels) or mask.shape != (size, size):
            raise ValueError(f"scene {sid!r} has shape {img.shape}, expected {(size, size, cfg.net.in_channels)}")

    net = initial_net.copy() if initial_net is not None else init_params(cfg.net)
    if net.config != cfg.net:
        raise ValueError("initial network does not match the configured architecture")
    o = cfg.optimizer
    state = AdamState(lr=o.lr, beta1=o.beta1, beta2=o.beta2, eps=o.eps)
    loss_fn = get_loss(cfg.loss_name)
    tc = cfg.train

    images = [s[1] for s in train_set]
    masks = [s[2] for s in train_set]
    rows = []
    for step, idx in enumerate(batch_schedule(len(train_set), tc.batch_size, tc.steps, tc.seed)):
        pairs = [
            augment_pair(images[i], masks[i], tc.augment, seed=(tc.seed, step, slot))
            for slot, i in enumerate(idx)
        ]
        x = to_tensor([p[0] for p in pairs])
        y = np.stack([p[1] for p in pairs])
        probs, cache = net.forward(x)
        res = batch_loss(loss_fn, probs[:, 0], y, cfg.loss)
        grads = net.backward(cache, res.grad[:, None])
        net.step(grads, state)
        iou = None
        if (step + 1) % tc.log_every == 0 or step == tc.steps - 1:
            iou = mean_iou(net, train_set, cfg.eval.threshold)
            log.info("step %d loss %.5f train IoU %.4f", step, res.value, iou)
        rows.append((step, res.value, iou))

    result = TrainResult(net, state, rows, train_set, test_set)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        result.checkpoint_path = os.path.join(out_dir, "checkpoint.cnet")
        result.log_path = os.path.join(out_dir, "train_log.csv")
        save_checkpoint(result.checkpoint_path, net, state)
        with open(result.log_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(result.log_csv())
        with open(os.path.join(out_dir, "config.ini"), "w", encoding="utf-8") as fh:
            fh.write(config_mod.dumps(cfg))
    return result


# --------------------------------------------------------------------------
# evaluation


def _as_net(checkpoint) -> UNet:
    if isinstance(checkpoint, UNet):
        return checkpoint
    net, _ = load_checkpoint(checkpoint)
    return net


def predict(checkpoint, scenes, batch_size: int = 8) -> list[np.ndarray]:
    """Probability maps ``(H, W)`` for each scene."""
    net = _as_net(checkpoint)
    step = 2**net.config.depth
    for sid, img, _ in scenes:
        if img.ndim != 3 or img.shape[2] != net.config.in_channels:
            raise ValueError(f"scene {sid!r}: expected {net.config.in_channels} channels, got shape {img.shape}")
        if img.shape[0] % step or img.shape[1] % step:
            raise ValueError(f"scene {sid!r}: size {img.shape[:2]} not divisible by {step}")
    out = []
    for i in range(0, len(scenes), batch_size):
        chunk = scenes[i : i + batch_size]
        shapes = {s[1].shape for s in chunk}
        if len(shapes) == 1:
            out.extend(net.predict(to_tensor([s[1] for s in chunk]))[:, 0])
        else:
            out.extend(net.predict(to_tensor([s[1]]))[0, 0] for s in chunk)
    return out


def evaluate(checkpoint, scenes, threshold: float = 0.5) -> EvalReport:
    """Run inference on ``(scene_id, image, mask)`` triples and score them."""
    scenes = list(scenes)
    if not scenes:
        raise ValueError("cannot evaluate an empty dataset")
    probs = predict(checkpoint, scenes)
    for (sid, _, mask), p in zip(scenes, probs):
        if mask.shape != p.shape:
            raise ValueError(f"scene {sid!r}: mask shape {mask.shape} != prediction {p.shape}")
    return evaluate_dataset([(s[0], p, s[2]) for s, p in zip(scenes, probs)], threshold)


# --------------------------------------------------------------------------
# overlays

FP_CHANNEL = 0  # red
FN_CHANNEL = 2  # blue


def disagreement_map(ground_truth, prediction) -> np.ndarray:
    """RGB map: false positives in red, false negatives in blue, agreement black."""
    gt = np.asarray(ground_truth).astype(bool)
    pr = np.asarray(prediction).astype(bool)
    if gt.shape != pr.shape:
        raise ValueError(f"shape mismatch: {gt.shape} vs {pr.shape}")
    out = np.zeros(gt.shape + (3,), dtype=np.float32)
    out[..., FP_CHANNEL] = pr & ~gt
    out[..., FN_CHANNEL] = gt & ~pr
    return out


def render_overlay(img, ground_truth, prediction) -> np.ndarray:
    """Four panels side by side: input, ground truth, prediction, disagreement."""
    img = np.asarray(img, dtype=np.float32)
    if img.ndim == 2:
        img = img[..., None]
    if img.shape[2] == 1:
        img = np.repeat(img, 3, axis=2)
    gt = np.asarray(ground_truth)
    if img.shape[:2] != gt.shape or gt.shape != np.shape(prediction):
        raise ValueError("image, ground truth and prediction must share height and width")

    def gray(m):
        return np.repeat(np.asarray(m, dtype=np.float32)[..., None], 3, axis=2)

    panels = [np.clip(img, 0.0, 1.0), gray(gt > 0), gray(np.asarray(prediction) > 0),
              disagreement_map(gt, prediction)]
    return np.concatenate(panels, axis=1)
