"""Binarization and intersection-over-union evaluation."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np


def binarize(p, threshold: float = 0.5) -> np.ndarray:
    """Pixel is 1 iff ``p >= threshold``."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie strictly between 0 and 1")
    return (np.asarray(p) >= threshold).astype(np.uint8)


def overlap_counts(a, b) -> tuple[int, int]:
    """``(|a & b|, |a | b|)`` for two binary masks of the same shape."""
    a = np.asarray(a).astype(bool)
    b = np.asarray(b).astype(bool)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a & b)), int(np.count_nonzero(a | b))


def iou(a, b) -> float:
    """Intersection over union; two empty masks agree perfectly (1.0)."""
    inter, union = overlap_counts(a, b)
    return 1.0 if union == 0 else inter / union


@dataclass
class EvalReport:
    per_image_iou: list[tuple[str, float]]
    mean_iou: float
    global_iou: float
    threshold: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["scene_id", "iou"])
        for scene_id, value in self.per_image_iou:
            writer.writerow([scene_id, repr(value)])
        writer.writerow(["__mean__", repr(self.mean_iou)])
        writer.writerow(["__global__", repr(self.global_iou)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, threshold: float = 0.5) -> "EvalReport":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["scene_id", "iou"]:
            raise ValueError("missing scene_id,iou header")
        per, mean, glob = [], None, None
        for scene_id, value in rows[1:]:
            if scene_id == "__mean__":
                mean = float(value)
            elif scene_id == "__global__":
                glob = float(value)
            else:
                per.append((scene_id, float(value)))
        if mean is None or glob is None:
            raise ValueError("missing __mean__ / __global__ footer rows")
        return cls(per, mean, glob, threshold)


def evaluate_dataset(pairs, threshold: float = 0.5) -> EvalReport:
    """Per-image IoU plus macro (mean of IoUs) and micro (pooled) aggregates.

    ``pairs`` is a sequence of ``(scene_id, probabilities, ground_truth)``.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("cannot evaluate an empty dataset")
    per = []
    total_inter = total_union = 0
    for scene_id, p, g in pairs:
        inter, union = overlap_counts(binarize(p, threshold), g)
        per.append((scene_id, 1.0 if union == 0 else inter / union))
        total_inter += inter
        total_union += union
    mean_iou = float(np.mean([v for _, v in per]))
    global_iou = 1.0 if total_union == 0 else total_inter / total_union
    return EvalReport(per, mean_iou, global_iou, threshold)
