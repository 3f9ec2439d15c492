"""Deterministic synthetic contrail scenes.

Each scene is a 3-channel image in [0, 1] resembling a false-color composite:
a smooth bright background, a few soft cirrus-like blobs, and straight dark
strips standing in for contrails. The ground-truth mask is computed from the
strip geometry itself (capsules: segments dilated by half the strip width),
never from the rendered pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

# per-channel response of a clutter blob: greener (cirrus reflectance), slightly less red
_BLOB_TINT = np.array([-0.08, 0.22, -0.04])
_MAX_ENDPOINT_TRIES = 1000


@dataclass(frozen=True)
class SynthParams:
    height: int = 64
    width: int = 64
    n_contrails: tuple[int, int] = (1, 3)
    line_width: tuple[float, float] = (2.0, 4.0)
    blur_sigma: float = 0.5
    n_clutter_blobs: tuple[int, int] = (0, 3)
    noise_std: float = 0.03
    seed: int = 0

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0:
            raise ValueError("dimensions must be positive")
        for name in ("n_contrails", "line_width", "n_clutter_blobs"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ValueError(f"{name} range must satisfy 0 <= lo <= hi")
        if self.line_width[0] <= 0:
            raise ValueError("line widths must be positive")
        if self.blur_sigma < 0 or self.noise_std < 0:
            raise ValueError("blur_sigma and noise_std must be non-negative")


def segment_distance(rows, cols, a, b):
    """Distance from points ``(rows, cols)`` to the segment ``a``-``b``."""
    ar, ac = a
    br, bc = b
    dr, dc = br - ar, bc - ac
    length2 = dr * dr + dc * dc
    pr, pc = rows - ar, cols - ac
    if length2 == 0:
        return np.hypot(pr, pc)
    t = np.clip((pr * dr + pc * dc) / length2, 0.0, 1.0)
    return np.hypot(pr - t * dr, pc - t * dc)


def _endpoints(rng, h, w):
    min_len = 0.3 * min(h, w)
    for _ in range(_MAX_ENDPOINT_TRIES):
        a = rng.uniform((0, 0), (h, w))
        b = rng.uniform((0, 0), (h, w))
        if np.hypot(*(b - a)) >= min_len:
            return a, b
    # corner-to-corner always satisfies the length bound
    return np.array([0.0, 0.0]), np.array([float(h), float(w)])


def generate_scene(params: SynthParams, index: int):
    """Return ``(image, mask)``: float32 (H, W, 3) in [0, 1] and uint8 (H, W)."""
    h, w = params.height, params.width
    rng = np.random.default_rng([params.seed, index])
    rows, cols = np.meshgrid(np.arange(h) + 0.5, np.arange(w) + 0.5, indexing="ij")

    base = np.array([0.55, 0.45, 0.70]) + rng.uniform(-0.05, 0.05, size=3)
    texture = gaussian_filter(rng.standard_normal((h, w)), sigma=6.0, mode="wrap")
    texture *= 0.08 / max(texture.std(), 1e-12)
    img = base[None, None, :] + texture[..., None]

    for _ in range(rng.integers(params.n_clutter_blobs[0], params.n_clutter_blobs[1] + 1)):
        cr, cc = rng.uniform((0, 0), (h, w))
        sa, sb = rng.uniform(4.0, 12.0, size=2)
        theta = rng.uniform(0, np.pi)
        amp = rng.uniform(0.5, 1.0)
        u = (rows - cr) * np.cos(theta) + (cols - cc) * np.sin(theta)
        v = -(rows - cr) * np.sin(theta) + (cols - cc) * np.cos(theta)
        blob = amp * np.exp(-0.5 * ((u / sa) ** 2 + (v / sb) ** 2))
        img += blob[..., None] * _BLOB_TINT

    mask = np.zeros((h, w), dtype=bool)
    shade = np.ones((h, w))
    for _ in range(rng.integers(params.n_contrails[0], params.n_contrails[1] + 1)):
        a, b = _endpoints(rng, h, w)
        width = rng.uniform(*params.line_width)
        darkness = rng.uniform(0.45, 0.6)
        dist = segment_distance(rows, cols, a, b)
        mask |= dist <= width / 2.0
        coverage = np.clip(width / 2.0 + 0.5 - dist, 0.0, 1.0)
        shade = np.minimum(shade, 1.0 - darkness * coverage)
    img *= shade[..., None]

    if params.blur_sigma > 0:
        img = gaussian_filter(img, sigma=(params.blur_sigma, params.blur_sigma, 0), mode="nearest")
    if params.noise_std > 0:
        img += rng.normal(0.0, params.noise_std, size=img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32), mask.astype(np.uint8)


def generate_dataset(params: SynthParams, count: int, start: int = 0):
    """Scenes ``start .. start + count - 1`` as ``(scene_id, image, mask)`` triples."""
    if count < 0:
        raise ValueError("count must be non-negative")
    out = []
    for i in range(start, start + count):
        img, mask = generate_scene(params, i)
        out.append((f"synth-{i}", img, mask))
    return out
