"""Scene loading and the on-disk dataset layout.

A scene is a triple ``(scene_id, image, mask)``: image ``(H, W, 3)`` float32 in
[0, 1], mask ``(H, W)`` uint8. A dataset directory holds::

    manifest.csv          scene_id,file
    <scene_id>.npz        arrays "image" and "mask"
    png/                  optional <scene_id>_image.png / <scene_id>_mask.png
"""

from __future__ import annotations

import csv
import os
import re

import numpy as np

from . import raster
from .annotations import load_scene_records
from .composite import ChannelRanges, false_color, load_bandstack
from .synth import SynthParams, generate_dataset

MANIFEST = "manifest.csv"
_SAFE = re.compile(r"[^A-Za-z0-9._-]")


def _file_stem(scene_id: str) -> str:
    return _SAFE.sub("_", scene_id)


def resize_scene(scene, size: int):
    scene_id, img, mask = scene
    if img.shape[:2] == (size, size):
        return scene_id, img.astype(np.float32), mask.astype(np.uint8)
    return (
        scene_id,
        raster.resize_image(img.astype(np.float32), size, size),
        raster.resize_mask(mask, size, size),
    )


def real_scenes(annotations, bandstack_dir, size: int, ranges: ChannelRanges = ChannelRanges()):
    """False-color images and rasterized masks for every annotated scene, resized to ``size``."""
    records = load_scene_records(annotations)
    scenes = []
    for rec in records:
        path = os.path.join(bandstack_dir, f"{rec.scene_id}.bstk")
        if not os.path.exists(path):
            raise FileNotFoundError(f"no band stack for scene {rec.scene_id!r} at {path}")
        bands = load_bandstack(path)
        if (bands.height, bands.width) != (rec.height, rec.width):
            raise ValueError(
                f"scene {rec.scene_id!r}: band stack is {bands.height}x{bands.width}, "
                f"annotation says {rec.height}x{rec.width}"
            )
        if bands.is_night != rec.is_night:
            raise ValueError(f"scene {rec.scene_id!r}: day/night flag disagrees with annotation")
        img = false_color(bands, ranges)
        mask = raster.render_ground_truth(rec)
        scenes.append(resize_scene((rec.scene_id, img, mask), size))
    return scenes


def synthetic_scenes(params: SynthParams, count: int, size: int):
    return [resize_scene(s, size) for s in generate_dataset(params, count)]


def load_scenes(config):
    """All scenes described by a :class:`~contrailseg.config.RunConfig`."""
    d = config.data
    if d.source == "synthetic":
        return synthetic_scenes(config.synth, d.count, d.size)
    return real_scenes(d.annotations, d.bandstacks, d.size)


def save_dataset(directory, scenes, png: bool = False) -> None:
    os.makedirs(directory, exist_ok=True)
    if png:
        os.makedirs(os.path.join(directory, "png"), exist_ok=True)
    rows = []
    for scene_id, img, mask in scenes:
        stem = _file_stem(scene_id)
        fname = f"{stem}.npz"
        np.savez(os.path.join(directory, fname), image=img.astype(np.float32), mask=mask.astype(np.uint8))
        rows.append((scene_id, fname))
        if png:
            raster.image_to_png(img, os.path.join(directory, "png", f"{stem}_image.png"))
            raster.mask_to_png(mask, os.path.join(directory, "png", f"{stem}_mask.png"))
    with open(os.path.join(directory, MANIFEST), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["scene_id", "file"])
        writer.writerows(rows)


def load_scene_file(path, scene_id: str | None = None):
    with np.load(path) as data:
        img = data["image"].astype(np.float32)
        mask = data["mask"].astype(np.uint8)
    if scene_id is None:
        scene_id = os.path.splitext(os.path.basename(path))[0]
    return scene_id, img, mask


def load_dataset(directory):
    manifest = os.path.join(directory, MANIFEST)
    if not os.path.exists(manifest):
        raise FileNotFoundError(f"{directory} has no {MANIFEST}")
    with open(manifest, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["scene_id", "file"]:
            raise ValueError(f"{manifest}: bad header {header}")
        return [load_scene_file(os.path.join(directory, f), sid) for sid, f in reader]


def prepare(annotations, bandstack_dir, out_dir, size: int = 512, png: bool = False,
            ranges: ChannelRanges = ChannelRanges()):
    """Build resized image/mask pairs from annotations and band stacks and write them out."""
    scenes = real_scenes(annotations, bandstack_dir, size, ranges)
    save_dataset(out_dir, scenes, png=png)
    return scenes
