"""False-color composites from thermal and cirrus bands.

Channel recipe:

* red   -- brightness-temperature difference BT(12 um) - BT(11 um), kelvin
* green -- 1.37 um cirrus reflectance; zero for nighttime scenes
* blue  -- BT(12 um), kelvin

Each channel is linearly stretched from ``[lo, hi]`` to ``[0, 1]`` and clamped.

Band data lives in a small binary container (``.bstk``)::

    b"BSTK"  u16 version  u32 height  u32 width  u8 flags
    float32 LE bt11[H*W], bt12[H*W], cirrus[H*W] (only if flags bit 1)

with flags bit 0 = is_night, bit 1 = cirrus present.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

BANDSTACK_MAGIC = b"BSTK"
BANDSTACK_VERSION = 1
_HEADER = struct.Struct("<4sHIIB")
_FLAG_NIGHT = 1
_FLAG_CIRRUS = 2


@dataclass(frozen=True)
class ChannelRanges:
    red_lo: float = -4.0
    red_hi: float = 2.0
    green_lo: float = 0.0
    green_hi: float = 0.25
    blue_lo: float = 243.0
    blue_hi: float = 303.0

    def __post_init__(self):
        for ch in ("red", "green", "blue"):
            if not getattr(self, f"{ch}_lo") < getattr(self, f"{ch}_hi"):
                raise ValueError(f"{ch} range must satisfy lo < hi")


@dataclass(frozen=True, eq=False)
class BandStack:
    bt11: np.ndarray
    bt12: np.ndarray
    cirrus: np.ndarray | None = None
    is_night: bool = False

    def __post_init__(self):
        shape = np.shape(self.bt11)
        if len(shape) != 2:
            raise ValueError("bands must be 2-D grids")
        grids = {"bt11": self.bt11, "bt12": self.bt12}
        if self.cirrus is not None:
            grids["cirrus"] = self.cirrus
        for name, grid in grids.items():
            if np.shape(grid) != shape:
                raise ValueError(f"band {name} has shape {np.shape(grid)}, expected {shape}")
            if not np.all(np.isfinite(grid)):
                raise ValueError(f"band {name} contains non-finite values")

    @property
    def height(self) -> int:
        return np.shape(self.bt11)[0]

    @property
    def width(self) -> int:
        return np.shape(self.bt11)[1]


def _stretch(x, lo, hi):
    return np.clip((x - lo) / (hi - lo), 0.0, 1.0)


def false_color(bands: BandStack, ranges: ChannelRanges = ChannelRanges()) -> np.ndarray:
    """Return an ``(H, W, 3)`` float32 image with values in [0, 1]."""
    if not bands.is_night and bands.cirrus is None:
        raise ValueError("daytime scene requires the cirrus band")
    bt11 = np.asarray(bands.bt11, dtype=np.float64)
    bt12 = np.asarray(bands.bt12, dtype=np.float64)
    red = _stretch(bt12 - bt11, ranges.red_lo, ranges.red_hi)
    if bands.is_night:
        green = np.zeros_like(red)
    else:
        green = _stretch(np.asarray(bands.cirrus, dtype=np.float64), ranges.green_lo, ranges.green_hi)
    blue = _stretch(bt12, ranges.blue_lo, ranges.blue_hi)
    return np.stack([red, green, blue], axis=-1).astype(np.float32)


def encode_bandstack(bands: BandStack) -> bytes:
    flags = (_FLAG_NIGHT if bands.is_night else 0) | (_FLAG_CIRRUS if bands.cirrus is not None else 0)
    parts = [_HEADER.pack(BANDSTACK_MAGIC, BANDSTACK_VERSION, bands.height, bands.width, flags)]
    for grid in (bands.bt11, bands.bt12, bands.cirrus):
        if grid is not None:
            parts.append(np.ascontiguousarray(grid, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_bandstack(data: bytes) -> BandStack:
    if len(data) < _HEADER.size:
        raise ValueError("band stack truncated before header end")
    magic, version, h, w, flags = _HEADER.unpack_from(data, 0)
    if magic != BANDSTACK_MAGIC:
        raise ValueError("not a band stack (bad magic)")
    if version != BANDSTACK_VERSION:
        raise ValueError(f"unsupported band stack version {version}")
    n_grids = 3 if flags & _FLAG_CIRRUS else 2
    expected = _HEADER.size + 4 * h * w * n_grids
    if len(data) != expected:
        raise ValueError(f"band stack has {len(data)} bytes, expected {expected}")
    grids = []
    for i in range(n_grids):
        start = _HEADER.size + 4 * h * w * i
        grids.append(np.frombuffer(data, dtype="<f4", count=h * w, offset=start).reshape(h, w).astype(np.float32))
    cirrus = grids[2] if n_grids == 3 else None
    return BandStack(grids[0], grids[1], cirrus, bool(flags & _FLAG_NIGHT))


def save_bandstack(path, bands: BandStack) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_bandstack(bands))


def load_bandstack(path) -> BandStack:
    with open(path, "rb") as fh:
        return decode_bandstack(fh.read())
