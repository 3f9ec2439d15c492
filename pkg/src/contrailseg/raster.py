"""Polygon rasterization and resampling of masks and images.

Masks are ``(H, W)`` uint8 arrays of 0/1. Images ("image planes") are
``(H, W, C)`` float arrays with ``C`` in {1, 3}.

Pixel ``(r, c)`` is filled when its center ``(r + 0.5, c + 0.5)`` is inside
the polygon under the even-odd rule, with half-open edge spans in the row
direction. A center lying exactly on an edge counts as inside. Scanline
intercepts are only used as a starting guess; the final left/right decision
per pixel uses the sign of the edge orientation determinant, so ties resolve
exactly for the given floating-point coordinates.
"""

from __future__ import annotations

import math

import numpy as np


def _vertices(poly):
    verts = getattr(poly, "vertices", poly)
    arr = np.asarray(verts, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("polygon must be a sequence of (row, col) pairs")
    if len(arr) < 3:
        raise ValueError(f"polygon needs at least 3 vertices, got {len(arr)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("polygon has non-finite vertices")
    return arr


def _orient(edge, py, px):
    y0, x0, y1, x1 = edge
    return (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)


def _crosses_right(edge, py, px):
    """True when the edge meets the rightward ray from ``(py, px)`` strictly right of it."""
    o = _orient(edge, py, px)
    return o > 0 if edge[2] > edge[0] else o < 0


def _scan_row(edges, vertices, py, width):
    """Filled columns of one scanline at row-center ``py``."""
    toggles = np.zeros(width + 1, dtype=np.uint8)
    on_edge = []
    for edge in edges:
        y0, x0, y1, x1 = edge
        if y0 == y1:
            if py == y0:
                lo, hi = min(x0, x1), max(x0, x1)
                c_lo = max(math.ceil(lo - 0.5), 0)
                c_hi = min(math.floor(hi - 0.5), width - 1)
                on_edge.extend(range(c_lo, c_hi + 1))
            continue
        if not min(y0, y1) <= py < max(y0, y1):
            continue
        x_int = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
        k = min(max(math.ceil(x_int - 0.5), 0), width)
        # settle k exactly: centers 0..k-1 have the crossing strictly to their right
        while k > 0 and not _crosses_right(edge, py, k - 0.5):
            k -= 1
        while k < width and _crosses_right(edge, py, k + 0.5):
            k += 1
        toggles[0] ^= 1
        toggles[k] ^= 1
        if k < width and _orient(edge, py, k + 0.5) == 0:
            on_edge.append(k)
    for vy, vx in vertices:
        if vy == py and (vx - 0.5).is_integer() and 0 <= vx - 0.5 < width:
            on_edge.append(int(vx - 0.5))
    row = np.bitwise_xor.accumulate(toggles[:width]).astype(bool)
    row[on_edge] = True
    return row


def rasterize_polygon(poly, height: int, width: int) -> np.ndarray:
    """Binary mask of the pixels whose centers fall inside ``poly`` (scanline fill)."""
    if height <= 0 or width <= 0:
        raise ValueError("height and width must be positive")
    verts = [(float(r), float(c)) for r, c in _vertices(poly)]
    n = len(verts)
    edges = [verts[k] + verts[(k + 1) % n] for k in range(n)]
    mask = np.zeros((height, width), dtype=np.uint8)
    ys = [v[0] for v in verts]
    r0 = max(math.floor(min(ys) - 0.5) - 1, 0)
    r1 = min(math.ceil(max(ys) - 0.5) + 2, height)
    for r in range(r0, r1):
        mask[r] = _scan_row(edges, verts, r + 0.5, width)
    return mask


def render_ground_truth(record, height: int | None = None, width: int | None = None) -> np.ndarray:
    """Union of all polygon masks of a scene record (all zeros if it has none)."""
    height = record.height if height is None else height
    width = record.width if width is None else width
    mask = np.zeros((height, width), dtype=np.uint8)
    for poly in record.polygons:
        mask |= rasterize_polygon(poly, height, width)
    return mask


def _nearest_index(n_in, n_out):
    idx = np.floor((np.arange(n_out) + 0.5) * (n_in / n_out)).astype(np.int64)
    return np.minimum(idx, n_in - 1)


def resize_mask(mask, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resampling; output stays binary."""
    mask = np.asarray(mask)
    if out_h <= 0 or out_w <= 0:
        raise ValueError("output dimensions must be positive")
    h, w = mask.shape
    rows = _nearest_index(h, out_h)
    cols = _nearest_index(w, out_w)
    return mask[rows[:, None], cols[None, :]].astype(np.uint8)


def _bilinear_axis(n_in, n_out):
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_image(img, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel-center alignment.

    Accepts ``(H, W)`` or ``(H, W, C)``. Output values stay within the
    per-channel input range.
    """
    img = np.asarray(img)
    if out_h <= 0 or out_w <= 0:
        raise ValueError("output dimensions must be positive")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.copy()
    r0, r1, fr = _bilinear_axis(h, out_h)
    c0, c1, fc = _bilinear_axis(w, out_w)
    x = img.astype(np.float64)
    extra = (None,) * (img.ndim - 2)
    fr = fr[(slice(None), None) + extra]
    fc = fc[(None, slice(None)) + extra]
    top = x[r0][:, c0] * (1 - fc) + x[r0][:, c1] * fc
    bot = x[r1][:, c0] * (1 - fc) + x[r1][:, c1] * fc
    out = top * (1 - fr) + bot * fr
    # convex weights can overshoot by an ulp; keep the range guarantee exact
    axes = (0, 1)
    out = np.clip(out, x.min(axis=axes), x.max(axis=axes))
    return out.astype(img.dtype if np.issubdtype(img.dtype, np.floating) else np.float64)


def mask_to_png(mask, path) -> None:
    """Write a mask as 8-bit grayscale PNG (0 -> 0, 1 -> 255)."""
    from PIL import Image

    Image.fromarray((np.asarray(mask) > 0).astype(np.uint8) * 255).save(path)


def image_to_png(img, path) -> None:
    """Write an image with values in [0, 1] as 8-bit PNG (v -> round(v * 255))."""
    from PIL import Image

    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[..., 0]
    data = np.round(np.clip(arr, 0.0, 1.0) * 255).astype(np.uint8)
    Image.fromarray(data).save(path)
