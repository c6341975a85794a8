"""Rectangles, region geometry, geometric transforms and layer compositing."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage


class RasterError(ValueError):
    pass


@dataclass(frozen=True)
class Rect:
    x: int
    y: int
    w: int
    h: int

    @property
    def x1(self) -> int:
        return self.x + self.w

    @property
    def y1(self) -> int:
        return self.y + self.h

    @property
    def area(self) -> int:
        return max(0, self.w) * max(0, self.h)

    @property
    def center(self) -> tuple[float, float]:
        return self.x + self.w / 2.0, self.y + self.h / 2.0

    @property
    def slices(self) -> tuple[slice, slice]:
        return slice(self.y, self.y1), slice(self.x, self.x1)

    def expand(self, margin: int) -> "Rect":
        return Rect(self.x - margin, self.y - margin, self.w + 2 * margin, self.h + 2 * margin)

    def clip(self, width: int, height: int) -> "Rect":
        x0, y0 = max(0, self.x), max(0, self.y)
        x1, y1 = min(width, self.x1), min(height, self.y1)
        return Rect(x0, y0, max(0, x1 - x0), max(0, y1 - y0))

    def intersects(self, other: "Rect") -> bool:
        return self.x < other.x1 and other.x < self.x1 and self.y < other.y1 and other.y < self.y1

    def within(self, width: int, height: int) -> bool:
        return self.x >= 0 and self.y >= 0 and self.x1 <= width and self.y1 <= height

    def to_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]

    @classmethod
    def from_list(cls, v) -> "Rect":
        x, y, w, h = (int(a) for a in v)
        return cls(x, y, w, h)


@dataclass(frozen=True, eq=False)
class RegionGeometry:
    """A rectangle plus an optional coverage mask (h x w floats in [0, 1])."""

    rect: Rect
    shape: np.ndarray | None = None

    def __post_init__(self):
        if self.shape is not None and self.shape.shape != (self.rect.h, self.rect.w):
            raise RasterError(f"shape mask {self.shape.shape} does not match rect {self.rect}")


def as_geometry(region) -> RegionGeometry:
    if isinstance(region, RegionGeometry):
        return region
    if isinstance(region, Rect):
        return RegionGeometry(region)
    return RegionGeometry(Rect.from_list(region))


def check_region(img: np.ndarray, rect: Rect) -> None:
    if rect.w <= 0 or rect.h <= 0:
        raise RasterError(f"degenerate region {rect.to_list()}")
    if not rect.within(img.shape[1], img.shape[0]):
        raise RasterError(f"region {rect.to_list()} outside image {img.shape[1]}x{img.shape[0]}")


def rects_mask(rects, width: int, height: int, dilate: int = 0) -> np.ndarray:
    """Boolean mask covering the union of ``rects`` grown by ``dilate`` pixels."""
    m = np.zeros((height, width), dtype=bool)
    for r in rects:
        c = r.expand(dilate).clip(width, height)
        if c.area:
            m[c.slices] = True
    return m


def to_uint8(a: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(a), 0, 255).astype(np.uint8)


def adaptive_scale(patch_wh: tuple[int, int], target_wh: tuple[int, int]) -> float:
    """Largest aspect-preserving scale that fits the patch inside the target."""
    pw, ph = patch_wh
    tw, th = target_wh
    return min(tw / pw, th / ph)


def transform_layer(
    rgb: np.ndarray,
    alpha: np.ndarray | None = None,
    scale: float = 1.0,
    rotation: float = 0.0,
    target: tuple[int, int] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Scale then rotate an RGB layer and its coverage.

    ``target`` (w, h) selects adaptive scaling. Rotation is about the layer
    centre with bilinear resampling, and the output grows to contain the
    rotated corners; uncovered pixels get zero coverage.
    """
    if rgb.size == 0:
        raise RasterError("empty patch")
    h, w = rgb.shape[:2]
    if alpha is None:
        alpha = np.ones((h, w), dtype=float)
    if target is not None:
        scale = adaptive_scale((w, h), target)
    if scale <= 0:
        raise RasterError(f"scale must be positive, got {scale}")
    if scale == 1.0 and rotation == 0.0:
        return rgb.copy(), alpha.astype(float).copy()

    layer = np.concatenate([rgb.astype(float), alpha[..., None].astype(float)], axis=2)
    nw, nh = max(1, int(round(w * scale))), max(1, int(round(h * scale)))
    if (nw, nh) != (w, h):
        # premultiply so colour does not bleed from uncovered pixels
        layer[..., :3] *= layer[..., 3:]
        zoom = (nh / h, nw / w, 1)
        layer = ndimage.zoom(layer, zoom, order=1, mode="nearest", grid_mode=True)
        layer = layer[:nh, :nw]
        a = layer[..., 3:]
        layer[..., :3] = np.where(a > 1e-9, layer[..., :3] / np.maximum(a, 1e-9), 0.0)
    if rotation != 0.0:
        layer = _rotate(layer, rotation)
    rgb_out = to_uint8(layer[..., :3])
    alpha_out = np.clip(layer[..., 3], 0.0, 1.0)
    return rgb_out, alpha_out


def _rotate(layer: np.ndarray, degrees: float) -> np.ndarray:
    h, w = layer.shape[:2]
    th = math.radians(degrees)
    c, s = math.cos(th), math.sin(th)
    ow = int(math.ceil(abs(w * c) + abs(h * s) - 1e-9))
    oh = int(math.ceil(abs(w * s) + abs(h * c) - 1e-9))
    ow, oh = max(ow, w), max(oh, h)
    # output pixel centre -> input coordinates (inverse rotation about centres)
    yy, xx = np.mgrid[0:oh, 0:ow].astype(float)
    xo, yo = xx - (ow - 1) / 2.0, yy - (oh - 1) / 2.0
    xi = c * xo + s * yo + (w - 1) / 2.0
    yi = -s * xo + c * yo + (h - 1) / 2.0
    pre = layer.copy()
    pre[..., :3] *= pre[..., 3:]
    out = np.empty((oh, ow, layer.shape[2]))
    for ch in range(layer.shape[2]):
        out[..., ch] = ndimage.map_coordinates(pre[..., ch], [yi, xi], order=1, mode="constant", cval=0.0)
    a = out[..., 3:]
    out[..., :3] = np.where(a > 1e-9, out[..., :3] / np.maximum(a, 1e-9), 0.0)
    return out


def transform_region(
    patch: np.ndarray,
    scale: float | None = 1.0,
    rotation: float = 0.0,
    target: tuple[int, int] | None = None,
) -> np.ndarray:
    """RGB-only view of :func:`transform_layer`; uncovered pixels are black."""
    rgb, _ = transform_layer(patch, None, 1.0 if scale is None else scale, rotation, target)
    return rgb


def composite_paste(
    dst: np.ndarray,
    patch: np.ndarray,
    shape: np.ndarray | None = None,
    at: tuple[int, int] = (0, 0),
) -> tuple[np.ndarray, Rect]:
    """Source-over paste of ``patch`` at ``at`` = (x, y), clipped to ``dst``.

    ``shape`` holds per-pixel coverage in [0, 1]; fractional values blend
    linearly. Returns the new image and the clipped paste rectangle.
    """
    H, W = dst.shape[:2]
    ph, pw = patch.shape[:2]
    full = Rect(int(at[0]), int(at[1]), pw, ph)
    clipped = full.clip(W, H)
    if clipped.area == 0:
        raise RasterError(f"paste at {at} with size {pw}x{ph} lies outside {W}x{H}")
    out = dst.copy()
    sy = slice(clipped.y - full.y, clipped.y - full.y + clipped.h)
    sx = slice(clipped.x - full.x, clipped.x - full.x + clipped.w)
    src = patch[sy, sx]
    if shape is None:
        out[clipped.slices] = src
        return out, clipped
    a = np.clip(shape[sy, sx].astype(float), 0.0, 1.0)
    region = out[clipped.slices].astype(float)
    blended = region + (src.astype(float) - region) * a[..., None]
    # fully covered / uncovered pixels stay bit-exact
    res = to_uint8(blended)
    res = np.where(a[..., None] >= 1.0, src, res)
    res = np.where(a[..., None] <= 0.0, out[clipped.slices], res)
    out[clipped.slices] = res
    return out, clipped
