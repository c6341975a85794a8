"""Layer effects: stroke, drop shadow, outer glow and additive noise.

Shape-dependent effects work on a canvas equal to the region rectangle grown
by the effect's reach, which is computed from the spec alone:

    stroke       size (outside), ceil(size / 2) (center), 0 (inside)
    drop-shadow  distance + size + 1
    outer-glow   spread + 1
    noise        0

Nothing outside that canvas is touched, and the canvas (clipped to the
image) is returned as the effective geometry.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from .filters import fft_blur, noise_field
from .geometry import RasterError, Rect, as_geometry, check_region, to_uint8
from .specs import EffectSpec

GLOW_DEFAULT_SPREAD = 5


def disk(radius: int) -> np.ndarray:
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return xx * xx + yy * yy <= r * r


def effect_reach(spec: EffectSpec) -> int:
    k = spec.kind
    if k == "stroke":
        size = int(spec["size"])
        pos = spec.get("position", "outside")
        return size if pos == "outside" else (int(math.ceil(size / 2)) if pos == "center" else 0)
    if k == "drop-shadow":
        return int(spec["distance"]) + int(spec["size"]) + 1
    if k == "outer-glow":
        return int(spec.get("spread", GLOW_DEFAULT_SPREAD)) + 1
    return 0


def blend(base: np.ndarray, color, alpha: np.ndarray, mode: str) -> np.ndarray:
    """Blend a flat colour over ``base`` (floats) with per-pixel ``alpha``."""
    c = np.asarray(color, dtype=float).reshape(1, 1, 3)
    if mode == "normal":
        top = np.broadcast_to(c, base.shape)
    elif mode == "multiply":
        top = base * c / 255.0
    elif mode == "darken":
        top = np.minimum(base, c)
    else:
        raise RasterError(f"unknown blend mode {mode!r}")
    return base + (top - base) * alpha[..., None]


def _canvas(img: np.ndarray, geom, reach: int) -> tuple[Rect, np.ndarray]:
    """Clipped canvas rect and the shape coverage placed on it."""
    H, W = img.shape[:2]
    rect = geom.rect
    canvas = rect.expand(reach).clip(W, H)
    cov = np.zeros((canvas.h, canvas.w))
    shape = geom.shape if geom.shape is not None else np.ones((rect.h, rect.w))
    cov[rect.y - canvas.y : rect.y1 - canvas.y, rect.x - canvas.x : rect.x1 - canvas.x] = shape
    return canvas, cov


def _write(img: np.ndarray, canvas: Rect, base: np.ndarray, res: np.ndarray, touched: np.ndarray) -> np.ndarray:
    out = img.copy()
    block = img[canvas.slices]
    new = to_uint8(res)
    out[canvas.slices] = np.where(touched[..., None], new, block)
    return out


def _padded_ring(fg: np.ndarray, grow: int, shrink: int, pad: int) -> np.ndarray:
    """Band between ``fg`` dilated by ``grow`` and eroded by ``shrink``.

    Padding keeps the canvas edge from acting as background or foreground.
    """
    p = np.pad(fg, pad, mode="edge")
    outer = ndimage.binary_dilation(p, structure=disk(grow)) if grow > 0 else p
    inner = ndimage.binary_erosion(p, structure=disk(shrink), border_value=1) if shrink > 0 else p
    band = outer & ~inner
    return band[pad : pad + fg.shape[0], pad : pad + fg.shape[1]]


def apply_effect(img: np.ndarray, region, spec: EffectSpec, rng=None) -> tuple[np.ndarray, Rect]:
    geom = as_geometry(region)
    check_region(img, geom.rect)
    k = spec.kind
    if k == "noise":
        rect = geom.rect
        if rng is None:
            raise RasterError("noise needs a random stream")
        draws = noise_field(rng, (rect.h, rect.w), float(spec["amount"]), spec.get("distribution", "uniform"), bool(spec.get("monochromatic", False)))
        out = img.copy()
        if float(spec["amount"]) > 0:
            out[rect.slices] = to_uint8(img[rect.slices].astype(float) + draws)
        return out, rect

    if geom.shape is None:
        raise RasterError(f"{k} needs a shape mask")
    reach = effect_reach(spec)
    canvas, cov = _canvas(img, geom, reach)
    base = img[canvas.slices].astype(float)
    fg = cov >= 0.5

    if k == "stroke":
        size = int(spec["size"])
        pos = spec.get("position", "outside")
        if pos == "outside":
            band = _padded_ring(fg, size, 0, size + 1) & ~fg
        elif pos == "inside":
            band = fg & _padded_ring(fg, 0, size, size + 1)
        else:
            band = _padded_ring(fg, int(math.ceil(size / 2)), size // 2, size + 1)
        alpha = band * (float(spec.get("opacity", 100)) / 100.0)
        res = blend(base, spec["color"], alpha, spec.get("blend_mode", "normal"))
        return _write(img, canvas, base, res, band), canvas

    if rng is None:
        raise RasterError(f"{k} needs a random stream")
    if k == "drop-shadow":
        d, size = int(spec["distance"]), int(spec["size"])
        th = math.radians(float(spec["angle"]))
        dx, dy = -int(round(d * math.cos(th))), int(round(d * math.sin(th)))
        shifted = ndimage.shift(cov, (dy, dx), order=0, mode="constant", cval=0.0)
        spread = float(spec.get("spread", 0)) / 100.0
        soft = fft_blur(shifted, size)
        hard = np.clip(soft / max(1e-6, 1.0 - spread), 0.0, 1.0)
        alpha = hard * (1.0 - cov) * float(spec["opacity"]) / 100.0
        jitter = rng.gen.uniform(-1.0, 1.0, size=alpha.shape)
        alpha = np.clip(alpha * (1.0 + float(spec.get("noise", 0)) / 100.0 * jitter), 0.0, 1.0)
        res = blend(base, spec["color"], alpha, spec.get("blend_mode", "normal"))
        return _write(img, canvas, base, res, alpha > 0), canvas

    # outer glow
    spread = int(spec.get("spread", GLOW_DEFAULT_SPREAD))
    soft = fft_blur(cov, spread)
    alpha = soft * (1.0 - cov) * float(spec["opacity"]) / 100.0
    jitter = rng.gen.uniform(-1.0, 1.0, size=alpha.shape)
    alpha = np.clip(alpha * (1.0 + float(spec.get("noise", 0)) / 100.0 * jitter), 0.0, 1.0)
    res = blend(base, spec["color"], alpha, spec.get("blend_mode", "normal"))
    return _write(img, canvas, base, res, alpha > 0), canvas
