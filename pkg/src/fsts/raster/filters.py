"""Region-confined filters.

Each filter reads a crop around the region large enough for its kernel,
sampling past the image edge by clamping, and writes back only the region.

Fixed kernels::

    mean       3x3 box, 1/9 each
    blur       outer([1, 2, 1], [1, 2, 1]) / 16
    blur-more  outer([1, 4, 6, 4, 1], [1, 4, 6, 4, 1]) / 256

Gaussian blur uses sigma = radius / 2 truncated at 3 sigma. Sharpen is an
unsharp mask over that same Gaussian, applied per channel only where the
difference from the blurred value reaches the threshold. Radial blur uses
a fixed 10 degree spin arc or a 10 % zoom, averaged over 5/9/17 samples for
draft/good/best quality. Lens blur maps aperture radius 0-1 to a polygon
kernel of 1-8 px.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage, signal

from .geometry import RasterError, Rect, as_geometry, check_region, to_uint8
from .specs import FilterSpec

_B3 = np.array([1.0, 2.0, 1.0])
_B5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0])
KERNELS = {
    "mean": np.full((3, 3), 1.0 / 9.0),
    "blur": np.outer(_B3, _B3) / 16.0,
    "blur-more": np.outer(_B5, _B5) / 256.0,
}
RADIAL_SAMPLES = {"draft": 5, "good": 9, "best": 17}
RADIAL_SPIN_DEGREES = 10.0
RADIAL_ZOOM = 0.10
SMART_STEP = {"high": 1, "medium": 2, "low": 3}
APERTURE_SIDES = {"triangle": 3, "quadrilateral": 4, "pentagon": 5, "hexagon": 6, "heptagon": 7, "octagon": 8}


def _crop(img: np.ndarray, rect: Rect, margin: int) -> tuple[np.ndarray, tuple[slice, slice]]:
    """Float crop of rect grown by margin, and the slices of rect inside it."""
    H, W = img.shape[:2]
    c = rect.expand(margin).clip(W, H)
    crop = img[c.slices].astype(float)
    inner = (slice(rect.y - c.y, rect.y - c.y + rect.h), slice(rect.x - c.x, rect.x - c.x + rect.w))
    return crop, inner


def _per_channel(fn, crop: np.ndarray) -> np.ndarray:
    return np.stack([fn(crop[..., c]) for c in range(crop.shape[2])], axis=2)


def gaussian(crop: np.ndarray, radius: float) -> np.ndarray:
    sigma = radius / 2.0
    if sigma <= 0:
        return crop.copy()
    return ndimage.gaussian_filter(crop, sigma=(sigma, sigma, 0), mode="nearest", truncate=3.0)


def gaussian_reach(radius: float) -> int:
    return int(3.0 * radius / 2.0 + 0.5) + 1


def motion_kernel(angle: float, distance: int) -> np.ndarray:
    """Normalised line kernel of length ``distance`` at ``angle`` degrees."""
    half = distance / 2.0
    size = 2 * int(math.ceil(half)) + 3
    k = np.zeros((size, size))
    c = size // 2
    th = math.radians(angle)
    n = max(2, 4 * distance + 1)
    for t in np.linspace(-half, half, n):
        x, y = c + t * math.cos(th), c - t * math.sin(th)
        x0, y0 = int(math.floor(x)), int(math.floor(y))
        fx, fy = x - x0, y - y0
        k[y0, x0] += (1 - fx) * (1 - fy)
        k[y0, x0 + 1] += fx * (1 - fy)
        k[y0 + 1, x0] += (1 - fx) * fy
        k[y0 + 1, x0 + 1] += fx * fy
    return k / k.sum()


def lens_kernel(shape: str, radius: float, curvature: float, rotation: float) -> np.ndarray:
    sides = APERTURE_SIDES[shape]
    R = 1.0 + 7.0 * float(radius)
    n = int(math.ceil(R))
    yy, xx = np.mgrid[-n : n + 1, -n : n + 1].astype(float)
    rr = np.hypot(xx, yy)
    theta = np.arctan2(yy, xx) - math.radians(rotation)
    seg = 2 * math.pi / sides
    local = np.mod(theta, seg) - seg / 2
    poly = math.cos(math.pi / sides) / np.cos(local)
    bound = R * ((1 - curvature) * poly + curvature)
    k = (rr <= bound + 1e-9).astype(float)
    return k / k.sum()


def _correlate(crop: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return _per_channel(lambda ch: ndimage.correlate(ch, kernel, mode="nearest"), crop)


def _disc_offsets(radius: float, step: int = 1) -> list[tuple[int, int]]:
    n = int(math.ceil(radius))
    out = []
    for dy in range(-n, n + 1):
        for dx in range(-n, n + 1):
            if dx * dx + dy * dy <= radius * radius + 1e-9 and (dx + dy) % step == 0:
                out.append((dy, dx))
    return out


def _shift(padded: np.ndarray, pad: int, dy: int, dx: int, h: int, w: int) -> np.ndarray:
    return padded[pad + dy : pad + dy + h, pad + dx : pad + dx + w]


def _smart_blur(crop, radius, threshold, quality, mode):
    h, w = crop.shape[:2]
    pad = int(math.ceil(radius))
    padded = np.pad(crop, ((pad, pad), (pad, pad), (0, 0)), mode="edge")
    acc = np.zeros_like(crop)
    wsum = np.zeros(crop.shape[:2] + (1,))
    rejected = np.zeros(crop.shape[:2])
    offsets = _disc_offsets(radius, SMART_STEP[quality])
    sigma = max(radius / 2.0, 1e-6)
    for dy, dx in offsets:
        nb = _shift(padded, pad, dy, dx, h, w)
        ok = (np.abs(nb - crop).max(axis=2) <= threshold)[..., None]
        wt = math.exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)) if mode == "edge-preservation" else 1.0
        acc += np.where(ok, nb * wt, 0.0)
        wsum += ok * wt
        rejected += ~ok[..., 0]
    out = acc / np.maximum(wsum, 1e-12)
    if mode == "stroke-enhancement":
        edge = (rejected / len(offsets) > 0.25)[..., None]
        out = np.where(edge, np.minimum(out, crop), out)
    return out


def _surface_blur(crop, radius, threshold):
    h, w = crop.shape[:2]
    pad = int(radius)
    padded = np.pad(crop, ((pad, pad), (pad, pad), (0, 0)), mode="edge")
    acc = np.zeros_like(crop)
    wsum = np.zeros_like(crop)
    for dy, dx in _disc_offsets(radius):
        nb = _shift(padded, pad, dy, dx, h, w)
        wt = np.clip(1.0 - np.abs(nb - crop) / (2.5 * threshold), 0.0, None)
        acc += wt * nb
        wsum += wt
    return acc / np.maximum(wsum, 1e-12)


def _radial(img: np.ndarray, rect: Rect, method: str, quality: str) -> np.ndarray:
    n = RADIAL_SAMPLES[quality]
    cx, cy = rect.x + (rect.w - 1) / 2.0, rect.y + (rect.h - 1) / 2.0
    yy, xx = np.mgrid[rect.y : rect.y1, rect.x : rect.x1].astype(float)
    dx, dy = xx - cx, yy - cy
    src = img.astype(float)
    acc = np.zeros((rect.h, rect.w, 3))
    for t in np.linspace(-0.5, 0.5, n):
        if method == "spin":
            th = math.radians(RADIAL_SPIN_DEGREES * t)
            c, s = math.cos(th), math.sin(th)
            sx, sy = cx + c * dx - s * dy, cy + s * dx + c * dy
        else:
            f = 1.0 + RADIAL_ZOOM * t
            sx, sy = cx + f * dx, cy + f * dy
        for ch in range(3):
            acc[..., ch] += ndimage.map_coordinates(src[..., ch], [sy, sx], order=1, mode="nearest")
    return acc / n


def _lens(crop, spec: FilterSpec, rng):
    k = lens_kernel(spec["aperture_shape"], spec["aperture_radius"], spec["blade_curvature"], spec.get("rotation", 0.0))
    luma = crop @ np.array([0.299, 0.587, 0.114])
    thr = float(spec.get("threshold", 100.0))
    boost = float(spec.get("brightness", 100.0)) / 100.0
    wt = np.where(luma >= 255.0 * thr / 100.0, 1.0 + boost, 1.0)[..., None]
    num = _correlate(crop * wt, k)
    den = _correlate(np.repeat(wt, 3, axis=2), k)
    out = num / den
    amount = float(spec.get("amount", 0.0))
    if amount > 0:
        if rng is None:
            raise RasterError("lens-blur noise needs a random stream")
        out = out + noise_field(rng, out.shape, amount, spec.get("distribution", "uniform"), monochromatic=False)
    return out


def noise_field(rng, shape, amount: float, distribution: str, monochromatic: bool) -> np.ndarray:
    """Additive noise; ``amount`` percent of half the byte range sets the scale.

    Uniform draws span [-A, A]; Gaussian draws have standard deviation A / 2,
    with A = amount / 100 * 127.5.
    """
    h, w = shape[:2]
    nch = 1 if monochromatic else 3
    a = float(amount) / 100.0 * 127.5
    if distribution == "gaussian":
        draws = rng.gen.normal(0.0, 1.0, size=(h, w, nch)) * (a / 2.0)
    else:
        draws = rng.gen.uniform(-1.0, 1.0, size=(h, w, nch)) * a
    if monochromatic:
        draws = np.repeat(draws, 3, axis=2)
    return draws


def filter_reach(spec: FilterSpec) -> int:
    """Pixels of context the filter reads beyond the region."""
    k = spec.kind
    if k == "gaussian-blur":
        return gaussian_reach(spec["radius"])
    if k == "sharpen":
        return gaussian_reach(spec["radius"])
    if k == "motion-blur":
        return int(math.ceil(spec["distance"] / 2.0)) + 2
    if k == "smart-blur":
        return int(math.ceil(spec["radius"])) + 1
    if k == "surface-blur":
        return int(spec["radius"]) + 1
    if k == "lens-blur":
        return int(math.ceil(1.0 + 7.0 * spec["aperture_radius"])) + 1
    if k in KERNELS or k == "custom-convolution":
        return 3
    return 0


def apply_filter(img: np.ndarray, region, spec: FilterSpec, rng=None) -> np.ndarray:
    """Filter the region of ``img``; pixels outside it are returned untouched."""
    rect = as_geometry(region).rect
    check_region(img, rect)
    k = spec.kind
    out = img.copy()
    if k == "radial-blur":
        out[rect.slices] = to_uint8(_radial(img, rect, spec["method"], spec["quality"]))
        return out

    crop, inner = _crop(img, rect, filter_reach(spec))
    if k == "gaussian-blur":
        res = gaussian(crop, float(spec["radius"]))
    elif k == "sharpen":
        res = crop
        amount = float(spec["amount"]) / 100.0
        thr = float(spec["threshold"])
        for _ in range(int(spec.get("iterations", 1))):
            diff = res - gaussian(res, float(spec["radius"]))
            res = np.clip(np.where(np.abs(diff) >= thr, res + amount * diff, res), 0.0, 255.0)
    elif k == "motion-blur":
        res = _correlate(crop, motion_kernel(float(spec["angle"]), int(spec["distance"])))
    elif k in KERNELS:
        res = _correlate(crop, KERNELS[k])
    elif k == "custom-convolution":
        kernel = np.asarray(spec["kernel"], dtype=float).reshape(5, 5)
        scale = float(spec["scale"])
        if scale == 0:
            raise RasterError("custom convolution scale must be nonzero")
        res = _correlate(crop, kernel) / scale + float(spec["offset"])
    elif k == "smart-blur":
        res = _smart_blur(crop, float(spec["radius"]), float(spec["threshold"]), spec.get("quality", "high"), spec.get("mode", "normal"))
    elif k == "surface-blur":
        res = _surface_blur(crop, float(spec["radius"]), float(spec["threshold"]))
    elif k == "lens-blur":
        res = _lens(crop, spec, rng)
    else:  # pragma: no cover - FilterSpec rejects unknown kinds
        raise RasterError(f"unhandled filter {k}")
    out[rect.slices] = to_uint8(res[inner])
    return out


def fft_blur(mask: np.ndarray, radius: int) -> np.ndarray:
    """Gaussian blur (sigma = radius / 2) with a disc-truncated kernel, so no
    value spreads farther than ``radius`` pixels."""
    if radius <= 0:
        return mask.astype(float)
    yy, xx = np.mgrid[-radius : radius + 1, -radius : radius + 1].astype(float)
    sigma = radius / 2.0
    k = np.exp(-(xx**2 + yy**2) / (2 * sigma * sigma))
    k[xx**2 + yy**2 > radius * radius] = 0.0
    k /= k.sum()
    out = signal.fftconvolve(mask.astype(float), k, mode="same")
    out[out < 1e-6] = 0.0
    return out
