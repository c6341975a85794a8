"""Region-confined colour adjustments.

Colour balance (midtones) adds ``slider / 100 * 40`` levels to each channel,
weighted by ``1 - ((L - 127.5) / 127.5) ** 2`` where L is pixel luma, so
shadows and highlights move least. Curves are fixed monotone lookups:

    raise-highlights  v + 0.5 / 127 * (v - 128) * (255 - v)   for v > 128
    lower-shadows     v - 0.5 / 128 * v * (128 - v)           for v < 128

Hue/saturation works in HSL: hue shifts by ``hue`` degrees, saturation and
lightness by ``slider / 100`` of their headroom in the slider's direction.
"""

from __future__ import annotations

import numpy as np

from .geometry import as_geometry, check_region, to_uint8
from .specs import ColorSpec

BALANCE_MAX_DELTA = 40.0
LUMA = np.array([0.299, 0.587, 0.114])
CHANNELS = {"rgb": None, "red": 0, "green": 1, "blue": 2}


def curve_lut(curve: str) -> np.ndarray:
    v = np.arange(256, dtype=float)
    if curve == "raise-highlights":
        out = np.where(v > 128, v + 0.5 / 127.0 * (v - 128) * (255 - v), v)
    elif curve == "lower-shadows":
        out = np.where(v < 128, v - 0.5 / 128.0 * v * (128 - v), v)
    elif curve == "identity":
        out = v
    else:
        raise ValueError(f"unknown curve {curve!r}")
    return to_uint8(out)


def levels_lut(in_lo: int, in_hi: int, out_lo: int = 0, out_hi: int = 255) -> np.ndarray:
    if not (0 <= in_lo < in_hi <= 255 and 0 <= out_lo <= out_hi <= 255):
        raise ValueError(f"invalid levels [{in_lo}, {in_hi}] -> [{out_lo}, {out_hi}]")
    v = np.clip((np.arange(256, dtype=float) - in_lo) / (in_hi - in_lo), 0.0, 1.0)
    return to_uint8(v * (out_hi - out_lo) + out_lo)


def rgb_to_hsl(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Float RGB in [0, 1] to hue (degrees), saturation and lightness."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx, mn = rgb.max(axis=-1), rgb.min(axis=-1)
    light = (mx + mn) / 2.0
    d = mx - mn
    denom = 1.0 - np.abs(2.0 * light - 1.0)
    sat = np.where(d > 0, d / np.maximum(denom, 1e-12), 0.0)
    safe = np.maximum(d, 1e-12)
    hue = np.where(
        mx == r,
        np.mod((g - b) / safe, 6.0),
        np.where(mx == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0),
    )
    hue = np.where(d > 0, hue * 60.0, 0.0)
    return hue, np.clip(sat, 0.0, 1.0), light


def hsl_to_rgb(hue: np.ndarray, sat: np.ndarray, light: np.ndarray) -> np.ndarray:
    c = (1.0 - np.abs(2.0 * light - 1.0)) * sat
    hp = np.mod(hue, 360.0) / 60.0
    x = c * (1.0 - np.abs(np.mod(hp, 2.0) - 1.0))
    z = np.zeros_like(c)
    sector = np.floor(hp).astype(int) % 6
    r = np.choose(sector, [c, x, z, z, x, c])
    g = np.choose(sector, [x, c, c, x, z, z])
    b = np.choose(sector, [z, z, x, c, c, x])
    m = light - c / 2.0
    return np.stack([r + m, g + m, b + m], axis=-1)


def _toward(v: np.ndarray, amount: float) -> np.ndarray:
    if amount >= 0:
        return v + (1.0 - v) * amount
    return v * (1.0 + amount)


def hue_saturation(patch: np.ndarray, hue: float, saturation: float, lightness: float) -> np.ndarray:
    if hue == 0 and saturation == 0 and lightness == 0:
        return patch.copy()
    h, s, l = rgb_to_hsl(patch.astype(float) / 255.0)
    h = h + hue
    s = np.clip(_toward(s, saturation / 100.0), 0.0, 1.0)
    l = np.clip(_toward(l, lightness / 100.0), 0.0, 1.0)
    return to_uint8(hsl_to_rgb(h, s, l) * 255.0)


def color_balance(patch: np.ndarray, sliders) -> np.ndarray:
    sliders = np.asarray(sliders, dtype=float).reshape(3)
    if not sliders.any():
        return patch.copy()
    p = patch.astype(float)
    luma = p @ LUMA
    weight = 1.0 - ((luma - 127.5) / 127.5) ** 2
    delta = sliders / 100.0 * BALANCE_MAX_DELTA
    return to_uint8(p + weight[..., None] * delta)


def apply_color_adjustment(img: np.ndarray, region, spec: ColorSpec) -> np.ndarray:
    rect = as_geometry(region).rect
    check_region(img, rect)
    out = img.copy()
    patch = img[rect.slices]
    k = spec.kind
    if k == "color-balance":
        res = color_balance(patch, spec["sliders"])
    elif k == "color-curves":
        res = curve_lut(spec["curve"])[patch]
    elif k == "hue-saturation":
        res = hue_saturation(patch, float(spec["hue"]), float(spec["saturation"]), float(spec["lightness"]))
    else:  # levels
        lo, hi = spec.get("input_levels", (0, 255))
        olo, ohi = spec.get("output_levels", (0, 255))
        lut = levels_lut(int(lo), int(hi), int(olo), int(ohi))
        ch = CHANNELS[spec.get("channel", "rgb")]
        res = patch.copy()
        if ch is None:
            res = lut[patch]
        else:
            res[..., ch] = lut[patch[..., ch]]
    out[rect.slices] = res
    return out
