"""Text rasterisation into a region.

Font families resolve to files in a font directory (``FSTS_FONT_DIR``, then
matplotlib's bundled fonts). Each family lists its usual file names first
and an openly licensed stand-in last; a family with no file found is an
error, never a silent substitution by some other family.

Glyph coverage c in [0, 1] from FreeType is mapped per anti-aliasing mode:

    None    1 if c >= 0.5 else 0
    Sharp   clip((c - 0.5) * 3 + 0.5)
    Crisp   clip((c - 0.5) * 2 + 0.5)
    Smooth  c
    Strong  c ** 0.6
"""

from __future__ import annotations

import functools
import math
import os
from pathlib import Path

import matplotlib
import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .geometry import RasterError, Rect, as_geometry, check_region, composite_paste
from .specs import TextStyle

FONT_ENV = "FSTS_FONT_DIR"
FONT_FILES = {
    "Times New Roman": ("times.ttf", "Times New Roman.ttf", "STIXGeneral.ttf"),
    "SimSun": ("simsun.ttc", "SimSun.ttf", "DejaVuSerif.ttf"),
    "KaiTi": ("simkai.ttf", "KaiTi.ttf", "DejaVuSerif-Italic.ttf"),
    "Microsoft YaHei": ("msyh.ttc", "msyh.ttf", "DejaVuSans.ttf"),
    "SimHei": ("simhei.ttf", "SimHei.ttf", "DejaVuSans-Bold.ttf"),
}
AA_MODES = ("None", "Sharp", "Crisp", "Smooth", "Strong")
MIN_FONT_PX = 4
MAX_TEXT_LEN = 20
TEXT_DISTANCE = 48
LUMA = np.array([0.299, 0.587, 0.114])


def font_dirs() -> list[Path]:
    dirs = []
    env = os.environ.get(FONT_ENV)
    if env:
        dirs.append(Path(env))
    dirs.append(Path(matplotlib.get_data_path()) / "fonts" / "ttf")
    return dirs


def resolve_font(family: str) -> Path:
    if family not in FONT_FILES:
        raise RasterError(f"unknown font family {family!r}")
    for d in font_dirs():
        for name in FONT_FILES[family]:
            p = d / name
            if p.is_file():
                return p
    raise RasterError(f"font family {family!r} not found in {[str(d) for d in font_dirs()]}")


@functools.lru_cache(maxsize=256)
def _font(path: str, size: int) -> ImageFont.FreeTypeFont:
    return ImageFont.truetype(path, size)


def fit_font_size(path: Path, height: int) -> int:
    """Largest pixel size whose ascent + descent fits ``height``."""
    ref = 100
    asc, desc = _font(str(path), ref).getmetrics()
    size = int(math.floor(height * ref / float(asc + desc)))
    while size > 1:
        a, d = _font(str(path), size).getmetrics()
        if a + d <= height:
            break
        size -= 1
    return size


def coverage_map(cov: np.ndarray, mode: str) -> np.ndarray:
    if mode == "None":
        return (cov >= 0.5).astype(float)
    if mode == "Sharp":
        return np.clip((cov - 0.5) * 3.0 + 0.5, 0.0, 1.0) * (cov > 0)
    if mode == "Crisp":
        return np.clip((cov - 0.5) * 2.0 + 0.5, 0.0, 1.0) * (cov > 0)
    if mode == "Smooth":
        return cov
    if mode == "Strong":
        return cov**0.6
    raise RasterError(f"unknown anti-aliasing mode {mode!r}")


def render_text_layer(text: str, style: TextStyle, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Render ``text`` as a (rgb, coverage) layer of the given height.

    The layer's top row is the font ascender line, so the baseline sits at
    the font ascent.
    """
    if not 1 <= len(text) <= MAX_TEXT_LEN:
        raise RasterError(f"text length {len(text)} outside [1, {MAX_TEXT_LEN}]")
    if height <= 0:
        raise RasterError("zero-height text region")
    path = resolve_font(style.font)
    size = int(fit_font_size(path, height) * style.scale)
    if size < MIN_FONT_PX:
        raise RasterError(f"region height {height} too small for minimum glyph size")
    font = _font(str(path), size)
    width = max(1, int(math.ceil(font.getlength(text))) + 1)
    canvas = Image.new("L", (width, height), 0)
    ImageDraw.Draw(canvas).text((0, 0), text, fill=255, font=font, anchor="la")
    cov = coverage_map(np.asarray(canvas, dtype=float) / 255.0, style.anti_aliasing)
    rgb = np.empty((height, width, 3), dtype=np.uint8)
    rgb[...] = np.asarray(style.color, dtype=np.uint8)
    return rgb, cov


def render_text_into(img: np.ndarray, region, text: str, style: TextStyle) -> np.ndarray:
    """Draw ``text`` left-aligned in the region, clipped to its width."""
    rect = as_geometry(region).rect
    check_region(img, rect)
    rgb, cov = render_text_layer(text, style, rect.h)
    w = min(rect.w, rgb.shape[1])
    out, _ = composite_paste(img, rgb[:, :w], cov[:, :w], (rect.x, rect.y))
    return out


def text_color(img: np.ndarray, rect: Rect) -> tuple[int, int, int]:
    """Colour of the text in ``rect``: median of pixels far from the
    region's median colour, or a contrasting grey when there are none."""
    patch = img[rect.slices].reshape(-1, 3).astype(float)
    med = np.median(patch, axis=0)
    far = np.abs(patch - med).max(axis=1) > TEXT_DISTANCE
    if far.any():
        return tuple(int(v) for v in np.rint(np.median(patch[far], axis=0)))
    return (0, 0, 0) if float(med @ LUMA) > 128 else (255, 255, 255)


def mean_luma(img: np.ndarray, rect: Rect) -> float:
    return float(img[rect.slices].reshape(-1, 3).astype(float).mean(axis=0) @ LUMA)


def safety_color(img: np.ndarray, rect: Rect, light_choice, dark_choice) -> tuple[int, int, int]:
    """Dark text on light backgrounds (mean luma > 128), light text otherwise."""
    c = light_choice if mean_luma(img, rect) > 128 else dark_choice
    return tuple(int(v) for v in c)
