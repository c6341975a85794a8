"""Text-shape extraction inside a region (magic wand and channel levels)."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .geometry import RasterError, Rect, RegionGeometry, as_geometry, check_region

CHANNELS = {"red": 0, "green": 1, "blue": 2}


def _border_color(patch: np.ndarray) -> np.ndarray:
    border = np.concatenate([patch[0], patch[-1], patch[:, 0], patch[:, -1]], axis=0)
    return np.median(border.astype(float), axis=0)


def magic_wand(patch: np.ndarray, tolerance: int, contiguous: bool, anti_alias: bool) -> np.ndarray:
    """Foreground coverage of ``patch`` (h x w floats).

    The seed is the median border colour. Pixels whose largest channel
    difference from it exceeds ``tolerance`` are foreground; with
    ``contiguous`` the background is only what is connected to the border.
    ``anti_alias`` adds a half-coverage ring one pixel wide.
    """
    dist = np.abs(patch.astype(float) - _border_color(patch)).max(axis=2)
    similar = dist <= tolerance
    if contiguous:
        labels, _ = ndimage.label(similar)
        edge_labels = np.unique(np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]]))
        edge_labels = edge_labels[edge_labels > 0]
        background = np.isin(labels, edge_labels)
        fg = ~background
    else:
        fg = ~similar
    cov = fg.astype(float)
    if anti_alias and fg.any():
        ring = ndimage.binary_dilation(fg, structure=np.ones((3, 3), bool)) & ~fg
        cov[ring] = 0.5
    return cov


def levels_remap(values: np.ndarray, lo: int, hi: int, out_lo: int = 0, out_hi: int = 255) -> np.ndarray:
    """Linear input-levels remap with clamping, rounded to bytes."""
    v = (values.astype(float) - lo) / float(hi - lo)
    v = np.clip(v, 0.0, 1.0) * (out_hi - out_lo) + out_lo
    return np.rint(v).astype(np.uint8)


def channel_levels(patch: np.ndarray, channel: str, input_lo: int, input_hi: int) -> np.ndarray:
    remapped = levels_remap(patch[..., CHANNELS[channel]], input_lo, input_hi)
    return (remapped < 128).astype(float)


def extract_text_shape(img: np.ndarray, region, method: str, **params) -> RegionGeometry:
    """Attach a text-shape coverage mask to ``region``.

    ``method`` is ``"magic-wand"`` (tolerance, contiguous, anti_alias) or
    ``"channel-levels"`` (channel, input_levels=(lo, hi)).
    """
    geom = as_geometry(region)
    rect: Rect = geom.rect
    check_region(img, rect)
    patch = img[rect.slices]
    if method == "magic-wand":
        tol = int(params.get("tolerance", 32))
        if not 1 <= tol <= 50:
            raise RasterError(f"tolerance {tol} outside [1, 50]")
        cov = magic_wand(patch, tol, bool(params.get("contiguous", True)), bool(params.get("anti_alias", False)))
    elif method == "channel-levels":
        lo, hi = params.get("input_levels", (130, 237))
        if not (0 <= lo < hi <= 255):
            raise RasterError(f"input levels [{lo}, {hi}] invalid")
        cov = channel_levels(patch, params.get("channel", "red"), int(lo), int(hi))
    else:
        raise RasterError(f"unknown extraction method {method!r}")
    return RegionGeometry(rect, cov)
