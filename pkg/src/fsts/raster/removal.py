"""Content removal inside a region.

Content-aware fill is a block exemplar fill: the region is cut into tiles,
visited from the outside in, and each tile is replaced by the candidate
block (drawn from the stream, never overlapping the region) whose known
surroundings match best by sum of squared differences. Extra iterations
re-run the pass with the previous fill as context.
"""

from __future__ import annotations

import numpy as np

from .geometry import RasterError, Rect, as_geometry, check_region, to_uint8
from .specs import RemovalSpec

TILE = 8
CONTEXT = 2
CANDIDATES = 48
HEAL_RING = 2


def _touches_all_borders(rect: Rect, width: int, height: int) -> bool:
    return rect.x == 0 and rect.y == 0 and rect.x1 == width and rect.y1 == height


def _source_positions(rect: Rect, width: int, height: int) -> list[tuple[int, int]]:
    """Top-left corners of same-size patches that do not overlap ``rect``.

    The eight grid neighbours come first, then a coarse scan of the image.
    """
    out = []
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dx == 0 and dy == 0:
                continue
            c = Rect(rect.x + dx * rect.w, rect.y + dy * rect.h, rect.w, rect.h)
            if c.within(width, height):
                out.append((c.x, c.y))
    if out:
        return out
    sx, sy = max(1, rect.w // 2), max(1, rect.h // 2)
    for y in range(0, height - rect.h + 1, sy):
        for x in range(0, width - rect.w + 1, sx):
            if not Rect(x, y, rect.w, rect.h).intersects(rect):
                out.append((x, y))
    return out


def _require_sources(img: np.ndarray, rect: Rect) -> list[tuple[int, int]]:
    H, W = img.shape[:2]
    if _touches_all_borders(rect, W, H):
        raise RasterError("region touches all four image borders; no source ring")
    pos = _source_positions(rect, W, H)
    if not pos:
        raise RasterError(f"no same-size source patch outside region {rect.to_list()}")
    return pos


def _ring_mean(img: np.ndarray, rect: Rect, width: int) -> np.ndarray:
    H, W = img.shape[:2]
    outer = rect.expand(width).clip(W, H)
    block = img[outer.slices].astype(float)
    keep = np.ones(block.shape[:2], dtype=bool)
    keep[rect.y - outer.y : rect.y1 - outer.y, rect.x - outer.x : rect.x1 - outer.x] = False
    if not keep.any():
        return block.reshape(-1, 3).mean(axis=0)
    return block[keep].mean(axis=0)


def _tiles(rect: Rect) -> list[Rect]:
    tiles = []
    for y in range(rect.y, rect.y1, TILE):
        for x in range(rect.x, rect.x1, TILE):
            tiles.append(Rect(x, y, min(TILE, rect.x1 - x), min(TILE, rect.y1 - y)))

    def depth(t: Rect) -> tuple[int, int, int]:
        d = min(t.x - rect.x, t.y - rect.y, rect.x1 - t.x1, rect.y1 - t.y1)
        return d, t.y, t.x

    return sorted(tiles, key=depth)


def _candidate_corners(rect: Rect, tw: int, th: int, W: int, H: int, rng, n: int) -> np.ndarray:
    """Random tile corners near ``rect`` whose tile does not overlap it."""
    search = rect.expand(max(rect.w, rect.h, 4 * TILE)).clip(W, H)
    xs_hi, ys_hi = search.x1 - tw, search.y1 - th
    found: list[tuple[int, int]] = []
    if xs_hi >= search.x and ys_hi >= search.y:
        draws = rng.gen.integers(0, 2**31 - 1, size=(4 * n, 2))
        for a, b in draws:
            x = search.x + int(a) % (xs_hi - search.x + 1)
            y = search.y + int(b) % (ys_hi - search.y + 1)
            if not Rect(x, y, tw, th).intersects(rect):
                found.append((x, y))
                if len(found) == n:
                    break
    if not found:
        # deterministic fallback over the whole image
        for y in range(0, H - th + 1, max(1, th)):
            for x in range(0, W - tw + 1, max(1, tw)):
                if not Rect(x, y, tw, th).intersects(rect):
                    found.append((x, y))
    if not found:
        raise RasterError(f"no exemplar blocks outside region {rect.to_list()}")
    return np.asarray(found, dtype=int)


def _padded(work: np.ndarray, known: np.ndarray, pad: int) -> tuple[np.ndarray, np.ndarray]:
    return (
        np.pad(work, ((pad, pad), (pad, pad), (0, 0)), mode="edge"),
        np.pad(known, pad, mode="constant", constant_values=False),
    )


def content_aware_fill(img: np.ndarray, rect: Rect, iterations: int, rng) -> np.ndarray:
    H, W = img.shape[:2]
    if _touches_all_borders(rect, W, H):
        raise RasterError("region touches all four image borders; no source ring")
    work = img.astype(float)
    tiles = _tiles(rect)
    for it in range(max(1, int(iterations))):
        known = np.ones((H, W), dtype=bool)
        if it == 0:
            known[rect.slices] = False
        pw, pk = _padded(work, known, CONTEXT)
        for t in tiles:
            corners = _candidate_corners(rect, t.w, t.h, W, H, rng, CANDIDATES)
            c2 = CONTEXT
            tgt = pw[t.y : t.y1 + 2 * c2, t.x : t.x1 + 2 * c2]
            wt = pk[t.y : t.y1 + 2 * c2, t.x : t.x1 + 2 * c2][..., None].astype(float)
            best, best_cost = None, np.inf
            for x, y in corners:
                cand = pw[y : y + t.h + 2 * c2, x : x + t.w + 2 * c2]
                cost = float((((cand - tgt) ** 2) * wt).sum())
                if cost < best_cost:
                    best_cost, best = cost, (x, y)
            x, y = best
            work[t.slices] = work[y : y + t.h, x : x + t.w]
            known[t.slices] = True
            pw[t.y + c2 : t.y1 + c2, t.x + c2 : t.x1 + c2] = work[t.slices]
            pk[t.y + c2 : t.y1 + c2, t.x + c2 : t.x1 + c2] = True
    out = img.copy()
    out[rect.slices] = to_uint8(work[rect.slices])
    return out


def apply_removal(img: np.ndarray, region, spec: RemovalSpec, rng=None) -> np.ndarray:
    """Erase the region's content; pixels outside it are untouched."""
    rect = as_geometry(region).rect
    check_region(img, rect)
    k = spec.kind
    if k == "solid-fill":
        out = img.copy()
        out[rect.slices] = np.asarray(spec["color"], dtype=np.uint8).reshape(3)
        return out
    if k == "content-aware-fill":
        if rng is None:
            raise RasterError("content-aware fill needs a random stream")
        return content_aware_fill(img, rect, int(spec.get("iterations", 1)), rng)

    positions = _require_sources(img, rect)
    out = img.copy()
    if k == "background-clone":
        # most uniform candidate
        def spread(p):
            x, y = p
            return float(img[y : y + rect.h, x : x + rect.w].astype(float).var())

        x, y = min(positions, key=lambda p: (spread(p), p[1], p[0]))
        out[rect.slices] = img[y : y + rect.h, x : x + rect.w]
        return out

    if rng is None:
        raise RasterError(f"{k} needs a random stream")
    x, y = positions[rng.integers(0, len(positions) - 1)]
    src_rect = Rect(x, y, rect.w, rect.h)
    src = img[src_rect.slices]
    if k == "clone-stamp":
        a = float(spec.get("opacity", 100)) * float(spec.get("flow", 100)) / 1e4
        if a >= 1.0:
            out[rect.slices] = src
        else:
            dst = img[rect.slices].astype(float)
            out[rect.slices] = to_uint8(dst + (src.astype(float) - dst) * a)
        return out
    # healing brush
    if spec.get("mode", "normal") == "replace":
        out[rect.slices] = src
        return out
    shift = _ring_mean(img, rect, HEAL_RING) - _ring_mean(img, src_rect, HEAL_RING)
    out[rect.slices] = to_uint8(src.astype(float) + shift)
    return out
