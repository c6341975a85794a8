"""Synthetic document corpus for demos and tests.

Each image is a page of random words on a lightly textured background
(about a quarter of pages are dark), with a sidecar ``{id}.json`` holding one
text region per word and one or two blank non-text regions.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from ..raster.geometry import Rect
from ..raster.text import _font, resolve_font
from .annotations import RegionAnnotation, write_annotations
from .io import write_image

WORD_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
FAMILIES = ("Microsoft YaHei", "Times New Roman", "SimSun")


def _page(rng, width: int, height: int) -> tuple[np.ndarray, bool]:
    dark = rng.random() < 0.25
    base = rng.integers(20, 60) if dark else rng.integers(205, 245)
    tint = np.array([rng.integers(-6, 6) for _ in range(3)], dtype=float)
    ramp = np.linspace(-4.0, 4.0, width)[None, :, None]
    grain = rng.gen.normal(0.0, 1.5, size=(height, width, 3))
    img = np.clip(np.rint(base + tint + ramp + grain), 0, 255).astype(np.uint8)
    return img, dark


def make_page(rng, width: int = 320, height: int = 200) -> tuple[np.ndarray, list[RegionAnnotation]]:
    img, dark = _page(rng, width, height)
    canvas = Image.fromarray(img)
    draw = ImageDraw.Draw(canvas)
    ink = tuple(rng.integers(200, 250) for _ in range(3)) if dark else tuple(rng.integers(0, 60) for _ in range(3))
    family = FAMILIES[rng.integers(0, len(FAMILIES) - 1)]
    size = rng.integers(14, 18)
    font = _font(str(resolve_font(family)), size)
    regions: list[RegionAnnotation] = []
    y = 10
    line_h = int(size * 1.7)
    n_lines = rng.integers(4, 5)
    for _ in range(n_lines):
        x = 10 + rng.integers(0, 12)
        for _ in range(rng.integers(2, 4)):
            word = "".join(WORD_ALPHABET[rng.integers(0, len(WORD_ALPHABET) - 1)] for _ in range(rng.integers(3, 8)))
            x0, y0, x1, y1 = draw.textbbox((x, y), word, font=font, anchor="la")
            box = Rect(x0 - 1, y - 1, x1 - x0 + 2, line_h - 4)
            if box.x1 >= width - 4 or box.y1 >= height - 4:
                break
            draw.text((x, y), word, fill=ink, font=font, anchor="la")
            regions.append(RegionAnnotation(f"t{len(regions)}", box, "text", word))
            x = box.x1 + rng.integers(8, 16)
        y += line_h
    # blank areas below the text block
    free_top = y + 4
    bx = 10
    for k in range(2):
        bw, bh = rng.integers(60, 100), rng.integers(18, 24)
        r = Rect(bx, free_top + rng.integers(0, 6), bw, bh)
        if r.y1 >= height - 2 or r.x1 >= width - 2:
            break
        regions.append(RegionAnnotation(f"b{k}", r, "non-text"))
        bx = r.x1 + rng.integers(20, 60)
    return np.asarray(canvas, dtype=np.uint8).copy(), regions


def make_demo_corpus(out_dir: str | Path, n: int, seed: int = 0, width: int = 320, height: int = 200) -> list[Path]:
    """Write ``n`` pages as ``doc_XXX.png`` with ``doc_XXX.json`` sidecars."""
    from ..sampler import derive_stream

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(n):
        image_id = f"doc_{i:03d}"
        img, regions = make_page(derive_stream(seed, f"corpus/{image_id}"), width, height)
        p = out / f"{image_id}.png"
        write_image(p, img)
        write_annotations(out / f"{image_id}.json", regions)
        paths.append(p)
    return paths
