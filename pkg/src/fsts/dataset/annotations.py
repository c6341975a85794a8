"""Region annotations: sidecar JSON lists of {id, x, y, w, h, kind, text?}."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from ..raster.geometry import Rect

KINDS = ("text", "non-text")


class AnnotationError(ValueError):
    pass


@dataclass(frozen=True)
class RegionAnnotation:
    id: str
    rect: Rect
    kind: str
    text: str | None = None

    @property
    def is_text(self) -> bool:
        return self.kind == "text"

    def to_dict(self) -> dict:
        d = {"id": self.id, "x": self.rect.x, "y": self.rect.y, "w": self.rect.w, "h": self.rect.h, "kind": self.kind}
        if self.text is not None:
            d["text"] = self.text
        return d


def parse_annotations(records, image_size: tuple[int, int] | None = None) -> list[RegionAnnotation]:
    if not isinstance(records, list):
        raise AnnotationError("annotation file must hold a JSON list")
    out = []
    for i, rec in enumerate(records):
        if not isinstance(rec, dict):
            raise AnnotationError(f"record {i}: expected an object")
        rid = str(rec.get("id", i))
        try:
            rect = Rect(int(rec["x"]), int(rec["y"]), int(rec["w"]), int(rec["h"]))
            kind = rec["kind"]
        except (KeyError, TypeError, ValueError) as exc:
            raise AnnotationError(f"region {rid}: malformed record ({exc})") from None
        if kind not in KINDS:
            raise AnnotationError(f"region {rid}: kind must be one of {KINDS}")
        if rect.w <= 0 or rect.h <= 0:
            raise AnnotationError(f"region {rid}: empty rectangle")
        if image_size is not None and not rect.within(*image_size):
            raise AnnotationError(f"region {rid}: rectangle {rect.to_list()} exceeds image {image_size[0]}x{image_size[1]}")
        text = rec.get("text")
        out.append(RegionAnnotation(rid, rect, kind, None if text is None else str(text)))
    return out


def load_annotations(path: str | Path, image_size: tuple[int, int] | None = None) -> list[RegionAnnotation]:
    """Read an annotation file; ``image_size`` is (width, height) for bounds checks."""
    path = Path(path)
    text = path.read_text(encoding="utf-8").strip()
    if not text:
        return []
    try:
        records = json.loads(text)
    except json.JSONDecodeError as exc:
        raise AnnotationError(f"{path}: {exc}") from None
    return parse_annotations(records, image_size)


def write_annotations(path: str | Path, regions) -> None:
    Path(path).write_text(json.dumps([r.to_dict() for r in regions], indent=2) + "\n", encoding="utf-8")
