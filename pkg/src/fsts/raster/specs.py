"""Tagged operation specs accepted by the raster primitives.

Every spec is a kind name plus the parameter mapping the sampler resolved
for that operation variant; the parameter names follow the parameter table.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, ClassVar, Mapping

from .geometry import RasterError


@dataclass(frozen=True)
class _Spec:
    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)

    KINDS: ClassVar[tuple[str, ...]] = ()

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise RasterError(f"{type(self).__name__}: unknown kind {self.kind!r}")

    def get(self, name: str, default: Any = None) -> Any:
        return self.params.get(name, default)

    def __getitem__(self, name: str) -> Any:
        try:
            return self.params[name]
        except KeyError:
            raise RasterError(f"{self.kind}: missing parameter {name!r}") from None


@dataclass(frozen=True)
class FilterSpec(_Spec):
    KINDS = (
        "sharpen",
        "gaussian-blur",
        "motion-blur",
        "radial-blur",
        "smart-blur",
        "surface-blur",
        "lens-blur",
        "mean",
        "blur",
        "blur-more",
        "custom-convolution",
    )


@dataclass(frozen=True)
class EffectSpec(_Spec):
    KINDS = ("stroke", "drop-shadow", "outer-glow", "noise")


@dataclass(frozen=True)
class RemovalSpec(_Spec):
    KINDS = ("content-aware-fill", "solid-fill", "background-clone", "clone-stamp", "healing-brush")


@dataclass(frozen=True)
class ColorSpec(_Spec):
    KINDS = ("color-balance", "color-curves", "hue-saturation", "levels")


@dataclass(frozen=True)
class TextStyle:
    font: str
    color: tuple[int, int, int]
    anti_aliasing: str = "Smooth"
    scale: float = 1.0
