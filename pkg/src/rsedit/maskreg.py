"""Per-finding pseudo masks built from bounding-box annotations."""

from __future__ import annotations

import json
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .imaging import resize_nearest
from .instruction import EditInstruction


class MaskError(ValueError):
    pass


@dataclass(frozen=True)
class BoundingBox:
    """Half-open pixel box ``[x0, x1) x [y0, y1)``."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise MaskError(f"degenerate box {self.as_list()}")

    def fits(self, width: int, height: int) -> bool:
        return 0 <= self.x0 and self.x1 <= width and 0 <= self.y0 and self.y1 <= height

    @property
    def area(self) -> int:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def as_list(self) -> list[int]:
        return [self.x0, self.y0, self.x1, self.y1]


@dataclass(frozen=True)
class MaskRegistry:
    width: int
    height: int
    findings: Mapping[str, tuple[BoundingBox, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise MaskError("registry canvas must be positive")
        frozen = {}
        for name, boxes in self.findings.items():
            boxes = tuple(b if isinstance(b, BoundingBox) else BoundingBox(*b) for b in boxes)
            for b in boxes:
                if not b.fits(self.width, self.height):
                    raise MaskError(
                        f"box {b.as_list()} for {name!r} exceeds canvas "
                        f"{self.width}x{self.height}"
                    )
            frozen[name] = boxes
        object.__setattr__(self, "findings", frozen)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @classmethod
    def from_json(cls, obj: dict) -> "MaskRegistry":
        return cls(
            int(obj["width"]),
            int(obj["height"]),
            {k: [BoundingBox(*map(int, b)) for b in v] for k, v in obj["findings"].items()},
        )

    @classmethod
    def load(cls, path) -> "MaskRegistry":
        return cls.from_json(json.loads(Path(path).read_text()))

    def to_json(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "findings": {k: [b.as_list() for b in v] for k, v in sorted(self.findings.items())},
        }


def rasterize(boxes: Iterable[BoundingBox], width: int, height: int) -> np.ndarray:
    mask = np.zeros((height, width), dtype=np.float64)
    for b in boxes:
        mask[b.y0:b.y1, b.x0:b.x1] = 1.0
    return mask


def build_pathology_mask(registry: MaskRegistry, finding: str) -> np.ndarray:
    """Pixel union of the finding's boxes; all-ones when it is unannotated."""
    boxes = registry.findings.get(finding)
    if not boxes:
        return np.ones(registry.shape, dtype=np.float64)
    return rasterize(boxes, registry.width, registry.height)


def resolve_pseudo_mask(
    registry: MaskRegistry, instrs: Iterable[EditInstruction]
) -> np.ndarray:
    instrs = list(instrs)
    if not instrs:
        raise MaskError("cannot resolve a pseudo mask for an empty instruction set")
    mask = np.zeros(registry.shape, dtype=np.float64)
    for finding in {i.finding for i in instrs}:
        np.maximum(mask, build_pathology_mask(registry, finding), out=mask)
    return mask


def user_mask_override(mask, width: int, height: int) -> np.ndarray:
    """Validate a caller-supplied mask against the canvas and return it."""
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != (height, width):
        raise MaskError(f"user mask is {mask.shape[::-1]}, canvas is {(width, height)}")
    if not np.all((mask == 0.0) | (mask == 1.0)):
        raise MaskError("user mask must be binary (values 0 or 1)")
    return mask


def fit_to_canvas(mask: np.ndarray, width: int, height: int) -> np.ndarray:
    """Nearest-neighbour rescale of a registry mask to the edit canvas."""
    return resize_nearest(mask, width, height)
