"""Shared domain types, deterministic RNG streams, and raster utilities.

Mask polarity convention, used everywhere in this package: mask value 1
marks the region to be edited, 0 marks context that must be preserved.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image


class ShapeError(ValueError):
    """Raised when rasters that must share a shape do not."""


class DomainError(ValueError):
    """Raised when a scalar argument is outside its documented domain."""


class SizeBucket(str, Enum):
    SMALL = "Small"
    MEDIUM = "Medium"
    LARGE = "Large"


# Upper edges of the Small and Medium mask-area buckets (closed on the
# upper edge; anything above MEDIUM_MAX is Large).
SMALL_MAX = 0.215
MEDIUM_MAX = 0.369
SMALL_MIN = 0.057


class PromptKind(str, Enum):
    FULL = "Full"
    MASK_SIMPLE = "MaskSimple"
    MASK_RICH = "MaskRich"


class AttributeCategory(str, Enum):
    MATERIAL = "material"
    COLOR = "color"
    SHAPE = "shape"
    SIZE = "size"
    COUNT = "count"


class ObjectCategory(str, Enum):
    COMMON = "common"
    RARE = "rare"
    TEXT_RENDERING = "text_rendering"


@dataclass(frozen=True)
class ImageBuffer:
    """RGB raster with float intensities in [0, 1], row-major HWC."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ShapeError(f"expected HxWx3, got {arr.shape}")
        if arr.shape[0] < 8 or arr.shape[1] < 8:
            raise ShapeError(f"image too small: {arr.shape}")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise DomainError("image values must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 3

    def quantized(self) -> np.ndarray:
        """8-bit view used for PNG serialization."""
        return np.round(self.data * 255.0).astype(np.uint8)


@dataclass(frozen=True)
class MaskBuffer:
    """Binary edit-region mask; 1 = edit, 0 = context."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ShapeError(f"expected HxW mask, got {arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            raise DomainError("mask values must be 0 or 1")
        arr = arr.astype(np.uint8)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class BoundingBox:
    """Half-open pixel box: columns [x0, x1), rows [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (0 <= self.x0 < self.x1 and 0 <= self.y0 < self.y1):
            raise DomainError(f"degenerate box {self}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    def area(self) -> int:
        return self.width * self.height

    def contains(self, other: "BoundingBox") -> bool:
        return (self.x0 <= other.x0 and self.y0 <= other.y0
                and self.x1 >= other.x1 and self.y1 >= other.y1)

    def clipped(self, height: int, width: int) -> "BoundingBox":
        return BoundingBox(max(0, self.x0), max(0, self.y0),
                           min(width, self.x1), min(height, self.y1))

    def as_tuple(self):
        return (self.x0, self.y0, self.x1, self.y1)


@dataclass(frozen=True)
class PromptPair:
    attribute: str
    attribute_category: AttributeCategory
    obj: str
    object_category: ObjectCategory


@dataclass(frozen=True)
class Prompt:
    kind: PromptKind
    text: str
    pairs: tuple = ()

    def __post_init__(self):
        if not self.text:
            raise DomainError("prompt text must be nonempty")
        n = len(self.pairs)
        if self.kind is PromptKind.MASK_SIMPLE and n != 1:
            raise DomainError("MaskSimple prompts carry exactly 1 pair")
        if self.kind is PromptKind.MASK_RICH and n != 3:
            raise DomainError("MaskRich prompts carry exactly 3 pairs")
        if self.kind is PromptKind.FULL and n < 1:
            raise DomainError("Full prompts carry at least 1 pair")
        object.__setattr__(self, "pairs", tuple(self.pairs))


@dataclass(frozen=True)
class RngStream:
    """Named deterministic random stream.

    Same (seed, stream_id) always yields the same draw sequence; child
    streams are derived by hashing, so sibling streams are independent.
    """

    seed: int
    stream_id: str = "root"

    def generator(self) -> np.random.Generator:
        digest = hashlib.sha256(
            f"{self.seed}:{self.stream_id}".encode()).digest()
        return np.random.Generator(
            np.random.PCG64(int.from_bytes(digest[:8], "little")))

    def child(self, label: str) -> "RngStream":
        return RngStream(self.seed, f"{self.stream_id}/{label}")


def mask_area_ratio(mask: MaskBuffer) -> float:
    """Fraction of pixels marked for editing."""
    return float(mask.data.sum()) / (mask.height * mask.width)


def size_bucket(ratio: float) -> SizeBucket:
    """Bucket a mask-to-image area ratio into Small/Medium/Large."""
    if not 0.0 <= ratio <= 1.0:
        raise DomainError(f"ratio {ratio} outside [0, 1]")
    if ratio <= SMALL_MAX:
        return SizeBucket.SMALL
    if ratio <= MEDIUM_MAX:
        return SizeBucket.MEDIUM
    return SizeBucket.LARGE


def composite(original: ImageBuffer, edited: ImageBuffer,
              mask: MaskBuffer) -> ImageBuffer:
    """Edited pixels where mask=1, original pixels (bit-exact) where mask=0."""
    if original.data.shape != edited.data.shape:
        raise ShapeError("original/edited shape mismatch")
    if mask.data.shape != original.data.shape[:2]:
        raise ShapeError("mask shape mismatch")
    sel = mask.data.astype(bool)[..., None]
    out = np.where(sel, edited.data, original.data)
    return ImageBuffer(out)


def mask_bbox(mask: MaskBuffer) -> BoundingBox:
    """Tight bounding box of the mask=1 region."""
    ys, xs = np.nonzero(mask.data)
    if len(ys) == 0:
        raise DomainError("empty mask has no bounding box")
    return BoundingBox(int(xs.min()), int(ys.min()),
                       int(xs.max()) + 1, int(ys.max()) + 1)


# ---------------------------------------------------------------------------
# PNG + sidecar serialization


def save_image(img: ImageBuffer, path) -> None:
    path = Path(path)
    Image.fromarray(img.quantized(), mode="RGB").save(path, format="PNG")
    _write_sidecar(path, {"kind": "image", "height": img.height,
                          "width": img.width, "channels": 3})


def load_image(path) -> ImageBuffer:
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64)
    return ImageBuffer(arr / 255.0)


def save_mask(mask: MaskBuffer, path) -> None:
    path = Path(path)
    Image.fromarray(mask.data * 255, mode="L").save(path, format="PNG")
    _write_sidecar(path, {"kind": "mask", "height": mask.height,
                          "width": mask.width, "polarity": "1=edit"})


def load_mask(path) -> MaskBuffer:
    arr = np.asarray(Image.open(path).convert("L"))
    return MaskBuffer((arr >= 128).astype(np.uint8))


def _write_sidecar(png_path: Path, meta: dict) -> None:
    sidecar = png_path.with_suffix(png_path.suffix + ".json")
    sidecar.write_text(json.dumps(meta, sort_keys=True) + "\n")


def image_content_hash(img: ImageBuffer) -> str:
    return hashlib.sha256(img.quantized().tobytes()).hexdigest()
