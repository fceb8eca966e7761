"""Alignment metrics: T2I / I2I / combined similarity scores and R-Precision,
computed on the full image or a crop around the masked region."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import torch
import torch.nn.functional as F

from .core import (DomainError, ImageBuffer, MaskBuffer, Prompt, PromptKind,
                   mask_bbox)


class MetricKind(str, Enum):
    T2I = "T2I"
    I2I = "I2I"
    T2I_PLUS_I2I = "T2I+I2I"
    R_PRECISION = "RPrecision"


class Region(str, Enum):
    FULL = "Full"
    CROP = "Crop"


@dataclass(frozen=True)
class MetricSpec:
    metric: MetricKind
    region: Region


@dataclass(frozen=True)
class ScoredSample:
    item_id: str
    model_id: str
    sample_index: int
    score: float

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise DomainError("score must be finite")


class RegionError(ValueError):
    pass


CROP_SIZE = 64


def region_for_prompt(kind: PromptKind) -> Region:
    """Default region discipline: Full prompts with Full images, Mask
    prompts with the crop around the masked region."""
    return Region.FULL if kind is PromptKind.FULL else Region.CROP


def crop_region(img: ImageBuffer, mask: MaskBuffer,
                out_size: int = CROP_SIZE) -> ImageBuffer:
    """Tight crop around the mask=1 pixels, resized for embedding."""
    if mask.data.sum() == 0:
        raise RegionError("cannot crop around an empty mask")
    box = mask_bbox(mask)
    patch = img.data[box.y0:box.y1, box.x0:box.x1]
    x = torch.from_numpy(np.array(patch)).float().permute(2, 0, 1)[None]
    x = F.interpolate(x, size=(out_size, out_size), mode="bilinear",
                      align_corners=False)
    return ImageBuffer(x[0].permute(1, 2, 0).numpy().clip(0.0, 1.0))


def _region_image(img: ImageBuffer, spec: MetricSpec,
                  mask: MaskBuffer | None) -> ImageBuffer:
    if spec.region is Region.FULL:
        return img
    if mask is None:
        raise RegionError("Crop region requires a mask")
    return crop_region(img, mask)


def _clip_score(cos: float) -> float:
    return 100.0 * max(0.0, float(cos))


def t2i(img: ImageBuffer, prompt: Prompt, spec: MetricSpec, embedder,
        mask: MaskBuffer | None = None, image_pairs=None) -> float:
    """Scaled text-to-image cosine similarity in the joint space."""
    region = _region_image(img, spec, mask)
    vt = embedder.embed_text(prompt)
    vi = _embed_image(embedder, region, image_pairs)
    return _clip_score(vt @ vi)


def i2i(img: ImageBuffer, reference: ImageBuffer, spec: MetricSpec, embedder,
        mask: MaskBuffer | None = None, image_pairs=None,
        reference_pairs=None) -> float:
    """Scaled image-to-image similarity against the benchmark reference."""
    va = _embed_image(embedder, _region_image(img, spec, mask), image_pairs)
    vb = _embed_image(embedder, _region_image(reference, spec, mask),
                      reference_pairs)
    return _clip_score(va @ vb)


def t2i_plus_i2i(img: ImageBuffer, prompt: Prompt, reference: ImageBuffer,
                 spec: MetricSpec, embedder,
                 mask: MaskBuffer | None = None, image_pairs=None,
                 reference_pairs=None) -> float:
    """Unweighted arithmetic mean of the T2I and I2I scores."""
    a = t2i(img, prompt, spec, embedder, mask=mask, image_pairs=image_pairs)
    b = i2i(img, reference, spec, embedder, mask=mask,
            image_pairs=image_pairs, reference_pairs=reference_pairs)
    return 0.5 * (a + b)


def r_precision(img: ImageBuffer, prompt: Prompt, distractors: list,
                spec: MetricSpec, embedder,
                mask: MaskBuffer | None = None, image_pairs=None) -> int:
    """1 when the true prompt outranks every distractor, else 0 (ties fail)."""
    if not distractors:
        raise DomainError("r_precision needs a nonempty distractor set")
    for d in distractors:
        if d.kind is not prompt.kind:
            raise DomainError("distractors must share the prompt kind")
        if d.text == prompt.text:
            raise DomainError("true prompt present among distractors")
    vi = _embed_image(embedder, _region_image(img, spec, mask), image_pairs)
    true_sim = float(embedder.embed_text(prompt) @ vi)
    for d in distractors:
        if float(embedder.embed_text(d) @ vi) >= true_sim:
            return 0
    return 1


def _embed_image(embedder, img: ImageBuffer, pairs):
    try:
        return embedder.embed_image(img, pairs) if pairs is not None \
            else embedder.embed_image(img)
    except TypeError:
        return embedder.embed_image(img)


def nima_stub(img: ImageBuffer):
    """Perceptual-quality metric placeholder; always unavailable here."""
    return None
