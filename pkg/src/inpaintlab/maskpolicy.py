"""Training-time mask generators: random boxes/strokes and object-box union."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import BoundingBox, DomainError, MaskBuffer, RngStream


class PolicyKind(str, Enum):
    RANDOM = "Random"
    OBJECT_UNION = "ObjectUnion"


@dataclass(frozen=True)
class MaskPolicyConfig:
    policy: PolicyKind = PolicyKind.OBJECT_UNION
    random_box_count_range: tuple = (0, 2)
    random_stroke_count_range: tuple = (0, 2)
    stroke_width_range: tuple = (2, 6)
    box_area_fraction_range: tuple = (0.02, 0.25)
    stroke_vertex_range: tuple = (4, 12)

    def __post_init__(self):
        for lo, hi in (self.random_box_count_range,
                       self.random_stroke_count_range,
                       self.stroke_width_range,
                       self.box_area_fraction_range,
                       self.stroke_vertex_range):
            if hi < lo:
                raise DomainError("empty range in mask policy config")


def _rasterize_stroke(mask: np.ndarray, vertices, width: int):
    """Stamp a square brush along each polyline segment."""
    height, w = mask.shape
    half = max(1, width // 2)
    for (y0, x0), (y1, x1) in zip(vertices, vertices[1:]):
        steps = int(max(abs(y1 - y0), abs(x1 - x0))) + 1
        for t in np.linspace(0.0, 1.0, steps):
            cy = int(round(y0 + t * (y1 - y0)))
            cx = int(round(x0 + t * (x1 - x0)))
            mask[max(0, cy - half):min(height, cy + half + 1),
                 max(0, cx - half):min(w, cx + half + 1)] = 1


def random_mask(canvas: tuple, cfg: MaskPolicyConfig,
                rng: RngStream) -> MaskBuffer:
    """Union of k random boxes and m random-walk strokes."""
    height, width = canvas
    gen = rng.generator()
    out = np.zeros((height, width), dtype=np.uint8)

    k = int(gen.integers(cfg.random_box_count_range[0],
                         cfg.random_box_count_range[1] + 1))
    for _ in range(k):
        frac = gen.uniform(*cfg.box_area_fraction_range)
        area = frac * height * width
        aspect = gen.uniform(0.5, 2.0)
        bh = int(np.clip(round(np.sqrt(area * aspect)), 2, height))
        bw = int(np.clip(round(area / max(1, bh)), 2, width))
        y0 = int(gen.integers(0, height - bh + 1))
        x0 = int(gen.integers(0, width - bw + 1))
        out[y0:y0 + bh, x0:x0 + bw] = 1

    m = int(gen.integers(cfg.random_stroke_count_range[0],
                         cfg.random_stroke_count_range[1] + 1))
    for _ in range(m):
        n_vertices = int(gen.integers(cfg.stroke_vertex_range[0],
                                      cfg.stroke_vertex_range[1] + 1))
        stroke_width = int(gen.integers(cfg.stroke_width_range[0],
                                        cfg.stroke_width_range[1] + 1))
        pos = np.array([gen.uniform(0, height), gen.uniform(0, width)])
        vertices = [tuple(pos)]
        step = 0.18 * min(height, width)
        for _ in range(n_vertices - 1):
            pos = pos + gen.uniform(-step, step, size=2)
            pos[0] = np.clip(pos[0], 0, height - 1)
            pos[1] = np.clip(pos[1], 0, width - 1)
            vertices.append(tuple(pos))
        _rasterize_stroke(out, vertices, stroke_width)
    return MaskBuffer(out)


def object_union_mask(canvas: tuple, boxes: list, cfg: MaskPolicyConfig,
                      rng: RngStream):
    """Random mask unioned with one uniformly chosen object box.

    Returns (mask, chosen_box); with no boxes available the policy falls
    back to the plain random mask and returns chosen_box=None so callers
    can flag the sample.
    """
    base = random_mask(canvas, cfg, rng.child("random-part"))
    if not boxes:
        return base, None
    gen = rng.child("box-choice").generator()
    box = boxes[int(gen.integers(0, len(boxes)))]
    out = np.array(base.data)
    out[box.y0:box.y1, box.x0:box.x1] = 1
    return MaskBuffer(out), box


def draw_mask(canvas: tuple, boxes: list, cfg: MaskPolicyConfig,
              rng: RngStream) -> MaskBuffer:
    """Dispatch on the configured policy."""
    if cfg.policy is PolicyKind.RANDOM:
        return random_mask(canvas, cfg, rng)
    mask, _ = object_union_mask(canvas, boxes, cfg, rng)
    return mask


def boxes_for_image(sample, detector=None) -> list:
    """Ground-truth boxes when the sample carries a scene spec, else the
    injected detector callback; detector failures yield an empty list."""
    spec = getattr(sample, "scene", None) or (
        sample if hasattr(sample, "objects") else None)
    if spec is not None:
        return [obj.bbox for obj in spec.objects]
    if detector is None:
        return []
    try:
        return list(detector(sample))
    except Exception:
        return []
