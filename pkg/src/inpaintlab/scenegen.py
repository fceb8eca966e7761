"""Synthetic scene corpus and benchmark construction.

Scenes are closed-vocabulary compositions of attributed object instances
on a tagged background, rendered deterministically with exact ground
truth. The benchmark builder emits items with a reference image, a
free-form mask covering one target object, and three prompt styles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import render
from .core import (AttributeCategory, BoundingBox, DomainError, ImageBuffer,
                   MaskBuffer, ObjectCategory, Prompt, PromptKind, PromptPair,
                   RngStream, SMALL_MIN, SizeBucket, mask_area_ratio,
                   save_image, save_mask, size_bucket)

MANIFEST_SCHEMA_VERSION = 1

COUNT_WORDS = {1: "one", 2: "two", 3: "three"}
WORD_COUNTS = {w: n for n, w in COUNT_WORDS.items()}


class LayoutError(ValueError):
    """Raised when an object cannot fit the canvas."""


@dataclass(frozen=True)
class ObjectSpec:
    object: str
    object_category: ObjectCategory
    material: str
    color: str
    shape: str
    size: str
    count: int
    bbox: BoundingBox
    primary_category: AttributeCategory = AttributeCategory.COLOR

    def __post_init__(self):
        if self.object not in render.OBJECT_NAMES:
            raise DomainError(f"unknown object {self.object!r}")
        if self.material not in render.MATERIALS:
            raise DomainError(f"unknown material {self.material!r}")
        if self.color not in render.COLORS:
            raise DomainError(f"unknown color {self.color!r}")
        if self.shape not in render.SHAPES:
            raise DomainError(f"unknown shape {self.shape!r}")
        if self.size not in render.SIZES:
            raise DomainError(f"unknown size {self.size!r}")
        if self.count not in render.COUNTS:
            raise DomainError(f"count {self.count} outside vocabulary")

    def attribute(self, category: AttributeCategory) -> str:
        if category is AttributeCategory.MATERIAL:
            return self.material
        if category is AttributeCategory.COLOR:
            return self.color
        if category is AttributeCategory.SHAPE:
            return self.shape
        if category is AttributeCategory.SIZE:
            return self.size
        return COUNT_WORDS[self.count]


@dataclass(frozen=True)
class SceneSpec:
    height: int
    width: int
    background: str
    objects: tuple

    def __post_init__(self):
        if self.background not in render.SCENES:
            raise DomainError(f"unknown scene tag {self.background!r}")
        if not 1 <= len(self.objects) <= 6:
            raise DomainError("scenes carry 1-6 objects")
        object.__setattr__(self, "objects", tuple(self.objects))
        for obj in self.objects:
            if obj.bbox.x1 > self.width or obj.bbox.y1 > self.height:
                raise LayoutError(f"object box {obj.bbox} outside canvas")


@dataclass(frozen=True)
class BenchItem:
    id: str
    image: ImageBuffer
    mask: MaskBuffer
    prompts: dict
    target: ObjectSpec
    scene: SceneSpec
    bucket: SizeBucket
    attribute_category: AttributeCategory
    object_category: ObjectCategory
    scene_tag: str


def render_scene(spec: SceneSpec, rng: RngStream) -> ImageBuffer:
    """Render a scene; identical pixels for identical (spec, rng)."""
    gen = rng.child("background").generator()
    canvas = render.draw_background(spec.height, spec.width,
                                    spec.background, gen)
    for obj in spec.objects:
        marker = render.marker_for(obj.object)
        text = obj.object if obj.object_category is ObjectCategory.TEXT_RENDERING else None
        for cell in render.instance_grid(obj.bbox, obj.count):
            render.draw_instance(canvas, cell, obj.shape, obj.color,
                                 obj.material, obj.size, marker, text=text)
    return ImageBuffer(np.clip(canvas, 0.0, 1.0))


def make_free_form_mask(target: BoundingBox, canvas: tuple,
                        rng: RngStream) -> MaskBuffer:
    """Randomized blob mask that strictly covers the target box.

    The mask is the box dilated by a random radius, with a low-frequency
    wobble on the boundary so the outline never hints at the silhouette
    underneath. The area ratio is forced to at least the smallest bucket
    bound.
    """
    height, width = canvas
    if target.x1 > width or target.y1 > height:
        raise DomainError("box outside canvas")
    gen = rng.generator()
    # quadratic skew keeps small masks common while still producing large ones
    radius = 2.0 + float(gen.uniform(0.0, 1.0)) ** 2 * 0.40 * min(height, width)
    amplitude = float(gen.uniform(0.0, 6.0))

    coarse = gen.uniform(0.0, 1.0, size=(8, 8))
    yy, xx = np.mgrid[0:height, 0:width]
    cy = np.clip(yy * 8 // height, 0, 7)
    cx = np.clip(xx * 8 // width, 0, 7)
    wobble = coarse[cy, cx]

    dx = np.maximum(np.maximum(target.x0 - xx, xx - (target.x1 - 1)), 0)
    dy = np.maximum(np.maximum(target.y0 - yy, yy - (target.y1 - 1)), 0)
    dist = np.maximum(dx, dy)

    floor = max(SMALL_MIN, target.area() / (height * width))
    for _ in range(64):
        mask = (dist <= radius + amplitude * wobble).astype(np.uint8)
        if mask.sum() / (height * width) >= floor:
            break
        radius += 1.5
    return MaskBuffer(mask)


def _attr_phrase(category: AttributeCategory, value: str) -> str:
    if category is AttributeCategory.SHAPE:
        return f"{value}-shaped"
    return value


def _object_phrase(obj: ObjectSpec, plural: bool) -> str:
    name = f'"{obj.object}"' if obj.object_category is ObjectCategory.TEXT_RENDERING \
        else obj.object
    return name + ("s" if plural else "")


def _pair(obj: ObjectSpec, category: AttributeCategory) -> PromptPair:
    return PromptPair(obj.attribute(category), category, obj.object,
                      obj.object_category)


def _describe(obj: ObjectSpec, categories) -> str:
    """Noun phrase realizing the given attribute categories of an object."""
    cats = list(categories)
    plural = AttributeCategory.COUNT in cats and obj.count > 1
    words = []
    if AttributeCategory.COUNT in cats:
        words.append(COUNT_WORDS[obj.count])
        cats.remove(AttributeCategory.COUNT)
    else:
        words.append("a")
    words.extend(_attr_phrase(c, obj.attribute(c)) for c in cats)
    words.append(_object_phrase(obj, plural))
    return " ".join(words)


_RICH_EXTRAS = {
    AttributeCategory.MATERIAL: (AttributeCategory.COLOR, AttributeCategory.SHAPE),
    AttributeCategory.COLOR: (AttributeCategory.MATERIAL, AttributeCategory.SHAPE),
    AttributeCategory.SHAPE: (AttributeCategory.COLOR, AttributeCategory.MATERIAL),
    AttributeCategory.SIZE: (AttributeCategory.COLOR, AttributeCategory.MATERIAL),
    AttributeCategory.COUNT: (AttributeCategory.COLOR, AttributeCategory.MATERIAL),
}


def make_prompts(target: ObjectSpec, scene: SceneSpec) -> dict:
    """Full / Mask-Simple / Mask-Rich prompt triple for a target object."""
    if target not in scene.objects:
        raise DomainError("target not part of the scene")
    primary = target.primary_category

    simple = Prompt(PromptKind.MASK_SIMPLE,
                    _describe(target, [primary]),
                    (_pair(target, primary),))

    rich_cats = (primary,) + _RICH_EXTRAS[primary]
    rich = Prompt(PromptKind.MASK_RICH,
                  _describe(target, rich_cats),
                  tuple(_pair(target, c) for c in rich_cats))

    parts = [_describe(o, [o.primary_category]) for o in scene.objects]
    full_text = f"a {scene.background} scene with " + " and ".join(parts)
    full = Prompt(PromptKind.FULL, full_text,
                  tuple(_pair(o, o.primary_category) for o in scene.objects))
    return {PromptKind.FULL: full, PromptKind.MASK_SIMPLE: simple,
            PromptKind.MASK_RICH: rich}


def parse_pairs(prompt: Prompt) -> list:
    """Recover attribute-object pairs from prompt text (grammar inverse)."""
    pairs = []
    for chunk in prompt.text.split(" scene with ")[-1].split(" and "):
        words = chunk.split()
        count = None
        attrs = []
        obj = None
        for w in words:
            if w == "a":
                continue
            if w in WORD_COUNTS:
                count = w
                attrs.append((w, AttributeCategory.COUNT))
            elif w.endswith("-shaped"):
                attrs.append((w[:-7], AttributeCategory.SHAPE))
            elif w in render.MATERIALS:
                attrs.append((w, AttributeCategory.MATERIAL))
            elif w in render.COLORS:
                attrs.append((w, AttributeCategory.COLOR))
            elif w in render.SIZES:
                attrs.append((w, AttributeCategory.SIZE))
            else:
                obj = w
        if obj is None:
            continue
        if obj.startswith('"'):
            name = obj.strip('s').strip('"')
            cat = ObjectCategory.TEXT_RENDERING
        else:
            if obj in render.OBJECT_NAMES:
                name = obj
            elif count and obj.endswith("s") and obj[:-1] in render.OBJECT_NAMES:
                name = obj[:-1]
            else:
                name = obj
            cat = (ObjectCategory.COMMON if name in render.COMMON_OBJECTS
                   else ObjectCategory.RARE)
        for value, category in attrs:
            pairs.append(PromptPair(value, category, name, cat))
    return pairs


# --- benchmark construction ------------------------------------------------

_OBJECTS_BY_CATEGORY = {
    ObjectCategory.COMMON: render.COMMON_OBJECTS,
    ObjectCategory.RARE: render.RARE_OBJECTS,
    ObjectCategory.TEXT_RENDERING: render.TEXT_OBJECTS,
}


def _cell_grid(height: int, width: int) -> list:
    xs = [0, width // 2, width]
    ys = [0, height // 2, height]
    return [BoundingBox(xs[c] + 2, ys[r] + 2, xs[c + 1] - 2, ys[r + 1] - 2)
            for r in range(2) for c in range(2)]


def _random_object(name: str, category: ObjectCategory, bbox: BoundingBox,
                   primary: AttributeCategory,
                   gen: np.random.Generator) -> ObjectSpec:
    return ObjectSpec(
        object=name,
        object_category=category,
        material=str(gen.choice(render.MATERIALS)),
        color=str(gen.choice(list(render.COLORS))),
        shape=str(gen.choice(render.SHAPES)),
        size=str(gen.choice(list(render.SIZES))),
        count=int(gen.choice(render.COUNTS)),
        bbox=bbox,
        primary_category=primary,
    )


def make_scene(index: int, attribute_category: AttributeCategory,
               object_category: ObjectCategory, scene_tag: str,
               rng: RngStream, canvas: tuple = (64, 64)):
    """One scene with a designated target object in a grid cell."""
    gen = rng.child(f"scene/{index}").generator()
    height, width = canvas
    cells = _cell_grid(height, width)
    n_objects = int(gen.integers(1, 5))
    target_cell = int(gen.integers(0, n_objects))

    vocab = _OBJECTS_BY_CATEGORY[object_category]
    target_name = vocab[index % len(vocab)]
    others = [n for n in render.OBJECT_NAMES if n != target_name]
    fillers = list(gen.choice(others, size=n_objects - 1, replace=False))

    objects = []
    target = None
    for slot in range(n_objects):
        name = target_name if slot == target_cell else fillers.pop()
        category = (object_category if slot == target_cell
                    else _category_of(name))
        primary = (attribute_category if slot == target_cell
                   else AttributeCategory.COLOR)
        obj = _random_object(name, category, _shrink(cells[slot], gen),
                             primary, gen)
        objects.append(obj)
        if slot == target_cell:
            target = obj
    spec = SceneSpec(height, width, scene_tag, tuple(objects))
    return spec, target


def _shrink(cell: BoundingBox, gen: np.random.Generator) -> BoundingBox:
    """Randomly inset an object box within its layout cell."""
    w = max(12, int(cell.width * gen.uniform(0.6, 1.0)))
    h = max(12, int(cell.height * gen.uniform(0.6, 1.0)))
    w, h = min(w, cell.width), min(h, cell.height)
    x0 = cell.x0 + int(gen.integers(0, cell.width - w + 1))
    y0 = cell.y0 + int(gen.integers(0, cell.height - h + 1))
    return BoundingBox(x0, y0, x0 + w, y0 + h)


def _category_of(name: str) -> ObjectCategory:
    if name in render.COMMON_OBJECTS:
        return ObjectCategory.COMMON
    if name in render.RARE_OBJECTS:
        return ObjectCategory.RARE
    return ObjectCategory.TEXT_RENDERING


def category_schedule(n_items: int) -> list:
    """Round-robin (attribute, object, scene) combos, balanced."""
    combos = [(a, o, s)
              for a in AttributeCategory
              for o in ObjectCategory
              for s in render.SCENES]
    return [combos[i % len(combos)] for i in range(n_items)]


def build_benchmark(n_items: int = 240, rng: RngStream = RngStream(0, "bench"),
                    canvas: tuple = (64, 64)) -> list:
    """Build the benchmark: balanced categories, free-form masks, prompts."""
    if n_items < 1:
        raise DomainError("need at least one item")
    items = []
    for i, (attr_cat, obj_cat, scene_tag) in enumerate(category_schedule(n_items)):
        spec, target = make_scene(i, attr_cat, obj_cat, scene_tag, rng,
                                  canvas=canvas)
        image = render_scene(spec, rng.child(f"render/{i}"))
        mask = make_free_form_mask(target.bbox, canvas, rng.child(f"mask/{i}"))
        prompts = make_prompts(target, spec)
        items.append(BenchItem(
            id=f"item-{i:04d}",
            image=image,
            mask=mask,
            prompts=prompts,
            target=target,
            scene=spec,
            bucket=size_bucket(mask_area_ratio(mask)),
            attribute_category=attr_cat,
            object_category=obj_cat,
            scene_tag=scene_tag,
        ))
    return items


def _object_to_json(obj: ObjectSpec) -> dict:
    return {
        "object": obj.object,
        "object_category": obj.object_category.value,
        "material": obj.material,
        "color": obj.color,
        "shape": obj.shape,
        "size": obj.size,
        "count": obj.count,
        "bbox": obj.bbox.as_tuple(),
        "primary_category": obj.primary_category.value,
    }


def _object_from_json(d: dict) -> ObjectSpec:
    return ObjectSpec(
        object=d["object"],
        object_category=ObjectCategory(d["object_category"]),
        material=d["material"], color=d["color"], shape=d["shape"],
        size=d["size"], count=d["count"],
        bbox=BoundingBox(*d["bbox"]),
        primary_category=AttributeCategory(d["primary_category"]),
    )


def write_benchmark(items: list, out_dir) -> Path:
    """Persist PNGs plus a JSONL manifest; byte-stable for a fixed seed."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "manifest.jsonl"
    with manifest.open("w") as fh:
        for item in items:
            img_path = f"images/{item.id}.png"
            mask_path = f"masks/{item.id}.png"
            save_image(item.image, out_dir / img_path)
            save_mask(item.mask, out_dir / mask_path)
            row = {
                "schema_version": MANIFEST_SCHEMA_VERSION,
                "id": item.id,
                "image": img_path,
                "mask": mask_path,
                "bucket": item.bucket.value,
                "attribute_category": item.attribute_category.value,
                "object_category": item.object_category.value,
                "scene": item.scene_tag,
                "prompts": {k.value: {"text": p.text} for k, p in
                            sorted(item.prompts.items(), key=lambda kv: kv[0].value)},
                "target": _object_to_json(item.target),
                "scene_spec": {
                    "height": item.scene.height,
                    "width": item.scene.width,
                    "background": item.scene.background,
                    "objects": [_object_to_json(o) for o in item.scene.objects],
                },
            }
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return manifest


def load_benchmark(manifest_path) -> list:
    """Reload a persisted benchmark, reconstructing prompts from specs."""
    from .core import load_image, load_mask
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    items = []
    for line in manifest_path.read_text().splitlines():
        row = json.loads(line)
        target = _object_from_json(row["target"])
        ss = row["scene_spec"]
        objects = tuple(_object_from_json(o) for o in ss["objects"])
        spec = SceneSpec(ss["height"], ss["width"], ss["background"], objects)
        target = next(o for o in objects if o == target)
        items.append(BenchItem(
            id=row["id"],
            image=load_image(root / row["image"]),
            mask=load_mask(root / row["mask"]),
            prompts=make_prompts(target, spec),
            target=target,
            scene=spec,
            bucket=SizeBucket(row["bucket"]),
            attribute_category=AttributeCategory(row["attribute_category"]),
            object_category=ObjectCategory(row["object_category"]),
            scene_tag=row["scene"],
        ))
    return items
