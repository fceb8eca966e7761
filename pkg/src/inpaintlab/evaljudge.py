"""Simulated evaluation protocol: question schemas per prompt kind and an
analytic judge that answers them from pixels.

The judge works purely from the rendered image: dark 5x5 identity codes
locate object instances, color-ray classification finds attributed
silhouettes, and matched-filter re-rendering identifies textures and
shapes. Ground-truth labels are only used to know *what to ask*, never
to answer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import ndimage

from . import render
from .core import (BoundingBox, DomainError, ImageBuffer, MaskBuffer, Prompt,
                   PromptKind, PromptPair, RngStream)
from .scenegen import BenchItem, WORD_COUNTS

FULL_QUESTION = "Does the image match the caption?"
ABSTAIN = "abstain"


class JudgeMode(str, Enum):
    GROUND_TRUTH_ANALYTIC = "GroundTruthAnalytic"
    TRAINED_CLASSIFIER = "TrainedClassifier"


class ProtocolError(RuntimeError):
    pass


@dataclass(frozen=True)
class JudgeConfig:
    mode: JudgeMode = JudgeMode.GROUND_TRUTH_ANALYTIC
    dark_threshold: float = render.DARK_THRESHOLD
    min_component_area: int = 4
    min_marker_side: int = 4
    marker_tolerance: int = 4
    texture_margin: float = 0.89
    annotator_id: str = "sim-judge-0"


@dataclass(frozen=True)
class Answer:
    question: str
    tag: str
    answer: object  # bool for single-image questions, str for side-by-side


@dataclass(frozen=True)
class RatingRecord:
    item_id: str
    prompt_kind: PromptKind
    model_id: str
    sample_index: int
    answers: tuple
    annotator_id: str

    def __post_init__(self):
        expected = {PromptKind.FULL: 1, PromptKind.MASK_SIMPLE: 3,
                    PromptKind.MASK_RICH: 9}
        n = len(self.answers)
        if "|" in self.model_id:
            if n != 2:
                raise DomainError("side-by-side records carry 2 answers")
        elif n != expected[self.prompt_kind]:
            raise DomainError(
                f"{self.prompt_kind.value} records carry "
                f"{expected[self.prompt_kind]} answers, got {n}")
        object.__setattr__(self, "answers", tuple(self.answers))

    def positive_fraction(self) -> float:
        vals = [bool(a.answer) for a in self.answers]
        return sum(vals) / len(vals)

    def all_correct(self) -> bool:
        return all(bool(a.answer) for a in self.answers)


def questions_for(prompt: Prompt) -> list:
    """Question descriptors: 1 for Full, 3 per attribute-object pair."""
    if prompt.kind is PromptKind.FULL:
        return [(FULL_QUESTION, "overall_match")]
    questions = []
    for pair in prompt.pairs:
        questions.append((
            f"Is the object ({pair.obj}) rendered?", "object_present"))
        questions.append((
            f"Is the attribute ({pair.attribute}) present?",
            "attribute_present"))
        questions.append((
            f"Is the attribute ({pair.attribute}) applied to the correct "
            f"object ({pair.obj})?", "binding_correct"))
    return questions


# --- pixel analysis --------------------------------------------------------

_EIGHT = np.ones((3, 3), dtype=int)


@dataclass
class _Detection:
    name: str
    center: tuple
    bbox: BoundingBox


@dataclass
class _Component:
    color: str
    area: int
    bbox: BoundingBox
    mask: np.ndarray        # full-frame boolean, silhouette incl. marker
    color_mask: np.ndarray  # colored pixels only


def _detect_markers(image: np.ndarray, region: np.ndarray,
                    cfg: JudgeConfig) -> list:
    dark = (image.max(axis=2) < cfg.dark_threshold) & region
    labels, n = ndimage.label(dark, structure=_EIGHT)
    out = []
    for idx in range(1, n + 1):
        ys, xs = np.nonzero(labels == idx)
        h, w = ys.max() - ys.min() + 1, xs.max() - xs.min() + 1
        side = max(h, w)
        if side < cfg.min_marker_side or abs(h - w) > 2:
            continue
        patch = np.zeros((side, side), dtype=float)
        patch[ys - ys.min(), xs - xs.min()] = 1.0
        code = _block_reduce(patch, 5) >= 0.5
        name = render.decode_marker(code.astype(np.uint8),
                                    cfg.marker_tolerance)
        if name is not None:
            out.append(_Detection(
                name=name,
                center=(float(ys.mean()), float(xs.mean())),
                bbox=BoundingBox(int(xs.min()), int(ys.min()),
                                 int(xs.max()) + 1, int(ys.max()) + 1)))
    return out


def _block_reduce(patch: np.ndarray, n: int) -> np.ndarray:
    rows = np.array_split(np.arange(patch.shape[0]), n)
    cols = np.array_split(np.arange(patch.shape[1]), n)
    out = np.zeros((n, n))
    for i, r in enumerate(rows):
        for j, c in enumerate(cols):
            out[i, j] = patch[np.ix_(r, c)].mean() if len(r) and len(c) else 0
    return out


def _color_components(image: np.ndarray, region: np.ndarray,
                      dark: np.ndarray, cfg: JudgeConfig) -> list:
    """Instance components: colored silhouette pixels united with the dark
    identity marker, so small instances stay in one piece."""
    flat = image.reshape(-1, 3)
    idx = render.classify_color(flat).reshape(image.shape[:2])
    colored = (idx >= 0) & region
    labels, n = ndimage.label(colored | dark, structure=_EIGHT)
    names = list(render.COLORS)
    comps = []
    for k in range(1, n + 1):
        sel = labels == k
        color_mask = sel & colored
        area = int(color_mask.sum())
        if area < cfg.min_component_area:
            continue
        ys, xs = np.nonzero(sel)
        votes = idx[color_mask]
        comps.append(_Component(
            color=names[np.bincount(votes).argmax()],
            area=area,
            bbox=BoundingBox(int(xs.min()), int(ys.min()),
                             int(xs.max()) + 1, int(ys.max()) + 1),
            mask=sel,
            color_mask=color_mask))
    return comps


def _component_for(detection: _Detection, comps: list):
    cy, cx = detection.center
    inside = [c for c in comps
              if c.bbox.y0 - 1 <= cy <= c.bbox.y1 and
              c.bbox.x0 - 1 <= cx <= c.bbox.x1]
    pool = inside or comps
    if not pool:
        return None
    return min(pool, key=lambda c:
               ((c.bbox.y0 + c.bbox.y1) / 2 - cy) ** 2 +
               ((c.bbox.x0 + c.bbox.x1) / 2 - cx) ** 2)


def _classify_texture(image: np.ndarray, comp: _Component,
                      cfg: JudgeConfig) -> str:
    fill = np.array(render.COLORS[comp.color])
    sel = comp.color_mask
    ratio = (image[sel] / fill[None, :]).mean(axis=1)
    modulated = ratio < cfg.texture_margin
    ys, xs = np.nonzero(sel)
    local_y, local_x = ys - comp.bbox.y0, xs - comp.bbox.x0
    best, best_score = None, -1.0
    for material in render.MATERIALS:
        fld = render.texture_field(material, comp.bbox.height, comp.bbox.width)
        pred = fld[local_y, local_x] < 1.0
        score = float((pred == modulated).mean())
        if score > best_score:
            best, best_score = material, score
    return best


def _classify_shape(comp: _Component) -> str:
    box = comp.bbox
    filled = comp.mask[box.y0:box.y1, box.x0:box.x1]
    marker = filled & ~comp.color_mask[box.y0:box.y1, box.x0:box.x1]
    side = max(box.height, box.width)
    canvas = np.zeros((side, side), dtype=bool)
    canvas[:box.height, :box.width] = filled
    best, best_iou = None, -1.0
    for shape in render.SHAPES:
        sil = render.shape_silhouette(shape, side)
        # the identity marker overprints the silhouette; add it to both
        # sides so it cannot tip the comparison
        sil = sil.copy()
        sil[:box.height, :box.width] |= marker
        inter = (canvas & sil).sum()
        union = (canvas | sil).sum()
        iou = inter / max(1, union)
        if iou > best_iou:
            best, best_iou = shape, iou
    return best


def _size_candidates(comp: _Component, target_bbox: BoundingBox,
                     count: int) -> set:
    """Size tags consistent with the measured instance side.

    In small layout cells distinct tags can render to the same pixel
    side; every tag at the minimum distance is accepted.
    """
    cell = render.instance_grid(target_bbox, max(1, count))[0]
    measured = max(comp.bbox.height, comp.bbox.width)
    dist = {tag: abs(render.instance_side(cell, tag) - measured)
            for tag in render.SIZES}
    best = min(dist.values())
    return {tag for tag, d in dist.items() if d == best}


def _judge_pair(pair: PromptPair, image: np.ndarray, region: np.ndarray,
                target_bbox: BoundingBox, cfg: JudgeConfig,
                detections: list, comps: list) -> dict:
    mine = [d for d in detections if d.name == pair.obj]
    object_present = len(mine) > 0
    my_comps = [c for c in (_component_for(d, comps) for d in mine)
                if c is not None]

    cat = pair.attribute_category.value
    value = pair.attribute

    def check(comp) -> bool:
        if cat == "color":
            return comp.color == value
        if cat == "material":
            return _classify_texture(image, comp, cfg) == value
        if cat == "shape":
            return _classify_shape(comp) == value
        if cat == "size":
            return value in _size_candidates(comp, target_bbox, len(mine))
        if cat == "count":
            return len(mine) == WORD_COUNTS[value]
        raise DomainError(f"unknown attribute category {cat}")

    if cat == "count":
        present = bound = object_present and len(mine) == WORD_COUNTS[value]
    elif cat == "size":
        present = bound = object_present and bool(my_comps) and \
            sum(check(c) for c in my_comps) * 2 >= len(my_comps)
    else:
        present = any(check(c) for c in comps)
        bound = object_present and bool(my_comps) and \
            sum(check(c) for c in my_comps) * 2 >= len(my_comps)
    return {"object_present": object_present,
            "attribute_present": bool(present),
            "binding_correct": bool(bound)}


def _split_by_markers(comp: _Component, centers: list) -> list:
    """Touching instances merge into one component; split it by
    nearest-marker assignment so per-instance texture/shape analysis
    stays anchored to each instance's own patch."""
    ys, xs = np.nonzero(comp.mask)
    pts = np.stack([ys, xs], axis=1).astype(float)
    ctr = np.asarray(centers)
    owner = ((pts[:, None, :] - ctr[None, :, :]) ** 2).sum(-1).argmin(1)
    out = []
    for i in range(len(centers)):
        sel = np.zeros_like(comp.mask)
        sel[ys[owner == i], xs[owner == i]] = True
        color_mask = sel & comp.color_mask
        if not color_mask.any():
            continue
        sy, sx = np.nonzero(sel)
        out.append(_Component(
            color=comp.color, area=int(color_mask.sum()),
            bbox=BoundingBox(int(sx.min()), int(sy.min()),
                             int(sx.max()) + 1, int(sy.max()) + 1),
            mask=sel, color_mask=color_mask))
    return out


def _analyze(img: ImageBuffer, region: np.ndarray, cfg: JudgeConfig):
    image = np.asarray(img.data)
    dark = (image.max(axis=2) < cfg.dark_threshold) & region
    detections = _detect_markers(image, region, cfg)
    merged = _color_components(image, region, dark, cfg)
    comps = []
    for comp in merged:
        inside = [d.center for d in detections
                  if comp.mask[int(round(d.center[0])),
                               int(round(d.center[1]))]]
        if len(inside) >= 2:
            comps.extend(_split_by_markers(comp, inside))
        else:
            comps.append(comp)
    return image, detections, comps


def judge_single(img: ImageBuffer, item: BenchItem, prompt: Prompt,
                 cfg: JudgeConfig = JudgeConfig(), model_id: str = "model",
                 sample_index: int = 0) -> RatingRecord:
    """Answer the single-image question schema for one output."""
    for pair in prompt.pairs:
        if pair.obj not in render.OBJECT_NAMES:
            raise DomainError(f"unknown vocabulary term {pair.obj!r}")
    if prompt.kind is PromptKind.FULL:
        region = np.ones(img.data.shape[:2], dtype=bool)
    else:
        region = item.mask.data.astype(bool)
    image, detections, comps = _analyze(img, region, cfg)

    answers = []
    if prompt.kind is PromptKind.FULL:
        ok = True
        for pair in prompt.pairs:
            obj = next(o for o in item.scene.objects if o.object == pair.obj)
            verdict = _judge_pair(pair, image, region, obj.bbox, cfg,
                                  detections, comps)
            ok = ok and verdict["binding_correct"]
        answers.append(Answer(FULL_QUESTION, "overall_match", ok))
    else:
        questions = questions_for(prompt)
        for i, pair in enumerate(prompt.pairs):
            verdict = _judge_pair(pair, image, region, item.target.bbox, cfg,
                                  detections, comps)
            for q, tag in questions[3 * i:3 * i + 3]:
                answers.append(Answer(q, tag, verdict[tag]))
    return RatingRecord(item.id, prompt.kind, model_id, sample_index,
                        tuple(answers), cfg.annotator_id)


# Background palette anchors: each backdrop's pixels lie on the segment
# between its two anchor colors (a single point for flat backdrops).
_BACKGROUND_SEGMENTS = (
    ((0.78, 0.72, 0.62), (0.72, 0.66, 0.58)),   # banded interior walls
    ((0.65, 0.75, 0.82), (0.70, 0.78, 0.66)),   # sky-to-ground gradient
    ((0.76, 0.72, 0.80), (0.73, 0.69, 0.77)),   # woven canvas weave
)
_BACKGROUND_EPS = 0.02


def _background_like(pix: np.ndarray) -> np.ndarray:
    """Pixels within eps of a known backdrop color segment."""
    hit = np.zeros(len(pix), dtype=bool)
    for a, b in _BACKGROUND_SEGMENTS:
        a, b = np.array(a), np.array(b)
        d = b - a
        t = np.clip((pix - a) @ d / float(d @ d), 0.0, 1.0)
        dist = np.linalg.norm(pix - (a + t[:, None] * d[None, :]), axis=1)
        hit |= dist < _BACKGROUND_EPS
    return hit


def artifact_score(img: ImageBuffer, mask: MaskBuffer) -> float:
    """No-reference proxy: fraction of edit-region pixels off the closed
    palette (neither background-like, colored, dark, nor glyph-gray)."""
    sel = mask.data.astype(bool)
    if not sel.any():
        return 0.0
    pix = img.data[sel]
    colored = render.classify_color(pix) >= 0
    dark = pix.max(axis=1) < render.DARK_THRESHOLD
    gray = np.abs(pix - pix.mean(axis=1, keepdims=True)).max(axis=1) < 0.08
    background = _background_like(pix)
    return float(1.0 - (colored | dark | gray | background).mean())


def judge_side_by_side(img_a: ImageBuffer, img_b: ImageBuffer,
                       item: BenchItem, prompt: Prompt,
                       cfg: JudgeConfig = JudgeConfig(),
                       model_pair: str = "A|B",
                       sample_index: int = 0) -> RatingRecord:
    """Forced-choice comparison; ties abstain."""
    ra = judge_single(img_a, item, prompt, cfg)
    rb = judge_single(img_b, item, prompt, cfg)
    sa, sb = ra.positive_fraction(), rb.positive_fraction()
    align = "A" if sa > sb else "B" if sb > sa else ABSTAIN
    qa, qb = artifact_score(img_a, item.mask), artifact_score(img_b, item.mask)
    real = "A" if qa < qb else "B" if qb < qa else ABSTAIN
    answers = (Answer("which image matches with the caption better?",
                      "alignment_winner", align),
               Answer("which image is more realistic?",
                      "realism_winner", real))
    return RatingRecord(item.id, prompt.kind, model_pair, sample_index,
                        answers, cfg.annotator_id)


def run_protocol(benchmark: list, models: list, samples: dict,
                 cfg: JudgeConfig = JudgeConfig(), n_samples: int = 4,
                 n_votes: int = 3, rng: RngStream = RngStream(0, "protocol")):
    """Full single-image + side-by-side pass over the benchmark.

    `samples[(item_id, prompt_kind, model_id)]` must hold n_samples
    composited outputs. Emits len(benchmark) * 3 * len(models) * n_samples
    single records plus len(benchmark) * (len(models)-1) * n_votes
    side-by-side records on the Mask-Rich prompt.
    """
    missing = []
    for item in benchmark:
        for kind in PromptKind:
            for model in models:
                got = samples.get((item.id, kind, model), [])
                if len(got) < n_samples:
                    missing.append((item.id, kind.value, model))
    if missing:
        raise ProtocolError(f"missing samples for: {missing[:10]}"
                            + ("..." if len(missing) > 10 else ""))

    records = []
    for item in benchmark:
        for kind in PromptKind:
            prompt = item.prompts[kind]
            for model in models:
                for s in range(n_samples):
                    img = samples[(item.id, kind, model)][s]
                    records.append(judge_single(
                        img, item, prompt, cfg, model_id=model,
                        sample_index=s))
    anchor = models[0]
    rich = PromptKind.MASK_RICH
    for item in benchmark:
        for rival in models[1:]:
            for vote in range(n_votes):
                gen = rng.child(f"{item.id}/{rival}/{vote}").generator()
                ia = int(gen.integers(0, n_samples))
                ib = int(gen.integers(0, n_samples))
                records.append(judge_side_by_side(
                    samples[(item.id, rich, anchor)][ia],
                    samples[(item.id, rich, rival)][ib],
                    item, item.prompts[rich], cfg,
                    model_pair=f"{anchor}|{rival}", sample_index=vote))
    return records


def records_to_jsonl(records: list, path) -> None:
    import json
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps({
                "item_id": r.item_id,
                "prompt_kind": r.prompt_kind.value,
                "model_id": r.model_id,
                "sample_index": r.sample_index,
                "annotator_id": r.annotator_id,
                "answers": [{"question": a.question, "tag": a.tag,
                             "answer": a.answer} for a in r.answers],
            }, sort_keys=True) + "\n")


def records_from_jsonl(path) -> list:
    import json
    out = []
    for line in open(path):
        d = json.loads(line)
        out.append(RatingRecord(
            d["item_id"], PromptKind(d["prompt_kind"]), d["model_id"],
            d["sample_index"],
            tuple(Answer(a["question"], a["tag"], a["answer"])
                  for a in d["answers"]),
            d["annotator_id"]))
    return out
