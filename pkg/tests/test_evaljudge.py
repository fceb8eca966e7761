"""Simulated judge: question schema, pixel analysis, full protocol.

Oracle notes:
- DERIVED: calibration uses ground-truth reference renders (every answer
  about the rendered target is true by construction); negative controls
  are built by rendering perturbed scenes where the judged answer must
  flip.
- TRIVIAL: record-count arithmetic asserted from the protocol definition.
"""

import numpy as np
import pytest
from dataclasses import replace as dc_replace

from inpaintlab import render
from inpaintlab.core import (AttributeCategory, DomainError, ImageBuffer,
                             MaskBuffer, ObjectCategory, Prompt, PromptKind,
                             PromptPair, RngStream)
from inpaintlab.evaljudge import (ABSTAIN, FULL_QUESTION, Answer,
                                  JudgeConfig, ProtocolError, RatingRecord,
                                  artifact_score, judge_side_by_side,
                                  judge_single, questions_for,
                                  records_from_jsonl, records_to_jsonl,
                                  run_protocol)
from inpaintlab.scenegen import build_benchmark, make_prompts, render_scene


@pytest.fixture(scope="module")
def bench():
    return build_benchmark(n_items=12, rng=RngStream(21, "judge-t"))


def _perturbed(item, **changes):
    """Re-render the item's scene with the target object altered."""
    new_target = dc_replace(item.target, **changes)
    objects = tuple(new_target if o is item.target else o
                    for o in item.scene.objects)
    spec = dc_replace(item.scene, objects=objects)
    return render_scene(spec, RngStream(21, "judge-t").child("re"))


class TestQuestionSchema:
    def test_counts_per_kind(self, bench):
        item = bench[0]
        assert len(questions_for(item.prompts[PromptKind.FULL])) == 1
        assert len(questions_for(item.prompts[PromptKind.MASK_SIMPLE])) == 3
        assert len(questions_for(item.prompts[PromptKind.MASK_RICH])) == 9

    def test_tags(self, bench):
        qs = questions_for(bench[0].prompts[PromptKind.MASK_RICH])
        tags = [t for _, t in qs]
        assert tags == ["object_present", "attribute_present",
                        "binding_correct"] * 3

    def test_full_question_text(self, bench):
        assert questions_for(bench[0].prompts[PromptKind.FULL]) == \
            [(FULL_QUESTION, "overall_match")]


class TestRatingRecord:
    def test_answer_count_enforced(self):
        a = Answer("q", "t", True)
        with pytest.raises(DomainError):
            RatingRecord("i", PromptKind.MASK_RICH, "m", 0, (a,), "ann")
        with pytest.raises(DomainError):
            RatingRecord("i", PromptKind.FULL, "a|b", 0, (a,), "ann")

    def test_positive_fraction(self):
        answers = tuple(Answer("q", "t", v) for v in (True, True, False))
        r = RatingRecord("i", PromptKind.MASK_SIMPLE, "m", 0, answers, "a")
        assert r.positive_fraction() == pytest.approx(2 / 3)
        assert not r.all_correct()


class TestCalibration:
    def test_reference_renders_all_positive(self, bench):
        # DERIVED: on ground-truth images every single-image answer is
        # true by construction.
        for item in bench:
            for kind in PromptKind:
                rec = judge_single(item.image, item, item.prompts[kind])
                assert rec.all_correct(), (item.id, kind)

    def test_wrong_primary_attribute_fails_binding(self, bench):
        # DERIVED negative control: flip the judged attribute value in a
        # re-render; object stays present but the binding answer must flip.
        alternatives = {
            AttributeCategory.COLOR: ("color", list(render.COLORS)),
            AttributeCategory.MATERIAL: ("material", list(render.MATERIALS)),
            AttributeCategory.SHAPE: ("shape", list(render.SHAPES)),
            AttributeCategory.SIZE: ("size", list(render.SIZES)),
            AttributeCategory.COUNT: ("count", list(render.COUNTS)),
        }
        flips = 0
        for item in bench:
            field, values = alternatives[item.target.primary_category]
            current = getattr(item.target, field)
            other = next(v for v in values if v != current)
            img = _perturbed(item, **{field: other})
            rec = judge_single(img, item, item.prompts[PromptKind.MASK_SIMPLE])
            by_tag = {a.tag: a.answer for a in rec.answers}
            assert by_tag["object_present"], item.id
            assert not by_tag["binding_correct"], \
                (item.id, field, current, other)
            flips += 1
        assert flips == len(bench)

    def test_missing_object_fails_presence(self, bench):
        item = bench[0]
        # Paint the edit region with background-like gray: no markers left.
        arr = np.array(item.image.data)
        arr[item.mask.data.astype(bool)] = 0.72
        rec = judge_single(ImageBuffer(arr), item,
                           item.prompts[PromptKind.MASK_SIMPLE])
        by_tag = {a.tag: a.answer for a in rec.answers}
        assert not by_tag["object_present"]

    def test_wrong_object_identity_detected(self, bench):
        item = bench[0]
        other = next(n for n in render.COMMON_OBJECTS
                     if n != item.target.object)
        img = _perturbed(item, object=other,
                         object_category=ObjectCategory.COMMON)
        rec = judge_single(img, item, item.prompts[PromptKind.MASK_SIMPLE])
        by_tag = {a.tag: a.answer for a in rec.answers}
        assert not by_tag["object_present"]

    def test_unknown_vocabulary_rejected(self, bench):
        item = bench[0]
        bogus = Prompt(PromptKind.MASK_SIMPLE, "a red unicorn",
                       (PromptPair("red", AttributeCategory.COLOR,
                                   "unicorn", ObjectCategory.COMMON),))
        with pytest.raises(DomainError):
            judge_single(item.image, item, bogus)


class TestArtifactScore:
    def test_reference_is_artifact_free(self, bench):
        for item in bench[:6]:
            assert artifact_score(item.image, item.mask) == 0.0

    def test_noise_scores_high(self, bench):
        item = bench[0]
        gen = np.random.default_rng(0)
        arr = np.array(item.image.data)
        sel = item.mask.data.astype(bool)
        arr[sel] = gen.uniform(0.3, 1.0, size=(int(sel.sum()), 3))
        assert artifact_score(ImageBuffer(arr), item.mask) > 0.5

    def test_empty_mask_is_zero(self, bench):
        empty = MaskBuffer(np.zeros((64, 64), dtype=np.uint8))
        assert artifact_score(bench[0].image, empty) == 0.0


class TestSideBySide:
    def test_reference_beats_corrupted(self, bench):
        item = bench[0]
        gen = np.random.default_rng(1)
        arr = np.array(item.image.data)
        sel = item.mask.data.astype(bool)
        arr[sel] = gen.uniform(0.3, 1.0, size=(int(sel.sum()), 3))
        rec = judge_side_by_side(item.image, ImageBuffer(arr), item,
                                 item.prompts[PromptKind.MASK_RICH],
                                 model_pair="ref|noise")
        by_tag = {a.tag: a.answer for a in rec.answers}
        assert by_tag["alignment_winner"] == "A"
        assert by_tag["realism_winner"] == "A"

    def test_identical_images_abstain(self, bench):
        item = bench[1]
        rec = judge_side_by_side(item.image, item.image, item,
                                 item.prompts[PromptKind.MASK_RICH])
        assert all(a.answer == ABSTAIN for a in rec.answers)


class TestProtocol:
    def _samples(self, bench, models, n_samples):
        return {(item.id, kind, m): [item.image] * n_samples
                for item in bench for kind in PromptKind for m in models}

    def test_record_counts(self, bench):
        models = ["ref", "m1", "m2"]
        n_samples, n_votes = 2, 3
        records = run_protocol(bench, models,
                               self._samples(bench, models, n_samples),
                               n_samples=n_samples, n_votes=n_votes)
        singles = [r for r in records if "|" not in r.model_id]
        pairs = [r for r in records if "|" in r.model_id]
        assert len(singles) == len(bench) * 3 * len(models) * n_samples
        assert len(pairs) == len(bench) * (len(models) - 1) * n_votes
        assert {r.model_id for r in pairs} == {"ref|m1", "ref|m2"}

    def test_missing_samples_rejected(self, bench):
        models = ["ref", "m1"]
        samples = self._samples(bench, models, 2)
        del samples[(bench[0].id, PromptKind.FULL, "m1")]
        with pytest.raises(ProtocolError):
            run_protocol(bench, models, samples, n_samples=2)

    def test_jsonl_roundtrip(self, bench, tmp_path):
        models = ["ref", "m1"]
        records = run_protocol(bench[:3], models,
                               self._samples(bench[:3], models, 2),
                               n_samples=2, n_votes=1)
        path = tmp_path / "records.jsonl"
        records_to_jsonl(records, path)
        back = records_from_jsonl(path)
        assert back == records
