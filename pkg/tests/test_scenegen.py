"""Scene/benchmark generation: prompt grammar, free-form masks, manifests.

Oracle notes:
- DERIVED: the prompt grammar's inverse (parse_pairs) acts as an
  independent oracle for make_prompts; manifest byte-stability is checked
  against a second build with a fresh stream object.
- TRIVIAL: bucket/balance facts asserted from the item list.
"""

import hashlib
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inpaintlab import render
from inpaintlab.core import (AttributeCategory, BoundingBox, ObjectCategory,
                             PromptKind, RngStream, SizeBucket,
                             mask_area_ratio, size_bucket)
from inpaintlab.scenegen import (BenchItem, ObjectSpec, SceneSpec,
                                 build_benchmark, category_schedule,
                                 load_benchmark, make_free_form_mask,
                                 make_prompts, make_scene, parse_pairs,
                                 render_scene, write_benchmark)


def _scene(seed=0):
    spec, target = make_scene(seed, AttributeCategory.COLOR,
                              ObjectCategory.COMMON, "indoor",
                              RngStream(seed, "t"))
    return spec, target


@pytest.fixture(scope="module")
def bench24():
    return build_benchmark(n_items=24, rng=RngStream(5, "bench-t"))


class TestPrompts:
    def test_three_kinds_with_pair_counts(self):
        spec, target = _scene()
        prompts = make_prompts(target, spec)
        assert set(prompts) == set(PromptKind)
        assert len(prompts[PromptKind.MASK_SIMPLE].pairs) == 1
        assert len(prompts[PromptKind.MASK_RICH].pairs) == 3
        assert len(prompts[PromptKind.FULL].pairs) == len(spec.objects)

    def test_rich_extends_simple(self):
        spec, target = _scene(3)
        prompts = make_prompts(target, spec)
        assert prompts[PromptKind.MASK_RICH].pairs[0] == \
            prompts[PromptKind.MASK_SIMPLE].pairs[0]

    def test_target_must_belong_to_scene(self):
        spec, target = _scene()
        other_spec, other = _scene(11)
        with pytest.raises(Exception):
            make_prompts(other, spec)

    @pytest.mark.parametrize("seed", range(12))
    def test_parse_pairs_inverts_grammar(self, seed):
        # DERIVED: the text-level inverse recovers exactly the structured
        # pairs the generator emitted, for every prompt kind.
        combos = category_schedule(12)
        attr, objcat, scene_tag = combos[seed]
        spec, target = make_scene(seed, attr, objcat, scene_tag,
                                  RngStream(seed, "inv"))
        for prompt in make_prompts(target, spec).values():
            recovered = parse_pairs(prompt)
            want = [(p.attribute, p.attribute_category, p.obj)
                    for p in prompt.pairs]
            got = [(p.attribute, p.attribute_category, p.obj)
                   for p in recovered]
            assert got == want, prompt.text


class TestFreeFormMask:
    @pytest.mark.parametrize("seed", range(20))
    def test_strictly_covers_target(self, seed):
        box = BoundingBox(10, 14, 30, 34)
        mask = make_free_form_mask(box, (64, 64), RngStream(seed, "ffm"))
        assert mask.data[box.y0:box.y1, box.x0:box.x1].all()

    def test_deterministic(self):
        box = BoundingBox(4, 4, 20, 20)
        a = make_free_form_mask(box, (64, 64), RngStream(1, "m"))
        b = make_free_form_mask(box, (64, 64), RngStream(1, "m"))
        assert np.array_equal(a.data, b.data)

    def test_box_outside_canvas_rejected(self):
        with pytest.raises(Exception):
            make_free_form_mask(BoundingBox(0, 0, 70, 70), (64, 64),
                                RngStream(0, "m"))


class TestBenchmarkBuild:
    def test_counts_and_prompt_triples(self, bench24):
        assert len(bench24) == 24
        assert sum(len(i.prompts) for i in bench24) == 72

    def test_ids_unique_and_ordered(self, bench24):
        assert [i.id for i in bench24] == \
            [f"item-{k:04d}" for k in range(24)]

    def test_category_schedule_balanced(self):
        sched = category_schedule(240)
        counts = {}
        for combo in sched:
            counts[combo] = counts.get(combo, 0) + 1
        # 5 attributes x 3 object categories x 4 scenes = 60 combos,
        # each hit exactly 4 times in 240 items.
        assert len(counts) == 60
        assert set(counts.values()) == {4}

    def test_bucket_matches_mask_ratio(self, bench24):
        for item in bench24:
            assert item.bucket is size_bucket(mask_area_ratio(item.mask))

    def test_target_in_scene(self, bench24):
        for item in bench24:
            assert item.target in item.scene.objects
            assert item.mask.data[item.target.bbox.y0:item.target.bbox.y1,
                                  item.target.bbox.x0:item.target.bbox.x1].all()

    def test_render_deterministic(self):
        spec, _ = _scene(2)
        a = render_scene(spec, RngStream(9, "r"))
        b = render_scene(spec, RngStream(9, "r"))
        assert np.array_equal(a.data, b.data)


class TestManifest:
    def test_roundtrip_and_byte_stability(self, bench24, tmp_path):
        m1 = write_benchmark(bench24, tmp_path / "a")
        rebuilt = build_benchmark(n_items=24, rng=RngStream(5, "bench-t"))
        m2 = write_benchmark(rebuilt, tmp_path / "b")
        assert m1.read_bytes() == m2.read_bytes()
        for rel in ("images/item-0003.png", "masks/item-0003.png"):
            assert (tmp_path / "a" / rel).read_bytes() == \
                (tmp_path / "b" / rel).read_bytes()

    def test_load_restores_items(self, bench24, tmp_path):
        manifest = write_benchmark(bench24, tmp_path)
        loaded = load_benchmark(manifest)
        assert len(loaded) == len(bench24)
        for a, b in zip(loaded, bench24):
            assert a.id == b.id
            # PNG storage quantizes to 8 bits, so compare quantized pixels.
            assert np.array_equal(a.image.quantized(), b.image.quantized())
            assert np.array_equal(a.mask.data, b.mask.data)
            assert a.target == b.target
            assert a.bucket is b.bucket
            for kind in PromptKind:
                assert a.prompts[kind].text == b.prompts[kind].text


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_make_scene_layout_property(seed):
    combos = category_schedule(60)
    attr, objcat, scene_tag = combos[seed % 60]
    spec, target = make_scene(seed % 97, attr, objcat, scene_tag,
                              RngStream(seed, "prop"))
    assert target in spec.objects
    assert target.primary_category is attr
    for a, b in itertools.combinations(spec.objects, 2):
        overlap = not (a.bbox.x1 <= b.bbox.x0 or b.bbox.x1 <= a.bbox.x0
                       or a.bbox.y1 <= b.bbox.y0 or b.bbox.y1 <= a.bbox.y0)
        assert not overlap
