"""Metric-vs-judge agreement analytics.

Oracle notes:
- DERIVED: pair agreement and the exact best-of-four probability are
  checked against brute-force enumerations re-implemented independently
  in this file; random baselines are checked against binomial theory.
- TRIVIAL: report validation and rendering shape asserted directly.
"""

import itertools

import numpy as np
import pytest

from inpaintlab.core import DomainError, PromptKind, RngStream
from inpaintlab.agreement import (FOURWAY_BASELINE, PAIR_BASELINE,
                                  AgreementReport, BreakdownKey, DataError,
                                  HybridModel, best_of_four_agreement,
                                  best_of_two_agreement, bootstrap_ci,
                                  breakdown, hybrid_score, judge_score,
                                  make_hybrid, render_csv, render_markdown)
from inpaintlab.evaljudge import Answer, RatingRecord
from inpaintlab.metrics import MetricKind, Region, ScoredSample


def _rating(item, model, s, positives, n=3):
    answers = tuple(Answer("q", "t", i < positives) for i in range(n))
    return RatingRecord(item, PromptKind.MASK_SIMPLE, model, s, answers, "a")


def _dataset(gen, n_items=6, models=("m0", "m1"), n_samples=3, rho=0.9):
    """Correlated metric/judge scores; rho controls how often they agree."""
    scores, ratings = [], []
    for i in range(n_items):
        item = f"item-{i:02d}"
        for model in models:
            for s in range(n_samples):
                quality = int(gen.integers(0, 4))  # judge positives of 3
                ratings.append(_rating(item, model, s, quality))
                noise = gen.uniform() > rho
                metric = quality + (gen.uniform(-2, 2) if noise
                                    else gen.uniform(-0.2, 0.2))
                scores.append(ScoredSample(item, model, s, float(metric)))
    return scores, ratings


class TestReportValidation:
    def test_pct_range(self):
        with pytest.raises(DomainError):
            AgreementReport(PromptKind.FULL, Region.FULL, MetricKind.T2I,
                            101.0, (0, 1), 10, PAIR_BASELINE)

    def test_baseline_restricted(self):
        with pytest.raises(DomainError):
            AgreementReport(PromptKind.FULL, Region.FULL, MetricKind.T2I,
                            50.0, (0, 1), 10, 33.0)


class TestJudgeScore:
    def test_is_positive_fraction(self):
        assert judge_score(_rating("i", "m", 0, 2)) == pytest.approx(2 / 3)


class TestBootstrap:
    def test_ci_brackets_mean_of_constant(self):
        lo, hi = bootstrap_ci(np.full(50, 3.25))
        assert lo == hi == 3.25

    def test_needs_two_observations(self):
        with pytest.raises(DataError):
            bootstrap_ci([1.0])

    def test_deterministic_for_stream(self):
        vals = np.random.default_rng(0).uniform(size=200)
        a = bootstrap_ci(vals, rng=RngStream(4, "ci"))
        b = bootstrap_ci(vals, rng=RngStream(4, "ci"))
        assert a == b

    def test_halfwidth_scales_with_n(self):
        gen = np.random.default_rng(1)
        small = bootstrap_ci(gen.integers(0, 2, size=100).astype(float))
        big = bootstrap_ci(gen.integers(0, 2, size=10_000).astype(float))
        assert (big[1] - big[0]) < (small[1] - small[0])


class TestBestOfTwo:
    def test_exhaustive_matches_brute_force(self):
        gen = np.random.default_rng(7)
        scores, ratings = _dataset(gen)
        report = best_of_two_agreement(scores, ratings, n_pairs=None)

        # Independent enumeration of all within-item pairs.
        m = {(s.item_id, s.model_id, s.sample_index): s.score
             for s in scores}
        j = {(r.item_id, r.model_id, r.sample_index): judge_score(r)
             for r in ratings}
        hits, total = 0, 0
        for item in sorted({k[0] for k in m}):
            keys = sorted(k for k in m if k[0] == item)
            for a, b in itertools.combinations(keys, 2):
                if j[a] == j[b]:
                    continue
                total += 1
                jb = a if j[a] > j[b] else b
                if m[a] != m[b] and (a if m[a] > m[b] else b) == jb:
                    hits += 1
        assert report.n_comparisons == total
        assert report.agreement_pct == pytest.approx(100.0 * hits / total)
        assert report.random_baseline == PAIR_BASELINE

    def test_perfectly_aligned_metric_scores_100(self):
        gen = np.random.default_rng(3)
        ratings, scores = [], []
        for i in range(5):
            for s in range(3):
                q = (i + s) % 4
                ratings.append(_rating(f"i{i}", "m", s, q))
                scores.append(ScoredSample(f"i{i}", "m", s, float(q)))
        report = best_of_two_agreement(scores, ratings, n_pairs=None)
        assert report.agreement_pct == 100.0

    def test_random_metric_near_chance(self):
        gen = np.random.default_rng(11)
        scores, ratings = [], []
        for i in range(40):
            for s in range(4):
                ratings.append(_rating(f"i{i}", "m", s,
                                       int(gen.integers(0, 4))))
                scores.append(ScoredSample(f"i{i}", "m", s,
                                           float(gen.uniform())))
        report = best_of_two_agreement(scores, ratings, n_pairs=10_000,
                                       rng=RngStream(0, "chance"))
        n = report.n_comparisons
        se = 100.0 * 0.5 / np.sqrt(n)
        assert abs(report.agreement_pct - PAIR_BASELINE) < 3 * se

    def test_missing_rating_rejected(self):
        scores = [ScoredSample("i", "m", 0, 1.0),
                  ScoredSample("i", "m", 1, 2.0)]
        with pytest.raises(DataError):
            best_of_two_agreement(scores, [], n_pairs=None)


class TestHybrids:
    def test_make_hybrid_assignment_shape(self):
        spi = {f"i{k}": {"a": 2, "b": 2} for k in range(4)}
        hybrid = make_hybrid(["a", "b"], spi, RngStream(0, "h"))
        assert set(hybrid.assignment) == set(spi)
        for model, s in hybrid.assignment.values():
            assert model in ("a", "b") and s in (0, 1)

    def test_hybrid_score_mean(self):
        hybrid = HybridModel({"i0": ("a", 0), "i1": ("b", 1)})
        scores = {("i0", "a", 0): 2.0, ("i1", "b", 1): 4.0}
        assert hybrid_score(hybrid, scores) == 3.0

    def test_bad_assignment_rejected(self):
        with pytest.raises(DomainError):
            HybridModel({"i0": ("a",)})


class TestBestOfFour:
    def _micro(self, gen, n_items=2, n_samples=2):
        scores, ratings = [], []
        for i in range(n_items):
            for model in ("a", "b"):
                for s in range(n_samples):
                    q = int(gen.integers(0, 4))
                    ratings.append(_rating(f"i{i}", model, s, q))
                    scores.append(ScoredSample(
                        f"i{i}", model, s,
                        q + float(gen.uniform(-0.4, 0.4))))
        return scores, ratings

    def test_exact_matches_enumeration(self):
        # DERIVED oracle: enumerate all K^4 hybrid 4-tuples directly on a
        # micro set (K = 16 here, so 65,536 tuples).
        gen = np.random.default_rng(5)
        scores, ratings = self._micro(gen)
        report = best_of_four_agreement(scores, ratings, n_rounds=None)

        m = {(s.item_id, s.model_id, s.sample_index): s.score
             for s in scores}
        j = {(r.item_id, r.model_id, r.sample_index): judge_score(r)
             for r in ratings}
        items = sorted({k[0] for k in m})
        per_item = [("a", 0), ("a", 1), ("b", 0), ("b", 1)]
        hybrids = list(itertools.product(per_item, repeat=len(items)))
        ms = [np.mean([m[(it,) + pick] for it, pick in zip(items, h)])
              for h in hybrids]
        js = [np.mean([j[(it,) + pick] for it, pick in zip(items, h)])
              for h in hybrids]
        hits = decided = 0
        for combo in itertools.product(range(len(hybrids)), repeat=4):
            mvals = [ms[c] for c in combo]
            jvals = [js[c] for c in combo]
            if jvals.count(max(jvals)) > 1:
                continue  # judge tie: no decision
            decided += 1
            if mvals.count(max(mvals)) > 1:
                continue  # metric tie: disagreement
            hits += int(np.argmax(mvals)) == int(np.argmax(jvals))
        assert report.n_comparisons == decided
        assert report.agreement_pct == pytest.approx(100.0 * hits / decided,
                                                     abs=1e-9)
        assert report.random_baseline == FOURWAY_BASELINE

    def test_monte_carlo_tracks_exact(self):
        gen = np.random.default_rng(9)
        scores, ratings = self._micro(gen, n_items=3)
        exact = best_of_four_agreement(scores, ratings, n_rounds=None)
        mc = best_of_four_agreement(scores, ratings, n_rounds=20_000,
                                    rng=RngStream(1, "mc"))
        assert abs(mc.agreement_pct - exact.agreement_pct) < 2.0

    def test_random_scores_near_fourway_chance(self):
        # The null must average over fresh random score tables: a single
        # finite table carries a spurious metric-judge correlation across
        # hybrids that biases its own 4-way agreement.
        gen = np.random.default_rng(42)
        hits = tot = 0
        for rep in range(100):
            scores, ratings = [], []
            for i in range(20):
                for model in ("a", "b"):
                    for s in range(4):
                        ratings.append(_rating(f"i{i}", model, s,
                                               int(gen.integers(0, 4))))
                        scores.append(ScoredSample(f"i{i}", model, s,
                                                   float(gen.uniform())))
            r = best_of_four_agreement(scores, ratings, n_rounds=1000,
                                       rng=RngStream(rep, "chance4"))
            hits += r.agreement_pct / 100.0 * r.n_comparisons
            tot += r.n_comparisons
        se = 100.0 * np.sqrt(0.25 * 0.75 / tot)
        assert abs(100.0 * hits / tot - FOURWAY_BASELINE) < 3 * se

    def test_exhaustive_guard(self):
        gen = np.random.default_rng(15)
        scores, ratings = self._micro(gen, n_items=8)
        with pytest.raises(DataError):
            best_of_four_agreement(scores, ratings, n_rounds=None)

    def test_holes_rejected(self):
        gen = np.random.default_rng(17)
        scores, ratings = self._micro(gen)
        with pytest.raises(DataError):
            best_of_four_agreement(scores[:-1], ratings[:-1], n_rounds=None)


class TestBreakdown:
    def test_counts_and_percentages(self):
        class Item:
            def __init__(self, tag):
                self.scene_tag = tag
        ratings = [_rating("i0", "m", 0, 3), _rating("i1", "m", 0, 0)]
        items = {"i0": Item("indoor"), "i1": Item("outdoor")}
        out = breakdown(ratings, items, BreakdownKey.SCENE)
        assert out["m"]["indoor"] == {"pct_positive": 100.0, "n": 3}
        assert out["m"]["outdoor"] == {"pct_positive": 0.0, "n": 3}


class TestRendering:
    def _reports(self):
        return [AgreementReport(PromptKind.MASK_SIMPLE, Region.CROP,
                                m, 60.0 + i, (58.0, 62.0), 100,
                                PAIR_BASELINE)
                for i, m in enumerate(MetricKind)]

    def test_csv_layout(self):
        text = render_csv(self._reports())
        lines = text.strip().splitlines()
        assert lines[0] == \
            "prompt,region,T2I,I2I,T2I+I2I,RPrecision,Rand"
        assert lines[1].startswith("MaskSimple,Crop,60.0,61.0,62.0,63.0")
        assert lines[1].endswith("50.0")

    def test_markdown_includes_ci(self):
        text = render_markdown(self._reports())
        assert "[58.0, 62.0]" in text
        assert text.count("|") >= 14
