"""Metric-versus-judge agreement analytics.

Answers two questions about an alignment metric: does it pick the same
best image out of two as the judge (best-of-two), and does it pick the
same best model out of four randomly assembled hybrid models
(best-of-four)? Estimates come with percentile-bootstrap confidence
intervals and per-category breakdowns.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import DomainError, PromptKind, RngStream
from .evaljudge import RatingRecord
from .metrics import MetricKind, Region, ScoredSample

PAIR_BASELINE = 50.0
FOURWAY_BASELINE = 25.0


class DataError(ValueError):
    pass


class BreakdownKey(str, Enum):
    ATTRIBUTE_CATEGORY = "attribute_category"
    OBJECT_CATEGORY = "object_category"
    SCENE = "scene"
    SIZE_BUCKET = "size_bucket"
    PROMPT_KIND = "prompt_kind"


@dataclass(frozen=True)
class AgreementReport:
    prompt_kind: PromptKind
    region: Region
    metric: MetricKind
    agreement_pct: float
    ci95: tuple
    n_comparisons: int
    random_baseline: float

    def __post_init__(self):
        if not 0.0 <= self.agreement_pct <= 100.0:
            raise DomainError("agreement_pct must lie in [0, 100]")
        if self.random_baseline not in (PAIR_BASELINE, FOURWAY_BASELINE):
            raise DomainError("baseline is 50 for pairs, 25 for 4-way")


@dataclass(frozen=True)
class HybridModel:
    """One sample per item, each drawn from some source model."""
    assignment: dict  # item_id -> (model_id, sample_index)

    def __post_init__(self):
        for item_id, picked in self.assignment.items():
            if len(picked) != 2:
                raise DomainError(
                    f"assignment for {item_id!r} must be (model, sample)")


def judge_score(record: RatingRecord) -> float:
    """Scalar judge score for one sample: fraction of positive answers."""
    return record.positive_fraction()


def _score_table(scores: list, ratings: list):
    """Join metric scores with judge scores, keyed per item."""
    metric = {(s.item_id, s.model_id, s.sample_index): s.score
              for s in scores}
    judge = {(r.item_id, r.model_id, r.sample_index): judge_score(r)
             for r in ratings}
    keys = sorted(metric.keys() & judge.keys())
    if len(keys) < len(metric):
        missing = sorted(metric.keys() - judge.keys())[:5]
        raise DataError(f"scored samples without ratings: {missing}")
    by_item = {}
    for key in keys:
        by_item.setdefault(key[0], []).append(
            (metric[key], judge[key]))
    return by_item


def bootstrap_ci(values, n_boot: int = 2000, alpha: float = 0.05,
                 rng: RngStream = RngStream(0, "bootstrap")) -> tuple:
    """Percentile bootstrap interval for the mean of `values`."""
    arr = np.asarray(values, dtype=float)
    if arr.size < 2:
        raise DataError("bootstrap needs at least 2 observations")
    gen = rng.generator()
    means = np.empty(n_boot)
    chunk = max(1, int(2e6 // max(1, arr.size)))
    for start in range(0, n_boot, chunk):
        n = min(chunk, n_boot - start)
        idx = gen.integers(0, arr.size, size=(n, arr.size))
        means[start:start + n] = arr[idx].mean(axis=1)
    lo, hi = np.percentile(means, [100 * alpha / 2, 100 * (1 - alpha / 2)])
    return float(lo), float(hi)


def _pair_outcomes(by_item: dict, n_pairs, rng: RngStream) -> np.ndarray:
    """Per-pair agreement indicators; judge ties are excluded.

    n_pairs=None enumerates every valid pair once (exhaustive oracle
    mode); otherwise items are drawn with replacement and the two
    samples within an item without replacement.
    """
    for item_id, rows in by_item.items():
        if len(rows) < 2:
            raise DataError(
                f"item {item_id!r} has fewer than 2 scored samples")
    items = sorted(by_item)
    outcomes = []

    def outcome(a, b):
        (ma, ja), (mb, jb) = a, b
        if ja == jb:
            return None  # judge tie: excluded, as in the protocol
        judge_best = 0 if ja > jb else 1
        if ma == mb:
            return 0.0  # metric tie counts as disagreement
        metric_best = 0 if ma > mb else 1
        return 1.0 if metric_best == judge_best else 0.0

    if n_pairs is None:
        for item_id in items:
            for a, b in itertools.combinations(by_item[item_id], 2):
                o = outcome(a, b)
                if o is not None:
                    outcomes.append(o)
    else:
        gen = rng.generator()
        for _ in range(n_pairs):
            rows = by_item[items[int(gen.integers(len(items)))]]
            i, j = gen.choice(len(rows), size=2, replace=False)
            o = outcome(rows[int(i)], rows[int(j)])
            if o is not None:
                outcomes.append(o)
    if not outcomes:
        raise DataError("all sampled pairs were judge ties")
    return np.asarray(outcomes)


def best_of_two_agreement(scores: list, ratings: list,
                          n_pairs=10_000,
                          rng: RngStream = RngStream(0, "pairs"),
                          prompt_kind: PromptKind = PromptKind.MASK_SIMPLE,
                          region: Region = Region.CROP,
                          metric: MetricKind = MetricKind.T2I
                          ) -> AgreementReport:
    by_item = _score_table(scores, ratings)
    outcomes = _pair_outcomes(by_item, n_pairs, rng)
    ci = bootstrap_ci(outcomes, rng=rng.child("ci"))
    return AgreementReport(
        prompt_kind=prompt_kind, region=region, metric=metric,
        agreement_pct=float(100.0 * outcomes.mean()),
        ci95=(100.0 * ci[0], 100.0 * ci[1]),
        n_comparisons=int(outcomes.size),
        random_baseline=PAIR_BASELINE)


def make_hybrid(models: list, samples_per_item: dict,
                rng: RngStream) -> HybridModel:
    """Uniformly pick one (model, sample) per item.

    `samples_per_item[item_id][model_id]` is the number of available
    samples for that pair.
    """
    gen = rng.generator()
    assignment = {}
    for item_id in sorted(samples_per_item):
        model = models[int(gen.integers(len(models)))]
        n = samples_per_item[item_id][model]
        if n < 1:
            raise DataError(f"no samples for {model!r} on {item_id!r}")
        assignment[item_id] = (model, int(gen.integers(n)))
    return HybridModel(assignment)


def hybrid_score(hybrid: HybridModel, scores: dict) -> float:
    """Mean score of the hybrid's selected samples."""
    vals = [scores[(item_id,) + picked]
            for item_id, picked in hybrid.assignment.items()]
    return float(np.mean(vals))


def _dense_tables(scores: list, ratings: list):
    """(items, models, n_samples, M, J) with M/J shaped
    [item, model, sample]."""
    metric = {(s.item_id, s.model_id, s.sample_index): s.score
              for s in scores}
    judge = {(r.item_id, r.model_id, r.sample_index): judge_score(r)
             for r in ratings}
    items = sorted({k[0] for k in metric})
    models = sorted({k[1] for k in metric})
    n_samples = max(k[2] for k in metric) + 1
    M = np.full((len(items), len(models), n_samples), np.nan)
    J = np.full_like(M, np.nan)
    for (item, model, s), v in metric.items():
        M[items.index(item), models.index(model), s] = v
        key = (item, model, s)
        if key not in judge:
            raise DataError(f"no rating for {key}")
        J[items.index(item), models.index(model), s] = judge[key]
    if np.isnan(M).any():
        raise DataError("score table has holes: every (item, model, "
                        "sample) needs a score")
    return items, models, n_samples, M, J


def best_of_four_agreement(scores: list, ratings: list,
                           n_rounds=100_000,
                           rng: RngStream = RngStream(0, "hybrids"),
                           prompt_kind: PromptKind = PromptKind.MASK_SIMPLE,
                           region: Region = Region.CROP,
                           metric: MetricKind = MetricKind.T2I
                           ) -> AgreementReport:
    """Per round: build 4 hybrid models, let metric and judge each pick
    the best by averaged score; agreement when they coincide. As in the
    pairwise comparison, judge ties are no-decisions and are excluded,
    while metric ties count as disagreement. n_rounds=None enumerates
    the full joint assignment space exactly.
    """
    items, models, n_samples, M, J = _dense_tables(scores, ratings)
    n_models = len(models)
    if n_models < 2:
        raise DataError("need at least 2 source models")

    if n_rounds is None:
        # Exact enumeration over all K^4 equally likely 4-tuples of
        # hybrids. A tuple is judge-decided iff one member strictly
        # exceeds the other three in judge score; it agrees iff one
        # member strictly exceeds the other three in BOTH scores. Both
        # counts reduce to sums over single hybrids h of (#strictly
        # below h)^3, times the 4 winner positions.
        per_item = [(m, s) for m in range(n_models) for s in range(n_samples)]
        K = len(per_item) ** len(items)
        if K > 20_000:
            raise DataError(f"exhaustive mode infeasible: {K} hybrids")
        ms_all = np.empty(K)
        js_all = np.empty(K)
        for h, combo in enumerate(itertools.product(per_item,
                                                    repeat=len(items))):
            ms_all[h] = np.mean([M[i, m, s]
                                 for i, (m, s) in enumerate(combo)])
            js_all[h] = np.mean([J[i, m, s]
                                 for i, (m, s) in enumerate(combo)])
        below_j = (js_all[None, :] < js_all[:, None])
        below_both = below_j & (ms_all[None, :] < ms_all[:, None])
        agree = 4 * int(np.sum(below_both.sum(axis=1).astype(object) ** 3))
        decided = 4 * int(np.sum(below_j.sum(axis=1).astype(object) ** 3))
        if decided == 0:
            raise DataError("all hybrid 4-tuples were judge ties")
        pct = float(100.0 * agree / decided)
        n_comp = decided
        ci = (pct, pct)
    else:
        gen = rng.generator()
        chunks = []
        done = 0
        while done < n_rounds:
            n = min(2000, n_rounds - done)
            m_idx = gen.integers(0, n_models, size=(n, 4, len(items)))
            s_idx = gen.integers(0, n_samples, size=(n, 4, len(items)))
            i_idx = np.arange(len(items))[None, None, :]
            ms = M[i_idx, m_idx, s_idx].mean(axis=2)  # [n, 4]
            js = J[i_idx, m_idx, s_idx].mean(axis=2)
            m_best = ms.argmax(axis=1)
            j_best = js.argmax(axis=1)
            m_tied = (ms == ms.max(axis=1, keepdims=True)).sum(axis=1) > 1
            j_tied = (js == js.max(axis=1, keepdims=True)).sum(axis=1) > 1
            decided = ~j_tied
            chunks.append(((m_best == j_best) & ~m_tied)[decided]
                          .astype(float))
            done += n
        outcomes = np.concatenate(chunks)
        if outcomes.size == 0:
            raise DataError("all sampled 4-tuples were judge ties")
        pct = float(100.0 * outcomes.mean())
        n_comp = int(outcomes.size)
        lo, hi = bootstrap_ci(outcomes, rng=rng.child("ci"))
        ci = (100.0 * lo, 100.0 * hi)
    return AgreementReport(
        prompt_kind=prompt_kind, region=region, metric=metric,
        agreement_pct=pct, ci95=ci, n_comparisons=n_comp,
        random_baseline=FOURWAY_BASELINE)


def breakdown(ratings: list, items_by_id: dict, by: BreakdownKey) -> dict:
    """% positive answers per model per category, with counts.

    `items_by_id` maps item_id to its BenchItem (for category labels).
    """
    def label(record):
        if by is BreakdownKey.PROMPT_KIND:
            return record.prompt_kind.value
        item = items_by_id[record.item_id]
        if by is BreakdownKey.ATTRIBUTE_CATEGORY:
            return item.attribute_category.value
        if by is BreakdownKey.OBJECT_CATEGORY:
            return item.object_category.value
        if by is BreakdownKey.SCENE:
            return item.scene_tag
        if by is BreakdownKey.SIZE_BUCKET:
            return item.bucket.value
        raise DomainError(f"unknown breakdown key {by}")

    acc = {}
    for r in ratings:
        cell = acc.setdefault(r.model_id, {}).setdefault(
            label(r), [0, 0])
        for a in r.answers:
            cell[0] += bool(a.answer)
            cell[1] += 1
    return {model: {cat: {"pct_positive": 100.0 * pos / n, "n": n}
                    for cat, (pos, n) in cats.items()}
            for model, cats in acc.items()}


# --- report rendering ------------------------------------------------------

_COLUMNS = [MetricKind.T2I, MetricKind.I2I, MetricKind.T2I_PLUS_I2I,
            MetricKind.R_PRECISION]


def _grid(reports: list) -> dict:
    grid = {}
    for r in reports:
        grid[(r.prompt_kind, r.region, r.metric)] = r
    return grid


def render_csv(reports: list) -> str:
    """Rows: prompt x region; columns: the four metrics plus Rand."""
    grid = _grid(reports)
    rows = sorted({(r.prompt_kind, r.region) for r in reports},
                  key=lambda k: (k[0].value, k[1].value))
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["prompt", "region"]
                    + [m.value for m in _COLUMNS] + ["Rand"])
    for kind, region in rows:
        cells = []
        baseline = ""
        for m in _COLUMNS:
            rep = grid.get((kind, region, m))
            cells.append(f"{rep.agreement_pct:.1f}" if rep else "")
            if rep:
                baseline = f"{rep.random_baseline:.1f}"
        writer.writerow([kind.value, region.value] + cells + [baseline])
    return out.getvalue()


def render_markdown(reports: list) -> str:
    grid = _grid(reports)
    rows = sorted({(r.prompt_kind, r.region) for r in reports},
                  key=lambda k: (k[0].value, k[1].value))
    lines = ["| Prompt | Image | "
             + " | ".join(m.value for m in _COLUMNS) + " | Rand |",
             "|" + "---|" * (len(_COLUMNS) + 3)]
    for kind, region in rows:
        cells, baseline = [], ""
        for m in _COLUMNS:
            rep = grid.get((kind, region, m))
            if rep:
                lo, hi = rep.ci95
                cells.append(f"{rep.agreement_pct:.1f} "
                             f"[{lo:.1f}, {hi:.1f}]")
                baseline = f"{rep.random_baseline:.1f}"
            else:
                cells.append("—")
        lines.append(f"| {kind.value} | {region.value} | "
                     + " | ".join(cells) + f" | {baseline} |")
    return "\n".join(lines) + "\n"
