"""Evaluation statistics for annotated pairs and generated text.

Covers the label distribution over {1, -1, 0}, one-tailed one-sample t-tests
of human-answer ranks against a rank baseline, and two text metrics: novelty
(share of repeated character n-grams unseen in the source corpus) and genlen
(mean generated length).
"""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from scipy.special import betainc

from .backends import BackendError
from .records import CandidateResponse, Origin, PairRecord

logger = logging.getLogger(__name__)

RANK_BASELINE = 1.5


class DegenerateSampleError(Exception):
    """The rank sample has zero variance; the t statistic is undefined."""


@dataclass
class LabelDistribution:
    counts: dict[int, int]
    proportions: dict[int, float]
    total: int


@dataclass
class TTestResult:
    t_statistic: float
    p_value: float
    df: int
    mu0: float


@dataclass
class RankSample:
    annotator_id: str
    ranks: list[int] = field(default_factory=list)


def label_distribution(labels: list[int]) -> LabelDistribution:
    """Counts and proportions over the labels {1, -1, 0}."""
    if not labels:
        raise ValueError("no labels to summarize")
    bad = [x for x in labels if x not in (1, -1, 0)]
    if bad:
        raise ValueError(f"labels outside {{1, -1, 0}}: {bad[:5]}")
    counts = {1: 0, -1: 0, 0: 0}
    for x in labels:
        counts[x] += 1
    total = len(labels)
    proportions = {k: v / total for k, v in counts.items()}
    return LabelDistribution(counts=counts, proportions=proportions, total=total)


def t_upper_tail(t: float, df: int) -> float:
    """P(T > t) for Student's t via the regularized incomplete beta function."""
    if df < 1:
        raise ValueError("df must be >= 1")
    x = df / (df + t * t)
    half_tail = 0.5 * float(betainc(df / 2.0, 0.5, x))
    return half_tail if t >= 0 else 1.0 - half_tail


def t_test_greater(ranks: list[float], mu0: float) -> TTestResult:
    """One-tailed one-sample test of mean(ranks) > mu0.

    t = (mean - mu0) / (s / sqrt(n)) with s the (n-1) sample standard
    deviation; the p-value is the upper-tail Student-t probability.
    """
    n = len(ranks)
    if n < 2:
        raise ValueError("need at least 2 observations")
    mean = sum(ranks) / n
    var = sum((x - mean) ** 2 for x in ranks) / (n - 1)
    if var == 0:
        raise DegenerateSampleError("sample standard deviation is zero")
    t = (mean - mu0) / math.sqrt(var / n)
    return TTestResult(t_statistic=t, p_value=t_upper_tail(t, n - 1), df=n - 1, mu0=mu0)


@dataclass
class RankStudy:
    per_annotator: dict[str, RankSample]
    per_annotator_tests: dict[str, TTestResult | None]
    conclusions: dict[str, str]
    degenerate: dict[str, str]
    combined: TTestResult | None
    combined_ranks: list[int]
    histogram_by_sample: dict[int, int]
    histogram_by_pair: dict[int, int]
    judge_failures: int


def human_rank_study(
    annotations: list,
    pairs: dict[str, PairRecord],
    judge,
    mu0: float = RANK_BASELINE,
) -> RankStudy:
    """Rank each human answer against its pair's AI candidates and test vs mu0.

    Per-annotator tests run alongside a pooled "combined" test. The rank
    histogram is emitted in both groupings: one entry per (annotator, pair)
    sample, and one per pair (mean rank across annotators, rounded half up).
    """
    from .tournament import rank_of_human

    samples: dict[str, RankSample] = {}
    pair_ranks: dict[str, list[int]] = {}
    failures = 0
    for ann in annotations:
        if not getattr(ann, "edited_response", None):
            continue
        pair = pairs.get(ann.hs_id)
        if pair is None or not pair.candidates:
            continue
        human = CandidateResponse(text=ann.edited_response, origin=Origin.HUMAN)
        try:
            rank = rank_of_human(human, pair.candidates, pair.hs_text, judge)
        except BackendError as exc:
            failures += 1
            logger.warning("rank judging failed for %s: %s", ann.hs_id, exc)
            continue
        samples.setdefault(ann.annotator_id, RankSample(ann.annotator_id)).ranks.append(rank)
        pair_ranks.setdefault(ann.hs_id, []).append(rank)

    tests: dict[str, TTestResult | None] = {}
    conclusions: dict[str, str] = {}
    degenerate: dict[str, str] = {}
    combined_ranks: list[int] = []
    for annotator, sample in sorted(samples.items()):
        combined_ranks.extend(sample.ranks)
        mean_rank = sum(sample.ranks) / len(sample.ranks)
        try:
            tests[annotator] = t_test_greater(sample.ranks, mu0)
            conclusions[annotator] = (
                "greater" if tests[annotator].p_value < 0.05 else "not greater"
            )
        except (DegenerateSampleError, ValueError) as exc:
            tests[annotator] = None
            degenerate[annotator] = str(exc)
            # A constant sample still supports a one-sided qualitative call.
            conclusions[annotator] = "not greater" if mean_rank <= mu0 else "degenerate"

    combined: TTestResult | None = None
    if combined_ranks:
        try:
            combined = t_test_greater(combined_ranks, mu0)
        except (DegenerateSampleError, ValueError) as exc:
            degenerate["combined"] = str(exc)

    hist_sample = Counter(combined_ranks)
    hist_pair = Counter(
        math.floor(sum(rs) / len(rs) + 0.5) for rs in pair_ranks.values()
    )
    return RankStudy(
        per_annotator=samples,
        per_annotator_tests=tests,
        conclusions=conclusions,
        degenerate=degenerate,
        combined=combined,
        combined_ranks=combined_ranks,
        histogram_by_sample=dict(sorted(hist_sample.items())),
        histogram_by_pair=dict(sorted(hist_pair.items())),
        judge_failures=failures,
    )


def ngrams(text: str, n: int, tokenize=None) -> list[tuple]:
    """Sliding n-grams; characters by default (Mandarin text is unsegmented)."""
    tokens = list(text) if tokenize is None else list(tokenize(text))
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def novelty(generated: list[str], training: list[str], n: int, tokenize=None) -> float | None:
    """Share of repeated generated n-grams that never occur in the training set.

    An n-gram counts as non-singleton when it occurs at least twice across the
    generated texts; None when no n-gram repeats.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    counts: Counter = Counter()
    for text in generated:
        counts.update(ngrams(text, n, tokenize))
    non_singleton = {g for g, c in counts.items() if c >= 2}
    if not non_singleton:
        return None
    training_grams: set = set()
    for text in training:
        training_grams.update(ngrams(text, n, tokenize))
    unseen = sum(1 for g in non_singleton if g not in training_grams)
    return unseen / len(non_singleton)


def genlen(texts: list[str]) -> float:
    """Mean character length of the generated texts."""
    if not texts:
        raise ValueError("no texts")
    return sum(len(t) for t in texts) / len(texts)


def _fmt_p(p: float) -> str:
    return f"{p:.3g}"


def write_report(
    path: str | Path,
    distribution: LabelDistribution | None = None,
    study: RankStudy | None = None,
    metrics: dict | None = None,
) -> None:
    """Emit the analysis as sibling markdown and JSON files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    payload: dict = {}
    lines = ["# Analysis report", ""]
    if distribution is not None:
        payload["label_distribution"] = {
            "counts": {str(k): v for k, v in distribution.counts.items()},
            "proportions": {str(k): v for k, v in distribution.proportions.items()},
            "total": distribution.total,
        }
        lines += [
            "## Label distribution",
            "",
            "| label | count | proportion |",
            "| --- | --- | --- |",
        ]
        for key in (1, -1, 0):
            lines.append(
                f"| {key} | {distribution.counts[key]} | "
                f"{distribution.proportions[key]:.3f} |"
            )
        lines.append("")
    if study is not None:
        payload["rank_study"] = {
            "per_annotator": {
                a: {
                    "n": len(s.ranks),
                    "mean_rank": sum(s.ranks) / len(s.ranks) if s.ranks else None,
                    "t": study.per_annotator_tests[a].t_statistic
                    if study.per_annotator_tests.get(a)
                    else None,
                    "p": study.per_annotator_tests[a].p_value
                    if study.per_annotator_tests.get(a)
                    else None,
                    "conclusion": study.conclusions.get(a),
                    "degenerate": study.degenerate.get(a),
                }
                for a, s in study.per_annotator.items()
            },
            "combined": None
            if study.combined is None
            else {
                "n": len(study.combined_ranks),
                "t": study.combined.t_statistic,
                "p": study.combined.p_value,
                "df": study.combined.df,
                "mu0": study.combined.mu0,
            },
            "histogram_by_sample": {str(k): v for k, v in study.histogram_by_sample.items()},
            "histogram_by_pair": {str(k): v for k, v in study.histogram_by_pair.items()},
            "judge_failures": study.judge_failures,
        }
        lines += [
            "## Human-answer rank study (baseline 1.5)",
            "",
            "| annotator | n | mean rank | t | p |",
            "| --- | --- | --- | --- | --- |",
        ]
        for a, s in study.per_annotator.items():
            test = study.per_annotator_tests.get(a)
            if test is None:
                lines.append(f"| {a} | {len(s.ranks)} | - | degenerate | - |")
            else:
                mean_rank = sum(s.ranks) / len(s.ranks)
                lines.append(
                    f"| {a} | {len(s.ranks)} | {mean_rank:.2f} | "
                    f"{test.t_statistic:.2f} | {_fmt_p(test.p_value)} |"
                )
        if study.combined is not None:
            lines.append(
                f"| combined | {len(study.combined_ranks)} | "
                f"{sum(study.combined_ranks) / len(study.combined_ranks):.2f} | "
                f"{study.combined.t_statistic:.2f} | {_fmt_p(study.combined.p_value)} |"
            )
        lines.append("")
    if metrics is not None:
        payload["text_metrics"] = metrics
        lines += ["## Text metrics", ""]
        for key, value in metrics.items():
            lines.append(f"- {key}: {value}")
        lines.append("")

    path.write_text("\n".join(lines), encoding="utf-8")
    path.with_suffix(".json").write_text(
        json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True),
        encoding="utf-8",
    )


def write_histogram_csv(study: RankStudy, path: str | Path) -> None:
    """Rank-frequency bins for external plotting, both groupings side by side."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    all_ranks = sorted(set(study.histogram_by_sample) | set(study.histogram_by_pair))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "count_by_sample", "count_by_pair"])
        for rank in all_ranks:
            writer.writerow(
                [
                    rank,
                    study.histogram_by_sample.get(rank, 0),
                    study.histogram_by_pair.get(rank, 0),
                ]
            )
