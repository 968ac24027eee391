"""Judge-scored corpus filtering and threshold grid search.

Each record gets a 0-100 hate score from a judge backend. The search then
scans every (min_length, min_score) pair on an integer grid and keeps the
subset maximizing

    ln(average hate score) * ln(average text length) * count

subject to the subset size falling inside a configured window. Cells whose
subset is outside the window, or whose averages are <= 1 (log non-positive),
carry an undefined objective and never win.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backends import BackendError
from .records import HateSpeechRecord

logger = logging.getLogger(__name__)


class NoFeasibleCellError(Exception):
    """No grid cell produced a subset inside the configured size window."""


@dataclass
class ThresholdCell:
    min_length: int
    min_score: int
    subset_size: int
    avg_hate_score: float
    avg_text_length: float
    objective: float | None


@dataclass
class OptimizerConfig:
    size_min: int = 500
    size_max: int = 3000
    length_grid: list[int] = field(default_factory=lambda: list(range(1, 101)))
    score_grid: list[int] = field(default_factory=lambda: list(range(0, 101)))
    seed_examples: list[tuple[str, int]] = field(default_factory=list)
    max_in_flight: int = 4

    def __post_init__(self) -> None:
        if not 0 < self.size_min < self.size_max:
            raise ValueError("need 0 < size_min < size_max")
        if not self.length_grid or not self.score_grid:
            raise ValueError("grids must be non-empty")
        self.length_grid = sorted(set(int(v) for v in self.length_grid))
        self.score_grid = sorted(set(int(v) for v in self.score_grid))


def objective(avg_score: float, avg_len: float, n: int) -> float | None:
    """ln(avg_score) * ln(avg_len) * n; None when outside the log domain.

    Natural log: the base only rescales every cell by a positive constant,
    so the argmax is unchanged (tested as a property).
    """
    if n <= 0 or avg_score <= 1 or avg_len <= 1:
        return None
    return math.log(avg_score) * math.log(avg_len) * n


def score_hate(record: HateSpeechRecord, judge, seed_examples=None) -> int:
    """Score one record via the judge; stores the clamped result on the record."""
    if not record.text:
        raise ValueError("record text must be non-empty")
    raw = judge.rate_hate(record.text, seed_examples)
    score = max(0, min(100, int(raw)))
    record.hate_score = score
    return score


@dataclass
class ScoreReport:
    scored: int = 0
    unscored: list[tuple[str, str]] = field(default_factory=list)


def score_records(
    records: list[HateSpeechRecord],
    judge,
    seed_examples=None,
    max_in_flight: int = 4,
) -> ScoreReport:
    """Score a batch concurrently (bounded in-flight); output order-stable.

    Failures after backend retries leave the record unscored and are tallied.
    """
    report = ScoreReport()

    def one(record: HateSpeechRecord):
        return score_hate(record, judge, seed_examples)

    with ThreadPoolExecutor(max_workers=max(1, max_in_flight)) as pool:
        futures = [(rec, pool.submit(one, rec)) for rec in records]
        for rec, fut in futures:
            try:
                fut.result()
                report.scored += 1
            except (BackendError, ValueError) as exc:
                rec.hate_score = None
                report.unscored.append((rec.id, str(exc)))
                logger.warning("record %s left unscored: %s", rec.id, exc)
    return report


def _suffix_sums(records: list[HateSpeechRecord], cfg: OptimizerConfig):
    """Per-cell (count, length sum, score sum) via 2D suffix accumulation.

    A record contributes to cell (i, j) iff char_length >= length_grid[i] and
    hate_score >= score_grid[j]; scatter each record at the largest threshold
    indices it satisfies, then suffix-sum both axes.
    """
    lg = np.asarray(cfg.length_grid)
    sg = np.asarray(cfg.score_grid)
    lengths = np.array([r.char_length for r in records], dtype=np.int64)
    scores = np.array([r.hate_score for r in records], dtype=np.int64)

    li = np.searchsorted(lg, lengths, side="right") - 1
    si = np.searchsorted(sg, scores, side="right") - 1
    ok = (li >= 0) & (si >= 0)
    li, si = li[ok], si[ok]
    lengths, scores = lengths[ok], scores[ok]

    shape = (len(lg), len(sg))
    count = np.zeros(shape, dtype=np.int64)
    len_sum = np.zeros(shape, dtype=np.int64)
    score_sum = np.zeros(shape, dtype=np.int64)
    np.add.at(count, (li, si), 1)
    np.add.at(len_sum, (li, si), lengths)
    np.add.at(score_sum, (li, si), scores)

    def suffix2d(arr):
        return arr[::-1, ::-1].cumsum(axis=0).cumsum(axis=1)[::-1, ::-1]

    return suffix2d(count), suffix2d(len_sum), suffix2d(score_sum)


def grid_search(
    records: list[HateSpeechRecord], cfg: OptimizerConfig
) -> tuple[ThresholdCell, list[list[ThresholdCell]]]:
    """Evaluate the full grid; return (best cell, heatmap).

    The heatmap is indexed [score_index][length_index] to match the emitted
    CSV (rows = min_score, columns = min_length). Ties on the objective break
    toward larger subsets, then smaller min_score, then smaller min_length.
    """
    if not records:
        raise ValueError("no records to optimize over")
    unscored = [r.id for r in records if r.hate_score is None]
    if unscored:
        raise ValueError(f"{len(unscored)} records lack a hate_score (e.g. {unscored[0]})")

    count, len_sum, score_sum = _suffix_sums(records, cfg)

    heatmap: list[list[ThresholdCell]] = []
    best: ThresholdCell | None = None
    best_key: tuple | None = None
    for j, min_score in enumerate(cfg.score_grid):
        row: list[ThresholdCell] = []
        for i, min_length in enumerate(cfg.length_grid):
            n = int(count[i, j])
            avg_len = float(len_sum[i, j]) / n if n else 0.0
            avg_score = float(score_sum[i, j]) / n if n else 0.0
            if cfg.size_min <= n <= cfg.size_max:
                obj = objective(avg_score, avg_len, n)
            else:
                obj = None
            cell = ThresholdCell(min_length, min_score, n, avg_score, avg_len, obj)
            row.append(cell)
            if obj is not None:
                key = (obj, n, -min_score, -min_length)
                if best_key is None or key > best_key:
                    best, best_key = cell, key
        heatmap.append(row)

    if best is None:
        raise NoFeasibleCellError(
            f"no cell with defined objective and subset size in "
            f"[{cfg.size_min}, {cfg.size_max}]"
        )
    return best, heatmap


def apply_thresholds(
    records: list[HateSpeechRecord], min_length: int, min_score: int
) -> list[HateSpeechRecord]:
    """Order-preserving filter: char_length >= min_length and hate_score >= min_score."""
    for r in records:
        if r.hate_score is None:
            raise ValueError(f"record {r.id} is unscored")
    return [
        r
        for r in records
        if r.char_length >= min_length and r.hate_score >= min_score
    ]


def write_heatmap_csv(heatmap: list[list[ThresholdCell]], path: str | Path) -> None:
    """Rows = min_score, columns = min_length, empty cell for undefined."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        lengths = [cell.min_length for cell in heatmap[0]]
        writer.writerow(["min_score"] + lengths)
        for row in heatmap:
            writer.writerow(
                [row[0].min_score]
                + ["" if c.objective is None else repr(c.objective) for c in row]
            )
