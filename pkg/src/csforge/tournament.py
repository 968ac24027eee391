"""Round-robin pairwise judging and average-score ranking.

Every unordered pair is judged twice, once per presentation order, and the
two scores a participant earned in that pairing are averaged into its matrix
row. Pairwise judges show position bias, so the double presentation makes the
ranking order-independent. Ties use competition ranking (1, 1, 3) so a
"rank 1" always means "nothing scored better".
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .backends import BackendError
from .records import CandidateResponse, Origin

logger = logging.getLogger(__name__)


class TournamentError(Exception):
    """A participant ended with no defined pairings."""


@dataclass
class TournamentResult:
    participants: list[CandidateResponse]
    score_matrix: list[list[float | None]]
    avg_score: list[float]
    rank: list[int]


def _competition_ranks(avgs: list[float]) -> list[int]:
    return [1 + sum(1 for other in avgs if other > mine) for mine in avgs]


def round_robin(
    candidates: list[CandidateResponse],
    hs_text: str,
    judge,
    max_workers: int = 1,
) -> TournamentResult:
    """Judge all n*(n-1)/2 pairs in both orders: exactly n*(n-1) judge calls."""
    n = len(candidates)
    if n < 2:
        raise ValueError("round robin needs at least 2 candidates")

    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]

    def judge_pair_both(pair: tuple[int, int]):
        i, j = pair
        first = judge.judge_pair(hs_text, candidates[i].text, candidates[j].text)
        second = judge.judge_pair(hs_text, candidates[j].text, candidates[i].text)
        # i's score: presented first in call 1, second in call 2.
        return (
            (first.score_a + second.score_b) / 2,
            (first.score_b + second.score_a) / 2,
        )

    matrix: list[list[float | None]] = [[None] * n for _ in range(n)]
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            outcomes = list(pool.map(lambda p: _safe(judge_pair_both, p), pairs))
    else:
        outcomes = [_safe(judge_pair_both, p) for p in pairs]

    for (i, j), outcome in zip(pairs, outcomes):
        if outcome is None:
            logger.warning("pair (%d, %d) left undefined after judge failure", i, j)
            continue
        matrix[i][j], matrix[j][i] = outcome

    avgs: list[float] = []
    for i, row in enumerate(matrix):
        defined = [v for k, v in enumerate(row) if k != i and v is not None]
        if not defined:
            raise TournamentError(f"participant {i} has no defined pairings")
        avgs.append(sum(defined) / len(defined))

    return TournamentResult(
        participants=list(candidates),
        score_matrix=matrix,
        avg_score=avgs,
        rank=_competition_ranks(avgs),
    )


def _safe(fn, arg):
    try:
        return fn(arg)
    except BackendError:
        return None


def keep_top(result: TournamentResult, k: int) -> list[CandidateResponse]:
    """Best k participants ordered by rank; ties break on avg_score, then input order."""
    n = len(result.participants)
    if k > n:
        raise ValueError(f"k={k} exceeds {n} participants")
    order = sorted(
        range(n),
        key=lambda i: (result.rank[i], -result.avg_score[i], i),
    )
    return [result.participants[i] for i in order[:k]]


def rank_of_human(
    human: CandidateResponse,
    ai_pool: list[CandidateResponse],
    hs_text: str,
    judge,
) -> int:
    """Rank the human answer inside a round robin over {human} + AI pool."""
    if not ai_pool:
        raise ValueError("ai_pool must be non-empty")
    result = round_robin([human] + list(ai_pool), hs_text, judge)
    return result.rank[0]


def tournament_for_pairs(
    candidate_rows: list[dict],
    judge,
    keep: int = 4,
    max_workers: int = 1,
) -> tuple[list[dict], list[tuple[str, int, int, float]]]:
    """Rank per-HS candidate rows from an annealed candidates file.

    Returns pair records (hs_id, hs_text, ranked retained candidates) plus a
    long-format score-matrix audit table (hs_id, i, j, score).
    """
    by_hs: dict[str, list[dict]] = {}
    for row in candidate_rows:
        by_hs.setdefault(row["hs_id"], []).append(row)

    pairs_out: list[dict] = []
    matrix_rows: list[tuple[str, int, int, float]] = []
    for hs_id, rows in by_hs.items():
        hs_text = rows[0]["hs_text"]
        cands = [
            CandidateResponse(
                text=r["text"],
                energy=r.get("energy"),
                origin=Origin.GENERATED if r.get("backend_id") else Origin.SEED,
                backend_id=r.get("backend_id"),
                iteration=int(r.get("iteration", 0)),
            )
            for r in rows
        ]
        result = round_robin(cands, hs_text, judge, max_workers=max_workers)
        retained = keep_top(result, min(keep, len(cands)))
        avg_by_identity = {id(c): a for c, a in zip(result.participants, result.avg_score)}
        for i, row in enumerate(result.score_matrix):
            for j, value in enumerate(row):
                if value is not None:
                    matrix_rows.append((hs_id, i, j, value))
        pairs_out.append(
            {
                "hs_id": hs_id,
                "hs_text": hs_text,
                "candidates": [
                    {
                        "rank": idx + 1,
                        "text": cand.text,
                        "energy": cand.energy,
                        "backend_id": cand.backend_id,
                        "iteration": cand.iteration,
                        "avg_score": avg_by_identity[id(cand)],
                    }
                    for idx, cand in enumerate(retained)
                ],
            }
        )
    return pairs_out, matrix_rows


def write_matrix_csv(matrix_rows: list[tuple[str, int, int, float]], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["hs_id", "row", "col", "score"])
        for hs_id, i, j, score in matrix_rows:
            writer.writerow([hs_id, i, j, repr(score)])
