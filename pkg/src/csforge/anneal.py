"""Judge-guided stochastic search for counterspeech candidates.

Per hate-speech record the loop is: perturb the current candidate by
appending random Mandarin words, ask generator backends for fresh responses
seeded on each perturbation, drop near-duplicates (Hamming distance < d) and
Latin-heavy outputs, score survivors with the judge-based energy, then pick
the next current candidate with Boltzmann probabilities p_i = B^{E_i} / sum_j
B^{E_j}. A global best-pool keeps the highest-energy distinct candidates seen
anywhere in the run; the base B stays fixed for the whole search (there is no
cooling schedule).
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .backends import BackendError
from .records import CandidateResponse, HateSpeechRecord, Origin, append_jsonl, read_jsonl
from .wordlist import DEFAULT_WORDLIST

logger = logging.getLogger(__name__)


class AnnealStepError(Exception):
    """An iteration could not produce any usable candidates."""


class BatchError(Exception):
    """Too many records failed to anneal."""


class InitMode(str, Enum):
    COPY_HS = "COPY_HS"
    EMPTY = "EMPTY"


@dataclass
class AnnealConfig:
    B: float = 2.0
    d: int = 5
    latin_ratio_max: float = 0.5
    neighbors_per_step: int = 3
    generations_per_neighbor: int = 2
    pool_size: int = 6
    keep_top: int = 4
    max_iterations: int = 4
    score_threshold: float | None = None
    init_mode: InitMode = InitMode.COPY_HS
    wordlist: list[str] = field(default_factory=lambda: list(DEFAULT_WORDLIST))
    rng_seed: int = 0
    pairings: int = 1
    empty_cohort_retries: int = 3

    def __post_init__(self) -> None:
        if isinstance(self.init_mode, str):
            self.init_mode = InitMode(self.init_mode)
        if self.B <= 1:
            raise ValueError("B must be > 1")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not 0 <= self.latin_ratio_max <= 1:
            raise ValueError("latin_ratio_max must be in [0, 1]")
        if self.keep_top > self.pool_size:
            raise ValueError("keep_top must be <= pool_size")
        if self.neighbors_per_step > 0 and not self.wordlist:
            raise ValueError("wordlist must be non-empty when perturbing")
        if min(self.neighbors_per_step, self.generations_per_neighbor,
               self.pool_size, self.keep_top, self.pairings) < 1:
            raise ValueError("counts must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")

    def to_dict(self) -> dict:
        d = self.__dict__.copy()
        d["init_mode"] = self.init_mode.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AnnealConfig":
        return cls(**d)

    @classmethod
    def from_file(cls, path: str | Path) -> "AnnealConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def init_candidate(hs: HateSpeechRecord, cfg: AnnealConfig) -> CandidateResponse:
    text = hs.text if cfg.init_mode is InitMode.COPY_HS else ""
    return CandidateResponse(text=text, origin=Origin.SEED, iteration=0)


def perturb(c: CandidateResponse, cfg: AnnealConfig, rng: random.Random) -> list[CandidateResponse]:
    """neighbors_per_step variants, each the current text plus one random word."""
    if not cfg.wordlist:
        raise ValueError("wordlist must be non-empty")
    out = []
    for _ in range(cfg.neighbors_per_step):
        word = cfg.wordlist[rng.randrange(len(cfg.wordlist))]
        out.append(
            CandidateResponse(
                text=c.text + word, origin=Origin.PERTURBED, iteration=c.iteration + 1
            )
        )
    return out


def generate_candidates(
    neighbors: list[CandidateResponse],
    hs: HateSpeechRecord,
    backends: list,
    cfg: AnnealConfig,
    rng: random.Random,
    tally: dict | None = None,
) -> list[CandidateResponse]:
    """Each neighbor is handed to one uniformly drawn backend for fresh responses.

    A failing backend skips its neighbor (tallied); only a fully empty outcome
    raises.
    """
    if not backends:
        raise ValueError("at least one generator backend required")
    out: list[CandidateResponse] = []
    failures = 0
    for neighbor in neighbors:
        backend = backends[rng.randrange(len(backends))]
        try:
            texts = backend.generate(hs.text, neighbor.text, cfg.generations_per_neighbor)
        except BackendError as exc:
            failures += 1
            logger.warning("generator %s failed for %s: %s", backend.id, hs.id, exc)
            continue
        for text in texts:
            if not text:
                continue
            out.append(
                CandidateResponse(
                    text=text,
                    origin=Origin.GENERATED,
                    backend_id=backend.id,
                    iteration=neighbor.iteration,
                )
            )
    if tally is not None:
        tally["backend_failures"] = tally.get("backend_failures", 0) + failures
    if not out:
        raise AnnealStepError(f"all generator backends failed for every neighbor of {hs.id}")
    return out


def hamming_distance(a: str, b: str) -> int:
    """Positionwise mismatches over the shared prefix plus the length difference.

    Classical Hamming is undefined for unequal lengths; this extension
    upper-bounds edit distance by substitutions plus appends.
    """
    if len(a) > len(b):
        a, b = b, a
    return sum(x != y for x, y in zip(a, b)) + (len(b) - len(a))


def dedup_hamming(candidates: list[CandidateResponse], d: int) -> list[CandidateResponse]:
    """Scan in input order, dropping the later candidate of any pair closer than d."""
    if d < 1:
        raise ValueError("d must be >= 1")
    kept: list[CandidateResponse] = []
    for cand in candidates:
        if all(hamming_distance(cand.text, k.text) >= d for k in kept):
            kept.append(cand)
    return kept


def latin_ratio(text: str) -> float:
    """Basic-Latin letters over all non-whitespace characters; 0 for empty text."""
    total = 0
    latin = 0
    for ch in text:
        if ch.isspace():
            continue
        total += 1
        if "a" <= ch <= "z" or "A" <= ch <= "Z":
            latin += 1
    return latin / total if total else 0.0


def boltzmann_probabilities(energies: list[float], B: float) -> list[float]:
    """p_i = B^{E_i} / sum_j B^{E_j}, computed with max-shifted exponents.

    The shifted form exp((E_i - E_max) * ln B) is algebraically identical and
    cannot overflow.
    """
    if B <= 1:
        raise ValueError("B must be > 1")
    if not energies:
        raise ValueError("energies must be non-empty")
    e = np.asarray(energies, dtype=float)
    if not np.all(np.isfinite(e)):
        raise ValueError("energies must be finite")
    shifted = (e - e.max()) * math.log(B)
    weights = np.exp(shifted)
    probs = weights / weights.sum()
    return [float(p) for p in probs]


def energy(
    c: CandidateResponse,
    pool: list[CandidateResponse],
    hs_text: str,
    judge,
    rng: random.Random,
    pairings: int = 1,
) -> float:
    """Judge score of c presented against one random peer from the pool.

    With pairings > 1 the partner is redrawn and the scores averaged. The
    result is stored on the candidate.
    """
    others = [p for p in pool if p is not c]
    if not others:
        raise ValueError("energy needs at least one other candidate in the pool")
    scores = []
    for _ in range(pairings):
        partner = others[rng.randrange(len(others))]
        verdict = judge.judge_pair(hs_text, c.text, partner.text)
        scores.append(verdict.score_a)
    c.energy = sum(scores) / len(scores)
    return c.energy


def _score_seed(seed: CandidateResponse, hs_text: str, judge) -> None:
    # Singleton cohort: no peer exists yet, so the seed is paired with itself.
    if not seed.text:
        return
    try:
        verdict = judge.judge_pair(hs_text, seed.text, seed.text)
        seed.energy = verdict.score_a
    except BackendError as exc:
        logger.warning("seed scoring failed: %s", exc)


def _merge_pool(
    pool: list[CandidateResponse], scored: list[CandidateResponse], pool_size: int
) -> list[CandidateResponse]:
    """Top pool_size distinct-text candidates by energy, stable on ties."""
    by_text: dict[str, CandidateResponse] = {}
    for cand in pool + scored:
        if cand.energy is None:
            continue
        prior = by_text.get(cand.text)
        if prior is None or cand.energy > prior.energy:
            by_text[cand.text] = cand
    ordered = sorted(by_text.values(), key=lambda c: -c.energy)
    return ordered[:pool_size]


def anneal(
    hs: HateSpeechRecord,
    cfg: AnnealConfig,
    generator_backends: list,
    judge,
) -> list[CandidateResponse]:
    """Full search for one record; returns the best-pool sorted by energy desc."""
    rng = random.Random(cfg.rng_seed)
    current = init_candidate(hs, cfg)
    _score_seed(current, hs.text, judge)
    # The seed is subject to the same Latin filter as generated candidates so
    # every banked candidate satisfies it.
    seedable = [current] if latin_ratio(current.text) <= cfg.latin_ratio_max else []
    pool = _merge_pool([], seedable, cfg.pool_size)

    for _ in range(cfg.max_iterations):
        scored: list[CandidateResponse] = []
        for attempt in range(cfg.empty_cohort_retries + 1):
            neighbors = perturb(current, cfg, rng)
            try:
                cohort = generate_candidates(neighbors, hs, generator_backends, cfg, rng)
            except AnnealStepError:
                if attempt == cfg.empty_cohort_retries:
                    raise
                continue
            cohort = dedup_hamming(cohort, cfg.d)
            cohort = [c for c in cohort if latin_ratio(c.text) <= cfg.latin_ratio_max]
            for cand in cohort:
                try:
                    if len(cohort) >= 2:
                        energy(cand, cohort, hs.text, judge, rng, cfg.pairings)
                    else:
                        verdict = judge.judge_pair(hs.text, cand.text, cand.text)
                        cand.energy = verdict.score_a
                    scored.append(cand)
                except BackendError as exc:
                    logger.warning("energy scoring failed for %s: %s", hs.id, exc)
            if scored:
                break
        if not scored:
            raise AnnealStepError(
                f"no scorable candidates after {cfg.empty_cohort_retries + 1} attempts for {hs.id}"
            )

        pool = _merge_pool(pool, scored, cfg.pool_size)

        probs = boltzmann_probabilities([c.energy for c in scored], cfg.B)
        pick = rng.random()
        acc = 0.0
        current = scored[-1]
        for cand, p in zip(scored, probs):
            acc += p
            if pick < acc:
                current = cand
                break

        if cfg.score_threshold is not None and pool and pool[0].energy >= cfg.score_threshold:
            break

    return pool if pool else [current]


def record_seed(base_seed: int, hs_id: str) -> int:
    """Stable per-record seed so resumed batches reproduce the same searches."""
    digest = hashlib.sha256(f"{base_seed}:{hs_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % 2**31


@dataclass
class BatchReport:
    completed: int = 0
    resumed: int = 0
    failed: list[tuple[str, str]] = field(default_factory=list)
    candidates_written: int = 0


def run_batch(
    records: list[HateSpeechRecord],
    cfg: AnnealConfig,
    generator_backends: list,
    judge,
    out_path: str | Path,
    resume: bool = False,
    min_complete_fraction: float = 0.9,
) -> BatchReport:
    """Anneal every record, appending candidate rows to a line-delimited file.

    The output file doubles as the checkpoint: with resume=True, records whose
    rows are already present are not re-annealed. Per-record failures are
    isolated; the batch errors only when the completed fraction falls below
    min_complete_fraction.
    """
    if not records:
        raise ValueError("records must be non-empty")
    out_path = Path(out_path)
    report = BatchReport()

    done: set[str] = set()
    if resume and out_path.is_file():
        done = {row["hs_id"] for row in read_jsonl(out_path)}
    elif out_path.is_file() and not resume:
        out_path.unlink()

    for rec in records:
        if rec.id in done:
            report.resumed += 1
            continue
        rec_cfg = replace(cfg, rng_seed=record_seed(cfg.rng_seed, rec.id))
        try:
            pool = anneal(rec, rec_cfg, generator_backends, judge)
        except (AnnealStepError, BackendError, ValueError) as exc:
            report.failed.append((rec.id, str(exc)))
            logger.error("anneal failed for %s: %s", rec.id, exc)
            continue
        for cand in pool:
            append_jsonl(
                out_path,
                {
                    "hs_id": rec.id,
                    "hs_text": rec.text,
                    "candidate_rank": None,
                    "text": cand.text,
                    "energy": cand.energy,
                    "backend_id": cand.backend_id,
                    "iteration": cand.iteration,
                },
            )
            report.candidates_written += 1
        report.completed += 1

    total = len(records)
    finished = report.completed + report.resumed
    if finished / total < min_complete_fraction:
        raise BatchError(
            f"only {finished}/{total} records completed "
            f"(< {min_complete_fraction:.0%}); failures: {report.failed[:5]}"
        )
    return report
