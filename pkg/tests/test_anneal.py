import math
import random
from collections import Counter

import numpy as np
import pytest

from csforge.anneal import (
    AnnealConfig,
    AnnealStepError,
    BatchError,
    InitMode,
    anneal,
    boltzmann_probabilities,
    dedup_hamming,
    energy,
    generate_candidates,
    hamming_distance,
    init_candidate,
    latin_ratio,
    perturb,
    run_batch,
)
from csforge.backends import (
    BackendError,
    ConstantJudge,
    EchoGenerator,
    JudgeVerdict,
    LengthJudge,
    MockGenerator,
    MockJudge,
)
from csforge.records import CandidateResponse, Origin, read_jsonl

TARGET = "甲乙丙丁戊己庚辛"


class TargetOverlapJudge:
    """Score = number of distinct target characters present in the answer."""

    id = "target-judge"

    def judge_pair(self, hs_text, answer_a, answer_b):
        a = sum(1 for ch in set(TARGET) if ch in answer_a)
        b = sum(1 for ch in set(TARGET) if ch in answer_b)
        return JudgeVerdict(float(a), float(b), f"{a} {b}")


class TargetAppendingGenerator:
    """Appends the next missing target character to the seed text."""

    id = "target-gen"

    def __init__(self):
        self.calls = 0

    def generate(self, hs_text, seed_text, n):
        self.calls += 1
        out = []
        text = seed_text
        for _ in range(n):
            missing = [ch for ch in TARGET if ch not in text]
            text = text + (missing[0] if missing else "甲")
            out.append(text)
        return out


def small_cfg(**overrides):
    defaults = dict(
        B=2.0,
        d=1,
        latin_ratio_max=0.5,
        neighbors_per_step=2,
        generations_per_neighbor=2,
        pool_size=4,
        keep_top=2,
        max_iterations=3,
        rng_seed=99,
    )
    defaults.update(overrides)
    return AnnealConfig(**defaults)


class TestInitCandidate:
    def test_copy_mode(self, make_record):
        rec = make_record(0, text="X句")
        cand = init_candidate(rec, small_cfg(init_mode=InitMode.COPY_HS))
        assert cand.text == "X句"

    def test_empty_mode(self, make_record):
        cand = init_candidate(make_record(0), small_cfg(init_mode=InitMode.EMPTY))
        assert cand.text == ""

    def test_construction_contract(self, make_record):
        for mode in (InitMode.COPY_HS, InitMode.EMPTY):
            cand = init_candidate(make_record(0), small_cfg(init_mode=mode))
            assert cand.energy is None
            assert cand.iteration == 0
            assert cand.origin is Origin.SEED


class TestPerturb:
    def test_single_word_list(self, rng):
        base = CandidateResponse(text="句子", origin=Origin.SEED)
        cfg = small_cfg(wordlist=["词"], neighbors_per_step=3)
        neighbors = perturb(base, cfg, rng)
        assert [n.text for n in neighbors] == ["句子词"] * 3
        assert all(n.iteration == 1 for n in neighbors)
        assert all(n.origin is Origin.PERTURBED for n in neighbors)

    def test_deterministic_under_seed(self):
        base = CandidateResponse(text="句", origin=Origin.SEED)
        cfg = small_cfg(wordlist=[f"词{i}" for i in range(10)], neighbors_per_step=5)
        a = [n.text for n in perturb(base, cfg, random.Random(5))]
        b = [n.text for n in perturb(base, cfg, random.Random(5))]
        assert a == b

    def test_uniform_draw_frequencies(self):
        words = ["一", "二", "三", "四"]
        cfg = small_cfg(wordlist=words, neighbors_per_step=1)
        base = CandidateResponse(text="", origin=Origin.SEED)
        rng = random.Random(123)
        counts = Counter()
        for _ in range(10_000):
            counts[perturb(base, cfg, rng)[0].text] += 1
        for word in words:
            assert abs(counts[word] - 2500) <= 150

    def test_empty_wordlist_rejected(self, rng):
        base = CandidateResponse(text="句", origin=Origin.SEED)
        cfg = small_cfg()
        cfg.wordlist = []
        with pytest.raises(ValueError):
            perturb(base, cfg, rng)


class TestGenerateCandidates:
    def _neighbors(self, texts):
        return [CandidateResponse(text=t, origin=Origin.PERTURBED, iteration=1) for t in texts]

    def test_counting_contract(self, make_record, rng):
        cfg = small_cfg(generations_per_neighbor=3)
        out = generate_candidates(
            self._neighbors(["种子一", "种子二"]), make_record(0), [EchoGenerator()], cfg, rng
        )
        assert len(out) == 6
        assert {c.text for c in out} == {"种子一", "种子二"}

    def test_single_backend_id_constant(self, make_record, rng):
        cfg = small_cfg()
        out = generate_candidates(
            self._neighbors(["种子"]), make_record(0), [EchoGenerator("only")], cfg, rng
        )
        assert {c.backend_id for c in out} == {"only"}

    def test_uniform_backend_selection(self, make_record):
        cfg = small_cfg(generations_per_neighbor=1)
        gens = [EchoGenerator("g1"), EchoGenerator("g2")]
        rng = random.Random(77)
        neighbors = self._neighbors(["子"] )
        counts = Counter()
        for _ in range(1000):
            out = generate_candidates(neighbors, make_record(0), gens, cfg, rng)
            counts[out[0].backend_id] += 1
        assert abs(counts["g1"] - 500) <= 50
        assert abs(counts["g2"] - 500) <= 50

    def test_failures_skipped_and_tallied(self, make_record, rng):
        class Broken:
            id = "broken"

            def generate(self, *a):
                raise BackendError("down")

        tally = {}
        # seed 4 draws backends [0, 1, 0, 1]: two broken picks, two echo picks
        out = generate_candidates(
            self._neighbors(["甲", "乙", "丙", "丁"]), make_record(0),
            [Broken(), EchoGenerator()], small_cfg(), random.Random(4), tally,
        )
        assert {c.text for c in out} == {"乙", "丁"}
        assert tally["backend_failures"] == 2

    def test_all_backends_failing_raises(self, make_record, rng):
        class Broken:
            id = "broken"

            def generate(self, *a):
                raise BackendError("down")

        with pytest.raises(AnnealStepError):
            generate_candidates(
                self._neighbors(["甲"]), make_record(0), [Broken()], small_cfg(), rng
            )


class TestHamming:
    def test_identity(self):
        assert hamming_distance("abc", "abc") == 0

    def test_single_substitution(self):
        assert hamming_distance("abc", "abd") == 1

    def test_length_difference_extension(self):
        assert hamming_distance("abc", "abcde") == 2

    def test_symmetry(self):
        assert hamming_distance("xyz", "xy") == hamming_distance("xy", "xyz")


class TestDedup:
    def _cands(self, texts):
        return [CandidateResponse(text=t) for t in texts]

    def test_identical_pair(self):
        out = dedup_hamming(self._cands(["同样", "同样"]), 1)
        assert len(out) == 1

    def test_fixed_point(self):
        cands = self._cands(["aaaa", "bbbb", "cccc"])
        assert dedup_hamming(cands, 3) == cands

    def test_oracle_on_random_sets(self):
        rng = random.Random(42)
        alphabet = "甲乙丙丁"
        for _ in range(20):
            texts = [
                "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 8)))
                for _ in range(30)
            ]
            out = dedup_hamming(self._cands(texts), 3)
            for i in range(len(out)):
                for j in range(i + 1, len(out)):
                    assert hamming_distance(out[i].text, out[j].text) >= 3

    def test_idempotent(self):
        rng = random.Random(1)
        texts = ["".join(rng.choice("abxy") for _ in range(5)) for _ in range(25)]
        once = dedup_hamming(self._cands(texts), 2)
        assert dedup_hamming(once, 2) == once

    def test_keeps_earlier_of_violating_pair(self):
        out = dedup_hamming(self._cands(["第一", "第一", "另外的"]), 2)
        assert [c.text for c in out] == ["第一", "另外的"]


class TestLatinRatio:
    def test_all_latin(self):
        assert latin_ratio("abc") == 1.0

    def test_no_latin(self):
        assert latin_ratio("你好") == 0.0

    def test_mixed_hand_count(self):
        assert latin_ratio("OK你好") == 0.5

    def test_empty(self):
        assert latin_ratio("") == 0.0

    def test_whitespace_excluded_from_denominator(self):
        assert latin_ratio("a b") == 1.0

    def test_digits_count_in_denominator_only(self):
        assert latin_ratio("a1") == 0.5


class TestBoltzmann:
    def test_equal_energies_uniform(self):
        assert boltzmann_probabilities([5, 5, 5, 5], 2.0) == pytest.approx([0.25] * 4)

    def test_hand_evaluated_pair(self):
        # 2^3 / (2^3 + 2^1) = 0.8
        assert boltzmann_probabilities([3, 1], 2.0) == pytest.approx([0.8, 0.2])

    def test_extreme_gap(self):
        probs = boltzmann_probabilities([100, 0], 2.0)
        assert probs[0] >= 1 - 1e-12

    def test_overflow_safe(self):
        probs = boltzmann_probabilities([5000, 4990], 10.0)
        assert sum(probs) == pytest.approx(1.0, abs=1e-9)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            boltzmann_probabilities([1.0, float("nan")], 2.0)
        with pytest.raises(ValueError):
            boltzmann_probabilities([1.0, float("inf")], 2.0)

    def test_invalid_base_rejected(self):
        with pytest.raises(ValueError):
            boltzmann_probabilities([1.0], 1.0)

    def test_ratio_law_and_shift_invariance(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            n = rng.integers(2, 8)
            energies = rng.normal(0, 5, n).tolist()
            B = float(rng.uniform(1.1, 6.0))
            probs = boltzmann_probabilities(energies, B)
            assert sum(probs) == pytest.approx(1.0, abs=1e-9)
            a, b = 0, n - 1
            log_ratio = math.log(probs[a]) - math.log(probs[b])
            assert log_ratio == pytest.approx(
                (energies[a] - energies[b]) * math.log(B), abs=1e-9
            )
            shifted = boltzmann_probabilities([e + 13.7 for e in energies], B)
            assert shifted == pytest.approx(probs, abs=1e-9)

    def test_increasing_base_sharpens(self):
        lo = boltzmann_probabilities([3, 1], 1.5)
        hi = boltzmann_probabilities([3, 1], 4.0)
        assert hi[0] / hi[1] > lo[0] / lo[1]


class TestEnergy:
    def _pool(self, texts):
        return [CandidateResponse(text=t) for t in texts]

    def test_constant_judge(self, rng):
        pool = self._pool(["甲甲", "乙乙"])
        assert energy(pool[0], pool, "hs", ConstantJudge(8, 4), rng) == 8.0
        assert pool[0].energy == 8.0

    def test_singleton_pool_rejected(self, rng):
        pool = self._pool(["甲甲"])
        with pytest.raises(ValueError):
            energy(pool[0], pool, "hs", ConstantJudge(8, 4), rng)

    def test_length_judge_ignores_partner(self, rng):
        pool = self._pool(["四个字呀", "两字", "六个字的回答"])
        assert energy(pool[0], pool, "hs", LengthJudge(), rng) == 4.0


class TestAnneal:
    def test_mock_system_climbs_target_overlap(self, make_record):
        rec = make_record(0)
        judge = TargetOverlapJudge()
        gen = TargetAppendingGenerator()
        cfg = small_cfg(pool_size=6, max_iterations=3, d=1)
        pool = anneal(rec, cfg, [gen], judge)
        energies = [c.energy for c in pool]
        assert energies == sorted(energies, reverse=True)
        best_overlap = max(sum(1 for ch in set(TARGET) if ch in c.text) for c in pool)
        assert pool[0].energy == best_overlap

    def test_best_energy_non_decreasing_across_iterations(self, make_record):
        rec = make_record(1)
        results = []
        for iterations in (1, 2, 3, 4):
            cfg = small_cfg(max_iterations=iterations, pool_size=6)
            pool = anneal(rec, cfg, [TargetAppendingGenerator()], TargetOverlapJudge())
            results.append(pool[0].energy)
        assert results == sorted(results)

    def test_zero_iterations_returns_scored_seed(self, make_record):
        rec = make_record(0)
        cfg = small_cfg(max_iterations=0)
        pool = anneal(rec, cfg, [MockGenerator()], MockJudge())
        assert len(pool) == 1
        assert pool[0].origin is Origin.SEED
        assert pool[0].text == rec.text
        assert pool[0].energy is not None

    def test_deterministic_under_seed(self, make_record):
        rec = make_record(2)
        cfg = small_cfg(max_iterations=3, pool_size=5)
        run1 = anneal(rec, cfg, [MockGenerator("a"), MockGenerator("b")], MockJudge())
        run2 = anneal(rec, cfg, [MockGenerator("a"), MockGenerator("b")], MockJudge())
        assert [c.to_dict() for c in run1] == [c.to_dict() for c in run2]

    def test_returned_candidates_respect_latin_filter(self, make_record):
        rec = make_record(3)
        cfg = small_cfg(max_iterations=2, latin_ratio_max=0.3, pool_size=6)
        pool = anneal(rec, cfg, [MockGenerator()], MockJudge())
        assert all(latin_ratio(c.text) <= 0.3 for c in pool)

    def test_pool_pairwise_hamming_within_iteration_cohort(self, make_record):
        rec = make_record(6)
        cfg = small_cfg(max_iterations=3, pool_size=8, d=3, neighbors_per_step=3)
        pool = anneal(rec, cfg, [MockGenerator()], MockJudge())
        generated = [c for c in pool if c.origin is Origin.GENERATED]
        for i, a in enumerate(generated):
            for b in generated[i + 1 :]:
                if a.iteration == b.iteration:
                    assert hamming_distance(a.text, b.text) >= cfg.d

    def test_empty_init_zero_iterations_returns_unscored_seed(self, make_record):
        cfg = small_cfg(max_iterations=0, init_mode=InitMode.EMPTY)
        pool = anneal(make_record(7), cfg, [MockGenerator()], MockJudge())
        assert len(pool) == 1
        assert pool[0].text == ""
        assert pool[0].energy is None  # an empty seed cannot be judged

    def test_score_threshold_stops_early(self, make_record):
        rec = make_record(4)
        gen = TargetAppendingGenerator()
        cfg = small_cfg(max_iterations=50, score_threshold=2.0, pool_size=4)
        pool = anneal(rec, cfg, [gen], TargetOverlapJudge())
        assert pool[0].energy >= 2.0
        # 50 iterations were allowed but the threshold fired long before
        assert gen.calls < 50 * cfg.neighbors_per_step

    def test_latin_heavy_generator_exhausts_retries(self, make_record):
        class LatinGen:
            id = "latin"

            def generate(self, hs_text, seed_text, n):
                return [f"english reply {i}" for i in range(n)]

        cfg = small_cfg(max_iterations=1, latin_ratio_max=0.2, empty_cohort_retries=2)
        with pytest.raises(AnnealStepError):
            anneal(make_record(5), cfg, [LatinGen()], MockJudge())


class TestRunBatch:
    def test_counts_and_grouping(self, make_record, tmp_path):
        records = [make_record(i) for i in range(5)]
        cfg = small_cfg(pool_size=4, max_iterations=2, neighbors_per_step=3)
        out = tmp_path / "cands.jsonl"
        report = run_batch(records, cfg, [MockGenerator()], MockJudge(), out)
        rows = list(read_jsonl(out))
        assert report.completed == 5
        assert len(rows) == 5 * 4
        counts = Counter(r["hs_id"] for r in rows)
        assert all(v == 4 for v in counts.values())
        assert all(r["candidate_rank"] is None for r in rows)

    def test_resume_skips_completed_records(self, make_record, tmp_path):
        records = [make_record(i) for i in range(25)]
        cfg = small_cfg(pool_size=4, max_iterations=2)

        # full fresh run measures the total backend cost
        gen_full = MockGenerator()
        run_batch(records, cfg, [gen_full], MockJudge(), tmp_path / "full.jsonl")

        # interrupted run: first 13 records only
        gen_a = MockGenerator()
        out = tmp_path / "c.jsonl"
        run_batch(records[:13], cfg, [gen_a], MockJudge(), out)
        calls_13 = gen_a.calls

        # resume over all 25: records 1-13 must not be re-generated
        gen_b = MockGenerator()
        report = run_batch(records, cfg, [gen_b], MockJudge(), out, resume=True)
        assert report.resumed == 13
        assert report.completed == 12
        assert gen_b.calls == gen_full.calls - calls_13

        rows = list(read_jsonl(out))
        assert Counter(r["hs_id"] for r in rows) == Counter(
            r["hs_id"] for r in read_jsonl(tmp_path / "full.jsonl")
        )

    def test_resume_output_identical_to_fresh(self, make_record, tmp_path):
        records = [make_record(i) for i in range(6)]
        cfg = small_cfg(pool_size=3, max_iterations=2)
        fresh = tmp_path / "fresh.jsonl"
        run_batch(records, cfg, [MockGenerator()], MockJudge(), fresh)
        split = tmp_path / "split.jsonl"
        run_batch(records[:3], cfg, [MockGenerator()], MockJudge(), split)
        run_batch(records, cfg, [MockGenerator()], MockJudge(), split, resume=True)
        assert fresh.read_bytes() == split.read_bytes()

    def test_failure_policy(self, make_record, tmp_path):
        records = [make_record(i) for i in range(10)]
        poisoned = {records[i].text for i in (0, 1, 2)}

        class PoisonJudge(MockJudge):
            def judge_pair(self, hs_text, a, b):
                if hs_text in poisoned:
                    raise BackendError("judge down")
                return super().judge_pair(hs_text, a, b)

        cfg = small_cfg(pool_size=3, max_iterations=1, empty_cohort_retries=0)
        with pytest.raises(BatchError):
            run_batch(
                records, cfg, [MockGenerator()], PoisonJudge(), tmp_path / "a.jsonl"
            )
        report = run_batch(
            records,
            cfg,
            [MockGenerator()],
            PoisonJudge(),
            tmp_path / "b.jsonl",
            min_complete_fraction=0.5,
        )
        assert len(report.failed) == 3
        assert report.completed == 7

    def test_empty_records_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            run_batch([], small_cfg(), [MockGenerator()], MockJudge(), tmp_path / "x.jsonl")


class TestConfigValidation:
    def test_b_must_exceed_one(self):
        with pytest.raises(ValueError):
            small_cfg(B=1.0)

    def test_keep_top_within_pool(self):
        with pytest.raises(ValueError):
            small_cfg(pool_size=4, keep_top=5)

    def test_wordlist_required_when_perturbing(self):
        with pytest.raises(ValueError):
            small_cfg(wordlist=[], neighbors_per_step=2)

    def test_roundtrip_via_file(self, tmp_path):
        cfg = small_cfg(B=3.5, d=4)
        path = tmp_path / "cfg.json"
        import json

        path.write_text(json.dumps(cfg.to_dict(), ensure_ascii=False))
        loaded = AnnealConfig.from_file(path)
        assert loaded == cfg
