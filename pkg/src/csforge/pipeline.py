"""End-to-end staged pipeline with a reproducible run manifest.

Stage order: ingest -> score -> optimize -> anneal -> tournament -> annotate
-> analyze. Each stage records its config hash and input/output file digests
in the manifest; rerunning with the same output directory skips stages whose
outputs still verify, so an interrupted run resumes where it stopped.

One global seed fans out to per-stage seeds through a stage-name hash
(stage_seed below), so any stage can be reproduced in isolation.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import analysis as analysis_mod
from . import ingest as ingest_mod
from .anneal import AnnealConfig, run_batch
from .backends import BackendConfig, HttpChatBackend, MockGenerator, MockJudge
from .optimize import (
    OptimizerConfig,
    apply_thresholds,
    grid_search,
    score_records,
    write_heatmap_csv,
)
from .records import HateSpeechRecord, PairRecord, read_jsonl, write_jsonl
from .tournament import tournament_for_pairs, write_matrix_csv

logger = logging.getLogger(__name__)

PIPELINE_VERSION = "0.1.0"
STAGE_ORDER = ["ingest", "score", "optimize", "anneal", "tournament", "annotate", "analyze"]


def stage_seed(base_seed: int, stage_name: str) -> int:
    """Per-stage seed: first 8 bytes of sha256("<seed>:<stage>")."""
    digest = hashlib.sha256(f"{base_seed}:{stage_name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % 2**31


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(obj) -> str:
    return hashlib.sha256(
        json.dumps(obj, ensure_ascii=False, sort_keys=True, default=str).encode("utf-8")
    ).hexdigest()


def parse_grid(spec) -> list[int]:
    """Accept "a..b", [a, b] (inclusive range), or an explicit value list."""
    if isinstance(spec, str):
        lo, hi = spec.split("..")
        return list(range(int(lo), int(hi) + 1))
    values = [int(v) for v in spec]
    if len(values) == 2 and values[1] - values[0] > 1:
        return list(range(values[0], values[1] + 1))
    return values


def build_backends(config: dict, mock_override: bool | None = None):
    """Generator list and judge from config; mocks when requested."""
    use_mock = config.get("mock_backends", False) if mock_override is None else mock_override
    if use_mock:
        return [MockGenerator("mock-gen-a"), MockGenerator("mock-gen-b")], MockJudge()
    spec = config.get("backends") or {}
    generators = [HttpChatBackend(BackendConfig(**g)) for g in spec.get("generators", [])]
    judge_spec = spec.get("judge")
    if not generators or judge_spec is None:
        raise ValueError("config needs backends.generators and backends.judge (or mock_backends)")
    return generators, HttpChatBackend(BackendConfig(**judge_spec))


@dataclass
class StageRecord:
    name: str
    status: str = "pending"
    config_hash: str = ""
    seed: int = 0
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    started: float | None = None
    finished: float | None = None
    info: dict = field(default_factory=dict)
    error: str | None = None

    def to_dict(self) -> dict:
        return self.__dict__.copy()


class PipelineRun:
    """Executes the staged pipeline under one output directory."""

    def __init__(self, config: dict, mock_backends: bool | None = None, seed: int | None = None):
        self.config = dict(config)
        if seed is not None:
            self.config["seed"] = seed
        self.seed = int(self.config.get("seed", 0))
        self.out_dir = Path(self.config["out_dir"])
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.out_dir / "run_manifest.json"
        self.generators, self.judge = build_backends(self.config, mock_backends)
        self.stages = {name: StageRecord(name=name, seed=stage_seed(self.seed, name))
                       for name in STAGE_ORDER}
        self._prior = self._load_prior_manifest()

    # -- manifest ----------------------------------------------------------

    def _load_prior_manifest(self) -> dict:
        if self.manifest_path.is_file():
            with open(self.manifest_path, encoding="utf-8") as fh:
                prior = json.load(fh)
            return {s["name"]: s for s in prior.get("stages", [])}
        return {}

    def _write_manifest(self) -> None:
        manifest = {
            "pipeline_version": PIPELINE_VERSION,
            "rng_seed": self.seed,
            "stages": [self.stages[name].to_dict() for name in STAGE_ORDER],
        }
        self.manifest_path.write_text(
            json.dumps(manifest, ensure_ascii=False, indent=2), encoding="utf-8"
        )

    def _can_skip(self, name: str, cfg_hash: str) -> bool:
        prior = self._prior.get(name)
        if not prior or prior.get("status") != "completed":
            return False
        if prior.get("config_hash") != cfg_hash:
            return False
        for path, digest in prior.get("outputs", {}).items():
            if not Path(path).is_file() or file_digest(path) != digest:
                return False
        return True

    # -- paths -------------------------------------------------------------

    def _path(self, name: str) -> Path:
        return self.out_dir / name

    # -- stage bodies --------------------------------------------------------

    def _stage_ingest(self, record: StageRecord) -> None:
        lists = []
        skipped = 0
        for src in self.config["sources"]:
            schema = src.get("schema")
            if isinstance(schema, str):
                schema = ingest_mod.load_schema_file(schema)
            result = ingest_mod.load_records(src["source"].upper(), src["input"], schema)
            skipped += len(result.skipped)
            lists.append(result)
            record.inputs[str(src["input"])] = file_digest(src["input"])
        merged = ingest_mod.merge_sources(*lists)
        out = self._path("records.jsonl")
        write_jsonl(out, (r.to_dict() for r in merged))
        record.outputs[str(out)] = file_digest(out)
        record.info = {"records": len(merged), "malformed_rows_skipped": skipped}

    def _stage_score(self, record: StageRecord) -> None:
        src = self._path("records.jsonl")
        record.inputs[str(src)] = file_digest(src)
        records = [HateSpeechRecord.from_dict(d) for d in read_jsonl(src)]
        opt_cfg = self.config.get("optimizer", {})
        seed_examples = [tuple(x) for x in opt_cfg.get("seed_examples", [])]
        report = score_records(
            records, self.judge, seed_examples, opt_cfg.get("max_in_flight", 4)
        )
        scored = [r for r in records if r.hate_score is not None]
        if records and not scored:
            raise RuntimeError(
                f"judge scored none of {len(records)} records "
                f"(first error: {report.unscored[0][1]})"
            )
        out = self._path("scored.jsonl")
        write_jsonl(out, (r.to_dict() for r in scored))
        record.outputs[str(out)] = file_digest(out)
        record.info = {"scored": report.scored, "unscored": len(report.unscored)}

    def _stage_optimize(self, record: StageRecord) -> None:
        src = self._path("scored.jsonl")
        record.inputs[str(src)] = file_digest(src)
        records = [HateSpeechRecord.from_dict(d) for d in read_jsonl(src)]
        raw = dict(self.config.get("optimizer", {}))
        cfg = OptimizerConfig(
            size_min=raw.get("size_min", 500),
            size_max=raw.get("size_max", 3000),
            length_grid=parse_grid(raw.get("length_grid", [1, 100])),
            score_grid=parse_grid(raw.get("score_grid", [0, 100])),
            seed_examples=[tuple(x) for x in raw.get("seed_examples", [])],
        )
        best, heatmap = grid_search(records, cfg)
        heatmap_out = self._path("heatmap.csv")
        write_heatmap_csv(heatmap, heatmap_out)
        selected = apply_thresholds(records, best.min_length, best.min_score)
        out = self._path("selected.jsonl")
        write_jsonl(out, (r.to_dict() for r in selected))
        record.outputs[str(out)] = file_digest(out)
        record.outputs[str(heatmap_out)] = file_digest(heatmap_out)
        record.info = {
            "min_length": best.min_length,
            "min_score": best.min_score,
            "subset_size": best.subset_size,
            "objective": best.objective,
        }

    def _stage_anneal(self, record: StageRecord) -> None:
        src = self._path("selected.jsonl")
        record.inputs[str(src)] = file_digest(src)
        records = [HateSpeechRecord.from_dict(d) for d in read_jsonl(src)]
        cfg = AnnealConfig.from_dict(
            {**self.config.get("anneal", {}), "rng_seed": record.seed}
        )
        out = self._path("candidates.jsonl")
        # Partial output is only a valid checkpoint when it came from an
        # interrupted run of this same stage config.
        prior = self._prior.get("anneal", {})
        resume = (
            out.is_file()
            and prior.get("config_hash") == record.config_hash
            and prior.get("status") != "completed"
        )
        report = run_batch(
            records,
            cfg,
            self.generators,
            self.judge,
            out,
            resume=resume,
            min_complete_fraction=self.config.get("min_complete_fraction", 0.9),
        )
        record.outputs[str(out)] = file_digest(out)
        record.info = {
            "completed": report.completed,
            "resumed": report.resumed,
            "failed": len(report.failed),
            "candidates": report.candidates_written,
        }

    def _stage_tournament(self, record: StageRecord) -> None:
        src = self._path("candidates.jsonl")
        record.inputs[str(src)] = file_digest(src)
        rows = list(read_jsonl(src))
        pairs, matrix_rows = tournament_for_pairs(
            rows, self.judge, keep=self.config.get("keep_top", 4)
        )
        pairs_out = self._path("pairs.jsonl")
        write_jsonl(pairs_out, pairs)
        matrix_out = self._path("matrices.csv")
        write_matrix_csv(matrix_rows, matrix_out)
        record.outputs[str(pairs_out)] = file_digest(pairs_out)
        record.outputs[str(matrix_out)] = file_digest(matrix_out)
        record.info = {"pairs": len(pairs)}

    def _stage_annotate(self, record: StageRecord) -> None:
        from .annotation import AnnotationStore, export_tasks

        src = self._path("pairs.jsonl")
        record.inputs[str(src)] = file_digest(src)
        pairs = [_pair_from_row(row) for row in read_jsonl(src)]
        store = AnnotationStore(self._path("store"))
        store.add_pairs(pairs)
        sheet = self._path("tasks.csv")
        export_tasks(pairs, self.config.get("annotator", "annotator"), sheet)
        info = {"pairs": len(pairs)}
        annotations_sheet = self.config.get("annotations_sheet")
        if annotations_sheet:
            result = store.import_annotations(
                annotations_sheet, self.config.get("annotator", "annotator")
            )
            info["imported"] = len(result.accepted)
            info["rejected"] = len(result.rejected)
        record.outputs[str(sheet)] = file_digest(sheet)
        record.info = info

    def _stage_analyze(self, record: StageRecord) -> None:
        from .annotation import AnnotationStore

        pairs_path = self._path("pairs.jsonl")
        record.inputs[str(pairs_path)] = file_digest(pairs_path)
        pair_rows = list(read_jsonl(pairs_path))
        pairs = {row["hs_id"]: _pair_from_row(row) for row in pair_rows}

        store = AnnotationStore(self._path("store"))
        annotations = list(store.annotations.values())

        distribution = None
        study = None
        if annotations:
            distribution = analysis_mod.label_distribution(
                [a.hate_label for a in annotations]
            )
            with_responses = [a for a in annotations if a.edited_response]
            if with_responses:
                study = analysis_mod.human_rank_study(with_responses, pairs, self.judge)

        generated = [c["text"] for row in pair_rows for c in row["candidates"]]
        source_texts = [
            d["text"] for d in read_jsonl(self._path("records.jsonl"))
        ]
        n = self.config.get("novelty_n", 2)
        metrics = {
            "novelty_n": n,
            "novelty": analysis_mod.novelty(generated, source_texts, n),
            "genlen": analysis_mod.genlen(generated) if generated else None,
        }

        report_path = self._path("report.md")
        analysis_mod.write_report(report_path, distribution, study, metrics)
        record.outputs[str(report_path)] = file_digest(report_path)
        record.outputs[str(report_path.with_suffix(".json"))] = file_digest(
            report_path.with_suffix(".json")
        )
        if study is not None:
            hist_path = self._path("rank_histogram.csv")
            analysis_mod.write_histogram_csv(study, hist_path)
            record.outputs[str(hist_path)] = file_digest(hist_path)
        record.info = {"metrics": {k: v for k, v in metrics.items()}}

    # -- driver --------------------------------------------------------------

    def run(self) -> int:
        bodies = {
            "ingest": self._stage_ingest,
            "score": self._stage_score,
            "optimize": self._stage_optimize,
            "anneal": self._stage_anneal,
            "tournament": self._stage_tournament,
            "annotate": self._stage_annotate,
            "analyze": self._stage_analyze,
        }
        stage_configs = {
            "ingest": self.config.get("sources"),
            "score": self.config.get("optimizer"),
            "optimize": self.config.get("optimizer"),
            "anneal": self.config.get("anneal"),
            "tournament": {"keep_top": self.config.get("keep_top", 4)},
            "annotate": {"annotations_sheet": self.config.get("annotations_sheet")},
            "analyze": {"novelty_n": self.config.get("novelty_n", 2)},
        }
        for name in STAGE_ORDER:
            record = self.stages[name]
            record.config_hash = config_hash(
                {"stage": name, "seed": self.seed, "config": stage_configs[name]}
            )
            if self._can_skip(name, record.config_hash):
                prior = self._prior[name]
                record.status = "completed"
                record.inputs = prior.get("inputs", {})
                record.outputs = prior.get("outputs", {})
                record.started = prior.get("started")
                record.finished = prior.get("finished")
                record.info = {**prior.get("info", {}), "resumed_from_manifest": True}
                logger.info("stage %s: outputs verified, skipping", name)
                self._write_manifest()
                continue
            record.started = time.time()
            record.status = "running"
            # Persist the running marker first so a killed process leaves a
            # manifest the next run can resume from.
            self._write_manifest()
            try:
                bodies[name](record)
            except Exception as exc:
                record.status = "failed"
                record.error = f"{name}: {exc}"
                record.finished = time.time()
                self._write_manifest()
                logger.error("stage %s failed: %s", name, exc)
                return 1
            record.status = "completed"
            record.finished = time.time()
            self._write_manifest()
        return 0


def _pair_from_row(row: dict) -> PairRecord:
    from .records import CandidateResponse, Origin

    return PairRecord(
        hs_id=row["hs_id"],
        hs_text=row["hs_text"],
        candidates=[
            CandidateResponse(
                text=c["text"],
                energy=c.get("energy"),
                origin=Origin.GENERATED if c.get("backend_id") else Origin.SEED,
                backend_id=c.get("backend_id"),
                iteration=int(c.get("iteration", 0)),
            )
            for c in row["candidates"]
        ],
    )


def load_pipeline_config(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def run_pipeline(
    config_path: str | Path,
    mock_backends: bool | None = None,
    seed: int | None = None,
) -> int:
    """Execute all stages; nonzero exit on the first stage failure."""
    config = load_pipeline_config(config_path)
    run = PipelineRun(config, mock_backends=mock_backends, seed=seed)
    return run.run()
