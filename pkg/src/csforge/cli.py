"""cs-forge command line: one subcommand per pipeline stage plus `run`."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import analysis as analysis_mod
from . import backends as backends_mod
from . import ingest as ingest_mod
from .anneal import AnnealConfig, run_batch
from .annotation import (
    DEFAULT_LEASE_SECONDS,
    AnnotationRecord,
    AnnotationStore,
    export_tasks,
)
from .optimize import (
    OptimizerConfig,
    apply_thresholds,
    grid_search,
    score_records,
    write_heatmap_csv,
)
from .pipeline import parse_grid, run_pipeline, stage_seed
from .records import HateSpeechRecord, read_jsonl, write_jsonl
from .tournament import tournament_for_pairs, write_matrix_csv

logger = logging.getLogger(__name__)


def _judge_from_args(args):
    if getattr(args, "mock_backends", False):
        return backends_mod.MockJudge()
    if getattr(args, "judge_config", None):
        cfg = backends_mod.from_config_file(args.judge_config)[0]
        return backends_mod.HttpChatBackend(cfg)
    return None


def _generators_from_args(args):
    if getattr(args, "mock_backends", False):
        return [backends_mod.MockGenerator("mock-gen-a"), backends_mod.MockGenerator("mock-gen-b")]
    if getattr(args, "backend_config", None):
        return [
            backends_mod.HttpChatBackend(cfg)
            for cfg in backends_mod.from_config_file(args.backend_config)
        ]
    return None


def _load_records(path) -> list[HateSpeechRecord]:
    return [HateSpeechRecord.from_dict(d) for d in read_jsonl(path)]


def cmd_ingest(args) -> int:
    schema = ingest_mod.load_schema_file(args.schema) if args.schema else None
    result = ingest_mod.load_records(args.source.upper(), args.input, schema)
    write_jsonl(args.output, (r.to_dict() for r in result.records))
    print(
        f"ingest: kept {len(result.records)} records "
        f"({result.filtered_out} filtered, {len(result.skipped)} malformed rows skipped)"
    )
    for row_no, reason in result.skipped:
        logger.warning("row %d skipped: %s", row_no, reason)
    return 0


def cmd_score(args) -> int:
    judge = _judge_from_args(args)
    if judge is None:
        print("score: need --judge-config or --mock-backends", file=sys.stderr)
        return 2
    records = _load_records(args.records)
    seed_examples = []
    if args.seed_examples:
        with open(args.seed_examples, encoding="utf-8") as fh:
            seed_examples = [tuple(x) for x in json.load(fh)]
    report = score_records(records, judge, seed_examples, args.max_in_flight)
    scored = [r for r in records if r.hate_score is not None]
    write_jsonl(args.out, (r.to_dict() for r in scored))
    print(f"score: {report.scored} scored, {len(report.unscored)} unscored")
    return 0


def cmd_optimize(args) -> int:
    records = _load_records(args.records)
    cfg = OptimizerConfig(
        size_min=args.size_min,
        size_max=args.size_max,
        length_grid=parse_grid(args.len_grid),
        score_grid=parse_grid(args.score_grid),
    )
    best, heatmap = grid_search(records, cfg)
    write_heatmap_csv(heatmap, args.heatmap_out)
    print(
        f"optimize: best thresholds (min_length={best.min_length}, "
        f"min_score={best.min_score}) keep {best.subset_size} records, "
        f"objective {best.objective:.1f}"
    )
    if args.selected_out:
        selected = apply_thresholds(records, best.min_length, best.min_score)
        write_jsonl(args.selected_out, (r.to_dict() for r in selected))
        print(f"optimize: wrote {len(selected)} selected records")
    return 0


def cmd_anneal(args) -> int:
    generators = _generators_from_args(args)
    judge = _judge_from_args(args)
    if generators is None or judge is None:
        print("anneal: need backend configs or --mock-backends", file=sys.stderr)
        return 2
    records = _load_records(args.records)
    cfg = AnnealConfig.from_file(args.config)
    if args.seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, rng_seed=stage_seed(args.seed, "anneal"))
    report = run_batch(records, cfg, generators, judge, args.out, resume=args.resume)
    print(
        f"anneal: {report.completed} annealed, {report.resumed} resumed, "
        f"{len(report.failed)} failed, {report.candidates_written} candidates written"
    )
    return 0


def cmd_tournament(args) -> int:
    judge = _judge_from_args(args)
    if judge is None:
        print("tournament: need --judge-config or --mock-backends", file=sys.stderr)
        return 2
    rows = list(read_jsonl(args.candidates))
    pairs, matrix_rows = tournament_for_pairs(rows, judge, keep=args.keep)
    write_jsonl(args.out, pairs)
    if args.matrix_out:
        write_matrix_csv(matrix_rows, args.matrix_out)
    print(f"tournament: ranked {len(pairs)} pools, kept top {args.keep}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .annotation import create_app

    store = AnnotationStore(args.store, lease_seconds=args.lease_seconds)
    if args.pairs:
        from .pipeline import _pair_from_row

        added = store.add_pairs([_pair_from_row(row) for row in read_jsonl(args.pairs)])
        print(f"serve: loaded {added} new pairs into the store")
    app = create_app(store, static_dir=args.static_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def cmd_export_annotation(args) -> int:
    store = AnnotationStore(args.store)
    pairs = list(store.pairs.values())
    export_tasks(pairs, args.annotator, args.out)
    print(f"export-annotation: wrote {len(pairs)} rows to {args.out}")
    return 0


def cmd_import_annotation(args) -> int:
    store = AnnotationStore(args.store)
    result = store.import_annotations(args.sheet, args.annotator)
    print(
        f"import-annotation: {len(result.accepted)} accepted, "
        f"{len(result.rejected)} rejected"
    )
    for row_no, reason in result.rejected:
        print(f"  row {row_no}: {reason}", file=sys.stderr)
    return 0


def _read_annotations_file(path) -> list[AnnotationRecord]:
    out = []
    for row in read_jsonl(path):
        if row.get("type") == "annotation":
            row = row["annotation"]
        elif "type" in row:
            continue
        out.append(AnnotationRecord.from_dict(row))
    return out


def cmd_analyze(args) -> int:
    from .pipeline import _pair_from_row

    annotations = _read_annotations_file(args.annotations)
    if not annotations:
        print("analyze: no annotations found", file=sys.stderr)
        return 1
    pairs = {row["hs_id"]: _pair_from_row(row) for row in read_jsonl(args.pairs)}
    distribution = analysis_mod.label_distribution([a.hate_label for a in annotations])
    judge = _judge_from_args(args)
    study = None
    if judge is not None:
        with_responses = [a for a in annotations if a.edited_response]
        if with_responses:
            study = analysis_mod.human_rank_study(with_responses, pairs, judge)
    analysis_mod.write_report(args.report, distribution, study)
    if study is not None and args.histogram_out:
        analysis_mod.write_histogram_csv(study, args.histogram_out)
    print(f"analyze: report written to {args.report}")
    if study is not None and study.combined is not None:
        print(
            f"analyze: combined rank test t={study.combined.t_statistic:.2f} "
            f"p={study.combined.p_value:.3g} (n={len(study.combined_ranks)})"
        )
    return 0


def cmd_run(args) -> int:
    mock = True if args.mock_backends else None
    return run_pipeline(args.config, mock_backends=mock, seed=args.seed)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cs-forge",
        description="Filter hate-speech corpora, search counterspeech, rank, annotate, analyze.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="global run seed")
    common.add_argument(
        "--mock-backends", action="store_true", help="use deterministic offline backends"
    )
    common.add_argument("--judge-config", help="JSON backend config for the judge")
    common.add_argument("--backend-config", help="JSON list of generator backend configs")

    p = sub.add_parser("ingest", help="load and filter one source corpus")
    p.add_argument("--source", required=True, choices=["cold", "swsr", "chsd", "custom"])
    p.add_argument("--input", required=True)
    p.add_argument("--schema", help="JSON column-name mapping")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("score", parents=[common], help="judge-score records for hate severity")
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed-examples", help="JSON list of [text, score] calibration pairs")
    p.add_argument("--max-in-flight", type=int, default=4)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("optimize", help="grid-search (min length, min score) thresholds")
    p.add_argument("--records", required=True)
    p.add_argument("--size-min", type=int, default=500)
    p.add_argument("--size-max", type=int, default=3000)
    p.add_argument("--len-grid", required=True, help="a..b inclusive integer range")
    p.add_argument("--score-grid", required=True, help="a..b inclusive integer range")
    p.add_argument("--heatmap-out", required=True)
    p.add_argument("--selected-out")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("anneal", parents=[common], help="search counterspeech per record")
    p.add_argument("--records", required=True)
    p.add_argument("--config", required=True, help="JSON file of search parameters")
    p.add_argument("--out", required=True)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_anneal)

    p = sub.add_parser("tournament", parents=[common], help="round-robin rank candidate pools")
    p.add_argument("--candidates", required=True)
    p.add_argument("--keep", type=int, default=4)
    p.add_argument("--out", required=True)
    p.add_argument("--matrix-out")
    p.set_defaults(func=cmd_tournament)

    p = sub.add_parser("serve", help="run the annotation HTTP service")
    p.add_argument("--store", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--pairs", help="pairs file to load into the store first")
    p.add_argument("--static-dir", help="directory with the annotator UI build")
    p.add_argument(
        "--lease-seconds", type=float, default=DEFAULT_LEASE_SECONDS,
        help="how long a checked-out task stays reserved",
    )
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("export-annotation", help="write the 7-column task sheet")
    p.add_argument("--store", required=True)
    p.add_argument("--annotator", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_annotation)

    p = sub.add_parser("import-annotation", help="import a filled task sheet")
    p.add_argument("--store", required=True)
    p.add_argument("--annotator", required=True)
    p.add_argument("--sheet", required=True)
    p.set_defaults(func=cmd_import_annotation)

    p = sub.add_parser("analyze", parents=[common], help="label stats and rank study")
    p.add_argument("--annotations", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--histogram-out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("run", parents=[common], help="run the full staged pipeline")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_run)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except Exception as exc:
        print(f"cs-forge {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
