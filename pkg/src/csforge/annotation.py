"""Annotation store, spreadsheet export/import, and the task HTTP API.

Persistence is an append-only line-delimited event log plus an in-memory
index rebuilt on startup; replaying the log reconstructs identical state and
keeps the full audit trail. The spreadsheet schema is the 7-column sheet the
annotators work in:

    hatespeech, hateScore, userEnteredResponse,
    generatedRespnse1 .. generatedRespnse4

(the column spelling is preserved verbatim for compatibility with existing
sheets). hateScore takes 1 (hate speech), -1 (counterspeech), or 0 (neither);
a row labeled 1 must carry a counterspeech in userEnteredResponse.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from pydantic import BaseModel

from .records import PairRecord, read_jsonl

logger = logging.getLogger(__name__)

SHEET_COLUMNS = [
    "hatespeech",
    "hateScore",
    "userEnteredResponse",
    "generatedRespnse1",
    "generatedRespnse2",
    "generatedRespnse3",
    "generatedRespnse4",
]

VALID_LABELS = (1, -1, 0)
DEFAULT_LEASE_SECONDS = 30 * 60


@dataclass
class AnnotationRecord:
    hs_id: str
    annotator_id: str
    hate_label: int
    selected_index: int | None = None
    edited_response: str | None = None
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        if self.hate_label not in VALID_LABELS:
            raise ValueError(f"hate_label must be one of {VALID_LABELS}")
        if self.hate_label == 1 and not (self.edited_response or "").strip():
            raise ValueError("a confirmed hate-speech row needs a counterspeech response")
        if self.selected_index is not None and self.selected_index < 1:
            raise ValueError("selected_index is 1-based")

    def to_dict(self) -> dict:
        return {
            "hs_id": self.hs_id,
            "annotator_id": self.annotator_id,
            "hate_label": self.hate_label,
            "selected_index": self.selected_index,
            "edited_response": self.edited_response,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnnotationRecord":
        return cls(
            hs_id=d["hs_id"],
            annotator_id=d["annotator_id"],
            hate_label=int(d["hate_label"]),
            selected_index=d.get("selected_index"),
            edited_response=d.get("edited_response"),
            timestamp=float(d.get("timestamp", 0.0)),
        )


class SubmitError(Exception):
    def __init__(self, message: str, field_name: str | None = None, not_found: bool = False):
        super().__init__(message)
        self.field_name = field_name
        self.not_found = not_found


@dataclass
class ImportResult:
    accepted: list[AnnotationRecord] = field(default_factory=list)
    rejected: list[tuple[int, str]] = field(default_factory=list)


class AnnotationStore:
    """Pairs, annotations, and leases backed by one append-only log.

    Leases live in memory only: after a restart every unfinished pair is
    handed out again, which is the safe behaviour for a human-paced queue.
    """

    def __init__(
        self,
        store_dir: str | Path,
        lease_seconds: float = DEFAULT_LEASE_SECONDS,
        clock=time.monotonic,
        wall_clock=time.time,
    ) -> None:
        self.store_dir = Path(store_dir)
        self.store_dir.mkdir(parents=True, exist_ok=True)
        self.log_path = self.store_dir / "events.jsonl"
        self.lease_seconds = lease_seconds
        self._clock = clock
        self._wall_clock = wall_clock
        self.pairs: dict[str, PairRecord] = {}
        self.annotations: dict[tuple[str, str], AnnotationRecord] = {}
        self.audit: list[dict] = []
        self._leases: dict[str, tuple[str, float]] = {}
        self._text_to_id: dict[str, str] = {}
        self._replay()

    # -- persistence ------------------------------------------------------

    def _replay(self) -> None:
        if not self.log_path.is_file():
            return
        for event in read_jsonl(self.log_path):
            kind = event.get("type")
            if kind == "pair":
                pair = PairRecord.from_dict(event["pair"])
                self.pairs[pair.hs_id] = pair
                self._text_to_id[pair.hs_text] = pair.hs_id
            elif kind == "annotation":
                ann = AnnotationRecord.from_dict(event["annotation"])
                self.annotations[(ann.hs_id, ann.annotator_id)] = ann
            elif kind == "audit":
                self.audit.append(event)

    def _append(self, events: list[dict]) -> None:
        # One write call per batch so partially applied imports cannot occur.
        lines = "".join(
            json.dumps(e, ensure_ascii=False, sort_keys=True) + "\n" for e in events
        )
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(lines)

    # -- pairs and status -------------------------------------------------

    def add_pairs(self, pairs: list[PairRecord]) -> int:
        events = []
        added = 0
        for pair in pairs:
            if pair.hs_id in self.pairs:
                continue
            self.pairs[pair.hs_id] = pair
            self._text_to_id[pair.hs_text] = pair.hs_id
            events.append({"type": "pair", "pair": pair.to_dict()})
            added += 1
        if events:
            self._append(events)
        return added

    def _lease_active(self, hs_id: str) -> tuple[str, float] | None:
        lease = self._leases.get(hs_id)
        if lease is None:
            return None
        if lease[1] <= self._clock():
            del self._leases[hs_id]
            return None
        return lease

    def status_of(self, hs_id: str) -> str:
        if any(key[0] == hs_id for key in self.annotations):
            return "DONE"
        if self._lease_active(hs_id):
            return "IN_PROGRESS"
        return "UNANNOTATED"

    def get_pair(self, hs_id: str) -> PairRecord | None:
        pair = self.pairs.get(hs_id)
        if pair is not None:
            pair.status = self.status_of(hs_id)
        return pair

    # -- task queue -------------------------------------------------------

    def next_task(self, annotator_id: str) -> PairRecord | None:
        """Oldest unannotated, unleased pair; leases it for this annotator."""
        for hs_id, pair in self.pairs.items():
            if self.status_of(hs_id) != "UNANNOTATED":
                continue
            self._leases[hs_id] = (annotator_id, self._clock() + self.lease_seconds)
            pair.status = "IN_PROGRESS"
            return pair
        return None

    # -- submission -------------------------------------------------------

    def submit(self, annotation: AnnotationRecord, require_lease: bool = True) -> dict:
        pair = self.pairs.get(annotation.hs_id)
        if pair is None:
            raise SubmitError(f"unknown hs_id {annotation.hs_id!r}", not_found=True)
        if annotation.selected_index is not None and annotation.selected_index > len(
            pair.candidates
        ):
            raise SubmitError(
                f"selected_index {annotation.selected_index} exceeds "
                f"{len(pair.candidates)} candidates",
                field_name="selected_index",
            )
        lease = self._lease_active(annotation.hs_id)
        key = (annotation.hs_id, annotation.annotator_id)
        if lease is not None and lease[0] != annotation.annotator_id:
            raise SubmitError(
                f"pair is being annotated by {lease[0]!r}", field_name="hs_id"
            )
        if require_lease and lease is None and key not in self.annotations:
            raise SubmitError(
                "pair is not checked out by this annotator", field_name="hs_id"
            )

        if annotation.timestamp == 0.0:
            annotation.timestamp = self._wall_clock()
        events: list[dict] = []
        replaced = key in self.annotations
        if replaced:
            events.append(
                {
                    "type": "audit",
                    "action": "replaced",
                    "hs_id": annotation.hs_id,
                    "annotator_id": annotation.annotator_id,
                    "at": annotation.timestamp,
                }
            )
        events.append({"type": "annotation", "annotation": annotation.to_dict()})
        self._append(events)
        if replaced:
            self.audit.append(events[0])
        self.annotations[key] = annotation
        self._leases.pop(annotation.hs_id, None)
        pair.status = "DONE"
        return {"status": "ok", "hs_id": annotation.hs_id, "replaced": replaced}

    # -- progress ---------------------------------------------------------

    def progress(self) -> dict:
        by_status = {"UNANNOTATED": 0, "IN_PROGRESS": 0, "DONE": 0}
        for hs_id in self.pairs:
            by_status[self.status_of(hs_id)] += 1
        by_label = {"1": 0, "-1": 0, "0": 0}
        for ann in self.annotations.values():
            by_label[str(ann.hate_label)] += 1
        return {
            "total_pairs": len(self.pairs),
            "by_status": by_status,
            "by_label": by_label,
            "annotations": len(self.annotations),
        }

    # -- spreadsheet ------------------------------------------------------

    def import_annotations(self, path: str | Path, annotator_id: str) -> ImportResult:
        """Validate a filled sheet row by row; persist all accepted rows at once."""
        result = ImportResult()
        rows = read_sheet(path)
        for row_no, row in enumerate(rows, start=2):
            hs_text = row["hatespeech"]
            hs_id = self._text_to_id.get(hs_text)
            if hs_id is None:
                result.rejected.append((row_no, "unknown hate-speech text"))
                continue
            raw_label = str(row["hateScore"]).strip()
            try:
                label = int(raw_label)
                if label not in VALID_LABELS:
                    raise ValueError
            except ValueError:
                result.rejected.append((row_no, f"invalid label {raw_label!r}"))
                continue
            response = row["userEnteredResponse"]
            if label == 1 and not response.strip():
                result.rejected.append((row_no, "label 1 requires a response"))
                continue
            pair = self.pairs[hs_id]
            selected = None
            for idx, cand in enumerate(pair.candidates, start=1):
                if response == cand.text:
                    selected = idx
                    break
            result.accepted.append(
                AnnotationRecord(
                    hs_id=hs_id,
                    annotator_id=annotator_id,
                    hate_label=label,
                    selected_index=selected,
                    edited_response=response or None,
                    timestamp=self._wall_clock(),
                )
            )
        events = []
        for ann in result.accepted:
            key = (ann.hs_id, ann.annotator_id)
            if key in self.annotations:
                events.append(
                    {
                        "type": "audit",
                        "action": "replaced",
                        "hs_id": ann.hs_id,
                        "annotator_id": ann.annotator_id,
                        "at": ann.timestamp,
                    }
                )
            events.append({"type": "annotation", "annotation": ann.to_dict()})
            self.annotations[key] = ann
        if events:
            self._append(events)
            self.audit.extend(e for e in events if e["type"] == "audit")
        return result


def export_tasks(pairs: list[PairRecord], annotator_id: str, path: str | Path) -> Path:
    """Write the 7-column task sheet; hateScore and userEnteredResponse blank."""
    if not pairs:
        raise ValueError("no pairs to export")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SHEET_COLUMNS)
        for pair in pairs:
            texts = [c.text for c in pair.candidates[:4]]
            texts += [""] * (4 - len(texts))
            writer.writerow([pair.hs_text, "", ""] + texts)
    logger.info("exported %d tasks for %s to %s", len(pairs), annotator_id, path)
    return path


def read_sheet(path: str | Path) -> list[dict]:
    """Parse a sheet back into row dicts, preserving embedded quoting."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in SHEET_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"sheet missing columns: {missing}")
        return [{c: (row.get(c) or "") for c in SHEET_COLUMNS} for row in reader]


class AnnotationIn(BaseModel):
    """POST /api/annotations request body."""

    hs_id: str
    annotator_id: str
    hate_label: int
    selected_index: int | None = None
    edited_response: str | None = None


def create_app(store: AnnotationStore, static_dir: str | Path | None = None):
    """FastAPI app exposing the task queue, submissions, and progress."""
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import JSONResponse

    app = FastAPI(title="annotation service")

    @app.get("/api/tasks/next")
    def next_task(annotator: str):
        pair = store.next_task(annotator)
        return {"task": None if pair is None else pair.to_dict()}

    @app.post("/api/annotations")
    def submit(body: AnnotationIn):
        try:
            record = AnnotationRecord(
                hs_id=body.hs_id,
                annotator_id=body.annotator_id,
                hate_label=body.hate_label,
                selected_index=body.selected_index,
                edited_response=body.edited_response,
            )
        except ValueError as exc:
            return JSONResponse(status_code=400, content={"errors": {"annotation": str(exc)}})
        try:
            return store.submit(record)
        except SubmitError as exc:
            if exc.not_found:
                raise HTTPException(status_code=404, detail=str(exc))
            return JSONResponse(
                status_code=400,
                content={"errors": {exc.field_name or "annotation": str(exc)}},
            )

    @app.get("/api/progress")
    def progress():
        return store.progress()

    @app.get("/api/pairs/{hs_id}")
    def get_pair(hs_id: str):
        pair = store.get_pair(hs_id)
        if pair is None:
            raise HTTPException(status_code=404, detail=f"unknown hs_id {hs_id!r}")
        return pair.to_dict()

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
