"""Shared domain records and line-delimited JSON persistence helpers."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator


class Source(str, Enum):
    COLD = "COLD"
    SWSR = "SWSR"
    CHSD = "CHSD"
    CUSTOM = "CUSTOM"


class Origin(str, Enum):
    SEED = "SEED"
    PERTURBED = "PERTURBED"
    GENERATED = "GENERATED"
    HUMAN = "HUMAN"


@dataclass
class HateSpeechRecord:
    """One source sentence with its origin labels and (later) a judge hate score."""

    id: str
    source: Source
    text: str
    source_label: int
    source_sublabel: str | None = None
    char_length: int = 0
    hate_score: int | None = None

    def __post_init__(self) -> None:
        if isinstance(self.source, str):
            self.source = Source(self.source)
        # char_length counts Unicode scalar values, not bytes.
        self.char_length = len(self.text)
        if self.hate_score is not None and not 0 <= self.hate_score <= 100:
            raise ValueError(f"hate_score {self.hate_score} outside [0, 100]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["source"] = self.source.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HateSpeechRecord":
        return cls(
            id=d["id"],
            source=Source(d["source"]),
            text=d["text"],
            source_label=int(d["source_label"]),
            source_sublabel=d.get("source_sublabel"),
            hate_score=d.get("hate_score"),
        )


@dataclass
class CandidateResponse:
    """One counterspeech text together with how it was produced and how it scored."""

    text: str
    energy: float | None = None
    origin: Origin = Origin.GENERATED
    backend_id: str | None = None
    iteration: int = 0

    def __post_init__(self) -> None:
        if isinstance(self.origin, str):
            self.origin = Origin(self.origin)
        if not self.text and self.origin is not Origin.SEED:
            raise ValueError("candidate text may be empty only for SEED candidates")
        if self.energy is not None:
            e = float(self.energy)
            if e != e or e in (float("inf"), float("-inf")):
                raise ValueError("candidate energy must be finite")
            self.energy = e
        if self.iteration < 0:
            raise ValueError("iteration must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["origin"] = self.origin.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CandidateResponse":
        return cls(
            text=d["text"],
            energy=d.get("energy"),
            origin=Origin(d.get("origin", "GENERATED")),
            backend_id=d.get("backend_id"),
            iteration=int(d.get("iteration", 0)),
        )


@dataclass
class PairRecord:
    """A hate-speech sentence with its ranked counterspeech candidates."""

    hs_id: str
    hs_text: str
    candidates: list[CandidateResponse] = field(default_factory=list)
    status: str = "UNANNOTATED"

    def to_dict(self) -> dict:
        return {
            "hs_id": self.hs_id,
            "hs_text": self.hs_text,
            "candidates": [c.to_dict() for c in self.candidates],
            "status": self.status,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PairRecord":
        return cls(
            hs_id=d["hs_id"],
            hs_text=d["hs_text"],
            candidates=[CandidateResponse.from_dict(c) for c in d["candidates"]],
            status=d.get("status", "UNANNOTATED"),
        )


def write_jsonl(path: str | Path, rows: Iterable[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def append_jsonl(path: str | Path, row: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def read_jsonl(path: str | Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)
