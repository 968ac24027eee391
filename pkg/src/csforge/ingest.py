"""Load hate-speech corpora, apply per-source keep rules, normalize records.

Keep rules per source:
  CHSD   keep label != 0
  COLD   keep label == 1 and sublabel in {1, 2}
  SWSR   keep label == 1 and category != "MA"
  CUSTOM keep everything

Input files are comma-delimited UTF-8 with a header row. Column names are
configurable per source through a schema mapping so the loaders are not tied
to any particular release's file layout.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .records import HateSpeechRecord, Source

logger = logging.getLogger(__name__)

# Default column names per source; override via a schema mapping file.
DEFAULT_SCHEMAS = {
    Source.CHSD: {"text": "text", "label": "label"},
    Source.COLD: {"text": "text", "label": "label", "sublabel": "sublabel"},
    Source.SWSR: {"text": "text", "label": "label", "sublabel": "category"},
    Source.CUSTOM: {"text": "text", "label": "label"},
}


def keep_chsd(label: int, sublabel: str | None) -> bool:
    return label != 0


def keep_cold(label: int, sublabel: str | None) -> bool:
    return label == 1 and sublabel in ("1", "2")


def keep_swsr(label: int, sublabel: str | None) -> bool:
    return label == 1 and sublabel != "MA"


def keep_custom(label: int, sublabel: str | None) -> bool:
    return True


# Exactly one keep rule per source.
FILTER_RULES = {
    Source.CHSD: keep_chsd,
    Source.COLD: keep_cold,
    Source.SWSR: keep_swsr,
    Source.CUSTOM: keep_custom,
}


@dataclass
class LoadResult:
    """Kept records plus per-row diagnostics for everything skipped."""

    records: list[HateSpeechRecord] = field(default_factory=list)
    skipped: list[tuple[int, str]] = field(default_factory=list)
    filtered_out: int = 0

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


def load_schema_file(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def load_records(
    source: Source | str,
    path: str | Path,
    schema: dict | None = None,
    id_prefix: str | None = None,
) -> LoadResult:
    """Read one delimited corpus file and keep rows passing the source's rule.

    Malformed rows (missing columns, non-integer label) are skipped and
    tallied with their row number; they never abort the load.
    """
    source = Source(source)
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    columns = dict(DEFAULT_SCHEMAS[source])
    if schema:
        columns.update(schema)
    prefix = id_prefix if id_prefix is not None else source.value.lower()
    rule = FILTER_RULES[source]

    result = LoadResult()
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row_no, row in enumerate(reader, start=2):  # row 1 is the header
            try:
                text = row[columns["text"]]
                if text is None:
                    raise KeyError(columns["text"])
                label = int(str(row[columns["label"]]).strip())
                sublabel = None
                if "sublabel" in columns:
                    raw = row.get(columns["sublabel"])
                    sublabel = None if raw is None else str(raw).strip()
            except (KeyError, ValueError, TypeError) as exc:
                result.skipped.append((row_no, f"{type(exc).__name__}: {exc}"))
                continue
            if not text.strip():
                result.skipped.append((row_no, "empty text"))
                continue
            if not rule(label, sublabel):
                result.filtered_out += 1
                continue
            result.records.append(
                HateSpeechRecord(
                    id=f"{prefix}-{row_no - 1:06d}",
                    source=source,
                    text=text,
                    source_label=label,
                    source_sublabel=sublabel,
                )
            )
    if result.skipped:
        logger.warning("%s: skipped %d malformed rows in %s", source.value, len(result.skipped), path)
    return result


def load_chsd(path: str | Path, schema: dict | None = None) -> LoadResult:
    return load_records(Source.CHSD, path, schema)


def load_cold(path: str | Path, schema: dict | None = None) -> LoadResult:
    return load_records(Source.COLD, path, schema)


def load_swsr(path: str | Path, schema: dict | None = None) -> LoadResult:
    return load_records(Source.SWSR, path, schema)


def merge_sources(*lists: list[HateSpeechRecord] | LoadResult) -> list[HateSpeechRecord]:
    """Concatenate record lists, collapsing exact-duplicate texts.

    First occurrence wins. The sources overlap by construction (one corpus is
    a preprocessed blend of the others), so duplicates are expected.
    """
    merged: list[HateSpeechRecord] = []
    seen_texts: set[str] = set()
    seen_ids: set[str] = set()
    for records in lists:
        for rec in records:
            if rec.text in seen_texts:
                continue
            if rec.id in seen_ids:
                raise ValueError(f"duplicate record id across sources: {rec.id}")
            seen_texts.add(rec.text)
            seen_ids.add(rec.id)
            merged.append(rec)
    return merged
