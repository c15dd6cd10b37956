"""Corpus and accuracy-record file formats.

Two file families are shared by every other module:

* labeled corpora — CSV (``doc_id,label,text``, RFC-4180 quoted) or JSONL
  (one object per line with ``doc_id``, ``label``, ``text``);
* accuracy results — CSV with the exact header
  ``lm_type,task_id,subsample_index,m,n,correct_base,correct_extra,correct_test``.

Counts of correct predictions are stored rather than accuracy rates so that
binomial likelihoods are exact and round-trips are byte-identical. Parsing
never aborts on a bad row: rows are either accepted or reported with a
reason, preserving input order.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable


class EmptyCorpusError(ValueError):
    """No valid document survived parsing."""


class DegenerateCorpusError(ValueError):
    """Fewer than two label classes in the corpus."""


@dataclass(frozen=True)
class CorpusDocument:
    doc_id: str
    text: str
    label: str


@dataclass(frozen=True)
class AccuracyRecord:
    """One paired trial outcome: three correct-prediction counts on one split."""

    lm_type: str
    task_id: str
    subsample_index: int
    m: int
    n: int
    correct_base: int
    correct_extra: int
    correct_test: int

    @property
    def key(self) -> tuple[str, str, int, int, int]:
        return (self.lm_type, self.task_id, self.subsample_index, self.m, self.n)


@dataclass
class IngestReport:
    rows_read: int = 0
    rows_rejected: int = 0
    rejection_reasons: list[tuple[int, str]] = field(default_factory=list)

    def reject(self, row: int, reason: str) -> None:
        self.rows_rejected += 1
        self.rejection_reasons.append((row, reason))


ACCURACY_HEADER = (
    "lm_type,task_id,subsample_index,m,n,correct_base,correct_extra,correct_test"
)
_ACCURACY_FIELDS = ACCURACY_HEADER.split(",")
CORPUS_CSV_HEADER = "doc_id,label,text"


def _corpus_rows_csv(path: Path) -> Iterable[tuple[int, dict]]:
    with path.open("r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        for ordinal, raw in enumerate(reader, start=1):
            yield ordinal, raw


def _corpus_rows_jsonl(path: Path) -> Iterable[tuple[int, dict]]:
    with path.open("r", encoding="utf-8") as f:
        for ordinal, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                yield ordinal, {"__error__": f"invalid JSON: {e.msg}"}
                continue
            if not isinstance(obj, dict):
                yield ordinal, {"__error__": "row is not an object"}
                continue
            yield ordinal, obj


def parse_corpus(
    path: str | Path, format: str | None = None
) -> tuple[list[CorpusDocument], IngestReport]:
    """Load a labeled corpus, validating per row.

    ``format`` is ``"csv"`` or ``"jsonl"``; when omitted it is inferred from
    the file suffix. Rows with a missing id, label, or text, or with a
    duplicate ``doc_id``, are reported and skipped. Raises
    :class:`EmptyCorpusError` if nothing valid remains and
    :class:`DegenerateCorpusError` if fewer than two label classes do.
    """
    p = Path(path)
    if format is None:
        format = "jsonl" if p.suffix.lower() in (".jsonl", ".ndjson") else "csv"
    if format not in ("csv", "jsonl"):
        raise ValueError(f"unknown corpus format: {format!r}")

    rows = _corpus_rows_csv(p) if format == "csv" else _corpus_rows_jsonl(p)
    report = IngestReport()
    docs: list[CorpusDocument] = []
    seen_ids: set[str] = set()
    for ordinal, raw in rows:
        report.rows_read += 1
        if "__error__" in raw:
            report.reject(ordinal, raw["__error__"])
            continue
        doc_id = raw.get("doc_id")
        label = raw.get("label")
        text = raw.get("text")
        if doc_id is None or str(doc_id) == "":
            report.reject(ordinal, "missing doc_id")
            continue
        if label is None or str(label) == "":
            report.reject(ordinal, "missing label")
            continue
        if text is None:
            report.reject(ordinal, "missing text")
            continue
        doc_id = str(doc_id)
        if doc_id in seen_ids:
            report.reject(ordinal, f"duplicate doc_id {doc_id!r}")
            continue
        seen_ids.add(doc_id)
        docs.append(CorpusDocument(doc_id=doc_id, text=str(text), label=str(label)))

    if not docs:
        raise EmptyCorpusError(f"no valid documents in {p}")
    labels = {d.label for d in docs}
    if len(labels) < 2:
        raise DegenerateCorpusError(
            f"corpus {p} has a single label class {labels.pop()!r}; need >= 2"
        )
    return docs, report


def corpus_labels(docs: Iterable[CorpusDocument]) -> list[str]:
    """Sorted distinct label set of a corpus."""
    return sorted({d.label for d in docs})


def _parse_int(value: str, name: str) -> int:
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ValueError(f"non-integer {name}: {value!r}") from None


def parse_accuracy_records(
    path: str | Path,
) -> tuple[list[AccuracyRecord], IngestReport]:
    """Read an accuracy CSV, rejecting out-of-range counts and duplicate keys."""
    p = Path(path)
    report = IngestReport()
    records: list[AccuracyRecord] = []
    seen_keys: set[tuple] = set()
    with p.open("r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{p}: empty file, expected header {ACCURACY_HEADER!r}")
        if header != _ACCURACY_FIELDS:
            raise ValueError(
                f"{p}: bad header {','.join(header)!r}, expected {ACCURACY_HEADER!r}"
            )
        for ordinal, row in enumerate(reader, start=1):
            report.rows_read += 1
            if len(row) != len(_ACCURACY_FIELDS):
                report.reject(ordinal, f"expected {len(_ACCURACY_FIELDS)} fields, got {len(row)}")
                continue
            try:
                rec = AccuracyRecord(
                    lm_type=row[0],
                    task_id=row[1],
                    subsample_index=_parse_int(row[2], "subsample_index"),
                    m=_parse_int(row[3], "m"),
                    n=_parse_int(row[4], "n"),
                    correct_base=_parse_int(row[5], "correct_base"),
                    correct_extra=_parse_int(row[6], "correct_extra"),
                    correct_test=_parse_int(row[7], "correct_test"),
                )
            except ValueError as e:
                report.reject(ordinal, str(e))
                continue
            reason = _invalid_record_reason(rec)
            if reason is not None:
                report.reject(ordinal, reason)
                continue
            if rec.key in seen_keys:
                report.reject(ordinal, f"duplicate key {rec.key!r}")
                continue
            seen_keys.add(rec.key)
            records.append(rec)
    return records, report


def _invalid_record_reason(rec: AccuracyRecord) -> str | None:
    for name in ("lm_type", "task_id"):
        value = getattr(rec, name)
        if value == "" or any(c in value for c in ',"\r\n'):
            return f"{name} must be nonempty and free of commas/quotes/newlines"
    if rec.subsample_index < 0:
        return "negative subsample_index"
    if rec.m < 0 or rec.n < 0:
        return "negative m or n"
    for name in ("correct_base", "correct_extra", "correct_test"):
        count = getattr(rec, name)
        if count < 0:
            return f"{name} negative"
        if count > rec.n:
            return f"{name} count exceeds n"
    return None


def write_accuracy_records(
    records: Iterable[AccuracyRecord], path: str | Path
) -> None:
    """Write records as accuracy CSV (LF line endings, exact header).

    ``write -> parse -> write`` is byte-identical for any valid record list.
    """
    buf = io.StringIO()
    buf.write(ACCURACY_HEADER + "\n")
    for rec in records:
        reason = _invalid_record_reason(rec)
        if reason is not None:
            raise ValueError(f"invalid record {rec.key!r}: {reason}")
        buf.write(
            f"{rec.lm_type},{rec.task_id},{rec.subsample_index},{rec.m},{rec.n},"
            f"{rec.correct_base},{rec.correct_extra},{rec.correct_test}\n"
        )
    Path(path).write_bytes(buf.getvalue().encode("utf-8"))
