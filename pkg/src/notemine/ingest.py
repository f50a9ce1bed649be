"""Loading raw notes and tracking how many survive each preprocessing stage."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

FIELDS = ("note_id", "patient_id", "timestamp", "text")

# Stage names used in CorpusStats.dropped_note_ids.
NO_IMPRESSION = "no_impression"
EMPTIED = "emptied_by_preprocessing"


class CorpusError(ValueError):
    """Raised for unreadable or malformed corpus files."""


@dataclass(frozen=True)
class ClinicalNote:
    note_id: str
    raw_text: str
    patient_id: str = ""
    timestamp: Optional[str] = None

    def to_record(self) -> dict:
        return {
            "note_id": self.note_id,
            "patient_id": self.patient_id,
            "timestamp": self.timestamp,
            "text": self.raw_text,
        }


@dataclass
class CorpusStats:
    total_notes: int = 0
    notes_with_impression: int = 0
    notes_nonempty_after_preprocess: int = 0
    dropped_note_ids: List[Tuple[str, str]] = field(default_factory=list)

    def drop(self, note_id: str, stage: str) -> None:
        self.dropped_note_ids.append((note_id, stage))

    def drops_by_stage(self) -> dict:
        counts = {NO_IMPRESSION: 0, EMPTIED: 0}
        for _, stage in self.dropped_note_ids:
            counts[stage] = counts.get(stage, 0) + 1
        return counts

    def check(self) -> None:
        """Validate funnel monotonicity and drop bookkeeping."""
        if not (self.total_notes >= self.notes_with_impression
                >= self.notes_nonempty_after_preprocess >= 0):
            raise ValueError(
                "funnel counts are not monotone: "
                f"{self.total_notes} / {self.notes_with_impression} / "
                f"{self.notes_nonempty_after_preprocess}")
        ids = [note_id for note_id, _ in self.dropped_note_ids]
        if len(ids) != len(set(ids)):
            raise ValueError("a note id was dropped more than once")
        if ids:
            by_stage = self.drops_by_stage()
            expected = {
                NO_IMPRESSION: self.total_notes - self.notes_with_impression,
                EMPTIED: self.notes_with_impression - self.notes_nonempty_after_preprocess,
            }
            if by_stage != expected:
                raise ValueError(f"drop list {by_stage} disagrees with counts {expected}")

    def to_dict(self) -> dict:
        return {
            "total_notes": self.total_notes,
            "notes_with_impression": self.notes_with_impression,
            "notes_nonempty_after_preprocess": self.notes_nonempty_after_preprocess,
            "dropped_note_ids": [list(pair) for pair in self.dropped_note_ids],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CorpusStats":
        return cls(
            total_notes=int(data["total_notes"]),
            notes_with_impression=int(data["notes_with_impression"]),
            notes_nonempty_after_preprocess=int(data["notes_nonempty_after_preprocess"]),
            dropped_note_ids=[tuple(pair) for pair in data.get("dropped_note_ids", [])],
        )


def _note_from_record(record: dict, where: str) -> ClinicalNote:
    if not isinstance(record, dict):
        raise CorpusError(f"{where}: record is not an object")
    note_id = record.get("note_id")
    text = record.get("text", record.get("raw_text"))
    if note_id is None or str(note_id) == "":
        raise CorpusError(f"{where}: missing note_id")
    if not isinstance(text, str) or text == "":
        raise CorpusError(f"{where}: missing or empty text")
    timestamp = record.get("timestamp")
    return ClinicalNote(
        note_id=str(note_id),
        raw_text=text,
        patient_id="" if record.get("patient_id") is None else str(record["patient_id"]),
        timestamp=None if timestamp in (None, "") else str(timestamp),
    )


def _read_jsonl(path: Path) -> Iterable[Tuple[str, dict]]:
    with path.open("r", encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            yield f"{path}:{lineno}", record


def _read_csv(path: Path) -> Iterable[Tuple[str, dict]]:
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "note_id" not in reader.fieldnames:
            raise CorpusError(f"{path}:1: header must contain note_id and text")
        for record in reader:
            # line_num points at the last physical line of the record
            yield f"{path}:{reader.line_num}", record


def load_corpus(path, format: Optional[str] = None,
                stats: Optional[CorpusStats] = None) -> List[ClinicalNote]:
    """Read notes from a JSONL or CSV file, preserving file order.

    ``format`` defaults to the file suffix. Duplicate note ids and malformed
    records raise :class:`CorpusError` naming the offending line.
    """
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    if format not in ("jsonl", "csv"):
        raise CorpusError(f"unsupported corpus format {format!r}")
    if not path.is_file():
        raise CorpusError(f"cannot read corpus file {path}")
    reader = _read_jsonl if format == "jsonl" else _read_csv
    notes: List[ClinicalNote] = []
    seen = {}
    try:
        for where, record in reader(path):
            note = _note_from_record(record, where)
            if note.note_id in seen:
                raise CorpusError(
                    f"{where}: duplicate note_id {note.note_id!r} "
                    f"(first seen at {seen[note.note_id]})")
            seen[note.note_id] = where
            notes.append(note)
    except (OSError, UnicodeDecodeError) as exc:
        raise CorpusError(f"cannot read corpus file {path}: {exc}") from exc
    if stats is not None:
        stats.total_notes = len(notes)
    return notes


def write_corpus(notes: Iterable[ClinicalNote], path, format: str = "jsonl") -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        if format == "jsonl":
            for note in notes:
                fh.write(json.dumps(note.to_record(), ensure_ascii=False) + "\n")
        elif format == "csv":
            writer = csv.DictWriter(fh, fieldnames=FIELDS)
            writer.writeheader()
            for note in notes:
                writer.writerow(note.to_record())
        else:
            raise CorpusError(f"unsupported corpus format {format!r}")


def funnel_report(stats: CorpusStats) -> str:
    """Summarise the note funnel as plain text.

    >>> print(funnel_report(CorpusStats(15966, 6614, 6347)))
    notes loaded:                     15966
    notes with IMPRESSION:             6614  (dropped 9352)
    notes non-empty after cleaning:    6347  (dropped 267)
    """
    stats.check()
    lines = [
        f"notes loaded:                   {stats.total_notes:7d}",
        f"notes with IMPRESSION:          {stats.notes_with_impression:7d}"
        f"  (dropped {stats.total_notes - stats.notes_with_impression})",
        f"notes non-empty after cleaning: {stats.notes_nonempty_after_preprocess:7d}"
        f"  (dropped {stats.notes_with_impression - stats.notes_nonempty_after_preprocess})",
    ]
    return "\n".join(lines)
