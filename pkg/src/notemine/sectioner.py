"""Section parsing and token normalisation for procedure notes.

A note is split into labelled sections (EXAM, FINDINGS, IMPRESSION, ...).
Only the IMPRESSION text is analysed downstream; it is split into sentences
and each sentence is reduced to lowercase alphabetic tokens.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence

from .ingest import ClinicalNote

DEFAULT_LABELS = ("EXAM", "FINDINGS", "IMPRESSION")
IMPRESSION = "IMPRESSION"
OTHER = "OTHER"


@dataclass(frozen=True)
class Span:
    start: int  # character offsets into raw_text
    end: int
    text: str


@dataclass
class ParsedNote:
    note_id: str
    sections: Dict[str, Span] = field(default_factory=dict)

    @property
    def impression(self) -> str:
        return self.sections[IMPRESSION].text


@dataclass
class TokenizedDoc:
    note_id: str
    sentences: List[List[str]]

    @property
    def tokens(self) -> List[str]:
        return [tok for sent in self.sentences for tok in sent]

    def to_record(self) -> dict:
        return {"note_id": self.note_id, "sentences": self.sentences}

    @classmethod
    def from_record(cls, record: dict) -> "TokenizedDoc":
        return cls(str(record["note_id"]), [list(s) for s in record["sentences"]])


def _label_regex(labels: Sequence[str]) -> re.Pattern:
    alts = "|".join(re.escape(label) for label in sorted(labels, key=len, reverse=True))
    # Either an upper-case label opening a line (colon optional), or a label in
    # any case preceded by line start/whitespace and followed by a colon.
    return re.compile(
        rf"(?m)(?:^[ \t]*(?P<bare>{alts})\b[ \t]*:?"
        rf"|(?:^|(?<=\s))(?i:(?P<colon>{alts}))[ \t]*:)"
    )


def parse_sections(note: ClinicalNote, labels: Sequence[str] = DEFAULT_LABELS) -> ParsedNote:
    text = note.raw_text
    found = []
    for m in _label_regex(labels).finditer(text):
        name = (m.group("bare") or m.group("colon")).upper()
        found.append((m.start(m.lastindex), m.end(), name))

    sections: Dict[str, Span] = {}

    def add(name: str, start: int, end: int) -> None:
        # trim surrounding whitespace, keeping offsets exact
        while start < end and text[start].isspace():
            start += 1
        while end > start and text[end - 1].isspace():
            end -= 1
        if name not in sections and end > start:
            sections[name] = Span(start, end, text[start:end])

    first = found[0][0] if found else len(text)
    add(OTHER, 0, first)
    for i, (_, body_start, name) in enumerate(found):
        body_end = found[i + 1][0] if i + 1 < len(found) else len(text)
        add(name, body_start, body_end)
    return ParsedNote(note.note_id, sections)


def extract_impression(note: ClinicalNote,
                       labels: Sequence[str] = DEFAULT_LABELS) -> Optional[ParsedNote]:
    """Return the parsed note if it has a non-empty IMPRESSION section, else None."""
    labels = tuple(labels) if IMPRESSION in labels else tuple(labels) + (IMPRESSION,)
    parsed = parse_sections(note, labels)
    return parsed if IMPRESSION in parsed.sections else None


_LIST_MARKER = re.compile(r"(?:^|(?<=\s))\d+\.(?=\s|$)")
_BOUNDARY = re.compile(r"[!?;\n]|\.(?!\d)|(?<!\d)\.")


def split_sentences(text: str) -> List[str]:
    """Split impression text into sentences.

    Boundaries are ``. ! ? ;``, newlines and numbered-list markers; a period
    between two digits (``3.4 cm``) is not a boundary.
    """
    text = _LIST_MARKER.sub("\n", text)
    pieces = _BOUNDARY.split(text)
    return [p.strip() for p in pieces if p.strip()]


def _strip_chars(token: str) -> str:
    return "".join(ch for ch in token if ch.isalpha() or ch == "_").strip("_")


_HYPHENS = re.compile(r"[-‐-―/]+")


def normalize(tokens: Iterable[str], stoplist: Optional[FrozenSet[str]] = None,
              split_hyphens: bool = False, stem: bool = False) -> List[str]:
    """Lowercase, drop digits and punctuation, drop stop words.

    Hyphenated words are joined (``mild-to-moderate`` -> ``mildtomoderate``)
    unless ``split_hyphens`` is set. Underscores are kept.
    """
    out = []
    for raw in tokens:
        parts = _HYPHENS.split(raw) if split_hyphens else [raw]
        for part in parts:
            tok = _strip_chars(part.lower())
            if not tok:
                continue
            if stem and "_" not in tok:
                tok = stem_token(tok)
            if stoplist is not None and tok in stoplist:
                continue
            out.append(tok)
    return out


_SUFFIXES = ("ations", "ation", "ings", "ing", "ies", "ied", "ed", "es", "s")


def stem_token(token: str) -> str:
    """Crude suffix stripper; leaves short words alone."""
    for suffix in _SUFFIXES:
        if token.endswith(suffix) and len(token) - len(suffix) >= 4:
            if token.endswith("ss") and suffix == "s":
                return token
            stem = token[: -len(suffix)]
            if suffix in ("ies", "ied"):
                stem += "y"
            return stem
    return token


def read_word_list(lines: Iterable[str]) -> FrozenSet[str]:
    words = set()
    for line in lines:
        line = line.split("#", 1)[0].strip().lower()
        if line:
            words.add(line)
    return frozenset(words)


def load_stoplist(path=None) -> FrozenSet[str]:
    """Load a stoplist file (one token per line, '#' comments); default is bundled."""
    if path is None:
        text = resources.files("notemine").joinpath("data/stoplist.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return read_word_list(text.splitlines())


def tokenize_impression(parsed: ParsedNote, split_hyphens: bool = False,
                        stem: bool = False) -> TokenizedDoc:
    """Sentence-split and character-normalise an impression (stop words kept)."""
    sentences = []
    for sent in split_sentences(parsed.impression):
        toks = normalize(sent.split(), None, split_hyphens=split_hyphens, stem=stem)
        if toks:
            sentences.append(toks)
    return TokenizedDoc(parsed.note_id, sentences)


def remove_stopwords(doc: TokenizedDoc, stoplist: FrozenSet[str]) -> TokenizedDoc:
    sentences = []
    for sent in doc.sentences:
        kept = [tok for tok in sent if tok not in stoplist]
        if kept:
            sentences.append(kept)
    return TokenizedDoc(doc.note_id, sentences)
