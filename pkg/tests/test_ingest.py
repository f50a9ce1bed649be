import json

import pytest

from notemine.ingest import (EMPTIED, NO_IMPRESSION, ClinicalNote, CorpusError, CorpusStats,
                             funnel_report, load_corpus, write_corpus)

from conftest import EXAMPLE_NOTE


def test_example_note_round_trips_byte_identically(tmp_path):
    path = tmp_path / "notes.jsonl"
    path.write_text(json.dumps({"note_id": "n1", "text": EXAMPLE_NOTE}) + "\n", encoding="utf-8")
    notes = load_corpus(path)
    assert len(notes) == 1 and notes[0].raw_text == EXAMPLE_NOTE
    write_corpus(notes, tmp_path / "again.jsonl")
    assert load_corpus(tmp_path / "again.jsonl") == notes


@pytest.mark.parametrize("fmt", ["jsonl", "csv"])
def test_write_and_read_preserve_order_and_fields(tmp_path, fmt):
    notes = [ClinicalNote("b", "IMPRESSION: x,\n\"quoted\"", "p1", "2020-01-01"),
             ClinicalNote("a", "text two", "", None)]
    path = tmp_path / f"notes.{fmt}"
    write_corpus(notes, path, fmt)
    stats = CorpusStats()
    assert load_corpus(path, stats=stats) == notes
    assert stats.total_notes == 2


def test_duplicate_id_names_both_lines(tmp_path):
    path = tmp_path / "dup.jsonl"
    path.write_text('{"note_id": "x", "text": "a"}\n{"note_id": "x", "text": "b"}\n')
    with pytest.raises(CorpusError, match=r"dup.jsonl:2: duplicate note_id 'x'.*:1\)"):
        load_corpus(path)


@pytest.mark.parametrize("line,message", [
    ('{"note_id": "x"', "invalid JSON"),
    ('{"text": "a"}', "missing note_id"),
    ('{"note_id": "x", "text": ""}', "missing or empty text"),
])
def test_malformed_records_report_the_line(tmp_path, line, message):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"note_id": "ok", "text": "fine"}\n' + line + "\n")
    with pytest.raises(CorpusError, match=rf"bad.jsonl:2: {message}"):
        load_corpus(path)


def test_missing_file_and_bad_format(tmp_path):
    with pytest.raises(CorpusError):
        load_corpus(tmp_path / "nope.jsonl")
    with pytest.raises(CorpusError):
        load_corpus(tmp_path / "nope.jsonl", format="xml")


def test_stats_check_accepts_consistent_funnel():
    stats = CorpusStats(4, 3, 2, [("a", NO_IMPRESSION), ("b", EMPTIED)])
    stats.check()
    assert CorpusStats.from_dict(stats.to_dict()) == stats


@pytest.mark.parametrize("stats", [
    CorpusStats(3, 4, 1),
    CorpusStats(4, 3, 3, [("a", NO_IMPRESSION), ("a", EMPTIED)]),
    CorpusStats(4, 3, 2, [("a", NO_IMPRESSION)]),
])
def test_stats_check_rejects_inconsistent_funnel(stats):
    with pytest.raises(ValueError):
        stats.check()


def test_funnel_report_matches_published_shape():
    text = funnel_report(CorpusStats(15966, 6614, 6347))
    assert "15966" in text and "6614  (dropped 9352)" in text and "6347  (dropped 267)" in text
