import pytest
from hypothesis import given, strategies as st

from notemine.negation import (LexiconError, TriggerLexicon, default_lexicon, detect_and_fuse,
                               find_negations, format_lexicon, load_lexicon, parse_lexicon,
                               save_lexicon)

from negation_cases import CASES


@pytest.mark.parametrize("category,text,expected", CASES, ids=[c[1] for c in CASES])
def test_hand_traced_suite(category, text, expected):
    assert detect_and_fuse(text.split()) == expected


def test_suite_covers_every_category():
    assert len(CASES) == 30
    assert {c[0] for c in CASES} >= {"pre", "post", "pseudo", "term"}


def test_spans_record_trigger_and_scope():
    spans = find_negations("heart is not enlarged".split(), default_lexicon(), sentence_index=3)
    assert len(spans) == 1
    span = spans[0]
    assert (span.sentence_index, span.trigger, span.scope, span.fused_token) == \
        (3, (2, 3), (3, 4), "no_enlarged")


def test_window_parameter():
    assert detect_and_fuse("no a1 b c d".split(), window=2)[0] == "no_a1_b"


def test_bundled_lexicon_round_trips(tmp_path):
    lex = load_lexicon()
    save_lexicon(lex, tmp_path / "lex.txt")
    assert load_lexicon(tmp_path / "lex.txt") == lex
    assert format_lexicon(parse_lexicon(format_lexicon(lex))) == format_lexicon(lex)


def test_lexicon_errors():
    with pytest.raises(LexiconError, match="unknown category"):
        parse_lexicon("[PRE]\nno\n[WHATEVER]\nx\n")
    with pytest.raises(LexiconError, match=r"\[TERM\] is empty"):
        parse_lexicon("[PRE]\nno\n[POST]\nunlikely\n[PSEUDO]\nno change\n[TERM]\n")
    with pytest.raises(LexiconError, match="before any category"):
        parse_lexicon("no\n")


def test_custom_lexicon():
    lex = TriggerLexicon.from_phrases(["absent"], ["gone"], ["absent minded"], ["but"])
    assert detect_and_fuse("absent mass but cyst gone".split(), lex) == \
        ["absent", "no_mass", "but", "no_cyst", "gone"]
    assert detect_and_fuse("absent minded mass".split(), lex) == ["absent", "minded", "mass"]


vocab = st.sampled_from(["no", "not", "without", "effusion", "mass", "edema", "but", "however",
                         "the", "of", "is", "ruled", "out", "unlikely", "change", "interval",
                         "significant", "denies", "pain", "free", "which", "mild"])


@given(st.lists(vocab, max_size=15))
def test_output_never_longer_and_fused_tokens_clean(sentence):
    out = detect_and_fuse(sentence)
    assert len(out) <= len(sentence)
    terms = default_lexicon().termination
    for tok in out:
        if tok.startswith("no_"):
            parts = tok[3:].split("_")
            assert parts and all(parts)
            for phrase in terms:
                n = len(phrase)
                assert all(tuple(parts[i:i + n]) != phrase for i in range(len(parts)))


@given(st.lists(vocab, max_size=6), st.lists(vocab, max_size=6))
def test_pseudo_negation_is_never_part_of_a_span(before, after):
    # when the scan reaches the pseudo phrase it is skipped whole
    sentence = ["mild"] + before + ["mild", "no", "change"] + after
    pos = len(before) + 2
    spans = find_negations(sentence, default_lexicon())
    reached = all(span.trigger[1] <= pos and span.scope[1] <= pos or span.trigger[0] >= pos + 2
                  for span in spans if span.trigger[0] < pos)
    if reached:
        for span in spans:
            for lo, hi in (span.trigger, span.scope):
                assert hi <= pos or lo >= pos + 2
