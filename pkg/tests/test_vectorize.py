import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from notemine.sectioner import TokenizedDoc
from notemine.vectorize import (SparseCorpus, TfidfConfig, Vocabulary, build_vocabulary,
                                detect_phrases, idf_vector, phrase_score, tfidf)


def docs_of(*texts):
    return [TokenizedDoc(f"d{i}", [t.split()] if t else []) for i, t in enumerate(texts)]


def test_three_document_oracle():
    vocab, corpus = build_vocabulary(docs_of("a b", "a c", "a"))
    assert vocab.terms == ["a", "b", "c"] and vocab.df == [3, 1, 1]
    # idf(a) = log2(3/3) = 0, idf(b) = idf(c) = log2(3)
    assert idf_vector(vocab, 3)[1] == pytest.approx(math.log2(3), abs=1e-15)
    weighted = tfidf(corpus, vocab)
    assert [v.as_dict() for v in weighted.weights] == [{1: 1.0}, {2: 1.0}, {}]


def test_unnormalised_weights_are_count_times_idf():
    vocab, corpus = build_vocabulary(docs_of("b b a", "a c", "a"))
    raw = tfidf(corpus, vocab, TfidfConfig(normalize=False))
    # "b" is seen first so it has id 0; "a" occurs everywhere and drops out
    assert raw.weights[0].ids.tolist() == [0]
    assert raw.weights[0].values[0] == pytest.approx(2 * math.log2(3), rel=1e-15)
    natural = tfidf(corpus, vocab, TfidfConfig(log_base=math.e, normalize=False))
    assert natural.weights[0].values[0] == pytest.approx(2 * math.log(3), rel=1e-15)


def test_smoothed_idf_keeps_ubiquitous_terms():
    vocab, corpus = build_vocabulary(docs_of("a b", "a"))
    smooth = tfidf(corpus, vocab, TfidfConfig(smooth=True, normalize=False))
    assert smooth.weights[1].as_dict() == {0: 1.0}


def test_ids_follow_first_occurrence_and_doc_vectors_are_sorted():
    vocab, corpus = build_vocabulary(docs_of("z y z", "x y"))
    assert vocab.terms == ["z", "y", "x"]
    assert corpus.counts[0].as_dict() == {0: 2, 1: 1}
    assert corpus.counts[1].ids.tolist() == [1, 2]
    assert corpus.term_frequencies(3).tolist() == [2, 2, 1]


def test_min_df_prunes_and_remaps():
    vocab, corpus = build_vocabulary(docs_of("a b", "a c", "c"), min_df=2)
    assert vocab.terms == ["a", "c"]
    assert [v.as_dict() for v in corpus.counts] == [{0: 1}, {0: 1, 1: 1}, {1: 1}]


def test_empty_corpus_rejected():
    with pytest.raises(ValueError):
        build_vocabulary([])


def test_save_load_round_trip(tmp_path):
    vocab, corpus = build_vocabulary(docs_of("a b b", "c a", ""))
    corpus = tfidf(corpus, vocab)
    vocab.save(tmp_path / "v.tsv")
    corpus.save(tmp_path / "c.txt")
    assert Vocabulary.load(tmp_path / "v.tsv") == vocab
    again = SparseCorpus.load(tmp_path / "c.txt")
    assert again.doc_ids == corpus.doc_ids
    for a, b in zip(again.weights, corpus.weights):
        assert a.ids.tolist() == b.ids.tolist() and a.values.tolist() == b.values.tolist()
    for a, b in zip(again.counts, corpus.counts):
        assert a.as_dict() == b.as_dict()


def test_phrase_score_formula():
    # (count(ab) - min_count) * N / (count(a) * count(b))
    assert phrase_score(10, 10, 10, 5, 1000) == 50.0


def test_phrase_detection():
    docs = docs_of(*(["pleural effusion seen today"] * 6 + ["pleural thing", "effusion"]))
    # N = 27: score(pleural, effusion) = 1 * 27 / 49, score(seen, today) = 27 / 36
    out = detect_phrases(docs, min_count=5, threshold=0.5)
    assert out[0].sentences == [["pleural_effusion", "seen_today"]]
    assert out[6].sentences == [["pleural", "thing"]]
    # below min_count nothing is joined
    assert detect_phrases(docs, min_count=7, threshold=0.0)[0].sentences == docs[0].sentences


def test_phrases_stay_inside_sentences():
    docs = [TokenizedDoc(f"d{i}", [["heart"], ["failure"]]) for i in range(10)]
    assert detect_phrases(docs, min_count=1, threshold=0.0) == docs


def test_second_pass_builds_trigrams():
    docs = docs_of(*(["a b c"] * 10))
    one = detect_phrases(docs, min_count=1, threshold=0.1, passes=1)
    two = detect_phrases(docs, min_count=1, threshold=0.1, passes=2)
    assert one[0].tokens == ["a_b", "c"] and two[0].tokens == ["a_b_c"]


@given(st.lists(st.lists(st.sampled_from("abcdefg"), max_size=8), min_size=1, max_size=12))
def test_weighted_vectors_have_unit_norm(texts):
    vocab, corpus = build_vocabulary([TokenizedDoc(str(i), [t]) for i, t in enumerate(texts)])
    for vec in tfidf(corpus, vocab).weights:
        assert (vec.values > 0).all()
        if len(vec):
            assert abs(math.sqrt(float(np.sum(vec.values ** 2))) - 1.0) <= 1e-9
