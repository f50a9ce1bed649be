"""Phrase detection, vocabulary building and TF-IDF weighting."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .sectioner import TokenizedDoc


def phrase_score(count_ab: int, count_a: int, count_b: int, min_count: int,
                 total_tokens: int) -> float:
    return (count_ab - min_count) * total_tokens / (count_a * count_b)


def _count(docs: Sequence[TokenizedDoc]):
    unigrams = Counter()
    bigrams = Counter()
    for doc in docs:
        for sent in doc.sentences:
            unigrams.update(sent)
            bigrams.update(zip(sent, sent[1:]))
    return unigrams, bigrams


def detect_phrases(docs: Sequence[TokenizedDoc], min_count: int = 5,
                   threshold: float = 10.0, passes: int = 1) -> List[TokenizedDoc]:
    """Join strongly associated adjacent tokens into ``a_b`` tokens.

    Each pass counts unigrams and within-sentence bigrams over the corpus,
    then rewrites every sentence greedily left to right, fusing a pair when
    ``(count(ab) - min_count) * N / (count(a) * count(b)) >= threshold``
    where N is the total token count.
    """
    for _ in range(passes):
        unigrams, bigrams = _count(docs)
        total = sum(unigrams.values())
        accepted = set()
        for (a, b), n_ab in bigrams.items():
            if n_ab >= min_count and \
                    phrase_score(n_ab, unigrams[a], unigrams[b], min_count, total) >= threshold:
                accepted.add((a, b))
        if not accepted:
            break
        out = []
        for doc in docs:
            sentences = []
            for sent in doc.sentences:
                new = []
                i = 0
                while i < len(sent):
                    if i + 1 < len(sent) and (sent[i], sent[i + 1]) in accepted:
                        new.append(sent[i] + "_" + sent[i + 1])
                        i += 2
                    else:
                        new.append(sent[i])
                        i += 1
                sentences.append(new)
            out.append(TokenizedDoc(doc.note_id, sentences))
        docs = out
    return list(docs)


@dataclass
class Vocabulary:
    terms: List[str] = field(default_factory=list)
    df: List[int] = field(default_factory=list)
    index: Dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.terms)

    def add(self, term: str) -> int:
        idx = self.index.get(term)
        if idx is None:
            idx = len(self.terms)
            self.index[term] = idx
            self.terms.append(term)
            self.df.append(0)
        return idx

    def __getitem__(self, term: str) -> int:
        return self.index[term]

    def save(self, path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for i, (term, df) in enumerate(zip(self.terms, self.df)):
                fh.write(f"{i}\t{term}\t{df}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        vocab = cls()
        with Path(path).open("r", encoding="utf-8") as fh:
            for expected, line in enumerate(fh):
                idx, term, df = line.rstrip("\n").split("\t")
                if int(idx) != expected:
                    raise ValueError(f"{path}: ids must be dense and ordered")
                vocab.add(term)
                vocab.df[-1] = int(df)
        return vocab


@dataclass
class SparseVector:
    ids: np.ndarray
    values: np.ndarray

    def as_dict(self) -> Dict[int, float]:
        return dict(zip(self.ids.tolist(), self.values.tolist()))

    def __len__(self) -> int:
        return len(self.ids)


@dataclass
class SparseCorpus:
    doc_ids: List[str]
    counts: List[SparseVector]
    weights: Optional[List[SparseVector]] = None

    def __len__(self) -> int:
        return len(self.doc_ids)

    def term_frequencies(self, vocab_size: int) -> np.ndarray:
        freq = np.zeros(vocab_size, dtype=np.int64)
        for vec in self.counts:
            np.add.at(freq, vec.ids, vec.values)
        return freq

    def save(self, path) -> None:
        path = Path(path)
        _write_vectors(path, self.doc_ids, self.counts, "{:d}")
        if self.weights is not None:
            _write_vectors(path.with_name(path.name + ".tfidf"), self.doc_ids,
                           self.weights, "{!r}")

    @classmethod
    def load(cls, path) -> "SparseCorpus":
        path = Path(path)
        doc_ids, counts = _read_vectors(path, np.int64)
        weights = None
        wpath = path.with_name(path.name + ".tfidf")
        if wpath.exists():
            _, weights = _read_vectors(wpath, np.float64)
        return cls(doc_ids, counts, weights)


def _write_vectors(path: Path, doc_ids, vectors, fmt: str) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for doc_id, vec in zip(doc_ids, vectors):
            cells = ",".join(f"{i}:" + fmt.format(v)
                             for i, v in zip(vec.ids.tolist(), vec.values.tolist()))
            fh.write(f"{doc_id}\t{cells}\n")


def _read_vectors(path: Path, dtype) -> Tuple[List[str], List[SparseVector]]:
    doc_ids, vectors = [], []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            doc_id, _, cells = line.rstrip("\n").partition("\t")
            ids, vals = [], []
            for cell in filter(None, cells.split(",")):
                i, v = cell.split(":")
                ids.append(int(i))
                vals.append(float(v))
            doc_ids.append(doc_id)
            vectors.append(SparseVector(np.array(ids, dtype=np.int64), np.array(vals, dtype=dtype)))
    return doc_ids, vectors


def build_vocabulary(docs: Sequence[TokenizedDoc], min_df: int = 1,
                     max_df_ratio: float = 1.0) -> Tuple[Vocabulary, SparseCorpus]:
    """Assign term ids in first-occurrence order and count terms per document.

    ``min_df``/``max_df_ratio`` prune rare or ubiquitous terms; the defaults
    keep everything.
    """
    if not docs:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    full = Vocabulary()
    per_doc = []
    for doc in docs:
        counter = Counter()
        for tok in doc.tokens:
            counter[full.add(tok)] += 1
        for idx in counter:
            full.df[idx] += 1
        per_doc.append(counter)

    n_docs = len(docs)
    keep = [i for i, df in enumerate(full.df)
            if df >= min_df and df <= max_df_ratio * n_docs]
    if len(keep) == len(full):
        vocab, remap = full, None
    else:
        vocab = Vocabulary()
        remap = {}
        for old in keep:
            remap[old] = vocab.add(full.terms[old])
            vocab.df[-1] = full.df[old]

    counts = []
    for counter in per_doc:
        items = sorted((i if remap is None else remap[i], c) for i, c in counter.items()
                       if remap is None or i in remap)
        ids = np.array([i for i, _ in items], dtype=np.int64)
        vals = np.array([c for _, c in items], dtype=np.int64)
        counts.append(SparseVector(ids, vals))
    return vocab, SparseCorpus([doc.note_id for doc in docs], counts)


@dataclass(frozen=True)
class TfidfConfig:
    log_base: float = 2.0  # use math.e for natural log
    smooth: bool = False
    normalize: bool = True


def idf_vector(vocab: Vocabulary, n_docs: int, config: TfidfConfig = TfidfConfig()) -> np.ndarray:
    df = np.asarray(vocab.df, dtype=np.float64)
    if config.smooth:
        ratio = (1.0 + n_docs) / (1.0 + df)
        return np.log(ratio) / math.log(config.log_base) + 1.0
    return np.log(n_docs / df) / math.log(config.log_base)


def tfidf(corpus: SparseCorpus, vocab: Vocabulary,
          config: TfidfConfig = TfidfConfig()) -> SparseCorpus:
    """Weight counts by inverse document frequency.

    weight = count * log_base(N / df); zero weights are dropped and each
    document vector is scaled to unit L2 norm.
    """
    idf = idf_vector(vocab, len(corpus), config)
    weights = []
    for vec in corpus.counts:
        w = vec.values.astype(np.float64) * idf[vec.ids]
        keep = w > 0
        ids, w = vec.ids[keep], w[keep]
        if config.normalize and len(w):
            w = w / math.hypot(*w.tolist())
        weights.append(SparseVector(ids, w))
    return SparseCorpus(list(corpus.doc_ids), list(corpus.counts), weights)
