"""Chi-square analysis of which words separate the discovered topics.

Each vocabulary term gets a 2 x K table: for every topic, the number of
notes (by dominant topic) that contain the term and the number that do not.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .lda import TopicAssignment
from .vectorize import SparseCorpus, Vocabulary


# ---------------------------------------------------------------------------
# chi-square tail probabilities

def _gamma_series(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) by its power series."""
    term = total = 1.0 / a
    ap = a
    for _ in range(10000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-17:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cfrac(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) by Lentz's continued fraction."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def gammaincc(a: float, x: float) -> float:
    """Regularized upper incomplete gamma function Q(a, x)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cfrac(a, x)


def chi2_sf_even(x: float, dof: int) -> float:
    """Closed-form survival function for even dof: exp(-x/2) * sum_{i<dof/2} (x/2)^i / i!."""
    if dof <= 0 or dof % 2:
        raise ValueError("dof must be a positive even integer")
    m = x / 2.0
    term = total = math.exp(-m)
    for i in range(1, dof // 2):
        term *= m / i
        total += term
    return min(total, 1.0)


def chi2_sf_dof4(x: float) -> float:
    m = x / 2.0
    return math.exp(-m) * (1.0 + m)


def chi2_sf(x: float, dof: int) -> float:
    """P(X >= x) for X ~ chi-square with ``dof`` degrees of freedom."""
    if dof < 1:
        raise ValueError("dof must be at least 1")
    if x <= 0:
        return 1.0
    return gammaincc(dof / 2.0, x / 2.0)


# ---------------------------------------------------------------------------

@dataclass
class ContingencyTable:
    term_id: int
    present: np.ndarray  # per topic: notes containing the term
    absent: np.ndarray
    chi2: float = 0.0
    dof: int = 0
    p_value: float = 1.0

    @classmethod
    def from_counts(cls, term_id: int, present, totals) -> "ContingencyTable":
        present = np.asarray(present, dtype=np.int64)
        totals = np.asarray(totals, dtype=np.int64)
        if present.shape != totals.shape or (present > totals).any() or (present < 0).any():
            raise ValueError("presence counts must lie between 0 and the topic totals")
        return cls(term_id, present, totals - present)

    @property
    def totals(self) -> np.ndarray:
        return self.present + self.absent


def pearson_chi2(present: np.ndarray, totals: np.ndarray, warn: bool = True):
    """Pearson statistic and dof for a 2 x K presence table, no continuity correction.

    Topics without notes are dropped (with a warning) and reduce the dof.
    Returns ``(chi2, dof)``.
    """
    present = np.asarray(present, dtype=np.float64)
    totals = np.asarray(totals, dtype=np.float64)
    keep = totals > 0
    if not keep.all():
        if warn:
            warnings.warn(f"dropping {int((~keep).sum())} topic(s) with no notes")
        present, totals = present[keep], totals[keep]
    k = len(totals)
    n = totals.sum()
    if n <= 0:
        raise ValueError("table has no observations")
    dof = k - 1
    row_present = present.sum()
    row_absent = n - row_present
    if k < 2 or row_present == 0 or row_absent == 0:
        return 0.0, max(dof, 0)
    obs = np.stack([present, totals - present])
    exp = np.outer([row_present, row_absent], totals) / n
    return float(((obs - exp) ** 2 / exp).sum()), dof


def chi_square(table: ContingencyTable, warn: bool = True):
    """Fill in and return ``(chi2, p_value)`` for a contingency table."""
    chi2, dof = pearson_chi2(table.present, table.totals, warn)
    table.chi2, table.dof = chi2, dof
    table.p_value = chi2_sf(chi2, dof) if dof >= 1 else 1.0
    return table.chi2, table.p_value


def _presence_matrix(corpus: SparseCorpus, assignments: Sequence[TopicAssignment],
                     K: int, V: int, rows: Optional[np.ndarray] = None) -> np.ndarray:
    if len(assignments) != len(corpus):
        raise ValueError("assignments must cover every document")
    counts = np.zeros((K, V), dtype=np.int64)
    for d, (vec, a) in enumerate(zip(corpus.counts, assignments)):
        if rows is not None and not rows[d]:
            continue
        if a.note_id != corpus.doc_ids[d]:
            raise ValueError(f"assignment order mismatch at document {d}")
        counts[a.dominant_topic, vec.ids[vec.values > 0]] += 1
    return counts


def topic_totals(assignments: Sequence[TopicAssignment], K: int,
                 rows: Optional[np.ndarray] = None) -> np.ndarray:
    labels = [a.dominant_topic for d, a in enumerate(assignments) if rows is None or rows[d]]
    return np.bincount(labels, minlength=K).astype(np.int64)


def presence_counts(corpus: SparseCorpus, assignments: Sequence[TopicAssignment],
                    term, vocab: Vocabulary, K: int) -> np.ndarray:
    """Per-topic number of notes whose count vector contains ``term``."""
    term_id = vocab.index.get(term) if isinstance(term, str) else int(term)
    if term_id is None or not 0 <= term_id < len(vocab):
        raise KeyError(f"unknown term {term!r}")
    counts = np.zeros(K, dtype=np.int64)
    for vec, a in zip(corpus.counts, assignments):
        pos = np.searchsorted(vec.ids, term_id)
        if pos < len(vec.ids) and vec.ids[pos] == term_id and vec.values[pos] > 0:
            counts[a.dominant_topic] += 1
    return counts


@dataclass
class RankedFeature:
    term: str
    term_id: int
    chi2: float
    dof: int
    p_value: float
    counts: List[int]


@dataclass
class FeatureRanking:
    features: List[RankedFeature]
    alpha_level: float
    K: int
    mode: str = "marginal"
    topic_totals: List[int] = field(default_factory=list)


def _tables(presence: np.ndarray, totals: np.ndarray) -> List[ContingencyTable]:
    empty = int((totals == 0).sum())
    if empty:
        warnings.warn(f"dropping {empty} topic(s) with no notes from every table")
    tables = []
    for t in range(presence.shape[1]):
        table = ContingencyTable.from_counts(t, presence[:, t], totals)
        chi_square(table, warn=False)
        tables.append(table)
    return tables


def rank_features(corpus: SparseCorpus, assignments: Sequence[TopicAssignment],
                  vocab: Vocabulary, K: int, alpha_level: float = 0.01, top_n: int = 20,
                  mode: str = "marginal") -> FeatureRanking:
    """Rank terms by how strongly their presence depends on the dominant topic.

    ``marginal`` keeps terms with p < alpha_level ordered by chi2 (ties by
    term id). ``forward`` picks greedily: after each pick, notes containing
    any selected term are set aside and the remaining terms are re-scored
    on the notes still unexplained.
    """
    V = len(vocab)
    presence = _presence_matrix(corpus, assignments, K, V)
    totals = topic_totals(assignments, K)
    full = _tables(presence, totals)

    def feature(table: ContingencyTable, chi2=None, dof=None, p=None) -> RankedFeature:
        return RankedFeature(vocab.terms[table.term_id], table.term_id,
                             table.chi2 if chi2 is None else chi2,
                             table.dof if dof is None else dof,
                             table.p_value if p is None else p,
                             presence[:, table.term_id].tolist())

    if mode == "marginal":
        significant = [t for t in full if t.p_value < alpha_level]
        significant.sort(key=lambda t: (-t.chi2, t.term_id))
        feats = [feature(t) for t in significant[:top_n]]
    elif mode == "forward":
        feats = []
        remaining = np.ones(len(corpus), dtype=bool)
        chosen = set()
        while len(feats) < top_n and remaining.any():
            sub = _tables(_presence_matrix(corpus, assignments, K, V, remaining),
                          topic_totals(assignments, K, remaining))
            candidates = [t for t in sub if t.term_id not in chosen and t.p_value < alpha_level]
            if not candidates:
                break
            best = min(candidates, key=lambda t: (-t.chi2, t.term_id))
            chosen.add(best.term_id)
            feats.append(feature(full[best.term_id], best.chi2, best.dof, best.p_value))
            for d, vec in enumerate(corpus.counts):
                if remaining[d] and best.term_id in vec.ids:
                    remaining[d] = False
    else:
        raise ValueError(f"unknown ranking mode {mode!r}")
    return FeatureRanking(feats, alpha_level, K, mode, totals.tolist())


def topic_of_interest(ranking: FeatureRanking) -> int:
    """Topic whose notes contain the ranked features most often (ties -> lowest id)."""
    if not ranking.features:
        raise ValueError("empty ranking")
    scores = np.sum([f.counts for f in ranking.features], axis=0)
    return int(np.argmax(scores))
