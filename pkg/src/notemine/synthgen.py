"""Synthetic procedure-note corpora with known ground truth."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List

import numpy as np

from .ingest import ClinicalNote, write_corpus
from .negation import default_lexicon
from .sectioner import load_stoplist

_ONSETS = ["b", "c", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
           "br", "cr", "dr", "gl", "pl", "st", "tr", "th", "ch", "sc"]
_VOWELS = ["a", "e", "i", "o", "u", "ae", "io", "ou"]
_CODAS = ["", "", "n", "r", "s", "l", "x", "m"]

EXAMS = ["Chest one view frontal", "CT abdomen pelvis with contrast", "MRI brain without contrast",
         "CT angiogram chest", "Portable chest radiograph", "Ultrasound renal"]

# Impressions made only of stop words; they empty out during preprocessing.
STOPWORD_IMPRESSIONS = ["Stable portable chest view.", "No change.", "Final report available.",
                        "See final report.", "Stable.  No change in the chest."]


@dataclass
class GeneratorSpec:
    K_true: int = 5
    words_per_topic: int = 40
    docs_per_topic: List[int] = field(default_factory=lambda: [20] * 5)
    doc_length: List[int] = field(default_factory=lambda: [12, 30])  # inclusive word range
    primary_weight: float = 0.9
    leak: float = 0.0
    disjoint: bool = True
    word_concentration: float = 20.0
    missing_impression_rate: float = 0.2
    stopword_notes: int = 0
    negation_rate: float = 0.0
    template_rate: float = 0.0
    planted_terms: Dict[str, int] = field(default_factory=dict)
    planted_rate: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.docs_per_topic, int):
            self.docs_per_topic = [self.docs_per_topic] * self.K_true
        if len(self.docs_per_topic) != self.K_true:
            raise ValueError("docs_per_topic needs one entry per topic")
        for name in ("primary_weight", "leak", "missing_impression_rate",
                     "negation_rate", "template_rate", "planted_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.disjoint and self.leak > 0:
            raise ValueError("disjoint vocabularies cannot leak")
        lo, hi = self.doc_length
        if not 1 <= lo <= hi:
            raise ValueError("doc_length must be a range [lo, hi] with lo >= 1")

    @property
    def n_docs(self) -> int:
        return int(sum(self.docs_per_topic))

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown generator fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "GeneratorSpec":
        return cls.from_dict(json.loads(Path(path).read_text("utf-8")))


@dataclass
class GroundTruth:
    vocabulary: List[str]
    phi: List[List[float]]
    doc_labels: Dict[str, int]
    negations: List[dict]
    planted_terms: Dict[str, int]
    discriminative_terms: Dict[str, int]
    funnel: Dict[str, int]
    dropped: Dict[str, str]
    emitted_vocabulary: List[str]
    template_words: List[str]
    n_negated_notes: int

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), sort_keys=True, indent=1) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path) -> "GroundTruth":
        return cls(**json.loads(Path(path).read_text("utf-8")))

    def phi_matrix(self) -> np.ndarray:
        return np.array(self.phi, dtype=np.float64)


def _make_words(rng: np.random.Generator, count: int, banned: set) -> List[str]:
    words: List[str] = []
    seen = set(banned)
    while len(words) < count:
        n_syll = int(rng.integers(2, 4))
        w = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
                    for _ in range(n_syll)) + _CODAS[rng.integers(len(_CODAS))]
        if len(w) >= 5 and w not in seen:
            seen.add(w)
            words.append(w)
    return words


def _sentences(words: List[str], rng: np.random.Generator, template_rate: float) -> List[str]:
    out = []
    i = 0
    while i < len(words):
        n = int(rng.integers(3, 7))
        chunk = words[i:i + n]
        i += n
        if template_rate and rng.random() < template_rate:
            form = int(rng.integers(3))
            if form == 0:
                chunk = ["moderate"] + chunk
            elif form == 1:
                chunk = ["mild"] + chunk
            else:
                chunk = ["interval", "resolution", "of"] + chunk
        out.append(" ".join(chunk).capitalize() + ".")
    return out


def generate(spec: GeneratorSpec, out_dir=None):
    """Draw a corpus from ``spec``.

    Returns ``(notes, truth)``; when ``out_dir`` is given the notes are written
    to ``notes.jsonl`` and the ground truth to ``ground_truth.json`` there.
    """
    rng = np.random.default_rng(spec.seed)
    stoplist = load_stoplist()
    for text in STOPWORD_IMPRESSIONS:
        if set(text.lower().replace(".", " ").split()) - stoplist:
            raise ValueError(f"stop-word impression {text!r} has non-stop words")
    banned = set(stoplist)
    for group in default_lexicon().groups():
        for phrase in group:
            banned.update(phrase)
    banned.update({"moderate", "mild", "interval", "resolution"})
    banned.update(spec.planted_terms)

    K, W = spec.K_true, spec.words_per_topic
    vocab = _make_words(rng, K * W, banned)
    V = len(vocab)
    phi = np.zeros((K, V))
    for k in range(K):
        phi[k, k * W:(k + 1) * W] = rng.dirichlet(np.full(W, spec.word_concentration))
    if spec.leak:
        phi = (1.0 - spec.leak) * phi + spec.leak / V

    labels = np.repeat(np.arange(K), spec.docs_per_topic)
    rng.shuffle(labels)
    n = len(labels)
    note_ids = [f"note{d:05d}" for d in range(n)]

    n_missing = int(round(spec.missing_impression_rate * n))
    order = rng.permutation(n)
    missing = set(order[:n_missing].tolist())
    with_imp = [d for d in range(n) if d not in missing]
    if spec.stopword_notes > len(with_imp):
        raise ValueError("more stop-word notes requested than notes with an impression")
    picks = rng.permutation(len(with_imp))[:spec.stopword_notes]
    stop_only = {with_imp[i] for i in picks.tolist()}
    topical = [d for d in with_imp if d not in stop_only]
    n_neg = int(round(spec.negation_rate * len(topical)))
    negated = {topical[i] for i in rng.permutation(len(topical))[:n_neg].tolist()}

    planted_by_topic: Dict[int, List[str]] = {}
    for term, k in spec.planted_terms.items():
        planted_by_topic.setdefault(int(k), []).append(term)

    notes: List[ClinicalNote] = []
    negations = []
    emitted = set()
    dropped = {}
    lo, hi = spec.doc_length
    for d in range(n):
        k = int(labels[d])
        theta = np.full(K, (1.0 - spec.primary_weight) / max(1, K - 1)) if K > 1 else np.ones(1)
        theta[k] = spec.primary_weight if K > 1 else 1.0
        length = int(rng.integers(lo, hi + 1))
        topics = rng.choice(K, size=length, p=theta)
        ids = np.empty(length, dtype=np.int64)
        for t in np.unique(topics):
            mask = topics == t
            ids[mask] = rng.choice(V, size=int(mask.sum()), p=phi[t])
        words = [vocab[i] for i in ids.tolist()]
        for term in planted_by_topic.get(k, []):
            if rng.random() < spec.planted_rate:
                words.insert(int(rng.integers(len(words) + 1)), term)
        findings = " ".join(_sentences(
            [vocab[i] for i in rng.choice(V, size=6, p=phi[k]).tolist()], rng, 0.0))
        exam = EXAMS[int(rng.integers(len(EXAMS)))]
        parts = [f"EXAM: {exam}", f"FINDINGS: {findings}"]
        if d in stop_only:
            parts.append("IMPRESSION: " + STOPWORD_IMPRESSIONS[int(rng.integers(len(STOPWORD_IMPRESSIONS)))])
            dropped[note_ids[d]] = "emptied_by_preprocessing"
        elif d not in missing:
            sentences = _sentences(words, rng, spec.template_rate)
            if d in negated:
                a, b = (vocab[i] for i in rng.choice(V, size=2, p=phi[k]).tolist())
                sentences.insert(int(rng.integers(len(sentences) + 1)), f"No {a} {b}.")
                negations.append({"note_id": note_ids[d], "phrase": f"no {a} {b}",
                                  "fused_token": f"no_{a}_{b}"})
            parts.append("IMPRESSION: " + " ".join(sentences))
            emitted.update(words)
            if spec.template_rate:
                emitted.update(w.lower().strip(".") for s in sentences for w in s.split()
                               if w.lower().strip(".") in ("moderate", "mild", "interval", "resolution"))
        else:
            dropped[note_ids[d]] = "no_impression"
        notes.append(ClinicalNote(note_ids[d], "\n".join(parts) + "\n",
                                  patient_id=f"pt{d % 97:03d}", timestamp=None))

    with_count = n - n_missing
    truth = GroundTruth(
        vocabulary=vocab,
        phi=phi.tolist(),
        doc_labels={note_ids[d]: int(labels[d]) for d in range(n)},
        negations=negations,
        planted_terms={t: int(k) for t, k in spec.planted_terms.items()},
        discriminative_terms={vocab[int(i)]: k for k in range(K)
                              for i in np.argsort(-phi[k], kind="stable")[:3]},
        funnel={"total_notes": n, "notes_with_impression": with_count,
                "notes_nonempty_after_preprocess": with_count - len(stop_only)},
        dropped=dropped,
        emitted_vocabulary=sorted(emitted),
        template_words=["interval", "mild", "moderate", "resolution"] if spec.template_rate else [],
        n_negated_notes=len(negated),
    )
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_corpus(notes, out_dir / "notes.jsonl")
        truth.save(out_dir / "ground_truth.json")
    return notes, truth
