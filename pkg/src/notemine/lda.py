"""Latent Dirichlet allocation fitted by collapsed Gibbs sampling.

The sampler draws its uniforms from a counter-based generator keyed by
(seed, document key, sweep, token position), so every document has its own
reproducible stream and a fit is a pure function of its inputs.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numba
import numpy as np

from .vectorize import SparseCorpus

logger = logging.getLogger(__name__)

FORMAT = "notemine-lda"
FORMAT_VERSION = 1


@dataclass
class LdaConfig:
    K: int = 5
    alpha: Optional[float] = None  # None -> 1 / K
    beta: float = 0.01
    iterations: int = 1000
    burn_in: int = 500
    sample_every: int = 10
    seed: int = 0
    weight_mode: str = "scaled_tfidf"  # or "counts"
    tfidf_scale: float = 5.0  # larger values sharpen the posterior and slow mixing
    restarts: int = 1  # independent chains; the most likely final state is kept

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if (self.alpha is not None and self.alpha <= 0) or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if not 0 <= self.burn_in <= self.iterations:
            raise ValueError("need 0 <= burn_in <= iterations")
        if self.sample_every < 1:
            raise ValueError("sample_every must be positive")
        if self.weight_mode not in ("counts", "scaled_tfidf"):
            raise ValueError(f"unknown weight_mode {self.weight_mode!r}")
        if self.tfidf_scale <= 0:
            raise ValueError("tfidf_scale must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in 64 bits")

    @property
    def doc_prior(self) -> float:
        return 1.0 / self.K if self.alpha is None else float(self.alpha)


@dataclass
class TopicAssignment:
    note_id: str
    dominant_topic: int
    contribution: float


@dataclass
class TopicModel:
    phi: np.ndarray  # K x V
    theta: np.ndarray  # D x K
    config: LdaConfig
    terms: List[str]
    doc_ids: List[str]
    n_dk: np.ndarray
    n_kw: np.ndarray
    n_k: np.ndarray
    samples: int = 1
    extra: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.phi.shape[0]

    def vocab_hash(self) -> str:
        return hashlib.sha256("\n".join(self.terms).encode("utf-8")).hexdigest()

    def to_json(self) -> str:
        data = {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "config": asdict(self.config),
            "vocab_sha256": self.vocab_hash(),
            "samples": self.samples,
            "extra": self.extra,
            "terms": self.terms,
            "doc_ids": self.doc_ids,
            "phi": self.phi.tolist(),
            "theta": self.theta.tolist(),
            "n_dk": self.n_dk.tolist(),
            "n_kw": self.n_kw.tolist(),
            "n_k": self.n_k.tolist(),
        }
        return json.dumps(data, separators=(",", ":"), sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "TopicModel":
        data = json.loads(Path(path).read_text("utf-8"))
        if data.get("format") != FORMAT or data.get("version") != FORMAT_VERSION:
            raise ValueError(f"{path}: not a {FORMAT} v{FORMAT_VERSION} model file")
        model = cls(
            phi=np.array(data["phi"], dtype=np.float64),
            theta=np.array(data["theta"], dtype=np.float64).reshape(len(data["doc_ids"]), -1),
            config=LdaConfig(**data["config"]),
            terms=list(data["terms"]),
            doc_ids=list(data["doc_ids"]),
            n_dk=np.array(data["n_dk"], dtype=np.int64),
            n_kw=np.array(data["n_kw"], dtype=np.int64),
            n_k=np.array(data["n_k"], dtype=np.int64),
            samples=int(data["samples"]),
            extra=dict(data.get("extra", {})),
        )
        if model.vocab_hash() != data["vocab_sha256"]:
            raise ValueError(f"{path}: vocabulary hash mismatch")
        return model


def prepare_tokens(corpus: SparseCorpus, mode: str = "scaled_tfidf",
                   scale: float = 5.0) -> List[np.ndarray]:
    """Turn sparse document vectors into integer token streams.

    ``counts`` repeats each term by its count. ``scaled_tfidf`` repeats it
    ``max(1, round(weight * scale))`` times (halves round up). Streams list
    term ids in ascending order. A document with no positive TF-IDF weight
    falls back to its raw counts.
    """
    if mode not in ("counts", "scaled_tfidf"):
        raise ValueError(f"unknown weight mode {mode!r}")
    if mode == "scaled_tfidf" and corpus.weights is None:
        raise ValueError("scaled_tfidf mode needs TF-IDF weights")
    streams = []
    fallback = 0
    for d, counts in enumerate(corpus.counts):
        if mode == "scaled_tfidf" and len(corpus.weights[d]):
            vec = corpus.weights[d]
            reps = np.maximum(1, np.floor(vec.values * scale + 0.5)).astype(np.int64)
        else:
            if mode == "scaled_tfidf":
                fallback += 1
            vec = counts
            reps = counts.values.astype(np.int64)
        streams.append(np.repeat(vec.ids.astype(np.int64), reps))
    if fallback:
        logger.warning("%d documents have no positive TF-IDF weight; using raw counts", fallback)
    return streams


def doc_key(note_id: str) -> int:
    return int.from_bytes(hashlib.blake2b(note_id.encode("utf-8"), digest_size=8).digest(), "little")


def chain_seed(seed: int, chain: int) -> int:
    """Seed of restart ``chain``; chain 0 runs on ``seed`` itself."""
    if chain == 0:
        return seed
    data = f"{seed}:{chain}".encode("ascii")
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def _lgamma_sum(counts: np.ndarray, prior: float) -> float:
    nz = counts[counts > 0]
    lg = np.vectorize(math.lgamma, otypes=[np.float64])
    return float(np.sum(lg(nz + prior)) - len(nz) * math.lgamma(prior))


def log_joint(n_dk: np.ndarray, n_kw: np.ndarray, n_k: np.ndarray,
              alpha: float, beta: float) -> float:
    """Collapsed log p(w, z) of a count state under symmetric priors."""
    D, K = n_dk.shape
    V = n_kw.shape[1]
    lg = np.vectorize(math.lgamma, otypes=[np.float64])
    words = _lgamma_sum(n_kw, beta) + K * math.lgamma(V * beta) - float(np.sum(lg(n_k + V * beta)))
    n_d = n_dk.sum(axis=1)
    topics = _lgamma_sum(n_dk, alpha) + D * math.lgamma(K * alpha) - float(np.sum(lg(n_d + K * alpha)))
    return words + topics


# ---------------------------------------------------------------------------
# sampler kernel

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@numba.njit(inline="always")
def _mix(x):
    x = (x ^ (x >> _S30)) * _M1
    x = (x ^ (x >> _S27)) * _M2
    return x ^ (x >> _S31)


@numba.njit(inline="always")
def _uniform(seed, key, sweep, pos):
    h = _mix(seed + _GOLDEN)
    h = _mix(h ^ key)
    h = _mix(h ^ (np.uint64(sweep) * _GOLDEN))
    h = _mix(h ^ np.uint64(pos))
    return np.float64(h >> _S11) * _INV53


@numba.njit(nogil=True, cache=True)
def _initialize(words, offsets, z, n_dk, n_kw, n_k, seed, keys):
    K = n_k.shape[0]
    for d in range(offsets.shape[0] - 1):
        base = offsets[d]
        for i in range(base, offsets[d + 1]):
            k = int(_uniform(seed, keys[d], 0, i - base) * K)
            if k >= K:
                k = K - 1
            z[i] = k
            n_dk[d, k] += 1
            n_kw[k, words[i]] += 1
            n_k[k] += 1


@numba.njit(nogil=True, cache=True)
def _sweep(words, offsets, z, n_dk, n_kw, n_k, alpha, beta, vbeta, seed, keys, sweep):
    K = n_k.shape[0]
    cum = np.empty(K)
    for d in range(offsets.shape[0] - 1):
        key = keys[d]
        base = offsets[d]
        for i in range(base, offsets[d + 1]):
            w = words[i]
            k = z[i]
            n_dk[d, k] -= 1
            n_kw[k, w] -= 1
            n_k[k] -= 1
            total = 0.0
            for t in range(K):
                total += (n_dk[d, t] + alpha) * (n_kw[t, w] + beta) / (n_k[t] + vbeta)
                cum[t] = total
            u = _uniform(seed, key, sweep, i - base) * total
            k = 0
            while k < K - 1 and cum[k] <= u:
                k += 1
            z[i] = k
            n_dk[d, k] += 1
            n_kw[k, w] += 1
            n_k[k] += 1


def fit(streams: Sequence[np.ndarray], config: LdaConfig, vocab_size: Optional[int] = None,
        terms: Optional[List[str]] = None, doc_ids: Optional[List[str]] = None,
        on_sweep: Optional[Callable] = None) -> TopicModel:
    """Fit LDA to integer token streams.

    phi and theta are posterior means from the count tables averaged over
    every ``sample_every``-th sweep after burn-in (the final state when no
    such sweep exists). ``on_sweep(sweep, n_dk, n_kw, n_k)`` is called after
    every sweep of every chain when given. With ``restarts > 1`` independent
    chains are run and the one whose final state has the highest log p(w, z)
    is kept.
    """
    if not streams:
        raise ValueError("need at least one document")
    if any(len(s) == 0 for s in streams):
        raise ValueError("empty token stream")
    if vocab_size is None:
        vocab_size = len(terms) if terms is not None else int(max(s.max() for s in streams)) + 1
    if vocab_size < 1:
        raise ValueError("vocabulary is empty")
    if terms is None:
        terms = [str(i) for i in range(vocab_size)]
    if doc_ids is None:
        doc_ids = [str(d) for d in range(len(streams))]
    keys = np.array([doc_key(i) for i in doc_ids], dtype=np.uint64)

    K, V, D = config.K, vocab_size, len(streams)
    words = np.concatenate([np.asarray(s, dtype=np.int64) for s in streams])
    if words.min() < 0 or words.max() >= V:
        raise ValueError("token id out of range")
    if K > len(words):
        warnings.warn(f"K={K} exceeds the number of tokens ({len(words)})")
    offsets = np.zeros(D + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(s) for s in streams])

    alpha, beta = config.doc_prior, float(config.beta)
    best = None
    for chain in range(config.restarts):
        state = _run_chain(words, offsets, keys, D, K, V, alpha, beta, config,
                           np.uint64(chain_seed(config.seed, chain)), on_sweep)
        score = log_joint(state[2], state[3], state[4], alpha, beta)
        logger.debug("K=%d chain %d log p(w, z) = %.2f", K, chain, score)
        if best is None or score > best[0]:
            best = (score, chain, state)
    score, chain, (avg_dk, avg_kw, n_dk, n_kw, n_k, samples) = best

    theta = avg_dk + alpha
    theta /= theta.sum(axis=1, keepdims=True)
    phi = avg_kw + beta
    phi /= phi.sum(axis=1, keepdims=True)
    extra = {"chain": chain, "log_joint": score} if config.restarts > 1 else {}
    return TopicModel(phi, theta, config, list(terms), list(doc_ids),
                      n_dk, n_kw, n_k, samples, extra)


def _run_chain(words, offsets, keys, D, K, V, alpha, beta, config, seed, on_sweep):
    z = np.zeros(len(words), dtype=np.int64)
    n_dk = np.zeros((D, K), dtype=np.int64)
    n_kw = np.zeros((K, V), dtype=np.int64)
    n_k = np.zeros(K, dtype=np.int64)
    _initialize(words, offsets, z, n_dk, n_kw, n_k, seed, keys)

    acc_dk = np.zeros((D, K))
    acc_kw = np.zeros((K, V))
    samples = 0
    for s in range(1, config.iterations + 1):
        _sweep(words, offsets, z, n_dk, n_kw, n_k, alpha, beta, V * beta, seed, keys, s)
        if on_sweep is not None:
            on_sweep(s, n_dk, n_kw, n_k)
        if s > config.burn_in and (s - config.burn_in) % config.sample_every == 0:
            acc_dk += n_dk
            acc_kw += n_kw
            samples += 1
    if samples == 0:
        acc_dk += n_dk
        acc_kw += n_kw
        samples = 1
    return acc_dk / samples, acc_kw / samples, n_dk, n_kw, n_k, samples


def dominant_topics(model: TopicModel) -> List[TopicAssignment]:
    best = np.argmax(model.theta, axis=1)  # first maximum on ties
    return [TopicAssignment(doc_id, int(k), float(model.theta[d, k]))
            for d, (doc_id, k) in enumerate(zip(model.doc_ids, best))]


def topic_shares(assignments: Sequence[TopicAssignment], K: int) -> np.ndarray:
    """Percentage of documents whose dominant topic is k."""
    counts = np.bincount([a.dominant_topic for a in assignments], minlength=K)
    return 100.0 * counts / max(1, len(assignments))


def representative_notes(assignments: Sequence[TopicAssignment], K: int,
                         threshold: float = 0.80) -> List[List[str]]:
    per_topic: List[List[TopicAssignment]] = [[] for _ in range(K)]
    for a in assignments:
        if a.contribution >= threshold:
            per_topic[a.dominant_topic].append(a)
    return [[a.note_id for a in sorted(group, key=lambda a: (-a.contribution, a.note_id))]
            for group in per_topic]


def top_keywords(model: TopicModel, n: int = 10):
    """Top-n terms per topic plus the terms unique to each topic's top list.

    Returns ``(top, unique)``: two per-topic lists of term strings.
    """
    V = model.phi.shape[1]
    n = min(n, V)
    ids = np.arange(V)
    top_ids = [np.lexsort((ids, -row))[:n] for row in model.phi]
    top = [[model.terms[i] for i in row] for row in top_ids]
    unique = []
    for k, words in enumerate(top):
        others = set()
        for j, other in enumerate(top):
            if j != k:
                others.update(other)
        unique.append([w for w in words if w not in others])
    return top, unique


def check_counts(n_dk: np.ndarray, n_kw: np.ndarray, n_k: np.ndarray,
                 doc_lengths: np.ndarray) -> None:
    """Assert the count-table conservation identities."""
    if not np.array_equal(n_dk.sum(axis=1), doc_lengths):
        raise AssertionError("sum_k n_dk != document length")
    if not np.array_equal(n_kw.sum(axis=1), n_k):
        raise AssertionError("sum_w n_kw != n_k")
    if not np.array_equal(n_dk.sum(axis=0), n_k):
        raise AssertionError("sum_d n_dk != n_k")
    if (n_dk < 0).any() or (n_kw < 0).any():
        raise AssertionError("negative count")


def normalized_rows(matrix: np.ndarray, tol: float = 1e-9) -> bool:
    return bool(np.all(np.abs(matrix.sum(axis=1) - 1.0) <= tol) and np.all(matrix > 0))
