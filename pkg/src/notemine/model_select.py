"""Topic coherence and selection of the number of topics."""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import lda
from .vectorize import SparseCorpus

logger = logging.getLogger(__name__)

THREADS_ENV = "NOTEMINE_THREADS"


def thread_count(requested: Optional[int] = None) -> int:
    cap = os.environ.get(THREADS_ENV)
    n = requested if requested is not None else (os.cpu_count() or 1)
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def _top_ids(model: lda.TopicModel, top_n: int) -> List[np.ndarray]:
    V = model.phi.shape[1]
    ids = np.arange(V)
    return [np.lexsort((ids, -row))[:min(top_n, V)] for row in model.phi]


def _presence(corpus: SparseCorpus, term_ids: Sequence[int]) -> dict:
    wanted = set(int(t) for t in term_ids)
    docs = {t: set() for t in wanted}
    for d, vec in enumerate(corpus.counts):
        for t in vec.ids.tolist():
            if t in wanted:
                docs[t].add(d)
    return docs


def umass_pair(co_count: int, df_conditioning: int) -> float:
    return math.log((co_count + 1) / df_conditioning)


def umass_coherence(model: lda.TopicModel, corpus: SparseCorpus,
                    top_n: int = 10) -> Tuple[List[float], float]:
    """UMass coherence of each topic's top terms and their mean.

    For ranked top terms w_1..w_n, C = sum over i < j of
    log((D(w_i, w_j) + 1) / D(w_j)) with D counting documents.
    """
    tops = _top_ids(model, top_n)
    docs = _presence(corpus, np.concatenate(tops))
    scores = []
    for ids in tops:
        total = 0.0
        for a in range(len(ids)):
            for b in range(a + 1, len(ids)):
                wi, wj = int(ids[a]), int(ids[b])
                if not docs[wj]:
                    raise ValueError(f"term {model.terms[wj]!r} occurs in no document")
                total += umass_pair(len(docs[wi] & docs[wj]), len(docs[wj]))
        scores.append(total)
    return scores, float(np.mean(scores))


def npmi(n_ij: float, n_i: float, n_j: float, n: float) -> float:
    """Normalised PMI from co-occurrence counts over ``n`` contexts."""
    if n_ij == 0:
        return -1.0
    p_ij, p_i, p_j = n_ij / n, n_i / n, n_j / n
    if p_ij >= 1.0:
        return 1.0
    return math.log(p_ij / (p_i * p_j)) / -math.log(p_ij)


def npmi_coherence(model: lda.TopicModel, docs: Sequence[Sequence[str]], window: int = 10,
                   top_n: int = 10) -> Tuple[List[float], float]:
    """Mean NPMI over top-term pairs, counting sliding windows as contexts.

    A document shorter than ``window`` contributes one window.
    """
    tops = _top_ids(model, top_n)
    wanted = {model.terms[int(t)] for ids in tops for t in ids}
    single = {}
    pair = {}
    n_windows = 0
    for tokens in docs:
        marks = [tok if tok in wanted else None for tok in tokens]
        starts = range(max(1, len(marks) - window + 1))
        for s in starts:
            present = sorted({m for m in marks[s:s + window] if m is not None})
            n_windows += 1
            for a, wa in enumerate(present):
                single[wa] = single.get(wa, 0) + 1
                for wb in present[a + 1:]:
                    pair[(wa, wb)] = pair.get((wa, wb), 0) + 1
    scores = []
    for ids in tops:
        terms = [model.terms[int(t)] for t in ids]
        vals = []
        for a in range(len(terms)):
            for b in range(a + 1, len(terms)):
                wa, wb = sorted((terms[a], terms[b]))
                vals.append(npmi(pair.get((wa, wb), 0), single.get(wa, 0),
                                 single.get(wb, 0), n_windows))
        scores.append(float(np.mean(vals)) if vals else 0.0)
    return scores, float(np.mean(scores))


@dataclass
class SweepRecord:
    K: int
    coherence: Optional[float]
    seed: int
    model_path: Optional[str] = None
    error: Optional[str] = None


@dataclass
class SweepResult:
    records: List[SweepRecord]
    selected_K: int
    measure: str
    models: dict = field(default_factory=dict, repr=False)

    def to_tsv(self) -> str:
        lines = ["K\tcoherence\tseed"]
        for r in self.records:
            value = "nan" if r.coherence is None else repr(r.coherence)
            lines.append(f"{r.K}\t{value}\t{r.seed}")
        return "\n".join(lines) + "\n"


def select_k(records: Sequence[SweepRecord]) -> int:
    """Highest coherence wins; ties go to the smaller K."""
    scored = [r for r in records if r.coherence is not None]
    if not scored:
        raise RuntimeError("no topic count could be fitted")
    best = max(scored, key=lambda r: (r.coherence, -r.K))
    return best.K


def sweep(corpus: SparseCorpus, k_grid: Sequence[int], base_config: lda.LdaConfig,
          terms: Sequence[str], measure: str = "umass", top_n: int = 10,
          docs: Optional[Sequence[Sequence[str]]] = None, window: int = 10,
          model_dir=None, threads: Optional[int] = None) -> SweepResult:
    """Fit one model per K and pick the most coherent.

    Each fit uses seed ``base_config.seed + K``. A K whose fit fails is
    recorded with its error and skipped.
    """
    grid = list(k_grid)
    if not grid:
        raise ValueError("empty K grid")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("K grid must be strictly increasing")
    if measure not in ("umass", "npmi"):
        raise ValueError(f"unknown coherence measure {measure!r}")
    if measure == "npmi" and docs is None:
        raise ValueError("npmi needs the tokenized documents")
    streams = lda.prepare_tokens(corpus, base_config.weight_mode, base_config.tfidf_scale)

    def run(K: int):
        cfg = replace(base_config, K=K, seed=base_config.seed + K)
        try:
            model = lda.fit(streams, cfg, vocab_size=len(terms), terms=list(terms),
                            doc_ids=list(corpus.doc_ids))
            if measure == "umass":
                _, score = umass_coherence(model, corpus, top_n)
            else:
                _, score = npmi_coherence(model, docs, window, top_n)
        except Exception as exc:  # recorded and skipped
            logger.warning("fit for K=%d failed: %s", K, exc)
            return SweepRecord(K, None, cfg.seed, error=f"{type(exc).__name__}: {exc}"), None
        path = None
        if model_dir is not None:
            path = str(Path(model_dir) / f"model_k{K}.json")
            model.save(path)
        return SweepRecord(K, score, cfg.seed, model_path=path), model

    n_threads = min(thread_count(threads), len(grid))
    if n_threads > 1:
        # compile the kernels once before fanning out
        lda.fit([np.zeros(1, dtype=np.int64)], lda.LdaConfig(K=1, iterations=1, burn_in=0))
        with ThreadPoolExecutor(n_threads) as pool:
            outcomes = list(pool.map(run, grid))
    else:
        outcomes = [run(K) for K in grid]
    records = [rec for rec, _ in outcomes]
    models = {rec.K: model for rec, model in outcomes if model is not None}
    return SweepResult(records, select_k(records), measure, models)


def coherence_svg(result: SweepResult, width: int = 480, height: int = 320) -> str:
    """Line plot of coherence against K as a standalone SVG document."""
    pts = [(r.K, r.coherence) for r in result.records if r.coherence is not None]
    pad = 48
    ks = [k for k, _ in pts] or [0, 1]
    cs = [c for _, c in pts] or [0.0, 1.0]
    k0, k1 = min(ks), max(ks)
    c0, c1 = min(cs), max(cs)
    if k1 == k0:
        k1 = k0 + 1
    if c1 == c0:
        c0, c1 = c0 - 1.0, c1 + 1.0

    def x(k):
        return pad + (k - k0) / (k1 - k0) * (width - 2 * pad)

    def y(c):
        return height - pad - (c - c0) / (c1 - c0) * (height - 2 * pad)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           '<rect width="100%" height="100%" fill="white"/>',
           f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
           f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
           f'<text x="{width / 2:.1f}" y="{height - 10}" text-anchor="middle" '
           f'font-size="12">number of topics</text>',
           f'<text x="14" y="{height / 2:.1f}" text-anchor="middle" font-size="12" '
           f'transform="rotate(-90 14 {height / 2:.1f})">{result.measure} coherence</text>']
    for k in ks:
        out.append(f'<text x="{x(k):.1f}" y="{height - pad + 16}" text-anchor="middle" '
                   f'font-size="10">{k}</text>')
    for c in (c0, c1):
        out.append(f'<text x="{pad - 4}" y="{y(c):.1f}" text-anchor="end" '
                   f'font-size="10">{c:.2f}</text>')
    if pts:
        poly = " ".join(f"{x(k):.1f},{y(c):.1f}" for k, c in pts)
        out.append(f'<polyline points="{poly}" fill="none" stroke="steelblue" stroke-width="2"/>')
        for k, c in pts:
            fill = "crimson" if k == result.selected_K else "steelblue"
            out.append(f'<circle cx="{x(k):.1f}" cy="{y(c):.1f}" r="3.5" fill="{fill}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
