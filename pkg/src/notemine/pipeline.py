"""Stage functions and the end-to-end pipeline driven by one config file.

Every stage reads the artifacts of earlier stages from the output directory
and writes its own, so any stage can be rerun on its own. ``stages.json``
records, per stage, a hash of the stage's parameters and inputs plus the
hashes of what it wrote; ``resume`` skips stages whose record still holds.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional

from . import discriminate, lda, model_select, report
from .ingest import EMPTIED, NO_IMPRESSION, CorpusStats, funnel_report, load_corpus, write_corpus
from .negation import DEFAULT_WINDOW, default_lexicon, detect_and_fuse, load_lexicon
from .sectioner import (DEFAULT_LABELS, TokenizedDoc, extract_impression, load_stoplist,
                        remove_stopwords, tokenize_impression)
from .synthgen import GeneratorSpec, generate
from .vectorize import (SparseCorpus, TfidfConfig, Vocabulary, build_vocabulary,
                        detect_phrases, tfidf)

logger = logging.getLogger(__name__)

STAGES = ("synth", "ingest", "preprocess", "negate", "phrases", "vectorize",
          "sweep", "fit", "discriminate", "report")


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


# ---------------------------------------------------------------------------
# configuration

@dataclass
class PipelineConfig:
    output_dir: Path
    input_path: Optional[Path] = None
    input_format: Optional[str] = None
    synth_spec: Optional[Path] = None
    section_labels: List[str] = field(default_factory=lambda: list(DEFAULT_LABELS))
    stoplist: Optional[Path] = None
    stem: bool = False
    split_hyphens: bool = False
    lexicon: Optional[Path] = None
    window: int = DEFAULT_WINDOW
    phrases: bool = True
    phrase_min_count: int = 5
    phrase_threshold: float = 10.0
    phrase_passes: int = 1
    min_df: int = 1
    tfidf: TfidfConfig = field(default_factory=TfidfConfig)
    lda: lda.LdaConfig = field(default_factory=lda.LdaConfig)
    fixed_k: Optional[int] = None
    sweep_grid: List[int] = field(default_factory=lambda: list(range(2, 11)))
    measure: str = "umass"
    coherence_top_n: int = 10
    npmi_window: int = 10
    alpha_level: float = 0.01
    top_n: int = 20
    ranking_mode: str = "marginal"
    labels: Optional[Path] = None
    representative_threshold: float = 0.80
    max_representatives: int = 1
    text: str = ""

    def validate(self) -> None:
        if self.synth_spec is None and self.input_path is None:
            raise ValueError("[input] needs either path or synth_spec")
        for name in ("synth_spec", "stoplist", "lexicon", "labels"):
            p = getattr(self, name)
            if p is not None and not Path(p).is_file():
                raise FileNotFoundError(f"{name} file not found: {p}")
        if self.fixed_k is None and not self.sweep_grid:
            raise ValueError("need [lda] k or a [sweep] grid")


def _path(value: Optional[str], base: Path) -> Optional[Path]:
    if value is None or value.strip() == "":
        return None
    p = Path(value.strip()).expanduser()
    return p if p.is_absolute() else (base / p)


def parse_config(path) -> PipelineConfig:
    """Read a sectioned ``key = value`` config; relative paths resolve against its folder."""
    path = Path(path)
    text = path.read_text("utf-8")
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.read_string(text, source=str(path))
    base = path.parent
    g = lambda sec, key, fallback=None: cp.get(sec, key, fallback=fallback)  # noqa: E731

    def opt_float(sec, key):
        v = g(sec, key)
        return None if v in (None, "", "auto") else float(v)

    out = _path(g("output", "dir", "out"), base)
    labels = g("preprocess", "section_labels")
    k_value = g("lda", "k", "auto")
    kmin = cp.getint("sweep", "kmin", fallback=2)
    kmax = cp.getint("sweep", "kmax", fallback=10)
    cfg = PipelineConfig(
        output_dir=out,
        input_path=_path(g("input", "path"), base),
        input_format=g("input", "format") or None,
        synth_spec=_path(g("input", "synth_spec"), base),
        section_labels=[s.strip().upper() for s in labels.split(",")] if labels else list(DEFAULT_LABELS),
        stoplist=_path(g("preprocess", "stoplist"), base),
        stem=cp.getboolean("preprocess", "stem", fallback=False),
        split_hyphens=cp.getboolean("preprocess", "split_hyphens", fallback=False),
        lexicon=_path(g("negation", "lexicon"), base),
        window=cp.getint("negation", "window", fallback=DEFAULT_WINDOW),
        phrases=cp.getboolean("phrases", "enabled", fallback=True),
        phrase_min_count=cp.getint("phrases", "min_count", fallback=5),
        phrase_threshold=cp.getfloat("phrases", "threshold", fallback=10.0),
        phrase_passes=cp.getint("phrases", "passes", fallback=1),
        min_df=cp.getint("tfidf", "min_df", fallback=1),
        tfidf=TfidfConfig(log_base=cp.getfloat("tfidf", "log_base", fallback=2.0),
                          smooth=cp.getboolean("tfidf", "smooth", fallback=False),
                          normalize=cp.getboolean("tfidf", "normalize", fallback=True)),
        lda=lda.LdaConfig(
            K=1 if k_value == "auto" else int(k_value),
            alpha=opt_float("lda", "alpha"),
            beta=cp.getfloat("lda", "beta", fallback=0.01),
            iterations=cp.getint("lda", "iterations", fallback=1000),
            burn_in=cp.getint("lda", "burn_in", fallback=500),
            sample_every=cp.getint("lda", "sample_every", fallback=10),
            seed=cp.getint("lda", "seed", fallback=0),
            weight_mode=g("lda", "weight_mode", "scaled_tfidf"),
            tfidf_scale=cp.getfloat("lda", "tfidf_scale", fallback=5.0),
            restarts=cp.getint("lda", "restarts", fallback=1),
        ),
        fixed_k=None if k_value == "auto" else int(k_value),
        sweep_grid=list(range(kmin, kmax + 1)),
        measure=g("sweep", "measure", "umass"),
        coherence_top_n=cp.getint("sweep", "top_n", fallback=10),
        npmi_window=cp.getint("sweep", "window", fallback=10),
        alpha_level=cp.getfloat("discriminate", "alpha_level", fallback=0.01),
        top_n=cp.getint("discriminate", "top_n", fallback=20),
        ranking_mode=g("discriminate", "mode", "marginal"),
        labels=_path(g("report", "labels"), base),
        representative_threshold=cp.getfloat("report", "threshold", fallback=0.80),
        max_representatives=cp.getint("report", "representatives", fallback=1),
        text=text,
    )
    return cfg


# ---------------------------------------------------------------------------
# artifact helpers

def write_jsonl(records, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def read_jsonl(path) -> List[dict]:
    with Path(path).open("r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_json(data, path) -> None:
    Path(path).write_text(json.dumps(data, indent=1, sort_keys=True, ensure_ascii=False) + "\n",
                          encoding="utf-8")


def read_docs(path) -> List[TokenizedDoc]:
    return [TokenizedDoc.from_record(r) for r in read_jsonl(path)]


def write_assignments(assignments, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("note_id\tdominant_topic\tcontribution\n")
        for a in assignments:
            fh.write(f"{a.note_id}\t{a.dominant_topic}\t{a.contribution!r}\n")


def read_assignments(path) -> List[lda.TopicAssignment]:
    rows = Path(path).read_text("utf-8").splitlines()[1:]
    out = []
    for row in rows:
        note_id, k, c = row.split("\t")
        out.append(lda.TopicAssignment(note_id, int(k), float(c)))
    return out


def ranking_to_dict(ranking: discriminate.FeatureRanking) -> dict:
    return asdict(ranking)


def ranking_from_dict(data: dict) -> discriminate.FeatureRanking:
    feats = [discriminate.RankedFeature(**f) for f in data["features"]]
    return discriminate.FeatureRanking(feats, data["alpha_level"], data["K"], data["mode"],
                                       data.get("topic_totals", []))


# ---------------------------------------------------------------------------
# stages (usable standalone)

def stage_synth(spec_path, out_dir) -> Path:
    out_dir = Path(out_dir)
    generate(GeneratorSpec.load(spec_path), out_dir)
    return out_dir / "notes.jsonl"


def stage_ingest(input_path, out_dir, fmt: Optional[str] = None) -> CorpusStats:
    out_dir = Path(out_dir)
    stats = CorpusStats()
    notes = load_corpus(input_path, fmt, stats)
    write_corpus(notes, out_dir / "notes.jsonl")
    write_json(stats.to_dict(), out_dir / "ingest_stats.json")
    return stats


def stage_preprocess(out_dir, labels=DEFAULT_LABELS, split_hyphens=False, stem=False,
                     stoplist=None) -> CorpusStats:
    """IMPRESSION extraction, sentence splitting and character normalisation.

    Stop words are kept here so the negation stage can see its triggers; pass
    ``stoplist`` only when the negation stage will be skipped.
    """
    out_dir = Path(out_dir)
    stats = CorpusStats.from_dict(json.loads((out_dir / "ingest_stats.json").read_text("utf-8")))
    notes = load_corpus(out_dir / "notes.jsonl", "jsonl")
    records = []
    for note in notes:
        parsed = extract_impression(note, labels)
        if parsed is None:
            stats.drop(note.note_id, NO_IMPRESSION)
            continue
        doc = tokenize_impression(parsed, split_hyphens=split_hyphens, stem=stem)
        if stoplist is not None:
            doc = remove_stopwords(doc, stoplist)
        rec = doc.to_record()
        rec["impression"] = parsed.impression
        records.append(rec)
    stats.notes_with_impression = stats.total_notes - len(stats.dropped_note_ids)
    write_jsonl(records, out_dir / "sentences.jsonl")
    write_json(stats.to_dict(), out_dir / "preprocess_stats.json")
    return stats


def stage_negate(out_dir, lexicon=None, window=DEFAULT_WINDOW, stoplist=None,
                 negate: bool = True) -> CorpusStats:
    """Fuse negated phrases, then remove stop words and drop emptied notes."""
    out_dir = Path(out_dir)
    stats = CorpusStats.from_dict(
        json.loads((out_dir / "preprocess_stats.json").read_text("utf-8")))
    lexicon = lexicon or default_lexicon()
    stoplist = load_stoplist() if stoplist is None else stoplist
    out, impressions = [], {}
    for rec in read_jsonl(out_dir / "sentences.jsonl"):
        doc = TokenizedDoc.from_record(rec)
        if negate:
            doc = TokenizedDoc(doc.note_id, [detect_and_fuse(s, lexicon, window)
                                             for s in doc.sentences])
        doc = remove_stopwords(doc, stoplist)
        if not doc.sentences:
            stats.drop(doc.note_id, EMPTIED)
            continue
        out.append(doc.to_record())
        impressions[doc.note_id] = rec.get("impression", "")
    stats.notes_nonempty_after_preprocess = len(out)
    stats.check()
    write_jsonl(out, out_dir / "docs.jsonl")
    write_json(impressions, out_dir / "impressions.json")
    write_json(stats.to_dict(), out_dir / "funnel.json")
    (out_dir / "funnel.txt").write_text(funnel_report(stats) + "\n", encoding="utf-8")
    return stats


def stage_phrases(out_dir, enabled=True, min_count=5, threshold=10.0, passes=1) -> None:
    out_dir = Path(out_dir)
    docs = read_docs(out_dir / "docs.jsonl")
    if enabled:
        docs = detect_phrases(docs, min_count, threshold, passes)
    write_jsonl([d.to_record() for d in docs], out_dir / "phrased.jsonl")


def stage_vectorize(out_dir, tfidf_config: TfidfConfig = TfidfConfig(), min_df=1):
    out_dir = Path(out_dir)
    docs = read_docs(out_dir / "phrased.jsonl")
    vocab, corpus = build_vocabulary(docs, min_df=min_df)
    corpus = tfidf(corpus, vocab, tfidf_config)
    vocab.save(out_dir / "vocab.tsv")
    corpus.save(out_dir / "corpus.txt")
    write_json(asdict(tfidf_config), out_dir / "tfidf.json")
    return vocab, corpus


def _load_vectors(out_dir):
    out_dir = Path(out_dir)
    return Vocabulary.load(out_dir / "vocab.tsv"), SparseCorpus.load(out_dir / "corpus.txt")


def stage_sweep(out_dir, grid, base: lda.LdaConfig, measure="umass", top_n=10, window=10,
                threads=None) -> model_select.SweepResult:
    out_dir = Path(out_dir)
    vocab, corpus = _load_vectors(out_dir)
    docs = None
    if measure == "npmi":
        docs = [d.tokens for d in read_docs(out_dir / "phrased.jsonl")]
    result = model_select.sweep(corpus, grid, base, vocab.terms, measure=measure, top_n=top_n,
                                docs=docs, window=window, threads=threads)
    (out_dir / "sweep.tsv").write_text(result.to_tsv(), encoding="utf-8")
    (out_dir / "coherence.svg").write_text(model_select.coherence_svg(result), encoding="utf-8")
    write_json({"selected_K": result.selected_K, "measure": measure,
                "grid": list(grid), "base_seed": base.seed,
                "failed": {str(r.K): r.error for r in result.records if r.error}},
               out_dir / "sweep.json")
    return result


def stage_fit(out_dir, config: lda.LdaConfig, K: Optional[int] = None,
              threshold: float = 0.80, keywords: int = 10) -> lda.TopicModel:
    """Fit the final model; with ``K`` from a sweep the seed is ``config.seed + K``."""
    out_dir = Path(out_dir)
    vocab, corpus = _load_vectors(out_dir)
    if K is None:
        cfg = config
    else:
        cfg = replace(config, K=K, seed=config.seed + K)
    streams = lda.prepare_tokens(corpus, cfg.weight_mode, cfg.tfidf_scale)
    model = lda.fit(streams, cfg, vocab_size=len(vocab), terms=vocab.terms,
                    doc_ids=list(corpus.doc_ids))
    tfidf_cfg = out_dir / "tfidf.json"
    if tfidf_cfg.exists():
        model.extra["tfidf"] = json.loads(tfidf_cfg.read_text("utf-8"))
    model.save(out_dir / "model.json")
    assignments = lda.dominant_topics(model)
    write_assignments(assignments, out_dir / "assignments.tsv")
    top, unique = lda.top_keywords(model, keywords)
    write_json({"top": top, "unique": unique,
                "representatives": lda.representative_notes(assignments, model.K, threshold),
                "threshold": threshold},
               out_dir / "keywords.json")
    return model


def stage_discriminate(out_dir, alpha_level=0.01, top_n=20, mode="marginal"):
    out_dir = Path(out_dir)
    vocab, corpus = _load_vectors(out_dir)
    assignments = read_assignments(out_dir / "assignments.tsv")
    K = lda.TopicModel.load(out_dir / "model.json").K
    ranking = discriminate.rank_features(corpus, assignments, vocab, K, alpha_level, top_n, mode)
    data = ranking_to_dict(ranking)
    data["topic_of_interest"] = (discriminate.topic_of_interest(ranking)
                                 if ranking.features else None)
    write_json(data, out_dir / "ranking.json")
    (out_dir / "table2.tsv").write_text(report.table2_tsv(ranking), encoding="utf-8")
    return ranking


def stage_report(out_dir, labels_path=None, max_representatives=1) -> Dict[str, Path]:
    out_dir = Path(out_dir)
    K = lda.TopicModel.load(out_dir / "model.json").K
    assignments = read_assignments(out_dir / "assignments.tsv")
    kw = json.loads((out_dir / "keywords.json").read_text("utf-8"))
    ranking_data = json.loads((out_dir / "ranking.json").read_text("utf-8"))
    ranking = ranking_from_dict(ranking_data)
    texts = {}
    if (out_dir / "impressions.json").exists():
        texts = json.loads((out_dir / "impressions.json").read_text("utf-8"))
    labels = report.load_labels(labels_path) if labels_path else None
    t1 = report.table1(K, assignments, kw["unique"], kw["representatives"], labels, texts,
                       max_representatives, kw.get("threshold", 0.80))
    t2 = report.table2(ranking, labels)
    outputs = {
        "table1.md": t1.to_markdown(), "table1.csv": t1.to_csv(),
        "table2.md": t2.to_markdown(), "table2.csv": report.table2_csv(ranking),
    }
    toi = ranking_data.get("topic_of_interest")
    if toi is not None:
        outputs["table2.md"] += (f"\nTopic of interest: {report.topic_label(toi, labels)} "
                                 "(most notes containing the top words)\n")
    paths = {}
    for name, content in outputs.items():
        (out_dir / name).write_text(content, encoding="utf-8")
        paths[name] = out_dir / name
    return paths


# ---------------------------------------------------------------------------
# orchestration

def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


class _Ledger:
    """Per-stage input/output hashes kept in ``stages.json``."""

    def __init__(self, out_dir: Path):
        self.path = out_dir / "stages.json"
        self.data = json.loads(self.path.read_text("utf-8")) if self.path.exists() else {}

    def fresh(self, stage: str, key: str, out_dir: Path) -> bool:
        rec = self.data.get(stage)
        if not rec or rec["key"] != key:
            return False
        for name, digest in rec["outputs"].items():
            p = out_dir / name
            if not p.exists() or report.sha256_file(p) != digest:
                return False
        return True

    def record(self, stage: str, key: str, out_dir: Path, outputs: List[str]) -> None:
        self.data[stage] = {"key": key,
                            "outputs": {n: report.sha256_file(out_dir / n) for n in outputs}}
        write_json(self.data, self.path)

    def outputs_digest(self, stage: str) -> str:
        return _digest(self.data.get(stage, {}).get("outputs", {}))


STAGE_OUTPUTS = {
    "synth": ["synth/notes.jsonl", "synth/ground_truth.json"],
    "ingest": ["notes.jsonl", "ingest_stats.json"],
    "preprocess": ["sentences.jsonl", "preprocess_stats.json"],
    "negate": ["docs.jsonl", "impressions.json", "funnel.json", "funnel.txt"],
    "phrases": ["phrased.jsonl"],
    "vectorize": ["vocab.tsv", "corpus.txt", "corpus.txt.tfidf", "tfidf.json"],
    "sweep": ["sweep.tsv", "sweep.json", "coherence.svg"],
    "fit": ["model.json", "assignments.tsv", "keywords.json"],
    "discriminate": ["ranking.json", "table2.tsv"],
    "report": ["table1.md", "table1.csv", "table2.md", "table2.csv"],
}


def run_pipeline(config: PipelineConfig, resume: bool = False,
                 threads: Optional[int] = None) -> List[str]:
    """Run every stage in order; returns the names of the stages actually executed."""
    try:
        config.validate()
    except Exception as exc:
        raise PipelineError("config", exc) from exc
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not resume and (out / "stages.json").exists():
        (out / "stages.json").unlink()
    ledger = _Ledger(out)
    executed: List[str] = []
    earlier: List[str] = []

    def step(stage: str, params: dict, fn: Callable[[], None], inputs=()):
        # a stage may read any earlier artifact, so all of them enter its key
        input_hashes = [report.sha256_file(p) for p in inputs]
        key = _digest({"params": params, "inputs": input_hashes,
                       "upstream": [ledger.outputs_digest(s) for s in earlier]})
        if resume and ledger.fresh(stage, key, out):
            logger.info("stage %s up to date; skipped", stage)
        else:
            logger.info("running stage %s", stage)
            try:
                fn()
            except PipelineError:
                raise
            except Exception as exc:
                raise PipelineError(stage, exc) from exc
            ledger.record(stage, key, out, STAGE_OUTPUTS[stage])
            executed.append(stage)
        earlier.append(stage)

    input_path = config.input_path
    if config.synth_spec is not None:
        step("synth", {}, lambda: stage_synth(config.synth_spec, out / "synth"),
             [config.synth_spec])
        input_path = out / "synth" / "notes.jsonl"

    def ingest():
        if input_path is None or not Path(input_path).is_file():
            raise FileNotFoundError(f"input file not found: {input_path}")
        stage_ingest(input_path, out, config.input_format)

    step("ingest", {"format": config.input_format}, ingest,
         [input_path] if input_path is not None and Path(input_path).is_file() else [])

    stoplist = load_stoplist(config.stoplist)
    lexicon = load_lexicon(config.lexicon) if config.lexicon else default_lexicon()
    step("preprocess", {"labels": config.section_labels, "stem": config.stem,
                        "split_hyphens": config.split_hyphens},
         lambda: stage_preprocess(out, config.section_labels, config.split_hyphens, config.stem))
    step("negate", {"window": config.window, "stoplist": sorted(stoplist),
                    "lexicon": [list(g) for g in lexicon.groups()]},
         lambda: stage_negate(out, lexicon, config.window, stoplist))
    step("phrases", {"enabled": config.phrases, "min_count": config.phrase_min_count,
                     "threshold": config.phrase_threshold, "passes": config.phrase_passes},
         lambda: stage_phrases(out, config.phrases, config.phrase_min_count,
                               config.phrase_threshold, config.phrase_passes))
    step("vectorize", {"tfidf": asdict(config.tfidf), "min_df": config.min_df},
         lambda: stage_vectorize(out, config.tfidf, config.min_df))

    lda_params = asdict(config.lda)
    if config.fixed_k is None:
        step("sweep", {"grid": config.sweep_grid, "lda": lda_params, "measure": config.measure,
                       "top_n": config.coherence_top_n, "window": config.npmi_window},
             lambda: stage_sweep(out, config.sweep_grid, config.lda, config.measure,
                                 config.coherence_top_n, config.npmi_window, threads))
        selected = json.loads((out / "sweep.json").read_text("utf-8"))["selected_K"]
        fit_k = selected
    else:
        fit_k = None
    step("fit", {"lda": lda_params, "K": fit_k, "threshold": config.representative_threshold},
         lambda: stage_fit(out, config.lda, fit_k, config.representative_threshold))
    step("discriminate", {"alpha_level": config.alpha_level, "top_n": config.top_n,
                          "mode": config.ranking_mode},
         lambda: stage_discriminate(out, config.alpha_level, config.top_n, config.ranking_mode))
    step("report", {"max_representatives": config.max_representatives},
         lambda: stage_report(out, config.labels, config.max_representatives),
         [config.labels] if config.labels else [])

    artifacts = {}
    for stage, names in STAGE_OUTPUTS.items():
        if stage in ledger.data:
            for name in names:
                artifacts[name] = out / name
    model = lda.TopicModel.load(out / "model.json")
    seeds = {"lda_base_seed": config.lda.seed, "final_fit_seed": model.config.seed}
    (out / "manifest.json").write_text(
        report.manifest(config.text, seeds, artifacts, {"final_K": model.K}), encoding="utf-8")
    return executed

