"""Command-line front end: ``notemine <subcommand> ...``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import lda, pipeline
from .negation import DEFAULT_WINDOW, load_lexicon
from .sectioner import DEFAULT_LABELS, load_stoplist
from .vectorize import TfidfConfig


def _lda_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=None, help="doc-topic prior (default 1/K)")
    p.add_argument("--beta", type=float, default=0.01)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--burn-in", type=int, default=500)
    p.add_argument("--sample-every", type=int, default=10)
    p.add_argument("--weight-mode", choices=("scaled_tfidf", "counts"), default="scaled_tfidf")
    p.add_argument("--tfidf-scale", type=float, default=5.0)
    p.add_argument("--restarts", type=int, default=1, help="independent chains per fit")


def _lda_config(args, K: int) -> lda.LdaConfig:
    return lda.LdaConfig(K=K, alpha=args.alpha, beta=args.beta, iterations=args.iterations,
                         burn_in=args.burn_in, sample_every=args.sample_every, seed=args.seed,
                         weight_mode=args.weight_mode, tfidf_scale=args.tfidf_scale,
                         restarts=args.restarts)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="notemine",
                                     description="Theme mining for clinical procedure notes.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the whole pipeline from a config file")
    p.add_argument("config")
    p.add_argument("--resume", action="store_true",
                   help="skip stages whose inputs and outputs are unchanged")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default=None, help="override [output] dir")

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ingest", help="load notes into OUT/notes.jsonl")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("jsonl", "csv"), default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("preprocess", help="extract and normalise impressions")
    p.add_argument("--out", required=True, help="directory holding the ingest artifacts")
    p.add_argument("--stoplist", default=None,
                   help="remove these words now (only when skipping the negate stage)")
    p.add_argument("--stem", action="store_true")
    p.add_argument("--split-hyphens", action="store_true")
    p.add_argument("--labels", default=",".join(DEFAULT_LABELS))

    p = sub.add_parser("negate", help="fuse negated phrases and remove stop words")
    p.add_argument("--out", required=True)
    p.add_argument("--lexicon", default=None)
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    p.add_argument("--stoplist", default=None)
    p.add_argument("--skip-negation", action="store_true")

    p = sub.add_parser("vectorize", help="phrase detection, vocabulary and TF-IDF")
    p.add_argument("--out", required=True)
    p.add_argument("--no-phrases", action="store_true")
    p.add_argument("--min-count", type=int, default=5)
    p.add_argument("--threshold", type=float, default=10.0)
    p.add_argument("--passes", type=int, default=1)
    p.add_argument("--min-df", type=int, default=1)
    p.add_argument("--log-base", type=float, default=2.0)
    p.add_argument("--smooth-idf", action="store_true")
    p.add_argument("--no-normalize", action="store_true")

    p = sub.add_parser("fit", help="fit the topic model")
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--threshold", type=float, default=0.80)
    _lda_args(p)

    p = sub.add_parser("sweep", help="choose the number of topics by coherence")
    p.add_argument("--out", required=True)
    p.add_argument("--kmin", type=int, default=2)
    p.add_argument("--kmax", type=int, default=10)
    p.add_argument("--measure", choices=("umass", "npmi"), default="umass")
    p.add_argument("--top-n", type=int, default=10)
    p.add_argument("--threads", type=int, default=None)
    _lda_args(p)

    p = sub.add_parser("discriminate", help="chi-square ranking of discriminative words")
    p.add_argument("--out", required=True)
    p.add_argument("--alpha-level", type=float, default=0.01)
    p.add_argument("--top-n", type=int, default=20)
    p.add_argument("--mode", choices=("marginal", "forward"), default="marginal")

    p = sub.add_parser("report", help="render the topic and word tables")
    p.add_argument("--model", required=True, help="model.json inside a pipeline output folder")
    p.add_argument("--out", default=None, help="defaults to the model's folder")
    p.add_argument("--labels", default=None, help="one topic label per line")
    p.add_argument("--representatives", type=int, default=1)
    return parser


def _dispatch(args) -> None:
    cmd = args.command
    if cmd == "run":
        cfg = pipeline.parse_config(args.config)
        if args.out:
            cfg.output_dir = Path(args.out)
        executed = pipeline.run_pipeline(cfg, resume=args.resume, threads=args.threads)
        print(f"stages run: {', '.join(executed) or 'none'}; outputs in {cfg.output_dir}")
    elif cmd == "synth":
        print(pipeline.stage_synth(args.spec, args.out))
    elif cmd == "ingest":
        Path(args.out).mkdir(parents=True, exist_ok=True)
        stats = pipeline.stage_ingest(args.input, args.out, args.format)
        print(f"{stats.total_notes} notes")
    elif cmd == "preprocess":
        stop = load_stoplist(args.stoplist) if args.stoplist else None
        labels = [s.strip().upper() for s in args.labels.split(",") if s.strip()]
        stats = pipeline.stage_preprocess(args.out, labels, args.split_hyphens, args.stem, stop)
        print(f"{stats.notes_with_impression} notes with an impression")
    elif cmd == "negate":
        lex = load_lexicon(args.lexicon) if args.lexicon else None
        stats = pipeline.stage_negate(args.out, lex, args.window, load_stoplist(args.stoplist),
                                      negate=not args.skip_negation)
        print(Path(args.out, "funnel.txt").read_text("utf-8"), end="")
    elif cmd == "vectorize":
        pipeline.stage_phrases(args.out, not args.no_phrases, args.min_count, args.threshold,
                               args.passes)
        vocab, corpus = pipeline.stage_vectorize(
            args.out, TfidfConfig(args.log_base, args.smooth_idf, not args.no_normalize),
            args.min_df)
        print(f"{len(corpus)} documents, {len(vocab)} terms")
    elif cmd == "fit":
        model = pipeline.stage_fit(args.out, _lda_config(args, args.k), None, args.threshold)
        print(f"fitted K={model.K}")
    elif cmd == "sweep":
        result = pipeline.stage_sweep(args.out, list(range(args.kmin, args.kmax + 1)),
                                      _lda_config(args, args.kmin), args.measure, args.top_n,
                                      threads=args.threads)
        print(result.to_tsv(), end="")
        print(f"selected K = {result.selected_K}")
    elif cmd == "discriminate":
        ranking = pipeline.stage_discriminate(args.out, args.alpha_level, args.top_n, args.mode)
        print(f"{len(ranking.features)} significant features")
    elif cmd == "report":
        model_dir = Path(args.model).parent
        paths = pipeline.stage_report(model_dir, args.labels, args.representatives)
        if args.out is not None and Path(args.out).resolve() != model_dir.resolve():
            Path(args.out).mkdir(parents=True, exist_ok=True)
            for name, path in paths.items():
                Path(args.out, name).write_bytes(path.read_bytes())
        print(Path(model_dir, "table1.md").read_text("utf-8"))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _dispatch(args)
    except pipeline.PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
