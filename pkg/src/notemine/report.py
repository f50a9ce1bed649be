"""Rendering of the theme table, the discriminative-word table and run manifests.

Topics are numbered from 1 in rendered tables; internal topic ids start at 0.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .discriminate import FeatureRanking
from .lda import TopicAssignment


@dataclass
class Table:
    headers: List[str]
    rows: List[List[str]]
    footnote: str = ""
    flagged: set = field(default_factory=set)  # (row, column) cells to highlight
    title: str = ""

    def to_markdown(self) -> str:
        out = []
        if self.title:
            out += [f"**{self.title}**", ""]
        out.append("| " + " | ".join(self.headers) + " |")
        out.append("|" + "|".join("---" for _ in self.headers) + "|")
        for r, row in enumerate(self.rows):
            cells = [f"**{c}**" if (r, j) in self.flagged else c for j, c in enumerate(row)]
            out.append("| " + " | ".join(_md_escape(c) for c in cells) + " |")
        if self.footnote:
            out += ["", self.footnote]
        return "\n".join(out) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.headers)
        writer.writerows(self.rows)
        return buf.getvalue()


def _md_escape(text: str) -> str:
    return text.replace("|", "\\|").replace("\n", " ")


def rounded_shares(counts: Sequence[int]) -> List[float]:
    """Percentages to one decimal that add up to exactly 100.0.

    Largest-remainder rounding in tenths of a percent; ties go to the lower
    topic id.
    """
    counts = np.asarray(counts, dtype=np.int64)
    total = int(counts.sum())
    if total == 0:
        return [0.0] * len(counts)
    exact = counts * 1000
    tenths = exact // total
    remainder = exact - tenths * total
    short = 1000 - int(tenths.sum())
    order = sorted(range(len(counts)), key=lambda k: (-int(remainder[k]), k))
    for k in order[:short]:
        tenths[k] += 1
    return [int(t) / 10.0 for t in tenths]


def topic_label(k: int, labels: Optional[Sequence[str]]) -> str:
    if labels and k < len(labels) and labels[k]:
        return f"{k + 1}. {labels[k]}"
    return f"{k + 1}."


def table1(K: int, assignments: Sequence[TopicAssignment], unique_keywords: Sequence[Sequence[str]],
           representatives: Sequence[Sequence[str]], labels: Optional[Sequence[str]] = None,
           texts: Optional[Dict[str, str]] = None, max_representatives: int = 1,
           threshold: float = 0.80) -> Table:
    """One row per topic: label, share of notes, unique top keywords, representative notes."""
    counts = np.bincount([a.dominant_topic for a in assignments], minlength=K)
    shares = rounded_shares(counts)
    rows = []
    for k in range(K):
        reps = list(representatives[k])[:max_representatives]
        shown = [f"[{r}] {texts[r]}" if texts and r in texts else r for r in reps]
        rows.append([topic_label(k, labels), f"{shares[k]:.1f}",
                     ", ".join(unique_keywords[k]), " / ".join(shown)])
    return Table(
        headers=["Topic number and theme", "% of notes", "Unique keywords among top 10 keywords",
                 "Representative clinical note"],
        rows=rows,
        footnote=f"Note: each representative note has a contribution of {threshold:.2f} "
                 "or higher to its topic.",
        title="Themes, share of notes, unique keywords and representative notes per topic",
    )


def format_chi2(chi2: float, dof: int) -> str:
    return f"χ²({dof}) = {chi2:.1f}"


def table2(ranking: FeatureRanking, labels: Optional[Sequence[str]] = None) -> Table:
    """Top discriminative words with chi2 and per-topic note counts; row maxima flagged."""
    K = ranking.K
    headers = ["Top words", "chi2", "dof", "p"] + [topic_label(k, labels) for k in range(K)]
    rows, flagged = [], set()
    feats = sorted(ranking.features, key=lambda f: (-f.chi2, f.term_id))
    for r, f in enumerate(feats):
        rows.append([f"{f.term} ({format_chi2(f.chi2, f.dof)})", f"{f.chi2:.4f}", str(f.dof),
                     f"{f.p_value:.3g}"] + [str(c) for c in f.counts])
        flagged.add((r, 4 + int(np.argmax(f.counts))))
    return Table(
        headers=headers,
        rows=rows,
        flagged=flagged,
        footnote=f"Note: all words are significant at the {ranking.alpha_level:g} level. "
                 "The highest note count in each row is highlighted.",
        title=f"Top {len(rows)} words distinguishing the topics",
    )


def table2_tsv(ranking: FeatureRanking) -> str:
    """Tab-separated ranking; the per-row maximum count carries a trailing '*'."""
    K = ranking.K
    lines = ["term\tchi2\tdof\tp\t" + "\t".join(f"topic_{k + 1}" for k in range(K))]
    for f in sorted(ranking.features, key=lambda f: (-f.chi2, f.term_id)):
        best = int(np.argmax(f.counts))
        cells = [f"{c}*" if k == best else str(c) for k, c in enumerate(f.counts)]
        lines.append(f"{f.term}\t{f.chi2!r}\t{f.dof}\t{f.p_value!r}\t" + "\t".join(cells))
    return "\n".join(lines) + "\n"


def table2_csv(ranking: FeatureRanking) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["term", "chi2", "dof", "p"] + [f"topic_{k + 1}" for k in range(ranking.K)]
                    + ["max_topic"])
    for f in sorted(ranking.features, key=lambda f: (-f.chi2, f.term_id)):
        writer.writerow([f.term, repr(f.chi2), f.dof, repr(f.p_value)] + list(f.counts)
                        + [int(np.argmax(f.counts)) + 1])
    return buf.getvalue()


def load_labels(path) -> List[str]:
    return [line.strip() for line in Path(path).read_text("utf-8").splitlines()]


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def manifest(config_text: str, seeds: Dict[str, int], artifacts: Dict[str, str],
             extra: Optional[dict] = None) -> str:
    """Run manifest as JSON: the verbatim config, seeds and artifact hashes."""
    import numba
    import numpy

    from . import __version__
    data = {
        "config": config_text,
        "seeds": seeds,
        "artifacts": {name: sha256_file(path) for name, path in sorted(artifacts.items())},
        "versions": {"notemine": __version__, "numpy": numpy.__version__,
                     "numba": numba.__version__},
    }
    if extra:
        data.update(extra)
    return json.dumps(data, indent=1, sort_keys=True) + "\n"
