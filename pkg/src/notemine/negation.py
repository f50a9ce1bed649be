"""NegEx-style negation detection with phrase fusion.

A negated phrase is collapsed into one token prefixed with ``no_`` so that
``no focal consolidation`` becomes ``no_focal_consolidation`` and the
negated concept stays distinct from its affirmed form downstream.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

CATEGORIES = ("PRE", "POST", "PSEUDO", "TERM")

# Trigger tokens that carry no content of their own; they are dropped when
# the phrase they negate is fused. Other trigger tokens are kept.
BARE_NEGATORS = frozenset({"no", "not", "without", "never", "none", "nor"})

# Stripped from both edges of a scope before fusion.
EDGE_STOPWORDS = frozenset({
    "a", "an", "the", "of", "and", "or", "to", "in", "on", "at", "by", "for",
    "with", "from", "is", "are", "was", "were", "be", "been", "as", "that",
    "this", "there", "any", "seen", "identified", "noted",
})

DEFAULT_WINDOW = 5


class LexiconError(ValueError):
    pass


@dataclass(frozen=True)
class TriggerLexicon:
    pre_negation: Tuple[Tuple[str, ...], ...]
    post_negation: Tuple[Tuple[str, ...], ...]
    pseudo_negation: Tuple[Tuple[str, ...], ...]
    termination: Tuple[Tuple[str, ...], ...]

    @classmethod
    def from_phrases(cls, pre, post, pseudo, term) -> "TriggerLexicon":
        def conv(phrases):
            return tuple(tuple(p.lower().split()) for p in phrases if p.strip())
        lex = cls(conv(pre), conv(post), conv(pseudo), conv(term))
        for name, group in zip(CATEGORIES, lex.groups()):
            if not group:
                raise LexiconError(f"category [{name}] is empty")
        return lex

    def groups(self):
        return (self.pre_negation, self.post_negation, self.pseudo_negation, self.termination)


@dataclass(frozen=True)
class NegationSpan:
    sentence_index: int
    trigger: Tuple[int, int]  # token range [start, end)
    scope: Tuple[int, int]
    fused_token: str


def parse_lexicon(text: str) -> TriggerLexicon:
    groups = {name: [] for name in CATEGORIES}
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().upper()
            if current not in groups:
                raise LexiconError(f"line {lineno}: unknown category {line}")
            continue
        if current is None:
            raise LexiconError(f"line {lineno}: phrase before any category header")
        groups[current].append(line)
    return TriggerLexicon.from_phrases(*(groups[name] for name in CATEGORIES))


def load_lexicon(path=None) -> TriggerLexicon:
    """Read a lexicon file; ``None`` loads the bundled NegEx-derived default."""
    if path is None:
        text = resources.files("notemine").joinpath("data/negex_lexicon.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return parse_lexicon(text)


def format_lexicon(lexicon: TriggerLexicon) -> str:
    blocks = []
    for name, group in zip(CATEGORIES, lexicon.groups()):
        blocks.append("\n".join([f"[{name}]"] + [" ".join(p) for p in group]))
    return "\n\n".join(blocks) + "\n"


def save_lexicon(lexicon: TriggerLexicon, path) -> None:
    Path(path).write_text(format_lexicon(lexicon), encoding="utf-8")


class _Matcher:
    """Longest-match lookup of lexicon phrases at a token position."""

    def __init__(self, lexicon: TriggerLexicon):
        self.tables = {}
        for name, group in zip(CATEGORIES, lexicon.groups()):
            by_len = {}
            for phrase in group:
                by_len.setdefault(len(phrase), set()).add(phrase)
            self.tables[name] = sorted(by_len.items(), reverse=True)

    def match(self, category: str, tokens: Sequence[str], i: int) -> int:
        for length, phrases in self.tables[category]:
            if i + length <= len(tokens) and tuple(tokens[i:i + length]) in phrases:
                return length
        return 0


_matchers = {}


def _matcher(lexicon: TriggerLexicon) -> _Matcher:
    m = _matchers.get(id(lexicon))
    if m is None or m[0] is not lexicon:
        m = (lexicon, _Matcher(lexicon))
        _matchers[id(lexicon)] = m
    return m[1]


def _trim(tokens: Sequence[str], start: int, end: int) -> Tuple[int, int]:
    while end > start and tokens[end - 1] in EDGE_STOPWORDS:
        end -= 1
    while start < end and tokens[start] in EDGE_STOPWORDS:
        start += 1
    return start, end


def find_negations(sentence: Sequence[str], lexicon: TriggerLexicon,
                   window: int = DEFAULT_WINDOW, sentence_index: int = 0) -> List[NegationSpan]:
    """Locate negation triggers and their scopes in one sentence.

    Scanning is left to right. Pseudo-negations are skipped whole; a
    pre-negation scope runs forward to the first termination term, the next
    trigger, the sentence end or ``window`` tokens; a post-negation scope runs
    backwards under the same limits, never re-entering an earlier scope.
    Stop words at either edge of a scope are left out of it.
    """
    m = _matcher(lexicon)
    tokens = list(sentence)
    n = len(tokens)

    def trigger_at(j: int) -> bool:
        return any(m.match(cat, tokens, j) for cat in ("PRE", "POST", "PSEUDO", "TERM"))

    spans = []
    consumed = 0  # tokens before this index belong to an earlier trigger/scope
    i = 0
    while i < n:
        length = m.match("PSEUDO", tokens, i)
        if length:
            i += length
            consumed = i
            continue
        length = m.match("PRE", tokens, i)
        if length:
            start = i + length
            end = start
            while end < n and end - start < window and not trigger_at(end):
                end += 1
            first, last = _trim(tokens, start, end)
            if last > first:
                fused = "no_" + "_".join(tokens[first:last])
                spans.append(NegationSpan(sentence_index, (i, start), (first, last), fused))
                i = last
            else:
                i = start
            consumed = i
            continue
        length = m.match("POST", tokens, i)
        if length:
            start = i
            while start > consumed and i - start < window and not trigger_at(start - 1):
                start -= 1
            start, end = _trim(tokens, start, i)
            if end > start:
                fused = "no_" + "_".join(tokens[start:end])
                spans.append(NegationSpan(sentence_index, (i, i + length), (start, end), fused))
            i += length
            consumed = i
            continue
        length = m.match("TERM", tokens, i)
        if length:
            i += length
            consumed = i
            continue
        i += 1
    return spans


def apply_spans(sentence: Sequence[str], spans: Sequence[NegationSpan]) -> List[str]:
    drop = set()
    replace = {}
    for span in spans:
        for j in range(*span.trigger):
            if sentence[j] in BARE_NEGATORS:
                drop.add(j)
        s, e = span.scope
        replace[s] = span.fused_token
        drop.update(range(s + 1, e))
    out = []
    for j, tok in enumerate(sentence):
        if j in replace:
            out.append(replace[j])
        elif j not in drop:
            out.append(tok)
    return out


def detect_and_fuse(sentence: Sequence[str], lexicon: Optional[TriggerLexicon] = None,
                    window: int = DEFAULT_WINDOW) -> List[str]:
    """Replace every negated phrase in ``sentence`` by one ``no_``-prefixed token.

    >>> detect_and_fuse(["no", "acute", "cardiopulmonary", "process"])
    ['no_acute_cardiopulmonary_process']
    """
    if lexicon is None:
        lexicon = default_lexicon()
    return apply_spans(sentence, find_negations(sentence, lexicon, window))


_default = None


def default_lexicon() -> TriggerLexicon:
    global _default
    if _default is None:
        _default = load_lexicon()
    return _default
