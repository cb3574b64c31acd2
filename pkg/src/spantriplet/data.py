"""Corpus line format, dataset statistics, and synthetic fixtures.

A corpus file holds one sentence per line::

    It is great .####[([0], [2], 'POS')]

The text before ``####`` is pre-tokenized (whitespace split); the literal
after it lists (target indices, opinion indices, sentiment tag) tuples.
Index lists must describe contiguous token runs; they are normalized to
sorted order on parse. Prediction files reuse the identical syntax, so
gold and predicted corpora are interchangeable evaluator inputs.
"""

from __future__ import annotations

import ast
import os
import tempfile
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .encoder import Span, span_width
from .errors import DataError, ParseError
from .triplet import SENTIMENT_TAGS

SEPARATOR = "####"


@dataclass(frozen=True)
class GoldTriplet:
    target: Span
    opinion: Span
    sentiment: str

    def key(self) -> tuple[Span, Span, str]:
        return (self.target, self.opinion, self.sentiment)


@dataclass
class Sentence:
    id: int
    tokens: list[str]
    triplets: list[GoldTriplet] = field(default_factory=list)

    def triplet_keys(self) -> set[tuple[Span, Span, str]]:
        return {t.key() for t in self.triplets}

    def target_spans(self) -> set[Span]:
        return {t.target for t in self.triplets}

    def opinion_spans(self) -> set[Span]:
        return {t.opinion for t in self.triplets}


def _indices_to_span(indices, what: str, n_tokens: int, line: int, column: int) -> Span:
    if not isinstance(indices, list) or not indices:
        raise ParseError(f"{what} index list must be a non-empty list", line, column)
    if not all(isinstance(i, int) and not isinstance(i, bool) for i in indices):
        raise ParseError(f"{what} indices must be integers, got {indices!r}", line, column)
    ordered = sorted(indices)
    if any(i < 0 or i >= n_tokens for i in ordered):
        raise ParseError(
            f"{what} index out of range for {n_tokens} tokens: {ordered}", line, column
        )
    if ordered != list(range(ordered[0], ordered[-1] + 1)):
        raise ParseError(f"{what} indices are not contiguous: {ordered}", line, column)
    return (ordered[0], ordered[-1])


def parse_dataset_line(raw: str, sentence_id: int = 0, line: int = 1) -> Sentence:
    """Parse one corpus line; ParseError carries the line and column."""
    raw = raw.rstrip("\n")
    text, sep, literal = raw.partition(SEPARATOR)
    if not sep:
        raise ParseError(f"missing {SEPARATOR!r} separator", line, column=len(raw) + 1)
    tokens = text.split()
    if not tokens:
        raise ParseError("sentence has no tokens", line)
    literal_col = len(text) + len(SEPARATOR) + 1
    try:
        parsed = ast.literal_eval(literal)
    except (SyntaxError, ValueError) as exc:
        offset = getattr(exc, "offset", None) or 1
        raise ParseError(f"malformed triplet literal: {literal.strip()!r}",
                         line, column=literal_col + offset - 1) from exc
    if not isinstance(parsed, list):
        raise ParseError("triplet annotation must be a list", line, column=literal_col)
    triplets = []
    for entry in parsed:
        if not isinstance(entry, tuple) or len(entry) != 3:
            raise ParseError(f"triplet must be a 3-tuple, got {entry!r}",
                             line, column=literal_col)
        target_ix, opinion_ix, tag = entry
        target = _indices_to_span(target_ix, "target", len(tokens), line, literal_col)
        opinion = _indices_to_span(opinion_ix, "opinion", len(tokens), line, literal_col)
        if tag not in SENTIMENT_TAGS:
            raise ParseError(f"unknown sentiment tag {tag!r}", line, column=literal_col)
        triplets.append(GoldTriplet(target, opinion, tag))
    return Sentence(sentence_id, tokens, triplets)


def serialize_sentence(sentence: Sentence) -> str:
    """Emit the canonical corpus line; parse(serialize(s)) == s."""
    for token in sentence.tokens:
        if not token or token.split() != [token] or SEPARATOR in token:
            raise DataError(f"token {token!r} cannot round-trip the line format")
    annotated = [
        (list(range(t.target[0], t.target[1] + 1)),
         list(range(t.opinion[0], t.opinion[1] + 1)),
         t.sentiment)
        for t in sentence.triplets
    ]
    return " ".join(sentence.tokens) + SEPARATOR + repr(annotated)


def load_corpus(path: str) -> list[Sentence]:
    """Read a corpus file; sentence ids are 0-based line ordinals."""
    sentences = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            if not raw.strip():
                continue
            sentences.append(parse_dataset_line(raw, sentence_id=len(sentences),
                                                line=lineno))
    return sentences


def atomic_write_text(path: str, content: str) -> None:
    """Write via temp file + rename so interrupted runs never leave truncated files."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_corpus(path: str, sentences: Iterable[Sentence]) -> None:
    atomic_write_text(path, "".join(serialize_sentence(s) + "\n" for s in sentences))


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetStats:
    """Corpus-level counts.

    single_word counts triplets whose target and opinion are both one
    token wide; multi_word counts the rest. Term counts come in two
    flavors because the dedup rule is ambiguous: *_unique deduplicates
    spans within a sentence, *_total counts every triplet occurrence.
    """

    sentences: int
    triplets: int
    positive: int
    neutral: int
    negative: int
    single_word: int
    multi_word: int
    targets_unique: int
    opinions_unique: int
    targets_total: int
    opinions_total: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def dataset_stats(sentences: Sequence[Sentence]) -> DatasetStats:
    by_tag = {tag: 0 for tag in SENTIMENT_TAGS}
    sw = mw = 0
    targets_unique = opinions_unique = targets_total = opinions_total = 0
    n_triplets = 0
    for sentence in sentences:
        for t in sentence.triplets:
            n_triplets += 1
            by_tag[t.sentiment] += 1
            if span_width(t.target) == 1 and span_width(t.opinion) == 1:
                sw += 1
            else:
                mw += 1
        targets_unique += len(sentence.target_spans())
        opinions_unique += len(sentence.opinion_spans())
        targets_total += len(sentence.triplets)
        opinions_total += len(sentence.triplets)
    return DatasetStats(
        sentences=len(sentences),
        triplets=n_triplets,
        positive=by_tag["POS"],
        neutral=by_tag["NEU"],
        negative=by_tag["NEG"],
        single_word=sw,
        multi_word=mw,
        targets_unique=targets_unique,
        opinions_unique=opinions_unique,
        targets_total=targets_total,
        opinions_total=opinions_total,
    )


def format_stats_table(stats_by_split: dict[str, DatasetStats]) -> str:
    """Aligned plain-text table, one row per split."""
    columns = ["split", "#S", "#triplets", "#POS", "#NEU", "#NEG", "#SW", "#MW",
               "#target(uniq)", "#opinion(uniq)", "#target(all)", "#opinion(all)"]
    rows = [columns]
    for name, s in stats_by_split.items():
        rows.append([name, str(s.sentences), str(s.triplets), str(s.positive),
                     str(s.neutral), str(s.negative), str(s.single_word),
                     str(s.multi_word), str(s.targets_unique), str(s.opinions_unique),
                     str(s.targets_total), str(s.opinions_total)])
    widths = [max(len(r[i]) for r in rows) for i in range(len(columns))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
             for row in rows]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Synthetic fixtures
# ---------------------------------------------------------------------------

_SINGLE_TARGETS = ["battery", "screen", "keyboard", "pizza", "service",
                   "coffee", "menu", "staff", "laptop", "wine"]
_MULTI_TARGETS = [("battery", "life"), ("wine", "list"), ("touch", "pad"),
                  ("hard", "drive"), ("front", "desk")]
_SINGLE_OPINIONS = {
    "POS": ["great", "amazing", "tasty", "friendly", "fast"],
    "NEG": ["terrible", "awful", "slow", "rude", "bland"],
    "NEU": ["average", "ordinary", "standard"],
}
_MULTI_OPINIONS = {
    "POS": [("very", "good"), ("super", "nice")],
    "NEG": [("not", "good"), ("too", "noisy")],
    "NEU": [("fairly", "plain"), ("rather", "typical")],
}
_EMPTY_SENTENCES = [
    "we walked to the store .",
    "they arrived after lunch on monday .",
    "the talk started at noon .",
    "she parked near the corner .",
    "he read until the evening .",
]


def make_fixture(rng: np.random.Generator, size: int) -> list[Sentence]:
    """Deterministic synthetic corpus with planted triplets.

    Cycles through five sentence shapes so any size >= 5 covers
    single-word, multi-word target, multi-word opinion, shared-opinion
    (one opinion paired with two targets), and zero-triplet cases.
    """
    if size < 1:
        raise DataError(f"fixture size must be >= 1, got {size}")
    tags = list(SENTIMENT_TAGS)
    sentences = []
    for idx in range(size):
        shape = idx % 5
        tag = tags[int(rng.integers(len(tags)))]
        if shape == 0:
            noun = _SINGLE_TARGETS[int(rng.integers(len(_SINGLE_TARGETS)))]
            adj = _SINGLE_OPINIONS[tag][int(rng.integers(len(_SINGLE_OPINIONS[tag])))]
            tokens = ["the", noun, "is", adj, "."]
            triplets = [GoldTriplet((1, 1), (3, 3), tag)]
        elif shape == 1:
            first, second = _MULTI_TARGETS[int(rng.integers(len(_MULTI_TARGETS)))]
            adj = _SINGLE_OPINIONS[tag][int(rng.integers(len(_SINGLE_OPINIONS[tag])))]
            tokens = ["the", first, second, "is", adj, "."]
            triplets = [GoldTriplet((1, 2), (4, 4), tag)]
        elif shape == 2:
            noun = _SINGLE_TARGETS[int(rng.integers(len(_SINGLE_TARGETS)))]
            adv, adj = _MULTI_OPINIONS[tag][int(rng.integers(len(_MULTI_OPINIONS[tag])))]
            tokens = ["the", noun, "is", adv, adj, "."]
            triplets = [GoldTriplet((1, 1), (3, 4), tag)]
        elif shape == 3:
            pick = rng.choice(len(_SINGLE_TARGETS), size=2, replace=False)
            noun_a, noun_b = (_SINGLE_TARGETS[int(p)] for p in pick)
            adj = _SINGLE_OPINIONS[tag][int(rng.integers(len(_SINGLE_OPINIONS[tag])))]
            tokens = ["the", noun_a, "and", noun_b, "are", adj, "."]
            triplets = [GoldTriplet((1, 1), (5, 5), tag),
                        GoldTriplet((3, 3), (5, 5), tag)]
        else:
            text = _EMPTY_SENTENCES[int(rng.integers(len(_EMPTY_SENTENCES)))]
            tokens = text.split()
            triplets = []
        sentences.append(Sentence(idx, tokens, triplets))
    return sentences
