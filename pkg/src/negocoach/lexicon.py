"""Word lists and word-rating tables behind the rule-based detectors.

Lexicon file format: UTF-8 text, first line ``#category: <name>``, one
entry per following line. An entry is a literal token sequence; a ``*`` as
the final character makes the last token a prefix wildcard.

Dominance file format: CSV with header ``word,dominance``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional


class LexiconError(Exception):
    pass


@dataclass(frozen=True)
class Lexicon:
    category: str
    # each pattern is a tuple of lowercase tokens; the last may end in '*'
    patterns: tuple[tuple[str, ...], ...]

    def __len__(self) -> int:
        return len(self.patterns)


def _parse_entry(line: str) -> tuple[str, ...]:
    tokens = tuple(line.lower().split())
    for i, tok in enumerate(tokens):
        star = tok.count("*")
        if star and (star > 1 or not tok.endswith("*") or i != len(tokens) - 1):
            raise LexiconError(f"'*' only allowed as final character: {line!r}")
    return tokens


def load_lexicon(path: str | Path) -> Lexicon:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise LexiconError(f"empty lexicon file: {path}")
    header = lines[0]
    if not header.startswith("#category:"):
        raise LexiconError(f"missing '#category:' header in {path}")
    category = header.split(":", 1)[1].strip()
    if not category:
        raise LexiconError(f"empty category name in {path}")
    seen = set()
    patterns = []
    for ln in lines[1:]:
        entry = _parse_entry(ln)
        if entry and entry not in seen:
            seen.add(entry)
            patterns.append(entry)
    if not patterns:
        raise LexiconError(f"no entries in {path}")
    return Lexicon(category, tuple(patterns))


def _token_matches(token: str, pattern_tok: str) -> bool:
    if pattern_tok.endswith("*"):
        return token.startswith(pattern_tok[:-1])
    return token == pattern_tok


def count_matches(tokens: list[str], lex: Lexicon) -> tuple[int, list[int]]:
    """Non-overlapping left-to-right matches, longest pattern first.

    Returns (count, start positions in token order).
    """
    by_length = sorted(lex.patterns, key=len, reverse=True)
    positions = []
    i = 0
    n = len(tokens)
    while i < n:
        matched_len = 0
        for pat in by_length:
            if len(pat) <= n - i and all(
                _token_matches(tokens[i + j], p) for j, p in enumerate(pat)
            ):
                matched_len = len(pat)
                break
        if matched_len:
            positions.append(i)
            i += matched_len
        else:
            i += 1
    return len(positions), positions


@dataclass(frozen=True)
class DominanceTable:
    scores: dict[str, float]

    def __post_init__(self):
        for w, s in self.scores.items():
            if not math.isfinite(s):
                raise LexiconError(f"non-finite dominance score for {w!r}")

    def get(self, word: str) -> Optional[float]:
        return self.scores.get(word)


def load_dominance(path: str | Path) -> DominanceTable:
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["word", "dominance"]:
            raise LexiconError(f"expected 'word,dominance' header in {path}")
        scores = {}
        for row in reader:
            if not row or not row[0].strip():
                continue
            scores[row[0].strip().lower()] = float(row[1])
    return DominanceTable(scores)


def load_dominance_str(text: str) -> DominanceTable:
    tmp = io.StringIO(text)
    reader = csv.reader(tmp)
    next(reader)
    return DominanceTable({r[0].strip().lower(): float(r[1]) for r in reader if r})


def mean_dominance(tokens: list[str], table: DominanceTable) -> Optional[float]:
    """Mean rating of the rated tokens; None when nothing is rated."""
    rated = [table.scores[t] for t in tokens if t in table.scores]
    if not rated:
        return None
    return sum(rated) / len(rated)
