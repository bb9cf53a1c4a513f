"""Exact-match METEOR variant used as a turn/description similarity feature.

Unigram alignment is exact-match only (no stems or synonyms), greedy left
to right over the candidate with a prefer-adjacent tie-break so the number
of chunks stays minimal among greedy choices.
"""

from __future__ import annotations

ALPHA = 0.9
PENALTY_WEIGHT = 0.5
PENALTY_EXPONENT = 3


def _align(candidate: list[str], reference: list[str]) -> list[tuple[int, int]]:
    """Pairs (candidate_pos, reference_pos) of matched unigrams."""
    used = [False] * len(reference)
    pairs: list[tuple[int, int]] = []
    prev_ref = -2
    for ci, tok in enumerate(candidate):
        options = [ri for ri, rtok in enumerate(reference) if rtok == tok and not used[ri]]
        if not options:
            continue
        # continue the current chunk when possible, else earliest reference slot
        ri = prev_ref + 1 if prev_ref + 1 in options else options[0]
        used[ri] = True
        pairs.append((ci, ri))
        prev_ref = ri
    return pairs


def _chunks(pairs: list[tuple[int, int]]) -> int:
    count = 0
    prev = None
    for ci, ri in pairs:
        if prev is None or ci != prev[0] + 1 or ri != prev[1] + 1:
            count += 1
        prev = (ci, ri)
    return count


def meteor(candidate: list[str], reference: list[str]) -> float:
    """METEOR score in [0, 1]; 0.0 when nothing matches."""
    if not candidate or not reference:
        return 0.0
    pairs = _align(candidate, reference)
    m = len(pairs)
    if m == 0:
        return 0.0
    precision = m / len(candidate)
    recall = m / len(reference)
    fmean = precision * recall / (ALPHA * precision + (1 - ALPHA) * recall)
    penalty = PENALTY_WEIGHT * (_chunks(pairs) / m) ** PENALTY_EXPONENT
    return fmean * (1 - penalty)
