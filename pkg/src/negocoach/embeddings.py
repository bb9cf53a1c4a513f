"""Pluggable word-embedding table: text format, one `word v1 .. vD` per
line after a header line giving D. Sentence embeddings are the mean of the
word vectors; out-of-vocabulary words map to the zero vector."""

from __future__ import annotations

from pathlib import Path

import numpy as np


class EmbeddingError(Exception):
    pass


class EmbeddingTable:
    def __init__(self, vectors: dict[str, np.ndarray], dim: int):
        self.dim = dim
        self.vectors = vectors
        self._zero = np.zeros(dim)

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingTable":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines:
            raise EmbeddingError(f"empty embedding file: {path}")
        try:
            dim = int(lines[0].split()[-1])
        except (ValueError, IndexError):
            raise EmbeddingError(f"bad header line in {path!s}: {lines[0]!r}") from None
        vectors = {}
        for ln in lines[1:]:
            if not ln.strip():
                continue
            parts = ln.split()
            if len(parts) != dim + 1:
                raise EmbeddingError(f"expected {dim} floats for {parts[0]!r}")
            vectors[parts[0]] = np.array([float(x) for x in parts[1:]])
        return cls(vectors, dim)

    def word(self, token: str) -> np.ndarray:
        return self.vectors.get(token, self._zero)

    def sentence(self, tokens: list[str]) -> np.ndarray:
        if not tokens:
            return self._zero
        return np.mean([self.word(t) for t in tokens], axis=0)


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 - cosine similarity; 1.0 when either vector is all zero."""
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 1.0
    return float(1.0 - np.dot(a, b) / (na * nb))
