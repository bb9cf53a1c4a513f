"""Run configuration: one serializable object whose hash is stamped into
every artifact so a run is reproducible from config + inputs + seed."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional


@dataclass
class RunConfig:
    corpus_path: Optional[str] = None
    corpus_format: str = "normalized"
    lexicon_dir: Optional[str] = None          # None -> packaged defaults
    embeddings_path: Optional[str] = None
    templates_path: Optional[str] = None
    out_dir: str = "coach-out"
    seed: int = 0
    dev_fraction: float = 0.2
    test_fraction: float = 0.2
    registry: Optional[list[str]] = None       # None -> default registry
    # predictor hyperparameters
    hidden_dim: int = 100
    word_dim: int = 50
    tactic_dim: int = 32
    product_dim: int = 16
    learning_rate: float = 0.1
    epochs: int = 15
    dropout: float = 0.5
    # outcome classifier
    l2_grid: list[float] = field(default_factory=lambda: [0.01, 0.1, 1.0, 10.0])
    min_ngram_freq: int = 3
    # service
    port: int = 8000
    idle_timeout: float = 600.0

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**obj)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def hash(self) -> str:
        return hashlib.sha256(
            json.dumps(asdict(self), sort_keys=True).encode("utf-8")).hexdigest()[:16]
