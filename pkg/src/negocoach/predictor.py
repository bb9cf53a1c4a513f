"""Next-turn tactic probability model.

Two recurrent encoders (one over the concatenated words of all turns so
far, one over the flattened tactic-mention sequence) plus a product
category embedding feed per-tactic sigmoid outputs. Trained with plain
per-example SGD on summed binary cross-entropy; thresholds are calibrated
per tactic by grid search on dev F1.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from negocoach.corpus import CATEGORIES, Dialog, MESSAGE, SELLER
from negocoach.detector import TacticAnnotation, tokenize
from negocoach.embeddings import EmbeddingTable
from negocoach.lstm import LSTM
from negocoach.registry import DEFAULT_REGISTRY, TacticRegistry

UNK = "<unk>"
SEP = "<sep>"

THRESHOLD_GRID_STEP = 0.001


@dataclass
class PredictorConfig:
    hidden_dim: int = 100
    word_dim: int = 50
    tactic_dim: int = 32
    product_dim: int = 16
    learning_rate: float = 0.1
    epochs: int = 15
    dropout: float = 0.5
    seed: int = 0
    freeze_word_embeddings: bool = False


@dataclass
class Example:
    """History u_1..u_t plus the seller's next-turn tactic targets."""

    turn_tokens: list[list[str]]
    annotations: list[TacticAnnotation]
    category: str
    target: np.ndarray


class TrainingDiverged(Exception):
    pass


class PredictorModel:
    def __init__(self, vocab: dict[str, int], config: PredictorConfig,
                 registry: TacticRegistry = DEFAULT_REGISTRY,
                 embeddings: Optional[EmbeddingTable] = None):
        self.vocab = vocab
        self.config = config
        self.registry = registry
        rng = np.random.default_rng(config.seed)
        T = len(registry)
        H = config.hidden_dim
        word_dim = embeddings.dim if embeddings is not None else config.word_dim
        self.E_w = rng.normal(0, 0.1, size=(len(vocab), word_dim))
        if embeddings is not None:
            for word, idx in vocab.items():
                if word in embeddings.vectors:
                    self.E_w[idx] = embeddings.vectors[word]
        self.E_o = rng.normal(0, 0.1, size=(T, config.tactic_dim))
        self.E_p = rng.normal(0, 0.1, size=(len(CATEGORIES), config.product_dim))
        self.lstm_u = LSTM(word_dim, H, rng)
        self.lstm_s = LSTM(config.tactic_dim + T, H, rng)
        self.W = rng.normal(0, 0.1, size=(T, 2 * H + config.product_dim))
        self.b = np.zeros(T)
        self.thresholds = np.full(T, 0.5)
        self.train_log: list[dict] = []

    # ---- parameter plumbing -------------------------------------------------

    def param_items(self) -> list[tuple[str, np.ndarray]]:
        items = [("E_w", self.E_w), ("E_o", self.E_o), ("E_p", self.E_p),
                 ("W", self.W), ("b", self.b)]
        for name, arr in self.lstm_u.param_dict().items():
            items.append((f"lstm_u.{name}", arr))
        for name, arr in self.lstm_s.param_dict().items():
            items.append((f"lstm_s.{name}", arr))
        return items

    def word_id(self, token: str) -> int:
        return self.vocab.get(token, self.vocab[UNK])

    # ---- encoders -----------------------------------------------------------

    def _word_inputs(self, turn_tokens: list[list[str]]) -> list[int]:
        ids: list[int] = []
        for i, toks in enumerate(turn_tokens):
            if i > 0:
                ids.append(self.vocab[SEP])
            ids.extend(self.word_id(t) for t in toks)
        return ids

    def encode_turns(self, turn_tokens: list[list[str]]):
        ids = self._word_inputs(turn_tokens)
        xs = [self.E_w[i] for i in ids]
        h, cache = self.lstm_u.forward(xs)
        return h, cache, ids

    def _tactic_inputs(self, annotations: Sequence[TacticAnnotation]) -> list[int]:
        """Flattened mention tactic indices, dialog order then word order."""
        steps = []
        for ann in annotations:
            for tactic, _pos in ann.mentions:
                steps.append((self.registry.index(tactic), ann))
        return steps

    def encode_tactics(self, annotations: Sequence[TacticAnnotation]):
        steps = self._tactic_inputs(annotations)
        xs = [np.concatenate([self.E_o[idx], ann.turn_flags.astype(float)])
              for idx, ann in steps]
        h, cache = self.lstm_s.forward(xs)
        return h, cache, [idx for idx, _ in steps]

    def category_index(self, category: str) -> int:
        try:
            return CATEGORIES.index(category)
        except ValueError:
            raise ValueError(f"unknown product category {category!r}") from None

    # ---- inference ----------------------------------------------------------

    def predict_next(self, turn_tokens: list[list[str]],
                     annotations: Sequence[TacticAnnotation], category: str,
                     ablate_product: bool = False,
                     ablate_tactics: bool = False) -> np.ndarray:
        h_u, _, _ = self.encode_turns(turn_tokens)
        h_s, _, _ = self.encode_tactics(annotations)
        if ablate_tactics:
            h_s = np.zeros_like(h_s)
        e_p = self.E_p[self.category_index(category)]
        if ablate_product:
            e_p = np.zeros_like(e_p)
        z = np.concatenate([h_s, h_u, e_p])
        return 1.0 / (1.0 + np.exp(-(self.W @ z + self.b)))

    def apply_thresholds(self, probs: np.ndarray) -> np.ndarray:
        return (probs > self.thresholds).astype(int)

    # ---- training -----------------------------------------------------------

    def loss_and_grads(self, ex: Example, dropout_rng: Optional[np.random.Generator] = None,
                       ) -> tuple[float, dict[str, np.ndarray]]:
        """Summed per-tactic BCE and gradients for every parameter.

        Dropout (inverted) is applied to the two encoder states only when a
        dropout RNG is supplied.
        """
        H = self.config.hidden_dim
        h_u, cache_u, word_ids = self.encode_turns(ex.turn_tokens)
        h_s, cache_s, tactic_ids = self.encode_tactics(ex.annotations)
        cat_idx = self.category_index(ex.category)
        e_p = self.E_p[cat_idx]

        if dropout_rng is not None and self.config.dropout > 0:
            keep = 1.0 - self.config.dropout
            mask_u = (dropout_rng.random(H) < keep) / keep
            mask_s = (dropout_rng.random(H) < keep) / keep
        else:
            mask_u = mask_s = np.ones(H)
        h_u_d = h_u * mask_u
        h_s_d = h_s * mask_s

        z = np.concatenate([h_s_d, h_u_d, e_p])
        logits = self.W @ z + self.b
        p = 1.0 / (1.0 + np.exp(-logits))
        eps = 1e-12
        y = ex.target
        loss = float(-np.sum(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps)))

        dlogits = p - y
        grads: dict[str, np.ndarray] = {
            "W": np.outer(dlogits, z),
            "b": dlogits,
            "E_w": np.zeros_like(self.E_w),
            "E_o": np.zeros_like(self.E_o),
            "E_p": np.zeros_like(self.E_p),
        }
        dz = self.W.T @ dlogits
        dh_s = dz[:H] * mask_s
        dh_u = dz[H:2 * H] * mask_u
        grads["E_p"][cat_idx] = dz[2 * H:]

        lstm_u_grads, dxs_u = self.lstm_u.backward(dh_u, cache_u)
        for name, g in lstm_u_grads.items():
            grads[f"lstm_u.{name}"] = g
        if not self.config.freeze_word_embeddings:
            for wid, dx in zip(word_ids, dxs_u):
                grads["E_w"][wid] += dx

        lstm_s_grads, dxs_s = self.lstm_s.backward(dh_s, cache_s)
        for name, g in lstm_s_grads.items():
            grads[f"lstm_s.{name}"] = g
        Do = self.config.tactic_dim
        for tid, dx in zip(tactic_ids, dxs_s):
            grads["E_o"][tid] += dx[:Do]
        return loss, grads

    def sgd_step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        for name, arr in self.param_items():
            if name in grads:
                arr -= lr * grads[name]

    def mean_loss(self, examples: list[Example]) -> float:
        if not examples:
            return 0.0
        return sum(self.loss_and_grads(e)[0] for e in examples) / len(examples)

    # ---- persistence --------------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Single-file artifact: a zip of little-endian .npy tensors plus a
        JSON metadata entry (registry order, vocab, config, thresholds)."""
        arrays = dict(self.param_items())
        arrays["thresholds"] = self.thresholds
        meta = {
            "version": 1,
            "registry": list(self.registry.ids),
            "vocab": self.vocab,
            "config": vars(self.config),
            "train_log": self.train_log,
        }
        buf = io.BytesIO()
        np.savez(buf, **{k.replace(".", "__"): v for k, v in arrays.items()})
        with zipfile.ZipFile(path, "w") as zf:
            zf.writestr("tensors.npz", buf.getvalue())
            zf.writestr("meta.json", json.dumps(meta))

    @classmethod
    def load(cls, path: str | Path) -> "PredictorModel":
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json"))
            data = np.load(io.BytesIO(zf.read("tensors.npz")))
            arrays = {k.replace("__", "."): data[k] for k in data.files}
        config = PredictorConfig(**meta["config"])
        model = cls(meta["vocab"], config, TacticRegistry(tuple(meta["registry"])))
        for name, arr in model.param_items():
            arr[...] = arrays[name]
        model.thresholds = arrays["thresholds"]
        model.train_log = meta.get("train_log", [])
        return model


# ---- corpus-to-example extraction -------------------------------------------


def build_vocab(dialogs: list[Dialog], min_count: int = 1) -> dict[str, int]:
    counts: dict[str, int] = {}
    for d in dialogs:
        for e in d.events:
            if e.kind == MESSAGE:
                for t in tokenize(e.text or ""):
                    counts[t] = counts.get(t, 0) + 1
    vocab = {UNK: 0, SEP: 1}
    for t in sorted(counts):
        if counts[t] >= min_count:
            vocab[t] = len(vocab)
    return vocab


def make_examples(d: Dialog, annotations: dict[int, TacticAnnotation],
                  registry: TacticRegistry = DEFAULT_REGISTRY) -> list[Example]:
    """One example per seller message turn, with all prior turns as history."""
    messages = [e for e in d.events if e.kind == MESSAGE]
    examples = []
    for i, e in enumerate(messages):
        if e.speaker != SELLER:
            continue
        target = annotations[e.index].presence.astype(float)
        history = messages[:i]
        examples.append(Example(
            turn_tokens=[tokenize(m.text or "") for m in history],
            annotations=[annotations[m.index] for m in history],
            category=d.scenario.category,
            target=target,
        ))
    return examples


def train_predictor(train_examples: list[Example], dev_examples: list[Example],
                    vocab: dict[str, int], config: PredictorConfig,
                    registry: TacticRegistry = DEFAULT_REGISTRY,
                    embeddings: Optional[EmbeddingTable] = None) -> PredictorModel:
    """Seeded SGD over shuffled examples; logs per-epoch dev loss."""
    model = PredictorModel(vocab, config, registry, embeddings)
    rng = np.random.default_rng(config.seed + 1)
    order = np.arange(len(train_examples))
    for epoch in range(config.epochs):
        rng.shuffle(order)
        total = 0.0
        for idx in order:
            loss, grads = model.loss_and_grads(train_examples[idx], dropout_rng=rng)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}; lower the learning rate "
                    f"(currently {config.learning_rate})")
            model.sgd_step(grads, config.learning_rate)
            total += loss
        entry = {
            "epoch": epoch,
            "train_loss": total / max(len(train_examples), 1),
            "dev_loss": model.mean_loss(dev_examples),
        }
        model.train_log.append(entry)
    return model


# ---- threshold calibration and evaluation -----------------------------------


def f1_score(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    if tp == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def best_threshold(probs: np.ndarray, labels: np.ndarray,
                   step: float = THRESHOLD_GRID_STEP) -> float:
    """Grid argmax of F1 over {0, step, ..., 1}; ties -> smallest value.

    A tactic never positive in the labels gets the 0.5 default.
    """
    if not np.any(labels == 1):
        return 0.5
    grid = np.round(np.arange(0.0, 1.0 + step / 2, step), 6)
    best_gamma, best_f1 = 0.0, -1.0
    for gamma in grid:
        f1 = f1_score(labels, (probs > gamma).astype(int))
        if f1 > best_f1:
            best_gamma, best_f1 = float(gamma), f1
    return best_gamma


def calibrate_thresholds(model: PredictorModel, dev_examples: list[Example]) -> np.ndarray:
    probs = np.array([
        model.predict_next(e.turn_tokens, e.annotations, e.category)
        for e in dev_examples
    ])
    labels = np.array([e.target for e in dev_examples])
    gammas = np.array([
        best_threshold(probs[:, j], labels[:, j]) for j in range(len(model.registry))
    ])
    model.thresholds = gammas
    return gammas


def evaluate_predictor(model: PredictorModel, examples: list[Example],
                       ablate_product: bool = False, ablate_tactics: bool = False,
                       ) -> dict[str, float]:
    """Micro/macro F1 of thresholded predictions over all (turn, tactic)
    decisions; ablation flags zero parts of the context vector at inference."""
    preds = np.array([
        model.apply_thresholds(model.predict_next(
            e.turn_tokens, e.annotations, e.category,
            ablate_product=ablate_product, ablate_tactics=ablate_tactics))
        for e in examples
    ])
    labels = np.array([e.target for e in examples])
    micro = f1_score(labels.ravel(), preds.ravel())
    per_tactic = [f1_score(labels[:, j], preds[:, j]) for j in range(labels.shape[1])]
    return {"micro_f1": micro, "macro_f1": float(np.mean(per_tactic))}


def marginal_baseline_predictions(train_examples: list[Example],
                                  eval_examples: list[Example],
                                  ) -> tuple[np.ndarray, np.ndarray]:
    """Constant per-tactic marginal-frequency predictor, thresholded by the
    same dev-F1 grid rule (which reduces to predict-1 iff F1(all-ones) beats
    F1(all-zeros) per tactic)."""
    T = len(train_examples[0].target)
    marginals = np.mean([e.target for e in train_examples], axis=0)
    labels = np.array([e.target for e in eval_examples])
    preds = np.zeros_like(labels)
    for j in range(T):
        gamma = best_threshold(np.full(len(train_examples), marginals[j]),
                               np.array([e.target[j] for e in train_examples]))
        preds[:, j] = int(marginals[j] > gamma)
    return preds, labels
