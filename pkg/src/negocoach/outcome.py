"""Outcome classifier over staged tactic counts, and the counterfactual
tactic selector built on top of it.

Features are counts per (tactic, role, stage); stage 1 is everything
before the first price proposal. The classifier is the shared l2 logistic
regression; selection keeps a candidate tactic iff incrementing its
seller count for the current stage strictly raises the predicted success
probability.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from negocoach import corpus as C
from negocoach.detector import TacticAnnotation, detect_did_not_propose_first, tokenize
from negocoach.logistic import L2_GRID, LogisticModel, fit_logistic
from negocoach.registry import DEFAULT_REGISTRY, LEARNED_TACTICS, TacticRegistry

ROLES = (C.SELLER, C.BUYER)
STAGES = (1, 2)

# Grouping used by the feature ablation report: tactics detected by the
# trained classifiers plus the two protocol-tracking rules are "abstract",
# lexicon-driven ones are "lexical".
ABSTRACT_TACTICS = LEARNED_TACTICS + ("side_offer", "did_not_propose_first")


def feature_names(registry: TacticRegistry = DEFAULT_REGISTRY) -> list[str]:
    return [f"{t}|{role}|stage{s}" for t in registry.ids for role in ROLES for s in STAGES]


def feature_index(tactic: str, role: str, stage: int,
                  registry: TacticRegistry = DEFAULT_REGISTRY) -> int:
    return (registry.index(tactic) * len(ROLES) + ROLES.index(role)) * len(STAGES) + (stage - 1)


def extract_outcome_features(events: Sequence[C.Event],
                             annotations: dict[int, TacticAnnotation],
                             split: C.StageSplit,
                             registry: TacticRegistry = DEFAULT_REGISTRY) -> np.ndarray:
    """Count vector over (tactic, role, stage).

    Word-anchored tactics count once per mention; turn-level tactics once
    per turn they fire in. did_not_propose_first is a dialog-prefix
    predicate, so it contributes at most 1 per stage regardless of how many
    turns it flags.
    """
    x = np.zeros(len(registry) * len(ROLES) * len(STAGES))
    for e in events:
        if e.kind != C.MESSAGE or e.index not in annotations:
            continue
        ann = annotations[e.index]
        stage = split.stage_of(e.index)
        for tactic, _pos in ann.mentions:
            x[feature_index(tactic, e.speaker, stage, registry)] += 1
        for j, flag in enumerate(ann.turn_flags):
            if flag:
                x[feature_index(registry.ids[j], e.speaker, stage, registry)] += 1
    if "did_not_propose_first" in registry:
        for role in ROLES:
            for stage in STAGES:
                x[feature_index("did_not_propose_first", role, stage, registry)] = 0.0
        if detect_did_not_propose_first(list(events)):
            stages_present = {split.stage_of(e.index) for e in events}
            for stage in stages_present:
                x[feature_index("did_not_propose_first", C.SELLER, stage, registry)] = 1.0
    return x


@dataclass
class OutcomeModel:
    model: LogisticModel
    registry: TacticRegistry = DEFAULT_REGISTRY
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.names:
            self.names = feature_names(self.registry)

    def predict_success(self, features: np.ndarray) -> float:
        features = np.asarray(features, dtype=float)
        if features.shape[-1] != len(self.model.weights):
            raise ValueError(
                f"feature dimension {features.shape[-1]} != model dimension "
                f"{len(self.model.weights)}")
        return float(self.model.predict_proba(features)[0])

    def save(self, path: str | Path) -> None:
        m = self.model
        obj = {
            "version": 1,
            "registry": list(self.registry.ids),
            "names": self.names,
            "weights": m.weights.tolist(),
            "bias": m.bias,
            "l2": m.l2,
            "mean": None if m.mean is None else m.mean.tolist(),
            "std": None if m.std is None else m.std.tolist(),
        }
        Path(path).write_text(json.dumps(obj, indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "OutcomeModel":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        model = LogisticModel(
            weights=np.array(obj["weights"]), bias=obj["bias"], l2=obj["l2"],
            mean=None if obj["mean"] is None else np.array(obj["mean"]),
            std=None if obj["std"] is None else np.array(obj["std"]),
        )
        return cls(model=model, registry=TacticRegistry(tuple(obj["registry"])),
                   names=obj["names"])


@dataclass
class LabeledFeatures:
    """Training matrix plus labels, post label-exclusion."""

    X: np.ndarray
    y: np.ndarray


def collect_features(dialogs: list[C.Dialog],
                     annotations_by_dialog: dict[str, dict[int, TacticAnnotation]],
                     splits: dict[str, C.StageSplit],
                     labels: dict[str, str],
                     registry: TacticRegistry = DEFAULT_REGISTRY) -> LabeledFeatures:
    rows, ys = [], []
    for d in dialogs:
        label = labels.get(d.id, C.EXCLUDED)
        if label == C.EXCLUDED:
            continue
        rows.append(extract_outcome_features(d.events, annotations_by_dialog[d.id],
                                             splits[d.id], registry))
        ys.append(1.0 if label == C.POSITIVE else 0.0)
    return LabeledFeatures(np.array(rows), np.array(ys))


def _select_l2_on_dev(train: LabeledFeatures, dev: Optional[LabeledFeatures],
                      grid=L2_GRID) -> float:
    if dev is None or len(dev.y) == 0:
        return grid[1]
    best_l2, best_acc = grid[0], -1.0
    for l2 in grid:
        m = fit_logistic(train.X, train.y, l2)
        acc = float((m.predict(dev.X) == dev.y).mean())
        if acc > best_acc:
            best_l2, best_acc = l2, acc
    return best_l2


def train_outcome(train: LabeledFeatures, dev: Optional[LabeledFeatures] = None,
                  registry: TacticRegistry = DEFAULT_REGISTRY,
                  l2: Optional[float] = None) -> OutcomeModel:
    if l2 is None:
        l2 = _select_l2_on_dev(train, dev)
    return OutcomeModel(model=fit_logistic(train.X, train.y, l2), registry=registry)


def accuracy(model: OutcomeModel, data: LabeledFeatures) -> float:
    return float((model.model.predict(data.X) == data.y).mean())


# ---- shallow n-gram baseline ------------------------------------------------


def _ngrams(tokens: list[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def ngram_features(dialogs: list[C.Dialog], labels: dict[str, str],
                   vocabulary: Optional[list] = None, min_freq: int = 3,
                   ) -> tuple[LabeledFeatures, list]:
    """1/2/3-gram counts per role; vocabulary fitted on the given dialogs
    when not supplied (training split)."""
    per_dialog = []
    for d in dialogs:
        counts: dict = {}
        for e in d.events:
            if e.kind != C.MESSAGE:
                continue
            toks = tokenize(e.text or "")
            for n in (1, 2, 3):
                for g in _ngrams(toks, n):
                    key = (e.speaker, g)
                    counts[key] = counts.get(key, 0) + 1
        per_dialog.append((d, counts))

    if vocabulary is None:
        totals: dict = {}
        for d, counts in per_dialog:
            if labels.get(d.id, C.EXCLUDED) == C.EXCLUDED:
                continue
            for key, c in counts.items():
                totals[key] = totals.get(key, 0) + c
        vocabulary = sorted(k for k, c in totals.items() if c >= min_freq)
        if not vocabulary:
            raise ValueError("empty n-gram vocabulary after frequency cutoff")
    index = {k: i for i, k in enumerate(vocabulary)}

    rows, ys = [], []
    for d, counts in per_dialog:
        label = labels.get(d.id, C.EXCLUDED)
        if label == C.EXCLUDED:
            continue
        x = np.zeros(len(vocabulary))
        for key, c in counts.items():
            if key in index:
                x[index[key]] = c
        rows.append(x)
        ys.append(1.0 if label == C.POSITIVE else 0.0)
    return LabeledFeatures(np.array(rows), np.array(ys)), vocabulary


def train_shallow_baseline(train_dialogs: list[C.Dialog], labels: dict[str, str],
                           l2: float = 1.0, min_freq: int = 3,
                           ) -> tuple[OutcomeModel, list]:
    data, vocab = ngram_features(train_dialogs, labels, min_freq=min_freq)
    model = OutcomeModel(model=fit_logistic(data.X, data.y, l2), names=[str(v) for v in vocab])
    return model, vocab


# ---- ablation ---------------------------------------------------------------


def ablation_groups(registry: TacticRegistry = DEFAULT_REGISTRY) -> dict[str, list[int]]:
    names = feature_names(registry)
    groups: dict[str, list[int]] = {"abstract": [], "lexical": [], "stage1": [], "stage2": []}
    for i, name in enumerate(names):
        tactic, _role, stage = name.split("|")
        if tactic in ABSTRACT_TACTICS:
            groups["abstract"].append(i)
        else:
            groups["lexical"].append(i)
        groups[stage].append(i)
    return groups


def ablate_outcome(train: LabeledFeatures, test: LabeledFeatures,
                   dev: Optional[LabeledFeatures] = None,
                   registry: TacticRegistry = DEFAULT_REGISTRY,
                   l2: Optional[float] = None) -> dict[str, float]:
    """Retrain with each feature group removed; report accuracy deltas."""
    full = train_outcome(train, dev, registry, l2=l2)
    full_acc = accuracy(full, test)
    result = {"full": full_acc}
    for group, idxs in ablation_groups(registry).items():
        keep = [i for i in range(train.X.shape[1]) if i not in set(idxs)]
        sub_train = LabeledFeatures(train.X[:, keep], train.y)
        sub_dev = None if dev is None else LabeledFeatures(dev.X[:, keep], dev.y)
        sub_model = train_outcome(sub_train, sub_dev, registry, l2=l2)
        sub_acc = float((sub_model.model.predict(test.X[:, keep]) == test.y).mean())
        result[f"delta_{group}"] = sub_acc - full_acc
    return result


# ---- counterfactual selection -----------------------------------------------


def select_tactics(candidates: set[str], current_features: np.ndarray,
                   current_stage: int, model: OutcomeModel) -> set[str]:
    """Keep each candidate iff one more seller count of it (raw, current
    stage) strictly increases the predicted success probability."""
    base = model.predict_success(current_features)
    selected = set()
    for tactic in candidates:
        if tactic not in model.registry:
            continue
        x = current_features.copy()
        x[feature_index(tactic, C.SELLER, current_stage, model.registry)] += 1
        if model.predict_success(x) > base:
            selected.add(tactic)
    return selected


def report_weights(model: OutcomeModel) -> list[dict]:
    """Seller weights per tactic and stage, sorted by |stage-2 weight|."""
    rows = []
    for tactic in model.registry.ids:
        w1 = float(model.model.weights[feature_index(tactic, C.SELLER, 1, model.registry)])
        w2 = float(model.model.weights[feature_index(tactic, C.SELLER, 2, model.registry)])
        rows.append({"tactic": tactic, "stage1_weight": w1, "stage2_weight": w2})
    rows.sort(key=lambda r: abs(r["stage2_weight"]), reverse=True)
    return rows
