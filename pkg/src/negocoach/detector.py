"""Per-turn tactic detection: tokenizer, rule detectors, learned
classifiers, and the merged TacticAnnotation."""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from negocoach import corpus as C
from negocoach.embeddings import EmbeddingTable, cosine_distance
from negocoach.lexicon import (
    DominanceTable,
    Lexicon,
    count_matches,
    load_dominance,
    load_lexicon,
    mean_dominance,
)
from negocoach.logistic import LogisticModel, cross_val_accuracy, fit_logistic, select_l2
from negocoach.meteor import meteor
from negocoach.registry import DEFAULT_REGISTRY, LEARNED_TACTICS, TacticRegistry

ARTIFACT_VERSION = 1

# Word-anchored rule tactics and the lexicon file each one matches against.
LEXICON_TACTICS = {
    "hedge": "hedges",
    "factive_verb": "factive_verbs",
    "certainty_word": "certainty",
    "mention_family": "family",
    "mention_friend": "friend",
    "informal": "informal",
    "sentiment_positive": "positive",
    "sentiment_negative": "negative",
    "polite_gratitude": "gratitude",
    "polite_greeting": "greeting",
    "polite_apology": "apology",
    "side_offer": "side_offer",
}

FIRST_PERSON = Lexicon(
    "first_person",
    tuple((p,) for p in ("i", "i'*", "me", "my", "mine", "myself", "we", "we'*", "us", "our", "ours")),
)

QUESTION_WORDS = ("why", "how", "does", "do", "is", "are", "what", "when", "can", "could", "would")

DEFAULT_DOMINANCE_THRESHOLD = 5.5

_PRICE_RE = re.compile(r"^\$?\d[\d,]*(\.\d+)?k?$")


def tokenize(text: str) -> list[str]:
    """Lowercase whitespace tokens with surrounding punctuation split off.

    ``$``-prefixed and numeric tokens are kept intact ("$9k" stays one
    token); other leading/trailing punctuation becomes its own token.
    """
    tokens: list[str] = []
    for chunk in text.lower().split():
        lead: list[str] = []
        trail: list[str] = []
        while chunk and not chunk[0].isalnum():
            if chunk[0] == "$" and len(chunk) > 1 and chunk[1].isdigit():
                break
            lead.append(chunk[0])
            chunk = chunk[1:]
        while chunk and not chunk[-1].isalnum():
            if chunk[-1] == "*":  # keep nothing special; '*' is punctuation here
                pass
            trail.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(lead)
        if chunk:
            tokens.append(chunk)
        tokens.extend(reversed(trail))
    return tokens


def is_price_token(token: str) -> bool:
    if not _PRICE_RE.match(token):
        return False
    digits = token.lstrip("$").rstrip("k").replace(",", "")
    try:
        value = float(digits)
    except ValueError:
        return False
    return token.startswith("$") or token.endswith("k") or value >= 100


def mentions_price(text: str) -> bool:
    """Rule predicate for price proposals, used for stage splitting and
    first-proposer tracking (and as the propose_price fallback when no
    trained classifier is available)."""
    return any(is_price_token(t) for t in tokenize(text))


@dataclass
class TacticAnnotation:
    turn_index: int
    registry: TacticRegistry
    presence: np.ndarray                      # binary, registry order
    mentions: list[tuple[str, int]]           # (tactic id, word position), sorted
    turn_flags: np.ndarray                    # binary, registry order
    counts: dict[str, int] = field(default_factory=dict)  # raw rule counts

    def fired(self) -> set[str]:
        return {t for i, t in enumerate(self.registry.ids) if self.presence[i]}


def _empty_annotation(turn_index: int, registry: TacticRegistry) -> TacticAnnotation:
    n = len(registry)
    return TacticAnnotation(turn_index, registry, np.zeros(n, dtype=int), [],
                            np.zeros(n, dtype=int))


@dataclass
class LexiconSet:
    lexicons: dict[str, Lexicon]
    dominance: DominanceTable

    @classmethod
    def load_default(cls) -> "LexiconSet":
        root = resources.files("negocoach") / "data"
        return cls.load_dir(Path(str(root)))

    @classmethod
    def load_dir(cls, data_dir: Path) -> "LexiconSet":
        lexdir = data_dir / "lexicons"
        lexicons = {}
        for f in sorted(lexdir.glob("*.txt")):
            lex = load_lexicon(f)
            lexicons[lex.category] = lex
        dominance = load_dominance(data_dir / "dominance_sample.csv")
        return cls(lexicons, dominance)


def detect_rules(turn_text: str, turn_index: int, lexset: LexiconSet,
                 registry: TacticRegistry = DEFAULT_REGISTRY,
                 dominance_threshold: float = DEFAULT_DOMINANCE_THRESHOLD,
                 ) -> TacticAnnotation:
    """Apply all rule detectors to one turn (no dialog context needed)."""
    ann = _empty_annotation(turn_index, registry)
    tokens = tokenize(turn_text)
    if not tokens:
        return ann

    for tactic, category in LEXICON_TACTICS.items():
        lex = lexset.lexicons.get(category)
        if lex is None:
            continue
        count, positions = count_matches(tokens, lex)
        if count:
            ann.counts[tactic] = count
            for pos in positions:
                ann.mentions.append((tactic, pos))

    fp_count, fp_positions = count_matches(tokens, FIRST_PERSON)
    if fp_count:
        ann.counts["first_person_disclosure"] = fp_count
        for pos in fp_positions:
            ann.mentions.append(("first_person_disclosure", pos))

    please_positions = [i for i, t in enumerate(tokens) if t == "please"]
    for pos in please_positions:
        tactic = "polite_please_start" if pos == 0 else "polite_please_later"
        ann.counts[tactic] = ann.counts.get(tactic, 0) + 1
        ann.mentions.append((tactic, pos))

    mean_dom = mean_dominance(tokens, lexset.dominance)
    if mean_dom is not None and mean_dom > dominance_threshold:
        ann.turn_flags[registry.index("dominance")] = 1
        ann.counts["dominance"] = 1

    ann.mentions.sort(key=lambda m: (m[1], registry.index(m[0])))
    for tactic, _pos in ann.mentions:
        ann.presence[registry.index(tactic)] = 1
    ann.presence |= ann.turn_flags
    return ann


def first_proposer(events: list[C.Event]) -> Optional[str]:
    """Speaker of the first price proposal (offer event or price-bearing
    message) in the event prefix; None if no proposal yet."""
    for e in events:
        if e.kind == C.OFFER:
            return e.speaker
        if e.kind == C.MESSAGE and mentions_price(e.text or ""):
            return e.speaker
    return None


def detect_did_not_propose_first(events: list[C.Event]) -> bool:
    """Seller flag: set iff the first proposal so far came from the buyer."""
    return first_proposer(events) == C.BUYER


def extract_classifier_features(turn_text: str, scenario: C.Scenario,
                                previous_buyer_turn: Optional[str],
                                embeddings: Optional[EmbeddingTable],
                                with_question_features: bool = False) -> np.ndarray:
    """[description-overlap count, METEOR vs description, cosine distance]
    plus question-word indicators (address_concerns only)."""
    tokens = tokenize(turn_text)
    desc_tokens = tokenize(scenario.description)
    desc_set = set(desc_tokens)
    overlap = sum(1 for t in tokens if t in desc_set)
    score = meteor(tokens, desc_tokens)
    if embeddings is not None:
        dist = cosine_distance(embeddings.sentence(tokens), embeddings.sentence(desc_tokens))
    else:
        dist = 1.0
    feats = [float(overlap), score, dist]
    if with_question_features:
        prev_tokens = set(tokenize(previous_buyer_turn or ""))
        feats.extend(1.0 if q in prev_tokens else 0.0 for q in QUESTION_WORDS)
        feats.append(1.0 if "?" in prev_tokens else 0.0)
    return np.array(feats)


@dataclass
class DetectorModel:
    """Per-tactic linear classifiers plus the dominance firing threshold."""

    registry: TacticRegistry = DEFAULT_REGISTRY
    classifiers: dict[str, LogisticModel] = field(default_factory=dict)
    cv_accuracy: dict[str, float] = field(default_factory=dict)
    dominance_threshold: float = DEFAULT_DOMINANCE_THRESHOLD

    def save(self, path: str | Path) -> None:
        obj = {
            "version": ARTIFACT_VERSION,
            "registry": list(self.registry.ids),
            "dominance_threshold": self.dominance_threshold,
            "cv_accuracy": self.cv_accuracy,
            "classifiers": {
                t: None if isinstance(m, AlwaysNegative) else {
                    "weights": m.weights.tolist(),
                    "bias": m.bias,
                    "l2": m.l2,
                    "mean": None if m.mean is None else m.mean.tolist(),
                    "std": None if m.std is None else m.std.tolist(),
                }
                for t, m in self.classifiers.items()
            },
        }
        Path(path).write_text(json.dumps(obj, indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "DetectorModel":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        classifiers = {}
        for t, m in obj["classifiers"].items():
            if m is None:
                classifiers[t] = AlwaysNegative()
                continue
            classifiers[t] = LogisticModel(
                weights=np.array(m["weights"]),
                bias=m["bias"],
                l2=m["l2"],
                mean=None if m["mean"] is None else np.array(m["mean"]),
                std=None if m["std"] is None else np.array(m["std"]),
            )
        return cls(
            registry=TacticRegistry(tuple(obj["registry"])),
            classifiers=classifiers,
            cv_accuracy=obj.get("cv_accuracy", {}),
            dominance_threshold=obj["dominance_threshold"],
        )


@dataclass
class AnnotatedTurn:
    """One training example for the learned detectors."""

    text: str
    scenario: C.Scenario
    previous_buyer_turn: Optional[str]
    labels: set[str]


class AlwaysNegative:
    """Fallback classifier used when training labels had a single class."""

    def predict_proba(self, X) -> np.ndarray:
        return np.zeros(len(np.atleast_2d(X)))


def train_detectors(annotated: list[AnnotatedTurn],
                    embeddings: Optional[EmbeddingTable] = None,
                    registry: TacticRegistry = DEFAULT_REGISTRY,
                    tactics: tuple[str, ...] = LEARNED_TACTICS,
                    min_examples: int = 20,
                    dominance_threshold: float = DEFAULT_DOMINANCE_THRESHOLD,
                    seed: int = 0) -> DetectorModel:
    """Fit one independent binary classifier per learned tactic with 5-fold
    cross-validated accuracy reporting and an l2 grid."""
    model = DetectorModel(registry=registry, dominance_threshold=dominance_threshold)
    for tactic in tactics:
        with_q = tactic == "address_concerns"
        X = np.array([
            extract_classifier_features(a.text, a.scenario, a.previous_buyer_turn,
                                        embeddings, with_question_features=with_q)
            for a in annotated
        ])
        y = np.array([1.0 if tactic in a.labels else 0.0 for a in annotated])
        if len(y) < min_examples:
            raise ValueError(
                f"need >= {min_examples} annotated examples, got {len(y)}")
        if len(set(y.tolist())) < 2:
            warnings.warn(f"single-class labels for {tactic}; using always-negative fallback")
            model.classifiers[tactic] = AlwaysNegative()
            model.cv_accuracy[tactic] = float((y == 0).mean())
            continue
        l2 = select_l2(X, y, seed=seed)
        model.cv_accuracy[tactic] = cross_val_accuracy(X, y, l2, seed=seed)
        model.classifiers[tactic] = fit_logistic(X, y, l2)
    return model


def annotate_turn(turn_text: str, turn_index: int, events_before: list[C.Event],
                  scenario: C.Scenario, lexset: LexiconSet,
                  model: Optional[DetectorModel] = None,
                  embeddings: Optional[EmbeddingTable] = None,
                  speaker: str = C.SELLER,
                  registry: TacticRegistry = DEFAULT_REGISTRY) -> TacticAnnotation:
    """Merge rule detections with learned turn-level detections.

    Without a trained model, propose_price falls back to the price-pattern
    rule so stage-dependent machinery keeps working.
    """
    threshold = model.dominance_threshold if model else DEFAULT_DOMINANCE_THRESHOLD
    ann = detect_rules(turn_text, turn_index, lexset, registry, threshold)

    if model is not None and model.classifiers:
        prev_buyer = None
        for e in reversed(events_before):
            if e.kind == C.MESSAGE and e.speaker == C.BUYER:
                prev_buyer = e.text
                break
        for tactic, clf in model.classifiers.items():
            if tactic not in registry:
                continue
            with_q = tactic == "address_concerns"
            x = extract_classifier_features(turn_text, scenario, prev_buyer,
                                            embeddings, with_question_features=with_q)
            if float(np.atleast_1d(clf.predict_proba(x))[0]) > 0.5:
                ann.turn_flags[registry.index(tactic)] = 1
    else:
        # rule fallbacks for the learned tactics that have workable rules
        if mentions_price(turn_text) and "propose_price" in registry:
            ann.turn_flags[registry.index("propose_price")] = 1
        interests = lexset.lexicons.get("interests")
        if (interests is not None and "communicate_interests" in registry
                and ann.counts.get("first_person_disclosure", 0) >= 1
                and count_matches(tokenize(turn_text), interests)[0] >= 1):
            ann.turn_flags[registry.index("communicate_interests")] = 1

    if (speaker == C.SELLER and "did_not_propose_first" in registry
            and detect_did_not_propose_first(events_before)):
        ann.turn_flags[registry.index("did_not_propose_first")] = 1

    ann.presence = (ann.presence | ann.turn_flags).astype(int)
    return ann


def annotate_dialog(d: C.Dialog, lexset: LexiconSet,
                    model: Optional[DetectorModel] = None,
                    embeddings: Optional[EmbeddingTable] = None,
                    registry: TacticRegistry = DEFAULT_REGISTRY,
                    ) -> dict[int, TacticAnnotation]:
    """Annotate every message event; keyed by event index."""
    out = {}
    for e in d.events:
        if e.kind != C.MESSAGE:
            continue
        out[e.index] = annotate_turn(
            e.text or "", e.index, list(d.events[: e.index]), d.scenario,
            lexset, model, embeddings, speaker=e.speaker, registry=registry,
        )
    return out


def calibrate_dominance_threshold(dialogs: list[C.Dialog], lexset: LexiconSet,
                                  quantile: float = 0.75) -> float:
    """75th percentile of per-turn mean dominance over a training corpus."""
    means = []
    for d in dialogs:
        for e in d.events:
            if e.kind == C.MESSAGE:
                m = mean_dominance(tokenize(e.text or ""), lexset.dominance)
                if m is not None:
                    means.append(m)
    if not means:
        return DEFAULT_DOMINANCE_THRESHOLD
    return float(np.quantile(np.array(means), quantile))
