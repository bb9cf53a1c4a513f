"""Turn selected tactic sets into natural-language suggestions with
retrieved exemplar utterances from successful training dialogs."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from negocoach import corpus as C
from negocoach.detector import TacticAnnotation
from negocoach.registry import DEFAULT_REGISTRY, TacticRegistry

# Tactics for which a concrete example utterance is worth showing.
EXAMPLE_BEARING = ("hedge", "factive_verb", "certainty_word", "side_offer")


@dataclass(frozen=True)
class SuggestionTemplate:
    trigger: frozenset[str]   # exact set; singletons double as fallbacks
    text: str
    priority: int


@dataclass
class TemplateSet:
    templates: list[SuggestionTemplate]
    registry: TacticRegistry = DEFAULT_REGISTRY

    def __post_init__(self):
        singles = {next(iter(t.trigger)) for t in self.templates if len(t.trigger) == 1}
        missing = [t for t in self.registry.ids if t not in singles]
        if missing:
            raise ValueError(f"no single-id fallback template for: {missing}")

    @classmethod
    def load(cls, path: Optional[str | Path] = None,
             registry: TacticRegistry = DEFAULT_REGISTRY) -> "TemplateSet":
        if path is None:
            text = (resources.files("negocoach") / "data" / "templates.json").read_text("utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        raw = json.loads(text)
        templates = []
        for obj in raw:
            trig = obj["trigger"]
            trig = frozenset([trig] if isinstance(trig, str) else trig)
            templates.append(SuggestionTemplate(trig, obj["text"], int(obj["priority"])))
        return cls(templates, registry)


def realize(selected: set[str], templates: TemplateSet) -> str:
    """Exact-set template when one matches, else fallback templates for each
    selected tactic joined by '; ' in descending priority."""
    if not selected:
        return ""
    selected_set = frozenset(selected)
    for t in templates.templates:
        if t.trigger == selected_set:
            return t.text
    fallbacks = []
    for t in templates.templates:
        if len(t.trigger) == 1 and next(iter(t.trigger)) in selected_set:
            fallbacks.append(t)
    fallbacks.sort(key=lambda t: (-t.priority, next(iter(t.trigger))))
    # one fallback per tactic, highest priority first
    seen: set[str] = set()
    parts = []
    for t in fallbacks:
        tactic = next(iter(t.trigger))
        if tactic not in seen:
            seen.add(tactic)
            parts.append(t.text)
    return "; ".join(parts)


@dataclass(frozen=True)
class IndexEntry:
    text: str
    turn_tactics: frozenset[str]
    dialog_tactics: frozenset[str]
    dialog_id: str
    turn_index: int


@dataclass
class ExemplarIndex:
    entries: list[IndexEntry] = field(default_factory=list)


def build_index(dialogs: list[C.Dialog],
                annotations_by_dialog: dict[str, dict[int, TacticAnnotation]],
                labels: Optional[dict[str, str]] = None,
                positive_only: bool = True) -> ExemplarIndex:
    """Index tactic-bearing turns of (by default) positively labeled
    training dialogs; deterministic order."""
    index = ExemplarIndex()
    for d in dialogs:
        if positive_only and labels is not None and labels.get(d.id) != C.POSITIVE:
            continue
        anns = annotations_by_dialog.get(d.id, {})
        dialog_tactics = frozenset().union(*(a.fired() for a in anns.values())) \
            if anns else frozenset()
        for e in d.events:
            if e.kind != C.MESSAGE or e.index not in anns:
                continue
            fired = anns[e.index].fired()
            if not fired:
                continue
            index.entries.append(IndexEntry(
                text=e.text or "", turn_tactics=frozenset(fired),
                dialog_tactics=dialog_tactics, dialog_id=d.id, turn_index=e.index))
    if not index.entries:
        warnings.warn("exemplar index is empty (no positive dialogs with tactics)")
    return index


def jaccard(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def retrieve_exemplar(tactic: str, current_tactics: set[str],
                      index: ExemplarIndex) -> Optional[IndexEntry]:
    """Among indexed turns containing the tactic, maximize Jaccard between
    the source dialog's tactic set and the current dialog's cumulative set;
    ties go to the lexicographically smallest (dialog id, turn index)."""
    best: Optional[IndexEntry] = None
    best_sim = -1.0
    current = frozenset(current_tactics)
    for entry in index.entries:
        if tactic not in entry.turn_tactics:
            continue
        sim = jaccard(entry.dialog_tactics, current)
        if sim > best_sim or (
            sim == best_sim and best is not None
            and (entry.dialog_id, entry.turn_index) < (best.dialog_id, best.turn_index)
        ):
            best, best_sim = entry, sim
    return best


@dataclass
class Suggestion:
    tactics: set[str]
    instruction: str
    exemplars: list[tuple[str, str]]  # (tactic id, example utterance)

    def to_obj(self) -> dict:
        return {
            "tactics": sorted(self.tactics),
            "instruction": self.instruction,
            "exemplars": [{"tactic": t, "text": x} for t, x in self.exemplars],
        }


def make_suggestion(selected: set[str], current_tactics: set[str],
                    templates: TemplateSet, index: Optional[ExemplarIndex],
                    example_bearing: tuple[str, ...] = EXAMPLE_BEARING) -> Suggestion:
    instruction = realize(selected, templates)
    exemplars = []
    if index is not None:
        for tactic in sorted(selected):
            if tactic not in example_bearing:
                continue
            entry = retrieve_exemplar(tactic, current_tactics, index)
            if entry is not None:
                exemplars.append((tactic, entry.text))
    return Suggestion(tactics=set(selected), instruction=instruction, exemplars=exemplars)
