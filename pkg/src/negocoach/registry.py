"""Canonical enumeration of negotiation tactic ids.

Vector dimensions all over the system (annotation presence vectors,
predictor outputs, outcome count features) are indexed by registry order,
so the order must stay fixed for the lifetime of any trained model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

DEFAULT_TACTICS = (
    "describe_product",
    "rephrase_description",
    "embellish_product",
    "address_concerns",
    "communicate_interests",
    "propose_price",
    "did_not_propose_first",
    "side_offer",
    "hedge",
    "factive_verb",
    "certainty_word",
    "polite_gratitude",
    "polite_greeting",
    "polite_apology",
    "polite_please_start",
    "polite_please_later",
    "first_person_disclosure",
    "mention_family",
    "mention_friend",
    "informal",
    "dominance",
    "sentiment_positive",
    "sentiment_negative",
)

# Tactics detected by trained per-tactic classifiers rather than rules.
LEARNED_TACTICS = (
    "describe_product",
    "rephrase_description",
    "embellish_product",
    "address_concerns",
    "communicate_interests",
    "propose_price",
)

# Tactics that flag a whole turn instead of anchoring to a word position.
TURN_LEVEL_TACTICS = LEARNED_TACTICS + ("did_not_propose_first", "dominance")


@dataclass(frozen=True)
class TacticRegistry:
    """Ordered, immutable list of tactic ids with index lookup."""

    ids: tuple[str, ...] = DEFAULT_TACTICS
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("tactic ids must be unique")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.ids)})

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)

    def __contains__(self, tactic: str) -> bool:
        return tactic in self._index

    def index(self, tactic: str) -> int:
        try:
            return self._index[tactic]
        except KeyError:
            raise KeyError(f"unknown tactic id: {tactic!r}") from None

    def is_turn_level(self, tactic: str) -> bool:
        return tactic in TURN_LEVEL_TACTICS


DEFAULT_REGISTRY = TacticRegistry()
