"""Dialog data model, corpus ingestion, outcome ratios and labels.

The normalized corpus format is one JSON object per line:

    {"id": ..., "scenario": {"title", "description", "category",
     "list_price", "buyer_target"}, "events": [{"index", "speaker",
     "kind", "text"?, "price"?}], "outcome": {"type", "sale_price"?}}

The raw public-dataset schema is converted to this at ingestion only.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

CATEGORIES = ("car", "housing", "electronics", "bike", "furniture", "phone")

# the source corpus spells this category "house" in places
_CATEGORY_ALIASES = {"house": "housing"}

SELLER = "seller"
BUYER = "buyer"

MESSAGE = "message"
OFFER = "offer"
ACCEPT = "accept"
REJECT = "reject"
QUIT = "quit"

EVENT_KINDS = (MESSAGE, OFFER, ACCEPT, REJECT, QUIT)


class CorpusError(Exception):
    pass


class ParseError(CorpusError):
    """Malformed JSON; carries the byte/char offset when known."""

    def __init__(self, msg: str, offset: Optional[int] = None):
        super().__init__(msg if offset is None else f"{msg} (offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Scenario:
    id: str
    title: str
    description: str
    category: str
    list_price: float
    buyer_target: float

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        if not (self.list_price > 0 and self.buyer_target > 0):
            raise ValueError("prices must be positive")


@dataclass(frozen=True)
class Event:
    index: int
    speaker: str  # seller | buyer
    kind: str     # message | offer | accept | reject | quit
    text: Optional[str] = None
    price: Optional[float] = None

    def __post_init__(self):
        if self.speaker not in (SELLER, BUYER):
            raise ValueError(f"bad speaker {self.speaker!r}")
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"bad event kind {self.kind!r}")
        if self.kind == MESSAGE and self.text is None:
            raise ValueError("message event needs text")
        if self.kind == OFFER and self.price is None:
            raise ValueError("offer event needs a price")


@dataclass(frozen=True)
class Outcome:
    type: str  # "agreed" | "no_deal"
    sale_price: Optional[float] = None


@dataclass(frozen=True)
class Dialog:
    id: str
    scenario: Scenario
    events: tuple[Event, ...]
    outcome: Outcome

    def messages(self) -> list[Event]:
        return [e for e in self.events if e.kind == MESSAGE]


@dataclass(frozen=True)
class StageSplit:
    """Boundary index of the first price proposal; None means all stage 1."""

    boundary: Optional[int]

    def stage_of(self, event_index: int) -> int:
        if self.boundary is None or event_index < self.boundary:
            return 1
        return 2


@dataclass(frozen=True)
class RejectionRecord:
    dialog_id: str
    reason: str


@dataclass
class ParseResult:
    dialogs: list[Dialog]
    rejections: list[RejectionRecord] = field(default_factory=list)


def derive_outcome(events: Iterable[Event]) -> Outcome:
    """Agreed iff an offer is later accepted; sale price = accepted offer."""
    last_offer = None
    for e in events:
        if e.kind == OFFER:
            last_offer = e
        elif e.kind == ACCEPT and last_offer is not None:
            return Outcome("agreed", last_offer.price)
    return Outcome("no_deal")


def validate_events(events: list[Event]) -> Optional[str]:
    """Return a reason string if the event list violates invariants."""
    for i, e in enumerate(events):
        if e.index != i:
            return f"event indices not consecutive at position {i}"
    prev_msg_speaker = None
    for e in events:
        if e.kind == MESSAGE:
            if e.speaker == prev_msg_speaker:
                return f"consecutive messages by {e.speaker} at event {e.index}"
            prev_msg_speaker = e.speaker
    return None


def _dialog_from_normalized(obj: dict) -> Dialog:
    s = obj["scenario"]
    category = _CATEGORY_ALIASES.get(s["category"], s["category"])
    scenario = Scenario(
        id=str(obj.get("scenario_id", obj["id"])),
        title=s["title"],
        description=s["description"],
        category=category,
        list_price=float(s["list_price"]),
        buyer_target=float(s["buyer_target"]),
    )
    events = tuple(
        Event(
            index=int(e["index"]),
            speaker=e["speaker"],
            kind=e["kind"],
            text=e.get("text"),
            price=float(e["price"]) if e.get("price") is not None else None,
        )
        for e in obj["events"]
    )
    out = obj.get("outcome")
    if out is None:
        outcome = derive_outcome(events)
    else:
        outcome = Outcome(
            out["type"],
            float(out["sale_price"]) if out.get("sale_price") is not None else None,
        )
    return Dialog(id=str(obj["id"]), scenario=scenario, events=events, outcome=outcome)


def _dialog_from_raw(obj: dict, fallback_id: str) -> Dialog:
    """Convert one dialog in the raw public-dataset schema.

    Raw schema: scenario.kbs is a pair of knowledge bases with
    personal.Role / personal.Target and item.{Title, Price, Description,
    Category}; events carry an integer agent index and an action.
    """
    scen = obj["scenario"]
    kbs = scen["kbs"]
    roles = {}
    buyer_target = None
    item = None
    for agent_idx, kb in enumerate(kbs):
        role = kb["personal"]["Role"]
        roles[agent_idx] = role
        if role == BUYER:
            buyer_target = float(kb["personal"]["Target"])
        if role == SELLER or item is None:
            item = kb["item"]
    if item is None or buyer_target is None:
        raise KeyError("raw scenario missing seller item or buyer target")
    category = item.get("Category", scen.get("category"))
    category = _CATEGORY_ALIASES.get(category, category)
    scenario = Scenario(
        id=str(scen.get("uuid", fallback_id)),
        title=item.get("Title", ""),
        description=" ".join(item["Description"])
        if isinstance(item.get("Description"), list)
        else item.get("Description", ""),
        category=category,
        list_price=float(item["Price"]),
        buyer_target=buyer_target,
    )
    events = []
    for e in obj["events"]:
        speaker = roles[int(e["agent"])]
        action = e["action"]
        data = e.get("data")
        index = len(events)
        if action == MESSAGE:
            events.append(Event(index, speaker, MESSAGE, text=str(data)))
        elif action == OFFER:
            price = data["price"] if isinstance(data, dict) else data
            events.append(Event(index, speaker, OFFER, price=float(price)))
        elif action == ACCEPT:
            events.append(Event(index, speaker, ACCEPT))
        elif action == REJECT:
            events.append(Event(index, speaker, REJECT))
        elif action in (QUIT, "disconnect"):
            events.append(Event(index, speaker, QUIT))
        # other raw actions (e.g. typing events) are dropped
    events = tuple(events)
    return Dialog(
        id=str(obj.get("uuid", fallback_id)),
        scenario=scenario,
        events=events,
        outcome=derive_outcome(events),
    )


def parse_corpus(data: bytes | str, format: str = "normalized") -> ParseResult:
    """Parse a corpus blob into dialogs plus per-dialog rejection records.

    ``normalized`` accepts JSON-lines or a JSON array of normalized
    objects; ``raw`` accepts the public-dataset JSON array.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    result = ParseResult(dialogs=[])
    if format == "raw":
        try:
            objs = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, exc.pos) from exc
        for i, obj in enumerate(objs):
            _ingest(result, obj, f"raw-{i}", _dialog_from_raw)
        return result
    if format != "normalized":
        raise ValueError(f"unknown corpus format {format!r}")

    stripped = data.lstrip()
    if stripped.startswith("["):
        try:
            objs = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, exc.pos) from exc
        for i, obj in enumerate(objs):
            _ingest(result, obj, f"line-{i}", lambda o, _id: _dialog_from_normalized(o))
        return result

    offset = 0
    for line in data.splitlines(keepends=True):
        if line.strip():
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(exc.msg, offset + exc.pos) from exc
            _ingest(result, obj, f"offset-{offset}", lambda o, _id: _dialog_from_normalized(o))
        offset += len(line)
    return result


def _ingest(result: ParseResult, obj: dict, fallback_id: str,
            build: Callable[[dict, str], Dialog]) -> None:
    dialog_id = str(obj.get("id", obj.get("uuid", fallback_id)))
    try:
        d = build(obj, fallback_id)
    except (KeyError, TypeError, ValueError) as exc:
        result.rejections.append(RejectionRecord(dialog_id, f"schema: {exc}"))
        return
    reason = validate_events(list(d.events))
    if reason is not None:
        result.rejections.append(RejectionRecord(d.id, reason))
        return
    result.dialogs.append(d)


def dialog_to_obj(d: Dialog) -> dict:
    events = []
    for e in d.events:
        obj = {"index": e.index, "speaker": e.speaker, "kind": e.kind}
        if e.text is not None:
            obj["text"] = e.text
        if e.price is not None:
            obj["price"] = e.price
        events.append(obj)
    outcome = {"type": d.outcome.type}
    if d.outcome.sale_price is not None:
        outcome["sale_price"] = d.outcome.sale_price
    return {
        "id": d.id,
        "scenario": {
            "title": d.scenario.title,
            "description": d.scenario.description,
            "category": d.scenario.category,
            "list_price": d.scenario.list_price,
            "buyer_target": d.scenario.buyer_target,
        },
        "events": events,
        "outcome": outcome,
    }


def serialize_corpus(dialogs: Iterable[Dialog]) -> str:
    return "".join(json.dumps(dialog_to_obj(d)) + "\n" for d in dialogs)


def compute_ratio(d: Dialog) -> Optional[float]:
    """Sale-to-list ratio (sale - target) / (list - target); None if no deal
    or the denominator is degenerate."""
    if d.outcome.type != "agreed" or d.outcome.sale_price is None:
        return None
    denom = d.scenario.list_price - d.scenario.buyer_target
    if denom == 0:
        return None
    return (d.outcome.sale_price - d.scenario.buyer_target) / denom


POSITIVE = "positive"
NEGATIVE = "negative"
EXCLUDED = "excluded"

QUANTILE_FRACTION = 0.22


def fit_label_thresholds(train_dialogs: list[Dialog],
                         fraction: float = QUANTILE_FRACTION) -> tuple[float, float]:
    """Nearest-rank thresholds (negative_cut, positive_cut) from training ratios.

    The positive cut is the k-th largest training ratio and the negative cut
    the k-th smallest, with k = ceil(fraction * n), so on distinct ratios
    exactly a ``fraction`` share lands on each side.
    """
    ratios = sorted(r for r in (compute_ratio(d) for d in train_dialogs) if r is not None)
    n = len(ratios)
    if n < 10:
        raise CorpusError(f"need at least 10 labeled training dialogs, got {n}")
    k = math.ceil(fraction * n)
    return ratios[k - 1], ratios[n - k]


def label_outcomes(dialogs: list[Dialog],
                   thresholds: tuple[float, float]) -> dict[str, str]:
    """Map dialog id -> positive/negative/excluded given fitted thresholds."""
    lo, hi = thresholds
    labels = {}
    for d in dialogs:
        r = compute_ratio(d)
        if r is None:
            labels[d.id] = EXCLUDED
        elif r >= hi:
            labels[d.id] = POSITIVE
        elif r <= lo:
            labels[d.id] = NEGATIVE
        else:
            labels[d.id] = EXCLUDED
    return labels


def split_stages(d: Dialog, proposes_price: Callable[[str], bool]) -> StageSplit:
    """Boundary = first offer event or message where the propose-a-price
    predicate fires; None if the dialog never reaches a proposal."""
    for e in d.events:
        if e.kind == OFFER:
            return StageSplit(e.index)
        if e.kind == MESSAGE and proposes_price(e.text or ""):
            return StageSplit(e.index)
    return StageSplit(None)


def filter_corpus(dialogs: list[Dialog],
                  min_message_turns: int = 5) -> tuple[list[Dialog], dict[str, int]]:
    """Drop short (<= 4 message turns) and incomplete dialogs.

    Incomplete = the dialog never reached an accept/reject decision
    (disconnect or quit mid-negotiation).
    """
    kept = []
    dropped = {"short": 0, "incomplete": 0}
    for d in dialogs:
        if len(d.messages()) < min_message_turns:
            dropped["short"] += 1
        elif not any(e.kind in (ACCEPT, REJECT) for e in d.events):
            dropped["incomplete"] += 1
        else:
            kept.append(d)
    return kept, dropped


def split_corpus(dialogs: list[Dialog], dev_fraction: float, test_fraction: float,
                 seed: int) -> tuple[list[Dialog], list[Dialog], list[Dialog]]:
    """Deterministic seeded train/dev/test partition."""
    if not (0 < dev_fraction < 1 and 0 < test_fraction < 1):
        raise ValueError("fractions must be in (0, 1)")
    if dev_fraction + test_fraction >= 1:
        raise ValueError("dev + test fractions must sum below 1")
    order = list(dialogs)
    random.Random(seed).shuffle(order)
    n = len(order)
    n_dev = int(round(dev_fraction * n))
    n_test = int(round(test_fraction * n))
    dev = order[:n_dev]
    test = order[n_dev:n_dev + n_test]
    train = order[n_dev + n_test:]
    return train, dev, test
