"""Live session orchestration: protocol state machine, the per-turn
annotate -> predict -> select -> realize pipeline, and evaluation metrics
over completed sessions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from negocoach import corpus as C
from negocoach.detector import (
    DetectorModel,
    LexiconSet,
    TacticAnnotation,
    annotate_turn,
    first_proposer,
    tokenize,
)
from negocoach.embeddings import EmbeddingTable
from negocoach.outcome import OutcomeModel, extract_outcome_features, select_tactics
from negocoach.predictor import PredictorModel
from negocoach.realizer import ExemplarIndex, Suggestion, TemplateSet, make_suggestion
from negocoach.registry import DEFAULT_REGISTRY, TacticRegistry

OPEN = "open"
OFFER_PENDING = "offer_pending"
CLOSED = "closed"


class ProtocolError(Exception):
    pass


@dataclass
class CoachModels:
    """Everything the live pipeline needs, all immutable after load."""

    lexicons: LexiconSet
    templates: TemplateSet
    detector: Optional[DetectorModel] = None
    predictor: Optional[PredictorModel] = None
    outcome: Optional[OutcomeModel] = None
    exemplar_index: Optional[ExemplarIndex] = None
    embeddings: Optional[EmbeddingTable] = None
    registry: TacticRegistry = DEFAULT_REGISTRY

    @classmethod
    def rule_only(cls) -> "CoachModels":
        return cls(lexicons=LexiconSet.load_default(), templates=TemplateSet.load())


@dataclass
class CoachRecord:
    """Per seller-turn trace entry: what the coach proposed and whether the
    seller's actual next turn used each suggested tactic."""

    event_index: int  # index the next event will get when the coach ran
    candidates: set[str]
    selected: set[str]
    instruction: str
    followed: dict[str, bool] = field(default_factory=dict)


@dataclass
class Session:
    id: str
    scenario: C.Scenario
    events: list[C.Event] = field(default_factory=list)
    annotations: dict[int, TacticAnnotation] = field(default_factory=dict)
    status: str = OPEN
    pending_offer: Optional[tuple[float, str]] = None  # (price, proposer)
    outcome: Optional[C.Outcome] = None
    trace: list[CoachRecord] = field(default_factory=list)

    def next_message_speaker(self) -> Optional[str]:
        """Role allowed to send the next message; None means either."""
        for e in reversed(self.events):
            if e.kind == C.MESSAGE:
                return C.BUYER if e.speaker == C.SELLER else C.SELLER
        return None

    def stage(self) -> int:
        return 2 if first_proposer(self.events) is not None else 1

    def to_dialog(self) -> C.Dialog:
        outcome = self.outcome if self.outcome is not None else C.derive_outcome(self.events)
        return C.Dialog(id=self.id, scenario=self.scenario,
                        events=tuple(self.events), outcome=outcome)


def legal_kinds(session: Session, speaker: str) -> set[str]:
    """Event kinds the given speaker may legally send right now."""
    if session.status == CLOSED:
        return set()
    if session.status == OFFER_PENDING:
        _price, proposer = session.pending_offer
        kinds = {C.QUIT}
        if speaker != proposer:
            kinds |= {C.ACCEPT, C.REJECT}
        return kinds
    # open
    kinds = {C.OFFER, C.QUIT}
    nxt = session.next_message_speaker()
    if nxt is None or nxt == speaker:
        kinds.add(C.MESSAGE)
    return kinds


class CoachEngine:
    def __init__(self, models: CoachModels):
        self.models = models

    # ---- event application --------------------------------------------------

    def on_event(self, session: Session, speaker: str, kind: str,
                 text: Optional[str] = None, price: Optional[float] = None,
                 ) -> Optional[Suggestion]:
        """Validate and apply one event; returns a Suggestion when the next
        legal speaker is the seller. Illegal events raise and leave the
        session unchanged."""
        if kind not in legal_kinds(session, speaker):
            raise ProtocolError(
                f"{kind} by {speaker} illegal in status {session.status}")
        index = len(session.events)
        event = C.Event(index=index, speaker=speaker, kind=kind, text=text, price=price)
        session.events.append(event)

        if kind == C.MESSAGE:
            session.annotations[index] = annotate_turn(
                text or "", index, session.events[:index], session.scenario,
                self.models.lexicons, self.models.detector, self.models.embeddings,
                speaker=speaker, registry=self.models.registry)
            self._score_adherence(session, event)
        elif kind == C.OFFER:
            session.status = OFFER_PENDING
            session.pending_offer = (price, speaker)
        elif kind == C.ACCEPT:
            session.status = CLOSED
            session.outcome = C.Outcome("agreed", session.pending_offer[0])
        elif kind == C.REJECT:
            # a rejected offer reopens the message exchange
            session.status = OPEN
            session.pending_offer = None
        elif kind == C.QUIT:
            session.status = CLOSED
            session.outcome = C.Outcome("no_deal")

        if session.status == OPEN and self.seller_may_speak(session):
            return self.coach(session)
        return None

    def seller_may_speak(self, session: Session) -> bool:
        return C.MESSAGE in legal_kinds(session, C.SELLER)

    # ---- the pipeline -------------------------------------------------------

    def coach(self, session: Session) -> Optional[Suggestion]:
        """Run predict -> threshold -> select -> realize on the session
        prefix. Needs the predictor and outcome models; returns None in
        rule-only deployments."""
        m = self.models
        if m.predictor is None or m.outcome is None:
            return None
        messages = [e for e in session.events if e.kind == C.MESSAGE]
        turn_tokens = [tokenize(e.text or "") for e in messages]
        anns = [session.annotations[e.index] for e in messages]
        probs = m.predictor.predict_next(turn_tokens, anns, session.scenario.category)
        mask = m.predictor.apply_thresholds(probs)
        candidates = {m.registry.ids[j] for j in range(len(mask)) if mask[j]}

        split = self._stage_split(session)
        features = extract_outcome_features(session.events, session.annotations,
                                            split, m.registry)
        selected = select_tactics(candidates, features, session.stage(), m.outcome)

        current_tactics = set()
        for ann in session.annotations.values():
            current_tactics |= ann.fired()
        suggestion = make_suggestion(selected, current_tactics, m.templates,
                                     m.exemplar_index)
        session.trace.append(CoachRecord(
            event_index=len(session.events), candidates=candidates,
            selected=set(selected), instruction=suggestion.instruction))
        return suggestion

    def _stage_split(self, session: Session) -> C.StageSplit:
        for e in session.events:
            if e.kind == C.OFFER:
                return C.StageSplit(e.index)
            if e.kind == C.MESSAGE and e.index in session.annotations:
                ann = session.annotations[e.index]
                if "propose_price" in ann.fired():
                    return C.StageSplit(e.index)
        return C.StageSplit(None)

    def _score_adherence(self, session: Session, event: C.Event) -> None:
        """When the seller speaks, mark which tactics of the most recent
        suggestion their turn actually fired."""
        if event.speaker != C.SELLER or not session.trace:
            return
        record = session.trace[-1]
        if record.followed or event.index < record.event_index:
            return
        fired = session.annotations[event.index].fired()
        record.followed = {t: t in fired for t in record.selected}


def adherence(session: Session) -> Optional[float]:
    """Fraction of suggested (turn, tactic) pairs the seller's actual turn
    used; None when no suggestion carried any tactic."""
    pairs = 0
    followed = 0
    for record in session.trace:
        for tactic, used in record.followed.items():
            pairs += 1
            followed += int(used)
        if not record.followed and record.selected:
            # suggestion issued but seller never spoke again: count as unmet
            pairs += len(record.selected)
    if pairs == 0:
        return None
    return followed / pairs


def replay(engine: CoachEngine, scenario: C.Scenario, session_id: str,
           events: list[C.Event]) -> Session:
    """Re-run a recorded event log through the pipeline; deterministic."""
    session = Session(id=session_id, scenario=scenario)
    for e in events:
        engine.on_event(session, e.speaker, e.kind, text=e.text, price=e.price)
    return session


def metrics(sessions: list[Session], baseline_sessions: Optional[list] = None,
            min_message_turns: int = 5, adherence_floor: float = 0.2,
            coached: bool = True) -> dict:
    """Aggregate outcome metrics over closed sessions.

    Sessions are filtered like the evaluation protocol: short dialogs go,
    and (when a coach was active) sellers who followed under 20% of
    suggested (turn, tactic) pairs go too.
    """
    kept = []
    for s in sessions:
        if len([e for e in s.events if e.kind == C.MESSAGE]) < min_message_turns:
            continue
        if coached:
            a = adherence(s)
            if a is not None and a < adherence_floor:
                continue
        kept.append(s)

    dialogs = [s.to_dialog() for s in kept]
    ratios = [r for r in (C.compute_ratio(d) for d in dialogs) if r is not None]
    completion = (sum(1 for d in dialogs if d.outcome.type == "agreed") / len(dialogs)
                  if dialogs else 0.0)
    mean_ratio = float(np.mean(ratios)) if ratios else None

    proposal_counts = []
    co_tactic_num = 0
    co_tactic_den = 0
    for s in kept:
        count = 0
        for e in s.events:
            if e.kind != C.MESSAGE or e.speaker != C.SELLER:
                continue
            fired = s.annotations[e.index].fired() if e.index in s.annotations else set()
            if "propose_price" in fired:
                count += 1
                co_tactic_den += 1
                if len(fired) > 1:
                    co_tactic_num += 1
        proposal_counts.append(count)

    result = {
        "n_sessions": len(kept),
        "completion": completion,
        "mean_sale_to_list": mean_ratio,
        "mean_seller_proposals": float(np.mean(proposal_counts)) if proposal_counts else None,
        "co_tactic_rate": co_tactic_num / co_tactic_den if co_tactic_den else None,
    }
    if baseline_sessions:
        base = metrics(baseline_sessions, coached=False,
                       min_message_turns=min_message_turns)
        if base["mean_sale_to_list"] not in (None, 0.0) and mean_ratio is not None:
            result["delta_profit_pct"] = 100.0 * (
                (mean_ratio - base["mean_sale_to_list"]) / base["mean_sale_to_list"])
    return result
