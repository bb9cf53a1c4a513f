"""Deterministic rule-based buyer for solo demos and end-to-end tests.

Policy: greet, ask one question, propose target plus a margin, concede a
fixed fraction of the remaining gap each round, accept once the seller's
price comes within epsilon of the limit, quit after too many rounds.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional

from negocoach import corpus as C
from negocoach.detector import is_price_token, tokenize

GREETINGS = (
    "Hi there! I saw your listing and I'm interested.",
    "Hello! Is this still available?",
    "Hey, I'd like to talk about your listing.",
)
QUESTIONS = (
    "How is the condition? Any problems I should know about?",
    "Why are you selling it?",
    "Does it come with everything in the description?",
)


@dataclass
class BuyerPolicyConfig:
    opening_margin: float = 0.05   # first proposal = target * (1 + margin)
    concession: float = 0.25       # fraction of remaining gap conceded per round
    epsilon: float = 0.05          # accept when seller price <= limit * (1 + eps)
    limit_factor: float = 1.15     # hard limit = target * limit_factor
    max_rounds: int = 8
    seed: int = 0


class ScriptedBuyer:
    """Emits the buyer's next action given the session's event log."""

    def __init__(self, scenario: C.Scenario, config: BuyerPolicyConfig = BuyerPolicyConfig()):
        self.scenario = scenario
        self.config = config
        self.rng = random.Random(config.seed)
        self.greeting = self.rng.choice(GREETINGS)
        self.question = self.rng.choice(QUESTIONS)
        self.target = scenario.buyer_target
        self.limit = self.target * config.limit_factor
        self.current = self.target * (1 + config.opening_margin)
        self.rounds = 0
        self.stage = "greet"

    def _seller_price(self, events: list[C.Event]) -> Optional[float]:
        """Most recent price named by the seller (offer or message)."""
        for e in reversed(events):
            if e.speaker != C.SELLER:
                continue
            if e.kind == C.OFFER:
                return e.price
            if e.kind == C.MESSAGE:
                for t in tokenize(e.text or ""):
                    if is_price_token(t):
                        raw = t.lstrip("$").replace(",", "")
                        scale = 1000.0 if raw.endswith("k") else 1.0
                        try:
                            return float(raw.rstrip("k")) * scale
                        except ValueError:
                            continue
        return None

    def next_action(self, events: list[C.Event], pending_offer: Optional[tuple[float, str]],
                    ) -> tuple[str, Optional[str], Optional[float]]:
        """Return (kind, text, price) for the buyer's next move."""
        if pending_offer is not None:
            price, proposer = pending_offer
            if proposer == C.SELLER:
                if price <= self.limit * (1 + self.config.epsilon):
                    return C.ACCEPT, None, None
                return C.REJECT, None, None

        if self.stage == "greet":
            self.stage = "ask"
            return C.MESSAGE, self.greeting, None
        if self.stage == "ask":
            self.stage = "bargain"
            return C.MESSAGE, self.question, None

        self.rounds += 1
        if self.rounds > self.config.max_rounds:
            return C.QUIT, None, None

        seller_price = self._seller_price(events)
        if seller_price is not None and seller_price <= self.limit * (1 + self.config.epsilon):
            return C.OFFER, None, round(seller_price, 2)
        if seller_price is not None:
            # concede a fraction of the gap toward the seller, capped at limit
            self.current = min(self.limit,
                               self.current + self.config.concession * (seller_price - self.current))
        price = round(self.current, 2)
        return C.MESSAGE, f"How about ${price:g}?", None
