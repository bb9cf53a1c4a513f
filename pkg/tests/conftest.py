import numpy as np
import pytest

from negocoach import corpus as C
from negocoach.detector import LexiconSet, TacticAnnotation
from negocoach.registry import DEFAULT_REGISTRY, TacticRegistry


# One "[PASS]/[FAIL] <criterion>" line per acceptance criterion, shown in
# the terminal summary at the end of the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def lexset() -> LexiconSet:
    return LexiconSet.load_default()


@pytest.fixture
def scenario() -> C.Scenario:
    return C.Scenario(
        id="car-1",
        title="2006 Toyota 4Runner 4WD - Only 106k Miles - Clean Title",
        description="Selling my 2006 Toyota 4Runner with only 106k original miles. "
                    "The truck is in great condition with a clean accident history.",
        category="car",
        list_price=14500.0,
        buyer_target=8700.0,
    )


def make_scenario(id="s", list_price=1000.0, buyer_target=500.0, category="car"):
    return C.Scenario(id=id, title="item", description="a plain item for sale",
                      category=category, list_price=list_price, buyer_target=buyer_target)


def make_dialog(id, events, scenario=None, sale_price=None):
    """events: list of (speaker, kind, payload) tuples; payload is text for
    messages and price for offers."""
    scen = scenario or make_scenario(id=f"scen-{id}")
    evs = []
    for i, (speaker, kind, payload) in enumerate(events):
        text = payload if kind == C.MESSAGE else None
        price = payload if kind == C.OFFER else None
        evs.append(C.Event(index=i, speaker=speaker, kind=kind, text=text, price=price))
    evs = tuple(evs)
    outcome = C.derive_outcome(evs)
    if sale_price is not None:
        outcome = C.Outcome("agreed", sale_price)
    return C.Dialog(id=id, scenario=scen, events=evs, outcome=outcome)


def agreed_dialog(id, ratio, scenario=None, n_messages=6):
    """Dialog whose sale price yields the requested sale-to-list ratio."""
    scen = scenario or make_scenario(id=f"scen-{id}")
    sale = scen.buyer_target + ratio * (scen.list_price - scen.buyer_target)
    events = []
    for i in range(n_messages):
        speaker = C.BUYER if i % 2 == 0 else C.SELLER
        events.append((speaker, C.MESSAGE, f"turn {i}"))
    events.append((C.SELLER, C.OFFER, sale))
    events.append((C.BUYER, C.ACCEPT, None))
    return make_dialog(id, events, scenario=scen)


def synthetic_annotation(turn_index, mentions=(), flags=(),
                         registry: TacticRegistry = DEFAULT_REGISTRY) -> TacticAnnotation:
    """Build an annotation directly (bypassing the detectors) for model tests."""
    n = len(registry)
    turn_flags = np.zeros(n, dtype=int)
    for t in flags:
        turn_flags[registry.index(t)] = 1
    presence = turn_flags.copy()
    ms = sorted(mentions, key=lambda m: m[1])
    for t, _p in ms:
        presence[registry.index(t)] = 1
    return TacticAnnotation(turn_index=turn_index, registry=registry,
                            presence=presence, mentions=list(ms), turn_flags=turn_flags)


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    denom = max(float(np.linalg.norm(a) + np.linalg.norm(b)), 1e-12)
    return float(np.linalg.norm(a - b)) / denom
