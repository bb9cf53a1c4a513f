import itertools
import random

import numpy as np
import pytest

from negocoach import corpus as C
from negocoach import engine as E
from negocoach.buyer import BuyerPolicyConfig, ScriptedBuyer
from negocoach.logistic import LogisticModel
from negocoach.outcome import OutcomeModel, feature_index
from negocoach.predictor import PredictorConfig, PredictorModel, SEP, UNK
from negocoach.realizer import TemplateSet
from negocoach.registry import DEFAULT_REGISTRY

from conftest import make_scenario


@pytest.fixture(scope="module")
def rule_models():
    return E.CoachModels.rule_only()


@pytest.fixture(scope="module")
def engine(rule_models):
    return E.CoachEngine(rule_models)


def new_session(scenario=None, sid="s1"):
    return E.Session(id=sid, scenario=scenario or make_scenario())


def drive(engine, session, events):
    """events: (speaker, kind, payload)."""
    out = []
    for speaker, kind, payload in events:
        text = payload if kind == C.MESSAGE else None
        price = payload if kind == C.OFFER else None
        out.append(engine.on_event(session, speaker, kind, text=text, price=price))
    return out


# ---- legality table ---------------------------------------------------------


def build_status(engine, which):
    """Construct a session in each protocol status with known context."""
    s = new_session()
    if which == "open_fresh":
        pass
    elif which == "open_after_seller_msg":
        drive(engine, s, [(C.SELLER, C.MESSAGE, "hello")])
    elif which == "open_after_buyer_msg":
        drive(engine, s, [(C.BUYER, C.MESSAGE, "hi")])
    elif which == "open_after_reject":
        drive(engine, s, [(C.BUYER, C.MESSAGE, "hi"),
                          (C.BUYER, C.OFFER, 600.0),
                          (C.SELLER, C.REJECT, None)])
    elif which == "pending_seller_offer":
        drive(engine, s, [(C.SELLER, C.OFFER, 900.0)])
    elif which == "pending_buyer_offer":
        drive(engine, s, [(C.BUYER, C.OFFER, 600.0)])
    elif which == "closed_agreed":
        drive(engine, s, [(C.SELLER, C.OFFER, 900.0), (C.BUYER, C.ACCEPT, None)])
    elif which == "closed_quit":
        drive(engine, s, [(C.BUYER, C.QUIT, None)])
    else:
        raise AssertionError(which)
    return s


# Exhaustive expectation per (session context, speaker) over all event kinds.
LEGALITY = {
    ("open_fresh", C.SELLER): {C.MESSAGE, C.OFFER, C.QUIT},
    ("open_fresh", C.BUYER): {C.MESSAGE, C.OFFER, C.QUIT},
    ("open_after_seller_msg", C.SELLER): {C.OFFER, C.QUIT},
    ("open_after_seller_msg", C.BUYER): {C.MESSAGE, C.OFFER, C.QUIT},
    ("open_after_buyer_msg", C.SELLER): {C.MESSAGE, C.OFFER, C.QUIT},
    ("open_after_buyer_msg", C.BUYER): {C.OFFER, C.QUIT},
    ("open_after_reject", C.SELLER): {C.MESSAGE, C.OFFER, C.QUIT},
    ("open_after_reject", C.BUYER): {C.OFFER, C.QUIT},
    ("pending_seller_offer", C.SELLER): {C.QUIT},
    ("pending_seller_offer", C.BUYER): {C.ACCEPT, C.REJECT, C.QUIT},
    ("pending_buyer_offer", C.SELLER): {C.ACCEPT, C.REJECT, C.QUIT},
    ("pending_buyer_offer", C.BUYER): {C.QUIT},
    ("closed_agreed", C.SELLER): set(),
    ("closed_agreed", C.BUYER): set(),
    ("closed_quit", C.SELLER): set(),
    ("closed_quit", C.BUYER): set(),
}


@pytest.mark.parametrize("context,speaker",
                         sorted(LEGALITY, key=str))
def test_legality_table(engine, context, speaker):
    expected = LEGALITY[(context, speaker)]
    session = build_status(engine, context)
    assert E.legal_kinds(session, speaker) == expected
    for kind in C.EVENT_KINDS:
        session = build_status(engine, context)
        n_before = len(session.events)
        text = "hello" if kind == C.MESSAGE else None
        price = 750.0 if kind == C.OFFER else None
        if kind in expected:
            engine.on_event(session, speaker, kind, text=text, price=price)
            assert len(session.events) == n_before + 1
        else:
            with pytest.raises(E.ProtocolError):
                engine.on_event(session, speaker, kind, text=text, price=price)
            assert len(session.events) == n_before  # unchanged on error


def test_accept_closes_with_last_offer_price(engine):
    s = new_session()
    drive(engine, s, [(C.BUYER, C.OFFER, 600.0),
                      (C.SELLER, C.REJECT, None),
                      (C.SELLER, C.OFFER, 800.0),
                      (C.BUYER, C.ACCEPT, None)])
    assert s.status == E.CLOSED
    assert s.outcome == C.Outcome("agreed", 800.0)


def test_reject_reopens_message_alternation(engine):
    s = new_session()
    drive(engine, s, [(C.BUYER, C.MESSAGE, "hi"),
                      (C.BUYER, C.OFFER, 600.0),
                      (C.SELLER, C.REJECT, None)])
    # last message was the buyer's, so the seller speaks next
    assert s.status == E.OPEN
    assert s.next_message_speaker() == C.SELLER


def test_rule_only_engine_emits_no_suggestions(engine):
    s = new_session()
    results = drive(engine, s, [(C.BUYER, C.MESSAGE, "hi"),
                                (C.SELLER, C.MESSAGE, "hello")])
    assert results == [None, None]
    assert s.trace == []


def test_stage_tracking(engine):
    s = new_session()
    drive(engine, s, [(C.BUYER, C.MESSAGE, "hi")])
    assert s.stage() == 1
    drive(engine, s, [(C.SELLER, C.MESSAGE, "i'm asking $800")])
    assert s.stage() == 2


# ---- a coach with deterministic planted models ------------------------------


def planted_coach_models():
    """Tiny predictor (thresholds at 0 so all tactics are candidates) plus
    an outcome model whose only positive seller weights are side_offer and
    propose_price, in both stages."""
    registry = DEFAULT_REGISTRY
    vocab = {UNK: 0, SEP: 1}
    config = PredictorConfig(hidden_dim=4, word_dim=3, tactic_dim=2,
                             product_dim=2, seed=0, dropout=0.0)
    predictor = PredictorModel(vocab, config, registry)
    predictor.thresholds = np.zeros(len(registry))

    dim = len(registry) * 4
    w = np.full(dim, -1.0)
    for t in ("side_offer", "propose_price"):
        for stage in (1, 2):
            w[feature_index(t, C.SELLER, stage, registry)] = 1.0
    outcome = OutcomeModel(model=LogisticModel(
        weights=w, bias=0.0, l2=0.1, mean=np.zeros(dim), std=np.ones(dim)))
    base = E.CoachModels.rule_only()
    return E.CoachModels(lexicons=base.lexicons, templates=base.templates,
                         predictor=predictor, outcome=outcome)


@pytest.fixture(scope="module")
def planted_engine():
    return E.CoachEngine(planted_coach_models())


def test_coach_selects_positive_weight_tactics(planted_engine):
    s = new_session()
    suggestion = planted_engine.on_event(s, C.BUYER, C.MESSAGE, text="hi there")
    assert suggestion is not None
    assert suggestion.tactics == {"side_offer", "propose_price"}
    assert suggestion.instruction
    assert len(s.trace) == 1
    assert s.trace[0].selected == {"side_offer", "propose_price"}
    assert s.trace[0].candidates == set(DEFAULT_REGISTRY.ids)


def test_no_suggestion_when_buyer_next(planted_engine):
    s = new_session()
    assert planted_engine.on_event(s, C.SELLER, C.MESSAGE, text="hello") is None


def test_adherence_scoring(planted_engine):
    s = new_session()
    planted_engine.on_event(s, C.BUYER, C.MESSAGE, text="hi")
    planted_engine.on_event(s, C.SELLER, C.MESSAGE,
                            text="i could deliver it for $800")
    record = s.trace[0]
    # seller used side_offer (deliver) and propose_price ($800)
    assert record.followed == {"side_offer": True, "propose_price": True}
    assert E.adherence(s) == 1.0


def test_adherence_unanswered_counts_unmet(planted_engine):
    s = new_session()
    planted_engine.on_event(s, C.BUYER, C.MESSAGE, text="hi")
    planted_engine.on_event(s, C.BUYER, C.QUIT)
    assert E.adherence(s) == 0.0


def test_adherence_none_without_suggestions(engine):
    s = new_session()
    drive(engine, s, [(C.BUYER, C.MESSAGE, "hi")])
    assert E.adherence(s) is None


def test_replay_determinism(planted_engine):
    events = [
        C.Event(0, C.BUYER, C.MESSAGE, text="hi, is this available?"),
        C.Event(1, C.SELLER, C.MESSAGE, text="hello, yes it is"),
        C.Event(2, C.BUYER, C.MESSAGE, text="would you take $600?"),
        C.Event(3, C.SELLER, C.MESSAGE, text="i could do $800 and deliver it"),
        C.Event(4, C.BUYER, C.OFFER, price=800.0),
        C.Event(5, C.SELLER, C.ACCEPT),
    ]
    scenario = make_scenario()
    a = E.replay(planted_engine, scenario, "r1", events)
    b = E.replay(planted_engine, scenario, "r1", events)
    assert a.events == b.events
    assert a.outcome == b.outcome
    assert len(a.trace) == len(b.trace)
    for ra, rb in zip(a.trace, b.trace):
        assert (ra.candidates, ra.selected, ra.instruction, ra.followed) == \
            (rb.candidates, rb.selected, rb.instruction, rb.followed)


# ---- suggestion-delivery fuzzing -------------------------------------------


def fuzz_session(engine, seed):
    rng = random.Random(seed)
    s = new_session(sid=f"fuzz{seed}")
    texts = ["hi", "i could go lower", "how about $700?", "it is in great shape",
             "no thanks", "i can deliver it", "hmm", "works for me"]
    for _step in range(rng.randint(1, 25)):
        if s.status == E.CLOSED:
            break
        speaker = rng.choice([C.SELLER, C.BUYER])
        kinds = sorted(E.legal_kinds(s, speaker))
        if not kinds:
            break
        kind = rng.choice(kinds)
        text = rng.choice(texts) if kind == C.MESSAGE else None
        price = rng.uniform(500, 1000) if kind == C.OFFER else None
        suggestion = engine.on_event(s, speaker, kind, text=text, price=price)
        if suggestion is not None:
            # delivered only when the seller may legally speak next
            assert s.status == E.OPEN
            assert C.MESSAGE in E.legal_kinds(s, C.SELLER)
            assert suggestion.tactics <= set(DEFAULT_REGISTRY.ids)
    return s


def test_fuzzed_interleavings_respect_suggestion_invariant(planted_engine):
    for seed in range(300):
        fuzz_session(planted_engine, seed)


# ---- metrics ----------------------------------------------------------------


def _session_from(engine, sid, events, scenario=None):
    s = new_session(scenario=scenario, sid=sid)
    drive(engine, s, events)
    return s


def metrics_fixture_sessions(engine):
    """Six sessions with hand-computed metrics (scenario 500/1000)."""
    scen = make_scenario()
    m = C.MESSAGE
    s1 = _session_from(engine, "s1", [
        (C.BUYER, m, "hi"), (C.SELLER, m, "$800"), (C.BUYER, m, "too high"),
        (C.SELLER, m, "$750"), (C.BUYER, m, "ok deal"),
        (C.SELLER, C.OFFER, 750.0), (C.BUYER, C.ACCEPT, None)], scen)
    s2 = _session_from(engine, "s2", [
        (C.BUYER, m, "hello"), (C.SELLER, m, "i could do $650"), (C.BUYER, m, "okay"),
        (C.SELLER, m, "works for me"), (C.BUYER, m, "great"),
        (C.SELLER, C.OFFER, 650.0), (C.BUYER, C.ACCEPT, None)], scen)
    s3 = _session_from(engine, "s3", [
        (C.BUYER, m, "hi"), (C.SELLER, m, "the price is firm"), (C.BUYER, m, "hmm"),
        (C.SELLER, m, "let me know"), (C.BUYER, m, "no"),
        (C.BUYER, C.OFFER, 520.0), (C.SELLER, C.REJECT, None),
        (C.BUYER, C.QUIT, None)], scen)
    s4 = _session_from(engine, "s4", [
        (C.BUYER, m, "hi"), (C.SELLER, m, "$950"), (C.BUYER, m, "no"),
        (C.SELLER, m, "$950 final"), (C.BUYER, m, "fine"),
        (C.SELLER, C.OFFER, 950.0), (C.BUYER, C.ACCEPT, None)], scen)
    s5 = _session_from(engine, "s5", [
        (C.BUYER, m, "hi"), (C.SELLER, m, "hello"), (C.BUYER, m, "bye"),
        (C.BUYER, C.QUIT, None)], scen)
    s6 = _session_from(engine, "s6", [
        (C.BUYER, m, "hi"), (C.SELLER, m, "hello"), (C.BUYER, m, "interested"),
        (C.SELLER, m, "good"), (C.BUYER, m, "maybe later"),
        (C.BUYER, C.QUIT, None)], scen)
    return [s1, s2, s3, s4, s5, s6]


def baseline_fixture_sessions(engine):
    scen = make_scenario()
    m = C.MESSAGE
    b1 = _session_from(engine, "b1", [
        (C.BUYER, m, "hi"), (C.SELLER, m, "sure"), (C.BUYER, m, "condition?"),
        (C.SELLER, m, "fine"), (C.BUYER, m, "ok"),
        (C.SELLER, C.OFFER, 600.0), (C.BUYER, C.ACCEPT, None)], scen)
    b2 = _session_from(engine, "b2", [
        (C.BUYER, m, "hi"), (C.SELLER, m, "sure"), (C.BUYER, m, "color?"),
        (C.SELLER, m, "red"), (C.BUYER, m, "ok"),
        (C.SELLER, C.OFFER, 700.0), (C.BUYER, C.ACCEPT, None)], scen)
    return [b1, b2]


def test_metrics_hand_computed_fixture(engine):
    sessions = metrics_fixture_sessions(engine)
    baseline = baseline_fixture_sessions(engine)
    got = E.metrics(sessions, baseline, coached=False)
    # s5 is filtered (3 message turns); of the rest, s1/s2/s4 agreed
    assert got["n_sessions"] == 5
    assert got["completion"] == pytest.approx(3 / 5)
    # ratios 0.5, 0.3, 0.9
    assert got["mean_sale_to_list"] == pytest.approx((0.5 + 0.3 + 0.9) / 3)
    # seller propose_price turns: 2 + 1 + 0 + 2 + 0
    assert got["mean_seller_proposals"] == pytest.approx(1.0)
    # co-tactic proposals: s2 ("i could do $650"), s4 ("$950 final" fires
    # the dominance flag) -> 2 of 5
    assert got["co_tactic_rate"] == pytest.approx(2 / 5)
    # baseline ratios 0.2, 0.4
    assert got["delta_profit_pct"] == pytest.approx(
        100.0 * ((1.7 / 3 - 0.3) / 0.3))


def test_metrics_adherence_filter(engine):
    sessions = metrics_fixture_sessions(engine)
    # synthetic trace: s1's seller ignored every suggestion
    sessions[0].trace.append(E.CoachRecord(
        event_index=1, candidates={"hedge"}, selected={"hedge"},
        instruction="x", followed={"hedge": False}))
    sessions[1].trace.append(E.CoachRecord(
        event_index=1, candidates={"hedge"}, selected={"hedge"},
        instruction="x", followed={"hedge": True}))
    got = E.metrics(sessions, coached=False)
    assert got["n_sessions"] == 5  # uncoached: adherence ignored
    got = E.metrics(sessions, coached=True)
    assert got["n_sessions"] == 4  # s1 dropped (adherence 0 < 0.2)
    assert got["mean_sale_to_list"] == pytest.approx((0.3 + 0.9) / 2)


def test_metrics_empty():
    got = E.metrics([])
    assert got["n_sessions"] == 0
    assert got["mean_sale_to_list"] is None
    assert got["co_tactic_rate"] is None


# ---- scripted buyer end-to-end ----------------------------------------------


def run_scripted_negotiation(engine, seed, follow_coach):
    """Seller script that optionally follows suggestions; buyer is the
    deterministic scripted policy."""
    scen = make_scenario(list_price=1000.0, buyer_target=700.0)
    bot = ScriptedBuyer(scen, BuyerPolicyConfig(seed=seed))
    s = new_session(scenario=scen, sid=f"e2e{seed}")
    suggestion = None
    seller_prices = [950.0, 900.0, 860.0, 830.0]
    turn = 0
    for _round in range(40):
        if s.status == E.CLOSED:
            break
        kinds = E.legal_kinds(s, C.BUYER)
        if s.status == E.OFFER_PENDING and s.pending_offer[1] == C.SELLER:
            kind, text, price = bot.next_action(s.events, s.pending_offer)
            engine.on_event(s, C.BUYER, kind, text=text, price=price)
            continue
        if s.status == E.OFFER_PENDING:  # buyer offer pending: seller accepts
            engine.on_event(s, C.SELLER, C.ACCEPT)
            continue
        if C.MESSAGE in kinds:
            kind, text, price = bot.next_action(s.events, None)
            suggestion = engine.on_event(s, C.BUYER, kind, text=text, price=price)
            continue
        # seller's turn
        if turn < len(seller_prices):
            base = f"i can do ${seller_prices[turn]:g}"
            if follow_coach and suggestion and "side_offer" in suggestion.tactics:
                base += " and i will deliver it for free"
            engine.on_event(s, C.SELLER, C.MESSAGE, text=base)
            turn += 1
        else:
            engine.on_event(s, C.SELLER, C.OFFER, price=seller_prices[-1])
    return s


@pytest.mark.parametrize("follow_coach", [True, False])
def test_scripted_buyer_replay_deterministic(planted_engine, follow_coach):
    a = run_scripted_negotiation(planted_engine, seed=4, follow_coach=follow_coach)
    b = run_scripted_negotiation(planted_engine, seed=4, follow_coach=follow_coach)
    assert a.events == b.events
    assert a.outcome == b.outcome
    assert [r.instruction for r in a.trace] == [r.instruction for r in b.trace]
    assert a.status == E.CLOSED


def test_scripted_buyer_deterministic_given_seed():
    scen = make_scenario()
    a = ScriptedBuyer(scen, BuyerPolicyConfig(seed=1))
    b = ScriptedBuyer(scen, BuyerPolicyConfig(seed=1))
    c = ScriptedBuyer(scen, BuyerPolicyConfig(seed=2))
    assert (a.greeting, a.question) == (b.greeting, b.question)
    assert (a.greeting, a.question) != (c.greeting, c.question)
