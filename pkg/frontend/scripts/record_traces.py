"""Record wire traces from the live chat service for client replay tests.

Runs three sessions against the real FastAPI app (via the test client),
records every frame delivered to one observed connection, and pairs each
frame with the server engine's legal event kinds for the observed role at
that point in the conversation. Output: test/fixtures/trace{1,2,3}.json.

Run from the repository root:
    PYTHONPATH=tests python3 frontend/scripts/record_traces.py
"""

import json
import sys
from pathlib import Path

from starlette.testclient import TestClient

from negocoach import corpus as C
from negocoach import engine as E
from negocoach.service import build_app

sys.path.insert(0, str(Path(__file__).resolve().parents[2] / "tests"))
from test_engine import planted_coach_models  # noqa: E402

FIXTURES = Path(__file__).resolve().parents[1] / "test" / "fixtures"

SCENARIO = {
    "id": "demo-bike",
    "title": "Trek mountain bike, barely used",
    "description": "Selling a lightly used Trek mountain bike with new tires.",
    "category": "bike",
    "list_price": 1000.0,
    "buyer_target": 700.0,
}


def legality_for(frames, role):
    """Replay the client-visible event list through the server engine and
    record legal kinds for `role` after every frame."""
    engine = E.CoachEngine(E.CoachModels.rule_only())
    out = []
    events = []
    for frame in frames:
        if frame["type"] == "state":
            events = frame["state"]["events"]
        elif frame["type"] in ("message", "offer", "accept", "reject", "quit"):
            events = events + [{
                "index": len(events), "speaker": frame["role"],
                "kind": frame["type"], "text": frame.get("text"),
                "price": frame.get("price"),
            }]
        session = E.Session(id="replay", scenario=C.Scenario(
            id="s", title="t", description="d", category="bike",
            list_price=1000.0, buyer_target=700.0))
        for e in events:
            engine.on_event(session, e["speaker"], e["kind"],
                            text=e.get("text"), price=e.get("price"))
        out.append(sorted(E.legal_kinds(session, role)))
    return out


def drain(ws, n, frames):
    for _ in range(n):
        frame = ws.receive_json()
        print("  frame:", frame.get("type"), flush=True)
        frames.append(frame)


def record(name, role, frames, client, session_id):
    transcript = client.get(f"/sessions/{session_id}/transcript").json()
    fixture = {
        "role": role,
        "scenario": SCENARIO,
        "frames": frames,
        "legal_after": legality_for(frames, role),
        "final_events": transcript["events"],
        "final_status": "closed" if transcript["outcome"]["type"] != "open"
                        else "open",
        "final_outcome": transcript["outcome"],
    }
    path = FIXTURES / f"{name}.json"
    path.write_text(json.dumps(fixture, indent=1), encoding="utf-8")
    print(f"wrote {path} ({len(frames)} frames)")


def trace1_seller_human_buyer(client):
    """Seller's view of a negotiation with a human buyer, ending agreed."""
    created = client.post("/sessions", json={"scenario": SCENARIO}).json()
    frames = []
    with client.websocket_connect(f"/ws?token={created['seller_token']}") as seller, \
            client.websocket_connect(f"/ws?token={created['buyer_token']}") as buyer:
        drain(seller, 3, frames)  # joined, state, opening suggestion
        drain(buyer, 2, [])
        buyer.send_json({"type": "message", "text": "hi, is this still available?"})
        drain(buyer, 2, [])
        drain(seller, 3, frames)  # message, state, suggestion
        seller.send_json({"type": "message",
                          "text": "hello! yes it is, and i can deliver it for free"})
        drain(buyer, 2, [])
        drain(seller, 2, frames)  # echo, state
        buyer.send_json({"type": "message", "text": "nice, would you take $750?"})
        drain(buyer, 2, [])
        drain(seller, 3, frames)  # message, state, suggestion
        seller.send_json({"type": "offer", "price": 860.0})
        drain(buyer, 2, [])
        drain(seller, 2, frames)  # offer echo, state
        buyer.send_json({"type": "accept"})
        drain(buyer, 2, [])
        drain(seller, 2, frames)  # accept, state (closed)
    record("trace1", C.SELLER, frames, client, created["session_id"])


def trace2_buyer_view(client):
    """Buyer's view: no suggestion frame may ever appear; ends in a quit."""
    created = client.post("/sessions", json={"scenario": SCENARIO}).json()
    frames = []
    with client.websocket_connect(f"/ws?token={created['buyer_token']}") as buyer, \
            client.websocket_connect(f"/ws?token={created['seller_token']}") as seller:
        drain(buyer, 2, frames)   # joined, state
        drain(seller, 3, [])
        buyer.send_json({"type": "message", "text": "hello, is the bike sold yet?"})
        drain(seller, 3, [])
        drain(buyer, 2, frames)   # echo, state
        seller.send_json({"type": "message", "text": "not yet, it is in great shape"})
        drain(seller, 2, [])
        drain(buyer, 2, frames)   # message, state
        buyer.send_json({"type": "offer", "price": 600.0})
        drain(seller, 2, [])
        drain(buyer, 2, frames)   # echo, state
        seller.send_json({"type": "reject"})
        drain(seller, 2, [])
        drain(buyer, 2, frames)   # reject, state
        buyer.send_json({"type": "message", "text": "understood, thanks anyway"})
        drain(seller, 3, [])      # message, state, suggestion
        drain(buyer, 2, frames)   # echo, state
        buyer.send_json({"type": "quit"})
        drain(seller, 2, [])
        drain(buyer, 2, frames)   # quit, state (closed)
    record("trace2", C.BUYER, frames, client, created["session_id"])


def trace3_seller_scripted_buyer(client):
    """Seller's view of a solo session against the scripted buyer."""
    created = client.post("/sessions", json={
        "scenario": SCENARIO, "scripted_buyer": {"seed": 5}}).json()
    frames = []
    with client.websocket_connect(f"/ws?token={created['seller_token']}") as seller:
        drain(seller, 3, frames)  # joined, state, opening suggestion
        seller.send_json({"type": "message",
                          "text": "hi! it is in great shape, i am asking $950"})
        # echo+state, bot reply+state, suggestion
        drain(seller, 5, frames)
        seller.send_json({"type": "message",
                          "text": "i could do $870 and deliver it for free"})
        drain(seller, 5, frames)
        seller.send_json({"type": "offer", "price": 820.0})
        # echo+state, bot accept+state (limit 805, accepts <= 845.25)
        drain(seller, 4, frames)
    record("trace3", C.SELLER, frames, client, created["session_id"])


def main():
    FIXTURES.mkdir(parents=True, exist_ok=True)
    app = build_app(planted_coach_models(), scenarios=[])
    with TestClient(app) as client:
        trace1_seller_human_buyer(client)
        trace2_buyer_view(client)
        trace3_seller_scripted_buyer(client)


if __name__ == "__main__":
    main()
