"""Network front door: session lifecycle over HTTP, live events and
suggestions over per-participant websockets.

Wire messages are JSON objects tagged with ``type``:
join/joined/message/offer/accept/reject/quit/suggestion/state/error.
Suggestions are only ever sent on the seller's connection.
"""

from __future__ import annotations

import json
import secrets
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from negocoach import corpus as C
from negocoach.buyer import BuyerPolicyConfig, ScriptedBuyer
from negocoach.engine import CLOSED, CoachEngine, CoachModels, ProtocolError, Session
from negocoach.realizer import Suggestion

EVENT_TYPES = (C.MESSAGE, C.OFFER, C.ACCEPT, C.REJECT, C.QUIT)


@dataclass
class LiveSession:
    session: Session
    tokens: dict[str, str]               # role -> token
    used: set[str] = field(default_factory=set)
    connections: dict[str, WebSocket] = field(default_factory=dict)
    scripted_buyer: Optional[ScriptedBuyer] = None


def state_payload(session: Session) -> dict:
    return {
        "events": C.dialog_to_obj(session.to_dialog())["events"],
        "status": session.status,
        "outcome": None if session.outcome is None else {
            "type": session.outcome.type, "sale_price": session.outcome.sale_price},
    }


def suggestion_payload(s: Suggestion) -> dict:
    return s.to_obj()


class CoachService:
    def __init__(self, models: CoachModels, scenarios: list[C.Scenario]):
        self.engine = CoachEngine(models)
        self.scenarios = {s.id: s for s in scenarios}
        self.sessions: dict[str, LiveSession] = {}

    # ---- session lifecycle --------------------------------------------------

    def create_session(self, scenario_id: Optional[str] = None,
                       scenario: Optional[dict] = None,
                       scripted_buyer: Optional[dict] = None) -> dict:
        if scenario is not None:
            scen = C.Scenario(
                id=scenario.get("id", str(uuid.uuid4())), title=scenario["title"],
                description=scenario["description"], category=scenario["category"],
                list_price=float(scenario["list_price"]),
                buyer_target=float(scenario["buyer_target"]))
        else:
            if scenario_id not in self.scenarios:
                raise KeyError(scenario_id)
            scen = self.scenarios[scenario_id]
        session_id = str(uuid.uuid4())
        live = LiveSession(
            session=Session(id=session_id, scenario=scen),
            tokens={C.SELLER: secrets.token_urlsafe(12),
                    C.BUYER: secrets.token_urlsafe(12)},
        )
        if scripted_buyer is not None:
            cfg = BuyerPolicyConfig(**scripted_buyer)
            live.scripted_buyer = ScriptedBuyer(scen, cfg)
            live.used.add(live.tokens[C.BUYER])
        self.sessions[session_id] = live
        return {
            "session_id": session_id,
            "seller_token": live.tokens[C.SELLER],
            "buyer_token": live.tokens[C.BUYER],
        }

    def find_token(self, token: str) -> Optional[tuple[LiveSession, str]]:
        for live in self.sessions.values():
            for role, t in live.tokens.items():
                if t == token:
                    return live, role
        return None

    def transcript(self, session_id: str) -> dict:
        live = self.sessions.get(session_id)
        if live is None:
            raise KeyError(session_id)
        obj = C.dialog_to_obj(live.session.to_dialog())
        obj["coach_trace"] = [
            {
                "event_index": r.event_index,
                "candidates": sorted(r.candidates),
                "selected": sorted(r.selected),
                "instruction": r.instruction,
                "followed": r.followed,
            }
            for r in live.session.trace
        ]
        return obj

    # ---- event handling (shared by ws and the scripted buyer) ---------------

    async def apply_event(self, live: LiveSession, role: str, kind: str,
                          text: Optional[str] = None,
                          price: Optional[float] = None) -> None:
        """Apply one event, broadcast state, deliver any suggestion to the
        seller, then let the scripted buyer respond."""
        suggestion = self.engine.on_event(live.session, role, kind, text=text, price=price)
        await self._broadcast(live, {
            "type": kind, "session_id": live.session.id, "role": role,
            "text": text, "price": price,
        })
        await self._broadcast(live, {"type": "state", "session_id": live.session.id,
                                     "state": state_payload(live.session)})
        await self._send_suggestion(live, suggestion)
        await self._maybe_run_buyer(live)

    async def _send_suggestion(self, live: LiveSession, suggestion: Optional[Suggestion]) -> None:
        if suggestion is None:
            return
        ws = live.connections.get(C.SELLER)
        if ws is not None:
            await ws.send_json({"type": "suggestion", "session_id": live.session.id,
                                "suggestion": suggestion_payload(suggestion)})

    async def _broadcast(self, live: LiveSession, payload: dict) -> None:
        for ws in live.connections.values():
            await ws.send_json(payload)

    async def _maybe_run_buyer(self, live: LiveSession) -> None:
        bot = live.scripted_buyer
        if bot is None or live.session.status == CLOSED:
            return
        from negocoach.engine import legal_kinds

        session = live.session
        kinds = legal_kinds(session, C.BUYER)
        if C.MESSAGE in kinds or session.status == "offer_pending":
            kind, text, price = bot.next_action(session.events, session.pending_offer)
            if kind in kinds or kind in (C.ACCEPT, C.REJECT):
                await self.apply_event(live, C.BUYER, kind, text=text, price=price)


def build_app(models: Optional[CoachModels] = None,
              scenarios: Optional[list[C.Scenario]] = None,
              static_dir: Optional[Path] = None) -> FastAPI:
    if models is None:
        models = CoachModels.rule_only()
    if scenarios is None:
        scenarios = load_default_scenarios()
    service = CoachService(models, scenarios)
    app = FastAPI(title="negotiation coach")
    app.state.service = service

    @app.get("/scenarios")
    def get_scenarios():
        return [
            {
                "id": s.id, "title": s.title, "description": s.description,
                "category": s.category, "list_price": s.list_price,
                "buyer_target": s.buyer_target,
            }
            for s in service.scenarios.values()
        ]

    @app.post("/sessions")
    def post_session(body: dict):
        try:
            return service.create_session(
                scenario_id=body.get("scenario_id"),
                scenario=body.get("scenario"),
                scripted_buyer=body.get("scripted_buyer"))
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=f"unknown scenario {exc}")

    @app.get("/sessions/{session_id}/transcript")
    def get_transcript(session_id: str):
        try:
            return JSONResponse(service.transcript(session_id))
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session")

    @app.websocket("/ws")
    async def ws_endpoint(websocket: WebSocket, token: str):
        found = service.find_token(token)
        if found is None:
            await websocket.close(code=4404)
            return
        live, role = found
        if token in live.used:
            await websocket.accept()
            await websocket.send_json({"type": "error", "session_id": live.session.id,
                                       "error": {"code": "token_used",
                                                 "detail": "token already used"}})
            await websocket.close(code=4403)
            return
        live.used.add(token)
        await websocket.accept()
        live.connections[role] = websocket
        await websocket.send_json({"type": "joined", "session_id": live.session.id,
                                   "role": role})
        await websocket.send_json({"type": "state", "session_id": live.session.id,
                                   "state": state_payload(live.session)})
        # seller joining an open session gets an opening suggestion
        if role == C.SELLER and live.session.status != CLOSED \
                and service.engine.seller_may_speak(live.session):
            await service._send_suggestion(live, service.engine.coach(live.session))
        try:
            while True:
                raw = await websocket.receive_text()
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    await websocket.send_json({"type": "error", "session_id": live.session.id,
                                               "error": {"code": "bad_json",
                                                         "detail": "not valid JSON"}})
                    continue
                kind = msg.get("type")
                if kind not in EVENT_TYPES:
                    await websocket.send_json({"type": "error", "session_id": live.session.id,
                                               "error": {"code": "bad_type",
                                                         "detail": f"unknown type {kind!r}"}})
                    continue
                try:
                    await service.apply_event(
                        live, role, kind, text=msg.get("text"),
                        price=float(msg["price"]) if msg.get("price") is not None else None)
                except ProtocolError as exc:
                    await websocket.send_json({"type": "error", "session_id": live.session.id,
                                               "error": {"code": "illegal_event",
                                                         "detail": str(exc)}})
        except WebSocketDisconnect:
            live.connections.pop(role, None)

    if static_dir is not None and static_dir.is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="webui")
    return app


def load_default_scenarios() -> list[C.Scenario]:
    from importlib import resources

    text = (resources.files("negocoach") / "data" / "scenarios.jsonl").read_text("utf-8")
    scenarios = []
    for line in text.splitlines():
        if line.strip():
            obj = json.loads(line)
            scenarios.append(C.Scenario(
                id=obj["id"], title=obj["title"], description=obj["description"],
                category=obj["category"], list_price=float(obj["list_price"]),
                buyer_target=float(obj["buyer_target"])))
    return scenarios
