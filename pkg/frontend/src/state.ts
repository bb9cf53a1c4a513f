/** Pure client state and the wire-message reducer.
 *
 * `handleWire` never mutates its input; event echoes append optimistically
 * and `state` snapshots reconcile the authoritative event list. Session
 * status is derived from the event list so every intermediate frame leaves
 * the client consistent with the server protocol.
 */

import {
  ChatEvent,
  EventKind,
  EVENT_KINDS,
  Outcome,
  Role,
  SessionStatus,
  SuggestionBody,
  WireMessage,
} from "./types";

export interface ClientState {
  sessionId: string | null;
  role: Role | null;
  events: ChatEvent[];
  outcome: Outcome | null;
  suggestion: SuggestionBody | null;
  toasts: string[];
}

export function initialState(): ClientState {
  return {
    sessionId: null,
    role: null,
    events: [],
    outcome: null,
    suggestion: null,
    toasts: [],
  };
}

/** Protocol status is a pure function of the event list. */
export function sessionStatus(events: readonly ChatEvent[]): SessionStatus {
  for (const e of events) {
    if (e.kind === "accept" || e.kind === "quit") return "closed";
  }
  const last = events[events.length - 1];
  if (last !== undefined && last.kind === "offer") return "offer_pending";
  return "open";
}

function lastOfKind(
  events: readonly ChatEvent[], kind: EventKind,
): ChatEvent | undefined {
  for (let i = events.length - 1; i >= 0; i--) {
    if (events[i].kind === kind) return events[i];
  }
  return undefined;
}

/** Mirror of the server's legal-event computation for one participant. */
export function legalKinds(
  events: readonly ChatEvent[], role: Role,
): EventKind[] {
  const status = sessionStatus(events);
  if (status === "closed") return [];
  if (status === "offer_pending") {
    const proposer = events[events.length - 1].speaker;
    return proposer === role ? ["quit"] : ["accept", "quit", "reject"];
  }
  const kinds: EventKind[] = ["offer", "quit"];
  const lastMessage = lastOfKind(events, "message");
  if (lastMessage === undefined || lastMessage.speaker !== role) {
    kinds.push("message");
  }
  return kinds.sort();
}

function isEventKind(type: string): type is EventKind {
  return (EVENT_KINDS as readonly string[]).includes(type);
}

function warn(detail: string): void {
  if (typeof console !== "undefined") console.warn("wire:", detail);
}

export function handleWire(state: ClientState, msg: WireMessage): ClientState {
  if (typeof msg !== "object" || msg === null || typeof msg.type !== "string") {
    warn("malformed message ignored");
    return state;
  }
  switch (msg.type) {
    case "joined": {
      if (msg.role !== "seller" && msg.role !== "buyer") {
        warn("joined without a valid role");
        return state;
      }
      return { ...state, sessionId: msg.session_id ?? null, role: msg.role };
    }
    case "state": {
      if (msg.state === undefined || !Array.isArray(msg.state.events)) {
        warn("state frame without snapshot");
        return state;
      }
      const events = msg.state.events.slice();
      const last = events[events.length - 1];
      // our own move was acknowledged (or the session closed): the pending
      // suggestion no longer applies
      const clear =
        (last !== undefined && last.speaker === state.role) ||
        sessionStatus(events) === "closed";
      return {
        ...state,
        events,
        outcome: msg.state.outcome ?? null,
        suggestion: clear ? null : state.suggestion,
      };
    }
    case "suggestion": {
      if (msg.suggestion === undefined) {
        warn("suggestion frame without body");
        return state;
      }
      return { ...state, suggestion: msg.suggestion };
    }
    case "error": {
      const detail = msg.error?.detail ?? msg.error?.code ?? "unknown error";
      return { ...state, toasts: [...state.toasts, detail] };
    }
    default: {
      if (!isEventKind(msg.type)) {
        warn(`unknown frame type ${msg.type}`);
        return state;
      }
      if (msg.role !== "seller" && msg.role !== "buyer") {
        warn("event frame without a valid role");
        return state;
      }
      const event: ChatEvent = {
        index: state.events.length,
        speaker: msg.role,
        kind: msg.type,
        text: msg.text ?? null,
        price: msg.price ?? null,
      };
      return { ...state, events: [...state.events, event] };
    }
  }
}
