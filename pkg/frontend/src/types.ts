/** Wire schema shared with the chat service. */

export type Role = "seller" | "buyer";

export type EventKind = "message" | "offer" | "accept" | "reject" | "quit";

export const EVENT_KINDS: readonly EventKind[] = [
  "message", "offer", "accept", "reject", "quit",
];

export type SessionStatus = "open" | "offer_pending" | "closed";

export interface ChatEvent {
  index: number;
  speaker: Role;
  kind: EventKind;
  text?: string | null;
  price?: number | null;
}

export interface Exemplar {
  tactic: string;
  text: string;
}

export interface SuggestionBody {
  tactics: string[];
  instruction: string;
  exemplars: Exemplar[];
}

export interface Outcome {
  type: string;
  sale_price?: number | null;
}

export interface StateSnapshot {
  events: ChatEvent[];
  status: string;
  outcome: Outcome | null;
}

export interface Scenario {
  id: string;
  title: string;
  description: string;
  category: string;
  list_price: number;
  buyer_target: number;
}

/** Inbound frames, tagged with `type`. Event echoes reuse the event kind. */
export interface WireMessage {
  type: string;
  session_id?: string;
  role?: Role;
  text?: string | null;
  price?: number | null;
  suggestion?: SuggestionBody;
  state?: StateSnapshot;
  error?: { code: string; detail: string };
}
