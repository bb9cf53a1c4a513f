/** Deterministic view model: same ClientState, same view. The DOM layer in
 * main.ts only walks this tree, so everything user-visible is testable
 * without a browser. */

import { ClientState, legalKinds, sessionStatus } from "./state";
import { ChatEvent, EventKind, Scenario } from "./types";

export interface ChatLine {
  speaker: string;
  own: boolean;
  text: string;
}

export interface CoachBox {
  instruction: string;
  tactics: string[];
  exemplars: { tactic: string; text: string; insertText: string }[];
}

export interface View {
  scenario: {
    title: string;
    description: string;
    listPrice: number;
    buyerTarget: number | null; // shown to the buyer only
  };
  chat: ChatLine[];
  controls: Record<EventKind, boolean>;
  coachBox: CoachBox | null;
  banner: string | null;
  toasts: string[];
}

function describe(e: ChatEvent): string {
  switch (e.kind) {
    case "message":
      return e.text ?? "";
    case "offer":
      return `offers $${e.price ?? 0}`;
    case "accept":
      return "accepts the offer";
    case "reject":
      return "rejects the offer";
    case "quit":
      return "leaves the negotiation";
  }
}

function banner(state: ClientState): string | null {
  if (sessionStatus(state.events) !== "closed") return null;
  const outcome = state.outcome;
  if (outcome !== null && outcome.type === "agreed") {
    return `Deal agreed at $${outcome.sale_price ?? "?"}`;
  }
  return "Negotiation ended without a deal";
}

export function render(state: ClientState, scenario: Scenario): View {
  const role = state.role;
  const legal = role === null ? [] : legalKinds(state.events, role);
  const controls: Record<EventKind, boolean> = {
    message: legal.includes("message"),
    offer: legal.includes("offer"),
    accept: legal.includes("accept"),
    reject: legal.includes("reject"),
    quit: legal.includes("quit"),
  };
  const showCoach =
    role === "seller" &&
    state.suggestion !== null &&
    sessionStatus(state.events) !== "closed";
  return {
    scenario: {
      title: scenario.title,
      description: scenario.description,
      listPrice: scenario.list_price,
      buyerTarget: role === "buyer" ? scenario.buyer_target : null,
    },
    chat: state.events.map((e) => ({
      speaker: e.speaker,
      own: e.speaker === role,
      text: describe(e),
    })),
    controls,
    coachBox: showCoach && state.suggestion !== null
      ? {
          instruction: state.suggestion.instruction,
          tactics: state.suggestion.tactics.slice(),
          exemplars: state.suggestion.exemplars.map((ex) => ({
            tactic: ex.tactic,
            text: ex.text,
            // pre-fills the input; sending stays a human decision
            insertText: ex.text,
          })),
        }
      : null,
    banner: banner(state),
    toasts: state.toasts.slice(),
  };
}
