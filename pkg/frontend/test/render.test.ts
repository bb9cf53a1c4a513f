import { describe, expect, it } from "vitest";

import { render } from "../src/render";
import { ClientState, initialState } from "../src/state";
import { Scenario } from "../src/types";

const SCENARIO: Scenario = {
  id: "demo",
  title: "Trek mountain bike",
  description: "Lightly used, new tires.",
  category: "bike",
  list_price: 1000,
  buyer_target: 700,
};

const SUGGESTION = {
  tactics: ["hedge", "side_offer"],
  instruction: "Hedge your counter and sweeten the deal",
  exemplars: [{ tactic: "side_offer", text: "i can deliver it for free" }],
};

function seller(extra: Partial<ClientState> = {}): ClientState {
  return { ...initialState(), role: "seller", sessionId: "s1", ...extra };
}

function buyer(extra: Partial<ClientState> = {}): ClientState {
  return { ...initialState(), role: "buyer", sessionId: "s1", ...extra };
}

describe("render", () => {
  it("shows the buyer target only to the buyer", () => {
    expect(render(seller(), SCENARIO).scenario.buyerTarget).toBeNull();
    expect(render(buyer(), SCENARIO).scenario.buyerTarget).toBe(700);
  });

  it("never builds a coach box for the buyer", () => {
    const view = render(buyer({ suggestion: SUGGESTION }), SCENARIO);
    expect(view.coachBox).toBeNull();
  });

  it("shows exemplars with an insert action for the seller", () => {
    const view = render(seller({ suggestion: SUGGESTION }), SCENARIO);
    expect(view.coachBox?.instruction).toContain("Hedge");
    expect(view.coachBox?.exemplars).toEqual([
      {
        tactic: "side_offer",
        text: "i can deliver it for free",
        insertText: "i can deliver it for free",
      },
    ]);
  });

  it("disables all inputs and shows a banner once closed", () => {
    const closed = seller({
      events: [
        { index: 0, speaker: "seller", kind: "offer", text: null, price: 860 },
        { index: 1, speaker: "buyer", kind: "accept", text: null, price: null },
      ],
      outcome: { type: "agreed", sale_price: 860 },
      suggestion: SUGGESTION,
    });
    const view = render(closed, SCENARIO);
    expect(Object.values(view.controls)).toEqual([
      false, false, false, false, false,
    ]);
    expect(view.banner).toBe("Deal agreed at $860");
    expect(view.coachBox).toBeNull();
  });

  it("marks own chat lines and describes non-message events", () => {
    const state = seller({
      events: [
        { index: 0, speaker: "buyer", kind: "message", text: "hi", price: null },
        { index: 1, speaker: "seller", kind: "offer", text: null, price: 900 },
      ],
    });
    const view = render(state, SCENARIO);
    expect(view.chat).toEqual([
      { speaker: "buyer", own: false, text: "hi" },
      { speaker: "seller", own: true, text: "offers $900" },
    ]);
  });
});
