/** Replay recorded server traces through the reducer and check that the
 * client ends in exact agreement with the server transcript, matches the
 * server's legality computation after every frame, and never shows the
 * coach box to a buyer. */

import { describe, expect, it } from "vitest";

import { render } from "../src/render";
import {
  ClientState,
  handleWire,
  initialState,
  legalKinds,
  sessionStatus,
} from "../src/state";
import { ChatEvent, Role, Scenario, WireMessage } from "../src/types";

import trace1 from "./fixtures/trace1.json";
import trace2 from "./fixtures/trace2.json";
import trace3 from "./fixtures/trace3.json";

interface Trace {
  role: Role;
  scenario: Scenario;
  frames: WireMessage[];
  legal_after: string[][];
  final_events: ChatEvent[];
  final_status: string;
  final_outcome: { type: string; sale_price?: number | null };
}

const TRACES: [string, Trace][] = [
  ["seller vs human buyer", trace1 as unknown as Trace],
  ["buyer view", trace2 as unknown as Trace],
  ["seller vs scripted buyer", trace3 as unknown as Trace],
];

function normalize(e: ChatEvent) {
  return {
    index: e.index,
    speaker: e.speaker,
    kind: e.kind,
    text: e.text ?? null,
    price: e.price ?? null,
  };
}

function replay(trace: Trace): ClientState[] {
  const states: ClientState[] = [];
  let state = initialState();
  for (const frame of trace.frames) {
    state = handleWire(state, frame);
    states.push(state);
  }
  return states;
}

describe.each(TRACES)("trace replay: %s", (_name, trace) => {
  const states = replay(trace);
  const final = states[states.length - 1];

  it("ends with the server transcript's event list", () => {
    expect(final.events.map(normalize)).toEqual(
      trace.final_events.map(normalize),
    );
  });

  it("ends in the server's final status and outcome", () => {
    expect(sessionStatus(final.events)).toBe(trace.final_status);
    expect(final.outcome?.type).toBe(trace.final_outcome.type);
    expect(final.outcome?.sale_price ?? null).toBe(
      trace.final_outcome.sale_price ?? null,
    );
  });

  it("matches server legality after every frame", () => {
    states.forEach((state, i) => {
      expect(legalKinds(state.events, trace.role), `frame ${i}`).toEqual(
        trace.legal_after[i],
      );
    });
  });

  it("adopts the joined role", () => {
    expect(final.role).toBe(trace.role);
  });

  it("collects no error toasts", () => {
    expect(final.toasts).toEqual([]);
  });
});

describe("coach box visibility", () => {
  it("never renders for the buyer on any step of the buyer trace", () => {
    const trace = trace2 as unknown as Trace;
    for (const state of replay(trace)) {
      expect(render(state, trace.scenario).coachBox).toBeNull();
    }
  });

  it("renders for the seller while a suggestion is pending", () => {
    for (const raw of [trace1, trace3]) {
      const trace = raw as unknown as Trace;
      const shown = replay(trace).map(
        (s) => render(s, trace.scenario).coachBox !== null,
      );
      expect(shown).toContain(true);
      // closed session: box gone even though a suggestion arrived earlier
      expect(shown[shown.length - 1]).toBe(false);
    }
  });

  it("clears the pending suggestion once the seller's own move lands", () => {
    const trace = trace1 as unknown as Trace;
    let state = initialState();
    let sawClear = false;
    for (const frame of trace.frames) {
      const had = state.suggestion !== null;
      state = handleWire(state, frame);
      if (
        had &&
        frame.type === "state" &&
        state.events[state.events.length - 1]?.speaker === "seller"
      ) {
        expect(state.suggestion).toBeNull();
        sawClear = true;
      }
    }
    expect(sawClear).toBe(true);
  });
});
