/** Browser glue: fetch scenarios, create or join a session, pump wire
 * messages through the reducer, and paint the view model. */

import { render, View } from "./render";
import { ClientState, handleWire, initialState } from "./state";
import { Scenario, WireMessage } from "./types";

let state: ClientState = initialState();
let scenario: Scenario | null = null;
let socket: WebSocket | null = null;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, cls: string, text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

function input(): HTMLInputElement {
  return document.getElementById("composer") as HTMLInputElement;
}

function send(payload: object): void {
  socket?.send(JSON.stringify(payload));
}

function paint(view: View): void {
  const root = document.getElementById("app");
  if (root === null) return;
  root.replaceChildren();

  const panel = el("aside", "scenario");
  panel.append(el("h2", "title", view.scenario.title));
  panel.append(el("p", "description", view.scenario.description));
  panel.append(el("p", "price", `Listed at $${view.scenario.listPrice}`));
  if (view.scenario.buyerTarget !== null) {
    panel.append(el("p", "target", `Your target: $${view.scenario.buyerTarget}`));
  }
  root.append(panel);

  const chat = el("section", "chat");
  for (const line of view.chat) {
    const row = el("div", line.own ? "line own" : "line", "");
    row.append(el("span", "speaker", line.speaker));
    row.append(el("span", "text", line.text));
    chat.append(row);
  }
  if (view.banner !== null) chat.append(el("div", "banner", view.banner));
  root.append(chat);

  const controls = el("footer", "controls");
  const box = el("input", "composer");
  box.id = "composer";
  box.disabled = !view.controls.message;
  controls.append(box);
  const actions: [string, () => void, boolean][] = [
    ["Send", () => send({ type: "message", text: input().value }),
     view.controls.message],
    ["Offer", () => send({ type: "offer", price: Number(input().value) }),
     view.controls.offer],
    ["Accept", () => send({ type: "accept" }), view.controls.accept],
    ["Reject", () => send({ type: "reject" }), view.controls.reject],
    ["Quit", () => send({ type: "quit" }), view.controls.quit],
  ];
  for (const [label, onClick, enabled] of actions) {
    const button = el("button", "action", label);
    button.disabled = !enabled;
    button.addEventListener("click", onClick);
    controls.append(button);
  }
  root.append(controls);

  if (view.coachBox !== null) {
    const coach = el("aside", "coach");
    coach.append(el("h3", "coach-title", "Real-Time Analysis"));
    coach.append(el("p", "instruction", view.coachBox.instruction));
    for (const ex of view.coachBox.exemplars) {
      const row = el("div", "exemplar");
      row.append(el("span", "exemplar-text", `${ex.tactic}: ${ex.text}`));
      const insert = el("button", "insert", "use");
      insert.addEventListener("click", () => {
        input().value = ex.insertText;
      });
      row.append(insert);
    }
    root.append(coach);
  }

  for (const toast of view.toasts.slice(-3)) {
    root.append(el("div", "toast", toast));
  }
}

function repaint(): void {
  if (scenario !== null) paint(render(state, scenario));
}

function connect(token: string): void {
  const proto = location.protocol === "https:" ? "wss" : "ws";
  socket = new WebSocket(`${proto}://${location.host}/ws?token=${token}`);
  socket.addEventListener("message", (ev) => {
    let msg: WireMessage;
    try {
      msg = JSON.parse(ev.data as string);
    } catch {
      console.warn("wire: undecodable frame");
      return;
    }
    state = handleWire(state, msg);
    repaint();
  });
}

async function start(): Promise<void> {
  const params = new URLSearchParams(location.search);
  const token = params.get("token");
  if (token !== null) {
    const scenarios: Scenario[] = await (await fetch("/scenarios")).json();
    scenario = scenarios[0] ?? null;
    connect(token);
    repaint();
    return;
  }
  // no token: create a solo session against the scripted buyer
  const scenarios: Scenario[] = await (await fetch("/scenarios")).json();
  scenario = scenarios[0] ?? null;
  if (scenario === null) return;
  const created = await (
    await fetch("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        scenario_id: scenario.id,
        scripted_buyer: { seed: Date.now() % 100000 },
      }),
    })
  ).json();
  connect(created.seller_token);
  repaint();
}

if (typeof document !== "undefined") {
  void start();
}
