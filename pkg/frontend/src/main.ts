// Page wiring: one stream client, one state object, one render pass per
// event.  All simulation state comes from the server; button handlers
// only send commands and feed the replies back through the reducer.

import { StreamClient } from "./client.js";
import * as commands from "./commands.js";
import { initialState, reduce } from "./store.js";
import type { UiEvent, UiState } from "./store.js";
import {
  renderAlerts,
  renderAttacks,
  renderCells,
  renderCrane,
  renderLight,
  renderLog,
  renderPlcs,
  renderRunMeta,
  renderStatus,
} from "./view.js";

function $<T extends HTMLElement>(selector: string): T {
  const element = document.querySelector(selector);
  if (element === null) {
    throw new Error(`missing element: ${selector}`);
  }
  return element as T;
}

/** API base: ?api=http://host:port, else the page's own origin. */
function apiBase(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("api");
  const base = fromQuery ?? window.location.origin;
  return base.replace(/\/+$/, "");
}

const regions = {
  status: $("#status"),
  light: $("#light"),
  meta: $("#run-meta"),
  cells: $("#cells"),
  crane: $("#crane"),
  plcs: $("#plcs"),
  attacks: $("#attacks"),
  alerts: $("#alerts"),
  log: $("#log"),
};

let state: UiState = initialState();

function render(): void {
  regions.status.innerHTML = renderStatus(state);
  regions.light.innerHTML = renderLight(state.snapshot?.light ?? null);
  regions.meta.innerHTML = renderRunMeta(
    state.snapshot,
    state.snapshot?.network ?? null,
  );
  regions.cells.innerHTML = renderCells(state.snapshot);
  regions.crane.innerHTML = renderCrane(
    state.snapshot?.crane ?? null,
    state.snapshot?.pusher ?? null,
  );
  regions.plcs.innerHTML = renderPlcs(state.snapshot?.plcs ?? null);
  regions.attacks.innerHTML = renderAttacks(state.snapshot?.attacks ?? []);
  regions.alerts.innerHTML = renderAlerts(state.alerts);
  regions.log.innerHTML = renderLog(state.log);
}

function dispatch(event: UiEvent): void {
  state = reduce(state, event);
  render();
}

const client = new StreamClient(apiBase(), dispatch);

async function send(command: commands.Command): Promise<void> {
  dispatch({ kind: "command-sent", at: Date.now(), command });
  const reply = await client.postCommand(command);
  dispatch({ kind: "command-reply", at: Date.now(), command, reply });
}

$("#btn-estop").addEventListener("click", () => void send(commands.estop()));
$("#btn-clear-estop").addEventListener("click", () =>
  void send(commands.clearEstop()),
);
$("#btn-reset-crane").addEventListener("click", () =>
  void send(commands.resetCrane()),
);
$("#btn-pause").addEventListener("click", () => void send(commands.pause()));
$("#btn-resume").addEventListener("click", () => void send(commands.resume()));
$("#btn-step").addEventListener("click", () => void send(commands.step()));

$<HTMLFormElement>("#attack-form").addEventListener("submit", (event) => {
  event.preventDefault();
  const values = $<HTMLInputElement>("#attack-values")
    .value.split(",")
    .map((piece) => Number.parseInt(piece.trim(), 10))
    .filter((value) => Number.isFinite(value));
  const startText = $<HTMLInputElement>("#attack-start").value.trim();
  void send(
    commands.launchForgeWrite({
      target: $<HTMLInputElement>("#attack-target").value.trim() || "bridge",
      unit: Number.parseInt($<HTMLInputElement>("#attack-unit").value, 10) || 0,
      address:
        Number.parseInt($<HTMLInputElement>("#attack-address").value, 10) || 0,
      values: values.length > 0 ? values : [1],
      startTick: startText === "" ? undefined : Number.parseInt(startText, 10),
    }),
  );
});

// Alert ack buttons are re-rendered with every snapshot, so the handler
// lives on the container and reads the id off the clicked button.
regions.alerts.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  const id = target.dataset["alertId"];
  if (id !== undefined) {
    void send(commands.ackAlert(Number.parseInt(id, 10)));
  }
});

render();
client.start();
