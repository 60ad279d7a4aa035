// Panel renderers: pure functions from UI state to markup strings.
//
// Nothing in here touches the document — main.ts assigns the returned
// strings to fixed page regions, and the Node-side tests assert on them
// directly.  Every rendered value is lifted from a snapshot field; the
// only client-side invention is layout (e.g. the visual scale that maps
// conveyor offsets to lane positions).

import type { UiState } from "./store.js";
import type {
  AlertSnapshot,
  AttackSnapshot,
  CellSnapshot,
  CraneSnapshot,
  LightColor,
  NetworkSnapshot,
  PlcSnapshot,
  PusherState,
  Snapshot,
} from "./types.js";
import type { LogEntry } from "./store.js";

/** Presentation-only: lane pixels-per-mm denominator for item dots. */
export const LANE_SCALE_MM = 3600;

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

const STATUS_LABELS: Record<UiState["connection"], string> = {
  idle: "Idle",
  connecting: "Connecting",
  connected: "Connected",
  reconnecting: "Reconnecting",
  stalled: "Stalled",
  finished: "Run finished",
};

export function renderStatus(state: UiState): string {
  const label = STATUS_LABELS[state.connection];
  const pending =
    state.pending > 0 ? ` · ${state.pending} command(s) in flight` : "";
  return (
    `<span class="pill status-${state.connection}">` +
    `${escapeHtml(label)}${escapeHtml(pending)}</span>`
  );
}

export function renderLight(light: LightColor | null): string {
  const lamp = (color: LightColor) =>
    `<div class="lamp lamp-${color}${light === color ? " lit" : ""}"></div>`;
  return (
    `<div class="light-stack" title="tower light: ${light ?? "unknown"}">` +
    lamp("red") +
    lamp("yellow") +
    lamp("green") +
    `</div>`
  );
}

function renderLane(name: string, items: CellSnapshot["conveyors"][string]): string {
  const dots = items
    .map(([uid, kind, offset]) => {
      const percent = Math.max(0, Math.min(100, (offset / LANE_SCALE_MM) * 100));
      return (
        `<span class="item item-${escapeHtml(kind)}" ` +
        `style="left:${percent.toFixed(1)}%" ` +
        `title="#${uid} ${escapeHtml(kind)} @ ${Math.round(offset)} mm"></span>`
      );
    })
    .join("");
  return (
    `<div class="lane"><span class="lane-name">${escapeHtml(name)}</span>` +
    `<div class="lane-track">${dots}</div></div>`
  );
}

function renderBelt(register: string, speed: number): string {
  const arrow = speed > 0 ? "&#8594;" : speed < 0 ? "&#8592;" : "&#9632;";
  const cls = speed < 0 ? "belt reversed" : speed === 0 ? "belt stopped" : "belt";
  return (
    `<div class="${cls}"><span class="belt-name">${escapeHtml(register)}</span>` +
    `<span class="belt-arrow">${arrow}</span>` +
    `<span class="belt-speed">${speed} mm/s</span></div>`
  );
}

function renderCell(name: string, cell: CellSnapshot, speeds: Record<string, number>): string {
  const belts = Object.entries(speeds)
    .filter(([register]) => register.startsWith(`${name}.`))
    .map(([register, speed]) =>
      renderBelt(register.slice(name.length + 1), speed),
    )
    .join("");
  const lanes = Object.entries(cell.conveyors)
    .map(([lane, items]) => renderLane(lane, items))
    .join("");
  const blocked = cell.blocked
    ? `<span class="badge badge-bad">blocked</span>`
    : "";
  return (
    `<div class="cell${cell.blocked ? " cell-blocked" : ""}">` +
    `<div class="cell-head"><h3>${escapeHtml(name)}</h3>${blocked}</div>` +
    `<div class="cell-counters">` +
    `<span title="items completed">done ${cell.completed}</span>` +
    `<span title="items scrapped"${cell.scrapped > 0 ? ' class="bad"' : ""}>scrap ${cell.scrapped}</span>` +
    `<span title="items in transit">moving ${cell.in_transit}</span>` +
    `<span title="completions per minute">${cell.throughput_per_min}/min</span>` +
    `</div>` +
    lanes +
    belts +
    `</div>`
  );
}

export function renderCells(snapshot: Snapshot | null): string {
  if (snapshot === null) {
    return `<p class="placeholder">waiting for the first snapshot&hellip;</p>`;
  }
  return Object.entries(snapshot.cells)
    .map(([name, cell]) => renderCell(name, cell, snapshot.speeds))
    .join("");
}

export function renderCrane(
  crane: CraneSnapshot | null,
  pusher: PusherState | null,
): string {
  if (crane === null) {
    return "";
  }
  const badges = [
    crane.moving ? `<span class="badge">moving</span>` : "",
    crane.gripping ? `<span class="badge">gripping</span>` : "",
    crane.held !== null
      ? `<span class="badge">holding #${escapeHtml(String(crane.held))}</span>`
      : "",
    crane.misaligned
      ? `<span class="badge badge-bad">misaligned</span>`
      : "",
  ].join("");
  return (
    `<div class="crane${crane.misaligned ? " crane-misaligned" : ""}">` +
    `<svg viewBox="0 0 100 100" class="dial" role="img" ` +
    `aria-label="crane at ${crane.angle} degrees">` +
    `<circle cx="50" cy="50" r="42" class="dial-face"/>` +
    `<line x1="50" y1="50" x2="50" y2="12" class="dial-needle" ` +
    `transform="rotate(${crane.angle} 50 50)"/>` +
    `<circle cx="50" cy="50" r="4" class="dial-hub"/>` +
    `</svg>` +
    `<div class="crane-meta"><span class="crane-angle">${crane.angle}&deg;</span>` +
    badges +
    `<span class="badge">pusher: ${escapeHtml(pusher ?? "?")}</span></div>` +
    `</div>`
  );
}

export function renderAttacks(attacks: AttackSnapshot[]): string {
  if (attacks.length === 0) {
    return `<p class="placeholder">no attacks launched</p>`;
  }
  return attacks
    .map(
      (attack) =>
        `<div class="attack${attack.done ? " attack-done" : ""}">` +
        `<span class="attack-type">${escapeHtml(attack.type)}</span>` +
        `<span class="attack-when">from tick ${attack.start_tick}</span>` +
        `<span class="badge${attack.done ? "" : " badge-bad"}">` +
        `${attack.done ? "done" : "active"}</span>` +
        `<code class="attack-stats">${escapeHtml(
          JSON.stringify(attack.stats),
        )}</code></div>`,
    )
    .join("");
}

export function renderAlerts(alerts: AlertSnapshot[]): string {
  if (alerts.length === 0) {
    return `<p class="placeholder">no traffic alerts</p>`;
  }
  return [...alerts]
    .reverse()
    .map((alert) => {
      const ack = alert.acked
        ? `<span class="badge">acked</span>`
        : `<button class="ack" data-alert-id="${alert.id}">ack</button>`;
      return (
        `<div class="alert${alert.acked ? " alert-acked" : ""}">` +
        `<span class="alert-id">#${alert.id}</span>` +
        `<span class="alert-what">tick ${alert.tick}: ` +
        `${escapeHtml(alert.src)} &#8594; ${escapeHtml(alert.dst)}` +
        `:${alert.dst_port} at ${alert.rate} frames/bucket ` +
        `(mean ${alert.mean})</span>${ack}</div>`
      );
    })
    .join("");
}

export function renderLog(log: LogEntry[]): string {
  if (log.length === 0) {
    return `<p class="placeholder">no operator actions yet</p>`;
  }
  return [...log]
    .reverse()
    .map(
      (entry) =>
        `<div class="log-line log-${entry.level}">` +
        `<time>${new Date(entry.at).toLocaleTimeString()}</time> ` +
        `${escapeHtml(entry.text)}</div>`,
    )
    .join("");
}

export function renderPlcs(plcs: Record<string, PlcSnapshot> | null): string {
  if (plcs === null) {
    return "";
  }
  return Object.entries(plcs)
    .map(
      ([name, plc]) =>
        `<span class="plc${plc.stale ? " plc-stale" : ""}" ` +
        `title="unit ${plc.unit}, ${plc.cycles} scan cycles">` +
        `${escapeHtml(name)}${plc.stale ? " (stale)" : ""}</span>`,
    )
    .join("");
}

export function renderRunMeta(
  snapshot: Snapshot | null,
  network: NetworkSnapshot | null,
): string {
  if (snapshot === null || network === null) {
    return "";
  }
  const drops = Object.values(network.drops).reduce((a, b) => a + b, 0);
  const paused = snapshot.paused ? ` · <span class="bad">paused</span>` : "";
  return (
    `tick ${snapshot.tick} / ${snapshot.duration_ticks} ` +
    `(${snapshot.time_s.toFixed(2)} s)${paused} · ` +
    `${network.captured} frames captured · ${drops} dropped`
  );
}
