// UI state and its reducer.
//
// Rendering is a pure function of UiState, and UiState changes only
// here, one event at a time — stream events from the client plus the
// command round-trips the panels initiate.  The reducer never touches
// the DOM, the clock, or the network, so tests can drive it with plain
// objects.
//
// The alert inbox is the union of every alert the stream has shown;
// the server's snapshot carries only the most recent ones, so entries
// that scroll out of the snapshot stay in the inbox with whatever ack
// state the server last confirmed.

import type { ClientEvent } from "./client.js";
import type { AlertSnapshot, CommandReply, Snapshot } from "./types.js";

export type ConnectionStatus =
  | "idle"
  | "connecting"
  | "connected"
  | "reconnecting"
  | "stalled"
  | "finished";

export interface LogEntry {
  at: number;
  text: string;
  level: "info" | "error";
}

export interface UiState {
  connection: ConnectionStatus;
  everConnected: boolean;
  snapshot: Snapshot | null;
  snapshotAt: number | null;
  alerts: AlertSnapshot[];
  /** Commands sent and not yet answered. */
  pending: number;
  log: LogEntry[];
}

export type UiEvent =
  | ClientEvent
  | { kind: "command-sent"; at: number; command: { type: string } }
  | {
      kind: "command-reply";
      at: number;
      command: { type: string };
      reply: CommandReply;
    };

export const LOG_LIMIT = 200;

export function initialState(): UiState {
  return {
    connection: "idle",
    everConnected: false,
    snapshot: null,
    snapshotAt: null,
    alerts: [],
    pending: 0,
    log: [],
  };
}

function appendLog(
  log: LogEntry[],
  at: number,
  text: string,
  level: LogEntry["level"] = "info",
): LogEntry[] {
  return [...log, { at, text, level }].slice(-LOG_LIMIT);
}

function mergeAlerts(
  inbox: AlertSnapshot[],
  fresh: AlertSnapshot[],
): AlertSnapshot[] {
  if (fresh.length === 0) {
    return inbox;
  }
  const byId = new Map(inbox.map((alert) => [alert.id, alert]));
  for (const alert of fresh) {
    byId.set(alert.id, alert);
  }
  return [...byId.values()].sort((a, b) => a.id - b.id);
}

export function reduce(state: UiState, event: UiEvent): UiState {
  switch (event.kind) {
    case "connecting":
      return {
        ...state,
        connection:
          state.everConnected || event.attempt > 1
            ? "reconnecting"
            : "connecting",
      };

    case "connected":
      return {
        ...state,
        connection: "connected",
        everConnected: true,
        log: appendLog(state.log, event.at, "snapshot stream connected"),
      };

    case "snapshot":
      return {
        ...state,
        connection: "connected",
        snapshot: event.snapshot,
        snapshotAt: event.at,
        alerts: mergeAlerts(state.alerts, event.snapshot.alerts),
      };

    case "stalled":
      if (state.connection !== "connected") {
        return state;
      }
      return {
        ...state,
        connection: "stalled",
        log: appendLog(
          state.log,
          event.at,
          `stream stalled: no snapshot for ${Math.round(event.silentMs)} ms`,
          "error",
        ),
      };

    case "finished":
      return {
        ...state,
        connection: "finished",
        log: appendLog(state.log, event.at, "run finished"),
      };

    case "disconnected":
      return {
        ...state,
        connection: "reconnecting",
        log: appendLog(
          state.log,
          event.at,
          `stream lost (${event.error}); retrying in ${event.retryMs} ms`,
          "error",
        ),
      };

    case "command-sent":
      return {
        ...state,
        pending: state.pending + 1,
        log: appendLog(state.log, event.at, `sent ${event.command.type}`),
      };

    case "command-reply": {
      const { reply, command } = event;
      const text = reply.ok
        ? `${command.type} accepted at tick ${reply.queued_at_tick ?? "?"}`
        : `${command.type} rejected: ${reply.error ?? "no reason given"}`;
      return {
        ...state,
        pending: Math.max(0, state.pending - 1),
        log: appendLog(state.log, event.at, text, reply.ok ? "info" : "error"),
      };
    }
  }
}
