import { describe, expect, it } from "vitest";

import { LOG_LIMIT, initialState, reduce } from "../src/store.js";
import type { UiEvent, UiState } from "../src/store.js";
import { makeAlert, makeSnapshot } from "./fixtures.js";

function play(events: UiEvent[], from: UiState = initialState()): UiState {
  return events.reduce(reduce, from);
}

describe("connection status", () => {
  it("shows connecting on the first attempt and reconnecting after", () => {
    let state = reduce(initialState(), {
      kind: "connecting",
      at: 0,
      attempt: 1,
    });
    expect(state.connection).toBe("connecting");

    state = reduce(state, { kind: "connecting", at: 1, attempt: 2 });
    expect(state.connection).toBe("reconnecting");
  });

  it("goes back to reconnecting after a drop, even on attempt 1", () => {
    const state = play([
      { kind: "connecting", at: 0, attempt: 1 },
      { kind: "connected", at: 1 },
      { kind: "disconnected", at: 2, error: "boom", retryMs: 500 },
      { kind: "connecting", at: 3, attempt: 1 },
    ]);
    expect(state.connection).toBe("reconnecting");
  });

  it("marks stalled only while connected, and a snapshot recovers it", () => {
    const untouched = reduce(initialState(), {
      kind: "stalled",
      at: 0,
      silentMs: 900,
    });
    expect(untouched.connection).toBe("idle");

    let state = play([
      { kind: "connecting", at: 0, attempt: 1 },
      { kind: "connected", at: 1 },
      { kind: "stalled", at: 2, silentMs: 900 },
    ]);
    expect(state.connection).toBe("stalled");

    state = reduce(state, { kind: "snapshot", at: 3, snapshot: makeSnapshot() });
    expect(state.connection).toBe("connected");
  });

  it("records the finished state when the run ends", () => {
    const state = play([
      { kind: "connecting", at: 0, attempt: 1 },
      { kind: "connected", at: 1 },
      { kind: "finished", at: 2 },
    ]);
    expect(state.connection).toBe("finished");
    expect(state.log.at(-1)?.text).toContain("run finished");
  });
});

describe("snapshots and the alert inbox", () => {
  it("keeps the latest snapshot", () => {
    const snapshot = makeSnapshot({ tick: 4242, estop: true, light: "red" });
    const state = reduce(initialState(), { kind: "snapshot", at: 5, snapshot });
    expect(state.snapshot?.tick).toBe(4242);
    expect(state.snapshot?.estop).toBe(true);
    expect(state.snapshotAt).toBe(5);
  });

  it("keeps alerts that scrolled out of the snapshot window", () => {
    const first = makeSnapshot({ alerts: [makeAlert({ id: 1 })] });
    const second = makeSnapshot({ alerts: [makeAlert({ id: 2, tick: 2200 })] });
    const state = play([
      { kind: "snapshot", at: 0, snapshot: first },
      { kind: "snapshot", at: 1, snapshot: second },
    ]);
    expect(state.alerts.map((alert) => alert.id)).toEqual([1, 2]);
  });

  it("takes the server's word on ack state", () => {
    const before = makeSnapshot({ alerts: [makeAlert({ id: 7 })] });
    const after = makeSnapshot({ alerts: [makeAlert({ id: 7, acked: true })] });
    const state = play([
      { kind: "snapshot", at: 0, snapshot: before },
      { kind: "snapshot", at: 1, snapshot: after },
    ]);
    expect(state.alerts).toHaveLength(1);
    expect(state.alerts[0]?.acked).toBe(true);
  });
});

describe("command round-trips", () => {
  it("counts in-flight commands and logs the verbatim error reply", () => {
    let state = reduce(initialState(), {
      kind: "command-sent",
      at: 0,
      command: { type: "warp_drive" },
    });
    expect(state.pending).toBe(1);

    state = reduce(state, {
      kind: "command-reply",
      at: 1,
      command: { type: "warp_drive" },
      reply: { ok: false, error: "unknown command type 'warp_drive'" },
    });
    expect(state.pending).toBe(0);
    const line = state.log.at(-1);
    expect(line?.level).toBe("error");
    expect(line?.text).toContain("unknown command type 'warp_drive'");
  });

  it("logs accepted commands with the queueing tick", () => {
    const state = play([
      { kind: "command-sent", at: 0, command: { type: "estop" } },
      {
        kind: "command-reply",
        at: 1,
        command: { type: "estop" },
        reply: { ok: true, queued_at_tick: 321 },
      },
    ]);
    expect(state.log.at(-1)?.text).toBe("estop accepted at tick 321");
    expect(state.log.at(-1)?.level).toBe("info");
  });

  it("bounds the operator log", () => {
    const events: UiEvent[] = [];
    for (let i = 0; i < LOG_LIMIT + 50; i += 1) {
      events.push({ kind: "command-sent", at: i, command: { type: "pause" } });
    }
    const state = play(events);
    expect(state.log).toHaveLength(LOG_LIMIT);
    expect(state.log[0]?.at).toBe(50);
  });
});

describe("reducer purity", () => {
  it("never mutates the input state", () => {
    const before = play([
      { kind: "connecting", at: 0, attempt: 1 },
      { kind: "connected", at: 1 },
      { kind: "snapshot", at: 2, snapshot: makeSnapshot() },
    ]);
    const pickled = JSON.stringify(before);
    reduce(before, {
      kind: "snapshot",
      at: 3,
      snapshot: makeSnapshot({ tick: 9999, alerts: [makeAlert()] }),
    });
    reduce(before, { kind: "command-sent", at: 4, command: { type: "estop" } });
    expect(JSON.stringify(before)).toBe(pickled);
  });
});
