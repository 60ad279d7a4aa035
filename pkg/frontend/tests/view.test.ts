import { describe, expect, it } from "vitest";

import { initialState, reduce } from "../src/store.js";
import {
  escapeHtml,
  renderAlerts,
  renderAttacks,
  renderCells,
  renderCrane,
  renderLight,
  renderLog,
  renderPlcs,
  renderRunMeta,
  renderStatus,
} from "../src/view.js";
import { makeAlert, makeSnapshot } from "./fixtures.js";

describe("escapeHtml", () => {
  it("neutralizes markup metacharacters", () => {
    expect(escapeHtml(`<img src="x" onerror='pwn()'> & co`)).toBe(
      "&lt;img src=&quot;x&quot; onerror=&#39;pwn()&#39;&gt; &amp; co",
    );
  });
});

describe("renderLight", () => {
  it("lights exactly the active lamp", () => {
    const html = renderLight("red");
    expect(html).toContain("lamp-red lit");
    expect(html).not.toContain("lamp-green lit");
    expect(html).not.toContain("lamp-yellow lit");
  });
});

describe("renderStatus", () => {
  it("carries the connection state as a class", () => {
    const state = { ...initialState(), connection: "stalled" as const };
    expect(renderStatus(state)).toContain("status-stalled");
    expect(renderStatus(state)).toContain("Stalled");
  });

  it("mentions in-flight commands", () => {
    const state = { ...initialState(), pending: 2 };
    expect(renderStatus(state)).toContain("2 command(s) in flight");
  });
});

describe("renderCells", () => {
  it("draws forward belts, reversed belts, and stopped belts apart", () => {
    const snapshot = makeSnapshot({
      speeds: {
        "infeed.belt_speed": 250,
        "sorting.s1_speed": -1251,
        "combine.feed_speed": 0,
      },
    });
    const html = renderCells(snapshot);
    expect(html).toContain("&#8594;"); // forward arrow on the infeed belt
    expect(html).toContain('belt reversed"><span class="belt-name">s1_speed');
    expect(html).toContain("-1251 mm/s");
    expect(html).toContain('belt stopped"><span class="belt-name">feed_speed');
  });

  it("flags a blocked cell", () => {
    const snapshot = makeSnapshot();
    const combine = snapshot.cells["combine"];
    if (combine === undefined) throw new Error("fixture lost its combine cell");
    combine.blocked = true;
    const html = renderCells(snapshot);
    expect(html).toContain("cell-blocked");
    expect(html).toContain("blocked");
  });

  it("places one dot per conveyor item", () => {
    const html = renderCells(makeSnapshot());
    const dots = html.match(/class="item item-/g) ?? [];
    expect(dots).toHaveLength(7); // fixture carries seven items total
    expect(html).toContain("item-combined");
  });

  it("renders a placeholder before the first snapshot", () => {
    expect(renderCells(null)).toContain("waiting for the first snapshot");
  });
});

describe("renderCrane", () => {
  it("points the needle at the reported angle", () => {
    const html = renderCrane(
      { angle: 90, moving: true, gripping: false, misaligned: false, held: null },
      "extended",
    );
    expect(html).toContain('transform="rotate(90 50 50)"');
    expect(html).toContain("moving");
    expect(html).toContain("pusher: extended");
    expect(html).not.toContain("misaligned");
  });

  it("marks a misaligned crane", () => {
    const html = renderCrane(
      { angle: 180, moving: false, gripping: true, misaligned: true, held: 12 },
      "retracted",
    );
    expect(html).toContain("crane-misaligned");
    expect(html).toContain("misaligned");
    expect(html).toContain("holding #12");
  });
});

describe("renderAttacks", () => {
  it("shows active and finished attacks with their stats", () => {
    const html = renderAttacks([
      {
        type: "forge_write",
        start_tick: 600,
        done: false,
        stats: { sent: 0, accepted: 0 },
      },
      {
        type: "syn_flood",
        start_tick: 100,
        done: true,
        stats: { packets_sent: 20000 },
      },
    ]);
    expect(html).toContain("forge_write");
    expect(html).toContain("from tick 600");
    expect(html).toContain("active");
    expect(html).toContain("attack-done");
    expect(html).toContain("&quot;packets_sent&quot;:20000");
  });
});

describe("renderAlerts", () => {
  it("offers an ack button only for unacked alerts", () => {
    const html = renderAlerts([
      makeAlert({ id: 1, acked: true }),
      makeAlert({ id: 2 }),
    ]);
    expect(html).toContain('data-alert-id="2"');
    expect(html).not.toContain('data-alert-id="1"');
    expect(html).toContain("acked");
  });

  it("escapes server-provided strings", () => {
    const html = renderAlerts([makeAlert({ src: "<script>alert(1)</script>" })]);
    expect(html).not.toContain("<script>");
    expect(html).toContain("&lt;script&gt;");
  });
});

describe("renderLog", () => {
  it("renders error replies verbatim (escaped), newest first", () => {
    let state = initialState();
    state = reduce(state, {
      kind: "command-sent",
      at: 1000,
      command: { type: "estop" },
    });
    state = reduce(state, {
      kind: "command-reply",
      at: 2000,
      command: { type: "estop" },
      reply: { ok: false, error: "unknown command type <'warp'>" },
    });
    const html = renderLog(state.log);
    expect(html).toContain("unknown command type &lt;&#39;warp&#39;&gt;");
    expect(html.indexOf("rejected")).toBeLessThan(html.indexOf("sent estop"));
    expect(html).toContain("log-error");
  });
});

describe("renderPlcs and renderRunMeta", () => {
  it("chips every controller and flags stale ones", () => {
    const snapshot = makeSnapshot();
    const plc3 = snapshot.plcs["plc3"];
    if (plc3 === undefined) throw new Error("fixture lost plc3");
    plc3.stale = true;
    const html = renderPlcs(snapshot.plcs);
    expect(html.match(/class="plc/g) ?? []).toHaveLength(4);
    expect(html).toContain("plc3 (stale)");
  });

  it("summarizes run progress and capture totals", () => {
    const snapshot = makeSnapshot({ paused: true });
    const html = renderRunMeta(snapshot, snapshot.network);
    expect(html).toContain("tick 1400 / 60000");
    expect(html).toContain("paused");
    expect(html).toContain("4658 frames captured");
  });
});
