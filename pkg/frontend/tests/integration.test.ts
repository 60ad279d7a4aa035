// End-to-end tests against a real simulation server: each test spawns
// `python3 -m otsim.cli run --serve` on a scratch scenario and drives
// it exactly the way the page does — through StreamClient and the
// command builders, never through any backdoor.

import { spawn } from "node:child_process";
import type { ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";

import { afterEach, describe, expect, it } from "vitest";

import { StreamClient } from "../src/client.js";
import * as commands from "../src/commands.js";
import { initialState, reduce } from "../src/store.js";
import type { UiState } from "../src/store.js";
import type { Snapshot } from "../src/types.js";
import { renderLog } from "../src/view.js";
import { Recorder } from "./recorder.js";

const DEFAULT_SCENARIO = fileURLToPath(
  new URL("../../scenarios/default.json", import.meta.url),
);

/** Matches the server's stock refresh cadence (api.snapshot_period). */
const SNAPSHOT_PERIOD = 25;

interface LiveServer {
  url: string;
  child: ChildProcess;
  stop(): Promise<void>;
}

const running: LiveServer[] = [];

type Scenario = Record<string, unknown> & { attacks: unknown[] };

async function startServer(
  mutate: (scenario: Scenario) => void,
): Promise<LiveServer> {
  const dir = mkdtempSync(join(tmpdir(), "hmi-test-"));
  const scenario = JSON.parse(
    readFileSync(DEFAULT_SCENARIO, "utf8"),
  ) as Scenario;
  mutate(scenario);
  const scenarioPath = join(dir, "scenario.json");
  writeFileSync(scenarioPath, JSON.stringify(scenario));

  const child = spawn(
    "python3",
    [
      "-m",
      "otsim.cli",
      "run",
      "--scenario",
      scenarioPath,
      "--serve",
      "127.0.0.1:0",
      "--pace-ms",
      "2",
    ],
    { cwd: dir, stdio: ["ignore", "pipe", "pipe"] },
  );

  const url = await new Promise<string>((resolve, reject) => {
    let out = "";
    let err = "";
    const timer = setTimeout(() => {
      reject(new Error(`server never announced itself:\n${out}\n${err}`));
    }, 30_000);
    child.stdout?.on("data", (chunk: Buffer) => {
      out += chunk.toString();
      const match = out.match(/serving live API on (http:\/\/\S+)/);
      if (match?.[1] !== undefined) {
        clearTimeout(timer);
        resolve(match[1]);
      }
    });
    child.stderr?.on("data", (chunk: Buffer) => {
      err += chunk.toString();
    });
    child.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`server exited with ${code} before serving:\n${err}`));
    });
  });

  const server: LiveServer = {
    url,
    child,
    stop: () =>
      new Promise<void>((resolve) => {
        const cleanup = () => {
          rmSync(dir, { recursive: true, force: true });
          resolve();
        };
        if (child.exitCode !== null) {
          cleanup();
          return;
        }
        child.once("exit", cleanup);
        child.kill("SIGTERM");
        setTimeout(() => child.kill("SIGKILL"), 3000).unref();
      }),
  };
  running.push(server);
  return server;
}

afterEach(async () => {
  while (running.length > 0) {
    await running.pop()?.stop();
  }
});

describe("e-stop loop", () => {
  it(
    "zeroes every belt and turns the light red within a snapshot period " +
      "plus a scan, and release restores green",
    { timeout: 90_000 },
    async () => {
      const server = await startServer((scenario) => {
        scenario["duration_ticks"] = 200_000; // far longer than the test
        scenario.attacks = [];
        scenario["monitor"] = { enabled: false };
      });

      const recorder = new Recorder();
      const client = new StreamClient(server.url, recorder.dispatch);
      client.start();
      try {
        await recorder.waitForSnapshot(() => true, 20_000, "first snapshot");

        const press = await client.postCommand(commands.estop());
        expect(press.ok).toBe(true);

        // The first snapshot confirming the press must already show the
        // red light (the light answers the e-stop in the same tick)...
        const confirm = await recorder.waitForSnapshot(
          (s) => s.estop,
          10_000,
          "e-stop confirmation",
        );
        expect(confirm.light).toBe("red");

        // ...and by the next snapshot — one period later, which bounds
        // press tick + period + scan — every belt speed reads zero.
        const settled = await recorder.waitForSnapshot(
          (s) => s.tick > confirm.tick,
          10_000,
          "post-e-stop snapshot",
        );
        expect(settled.estop).toBe(true);
        expect(settled.light).toBe("red");
        expect(Object.values(settled.speeds)).toSatisfy((speeds: number[]) =>
          speeds.every((speed) => speed === 0),
        );

        const release = await client.postCommand(commands.clearEstop());
        expect(release.ok).toBe(true);

        const cleared = await recorder.waitForSnapshot(
          (s) => !s.estop && s.tick > settled.tick,
          10_000,
          "e-stop release confirmation",
        );
        expect(cleared.light).toBe("green");
      } finally {
        client.stop();
      }
    },
  );

  it(
    "renders a rejected command's error verbatim in the operator log",
    { timeout: 90_000 },
    async () => {
      const server = await startServer((scenario) => {
        scenario["duration_ticks"] = 200_000;
        scenario.attacks = [];
        scenario["monitor"] = { enabled: false };
      });

      const client = new StreamClient(server.url, () => {});
      const bogus = { type: "warp_drive" };
      const reply = await client.postCommand(bogus);
      expect(reply.ok).toBe(false);
      expect(reply.error).toContain("unknown command type");

      // Feed the round-trip through the reducer exactly like the page
      // does and check the log line carries the server's words.
      let state: UiState = initialState();
      state = reduce(state, { kind: "command-sent", at: 1, command: bogus });
      state = reduce(state, {
        kind: "command-reply",
        at: 2,
        command: bogus,
        reply,
      });
      const html = renderLog(state.log);
      expect(html).toContain("warp_drive rejected:");
      expect(html).toContain("unknown command type");
      client.stop();
    },
  );
});

describe("attack panel", () => {
  // The timeline entry a scenario would carry, and the fields the
  // panel submits: the builder must produce this exact object.
  const TIMELINE_FORGE = {
    type: "forge_write",
    attacker: "attacker",
    target: "bridge",
    unit: 0,
    function: 15,
    address: 34,
    values: [1],
    repeat: 1,
    start_tick: 800,
  };

  it("builds the same attack object a scenario timeline would carry", () => {
    const command = commands.launchForgeWrite({
      target: "bridge",
      unit: 0,
      address: 34,
      values: [1],
      startTick: 800,
    });
    expect(command).toEqual({ type: "launch_attack", attack: TIMELINE_FORGE });
  });

  it(
    "launching from the panel yields the same snapshot stream as the " +
      "timeline-scripted attack from its start tick on",
    { timeout: 120_000 },
    async () => {
      const shorten = (scenario: Scenario) => {
        scenario["duration_ticks"] = 2600;
        scenario["monitor"] = { enabled: false };
      };
      const [scripted, panel] = await Promise.all([
        startServer((scenario) => {
          shorten(scenario);
          scenario.attacks = [TIMELINE_FORGE];
        }),
        startServer((scenario) => {
          shorten(scenario);
          scenario.attacks = [];
        }),
      ]);

      const scriptedRecorder = new Recorder();
      const scriptedClient = new StreamClient(
        scripted.url,
        scriptedRecorder.dispatch,
      );
      const panelRecorder = new Recorder();
      const panelClient = new StreamClient(panel.url, panelRecorder.dispatch);
      scriptedClient.start();
      panelClient.start();
      try {
        // Launch through the panel path well before the start tick.
        await panelRecorder.waitForSnapshot(() => true, 20_000, "snapshot");
        const reply = await panelClient.postCommand(
          commands.launchForgeWrite({
            target: "bridge",
            unit: 0,
            address: 34,
            values: [1],
            startTick: 800,
          }),
        );
        expect(reply.ok).toBe(true);

        await Promise.all([
          scriptedRecorder.waitFor(
            (e) => e.kind === "finished",
            60_000,
            "scripted run to finish",
          ),
          panelRecorder.waitFor(
            (e) => e.kind === "finished",
            60_000,
            "panel run to finish",
          ),
        ]);
      } finally {
        scriptedClient.stop();
        panelClient.stop();
      }

      const byTick = (snapshots: Snapshot[]) =>
        new Map(snapshots.map((s) => [s.tick, s]));
      const scriptedSnaps = byTick(scriptedRecorder.snapshots());
      const panelSnaps = byTick(panelRecorder.snapshots());

      // Both streams refresh on the same tick grid, so overlap should
      // be nearly total; demand a healthy floor in case either reader
      // skipped a refresh.
      const common = [...scriptedSnaps.keys()]
        .filter((tick) => tick >= 800 && panelSnaps.has(tick))
        .sort((a, b) => a - b);
      expect(common.length).toBeGreaterThanOrEqual(
        Math.floor((2600 - 800) / SNAPSHOT_PERIOD / 2),
      );
      for (const tick of common) {
        expect(panelSnaps.get(tick)).toEqual(scriptedSnaps.get(tick));
      }

      // And the forgery visibly happened: the attack entry completed
      // and the crane threw its alignment.
      const last = panelSnaps.get(common[common.length - 1] ?? -1);
      expect(last?.attacks).toHaveLength(1);
      expect(last?.attacks[0]?.type).toBe("forge_write");
      expect(last?.attacks[0]?.done).toBe(true);
      expect(last?.crane.misaligned).toBe(true);
    },
  );
});
