// Hand-built snapshot fixtures shaped exactly like the server's wire
// records, for driving the reducer and renderers without a server.

import type { AlertSnapshot, Snapshot } from "../src/types.js";

export function makeSnapshot(overrides: Partial<Snapshot> = {}): Snapshot {
  const base: Snapshot = {
    tick: 1400,
    time_s: 14.0,
    duration_ticks: 60000,
    paused: false,
    finished: false,
    light: "green",
    estop: false,
    cells: {
      infeed: {
        produced: 10,
        completed: 2,
        scrapped: 0,
        blocked: false,
        in_transit: 8,
        throughput_per_min: 9,
        conveyors: {
          I1: [
            [1, "A", 3450.0],
            [5, "A", 3100.0],
          ],
        },
      },
      sorting: {
        produced: 7,
        completed: 1,
        scrapped: 1,
        blocked: false,
        in_transit: 5,
        throughput_per_min: 4,
        conveyors: {
          S1: [[2, "A", 3355.5]],
          S2: [[6, "B", 2855.0]],
        },
      },
      combine: {
        produced: 7,
        completed: 0,
        scrapped: 0,
        blocked: false,
        in_transit: 7,
        throughput_per_min: 0,
        conveyors: {
          C1: [[7, "B", 2752.5]],
          C2: [[3, "combined", 200.0]],
        },
      },
      palletize: {
        produced: 7,
        completed: 0,
        scrapped: 0,
        blocked: false,
        in_transit: 7,
        throughput_per_min: 0,
        conveyors: {
          P1: [[4, "A", 3127.5]],
        },
      },
    },
    crane: {
      angle: 0,
      moving: false,
      gripping: false,
      misaligned: false,
      held: null,
    },
    pusher: "retracted",
    speeds: {
      "infeed.belt_speed": 250,
      "sorting.s1_speed": 250,
      "sorting.spare_a": 0,
      "sorting.spare_b": 0,
      "sorting.s2_speed": 250,
      "sorting.creep_setpoint": -50,
      "combine.feed_speed": 250,
      "combine.out_speed": 250,
      "palletize.belt_speed": 250,
    },
    actuator_coils: {
      "infeed.feeder": false,
      "infeed.enable": true,
      "light.green": true,
      "light.yellow": false,
      "light.red": false,
    },
    plcs: {
      plc1: { unit: 1, stale: false, cycles: 276 },
      plc2: { unit: 2, stale: false, cycles: 277 },
      plc3: { unit: 3, stale: false, cycles: 277 },
      plc4: { unit: 4, stale: false, cycles: 277 },
    },
    attacks: [],
    alerts: [],
    network: {
      captured: 4658,
      drops: {
        unknown_destination: 0,
        overloaded: 0,
        backlog_full: 0,
        budget_exhausted: 0,
        no_connection: 0,
        reordered: 0,
        half_open_expired: 0,
        interposer_dropped: 0,
      },
    },
  };
  return { ...base, ...overrides };
}

export function makeAlert(overrides: Partial<AlertSnapshot> = {}): AlertSnapshot {
  return {
    id: 1,
    tick: 2100,
    src: "192.168.1.66",
    dst: "192.168.1.24",
    dst_port: 502,
    rate: 5000,
    mean: 0.0,
    acked: false,
    ...overrides,
  };
}
