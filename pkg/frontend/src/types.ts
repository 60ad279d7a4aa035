// Wire types for the testbed's HTTP API.
//
// `Snapshot` is the record served by GET /state and streamed as
// newline-delimited JSON by GET /stream; `CommandReply` is what
// POST /command returns.  Field names mirror the server exactly — the
// UI renders server state and never derives physical state on its own.

export type LightColor = "green" | "yellow" | "red";

export type PusherState =
  | "retracted"
  | "extending"
  | "extended"
  | "retracting";

/** One item riding a conveyor: [uid, kind, offset_mm]. */
export type ConveyorItem = [number, string, number];

export interface CellSnapshot {
  produced: number;
  completed: number;
  scrapped: number;
  blocked: boolean;
  in_transit: number;
  throughput_per_min: number;
  conveyors: Record<string, ConveyorItem[]>;
}

export interface CraneSnapshot {
  angle: number;
  moving: boolean;
  gripping: boolean;
  misaligned: boolean;
  held: number | string | null;
}

export interface PlcSnapshot {
  unit: number;
  stale: boolean;
  cycles: number;
}

export interface AttackSnapshot {
  type: string;
  start_tick: number;
  done: boolean;
  stats: Record<string, unknown>;
}

export interface AlertSnapshot {
  id: number;
  tick: number;
  src: string;
  dst: string;
  dst_port: number;
  rate: number;
  mean: number;
  acked: boolean;
}

export interface NetworkSnapshot {
  captured: number;
  drops: Record<string, number>;
}

export interface Snapshot {
  tick: number;
  time_s: number;
  duration_ticks: number;
  paused: boolean;
  finished: boolean;
  light: LightColor;
  estop: boolean;
  cells: Record<string, CellSnapshot>;
  crane: CraneSnapshot;
  pusher: PusherState;
  speeds: Record<string, number>;
  actuator_coils: Record<string, boolean>;
  plcs: Record<string, PlcSnapshot>;
  attacks: AttackSnapshot[];
  alerts: AlertSnapshot[];
  network: NetworkSnapshot;
}

/** POST /command response: {ok: true, queued_at_tick} or {ok: false, error}. */
export interface CommandReply {
  ok: boolean;
  queued_at_tick?: number;
  error?: string;
}
