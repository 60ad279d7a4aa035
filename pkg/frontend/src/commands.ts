// Builders for the commands POST /command accepts.
//
// Each builder returns the exact JSON object the server validates, so
// the attack panel and any test driving it send byte-for-byte the same
// shape a scenario timeline entry would carry.  Safety controls carry
// no optimistic client state: the UI renders e-stop and light from
// server-confirmed snapshots only.

export interface Command {
  type: string;
  [key: string]: unknown;
}

export const estop = (): Command => ({ type: "estop" });

export const clearEstop = (): Command => ({ type: "clear_estop" });

export const resetCrane = (): Command => ({ type: "reset_crane" });

export const pause = (): Command => ({ type: "pause" });

export const resume = (): Command => ({ type: "resume" });

export const step = (): Command => ({ type: "step" });

export const ackAlert = (id: number): Command => ({ type: "ack_alert", id });

export interface ForgeWriteFields {
  /** Node name (or IP) of the Modbus endpoint to write to. */
  target: string;
  unit: number;
  address: number;
  values: number[];
  /** Attacking node; the server defaults this to "attacker". */
  attacker?: string;
  /** Function code or name; 15 (write multiple coils) by default. */
  func?: number | string;
  /** Omit to fire at the next tick. */
  startTick?: number;
  repeat?: number;
}

/** A coil/register forgery launch, shaped like a timeline attack entry. */
export function launchForgeWrite(fields: ForgeWriteFields): Command {
  const attack: Record<string, unknown> = {
    type: "forge_write",
    attacker: fields.attacker ?? "attacker",
    target: fields.target,
    unit: fields.unit,
    function: fields.func ?? 15,
    address: fields.address,
    values: fields.values,
    repeat: fields.repeat ?? 1,
  };
  if (fields.startTick !== undefined) {
    attack["start_tick"] = fields.startTick;
  }
  return { type: "launch_attack", attack };
}
