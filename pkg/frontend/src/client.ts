// Stream client for the testbed API.
//
// GET /stream delivers one JSON snapshot per line until the run
// finishes.  The client reads it with fetch + ReadableStream (browsers
// and Node 20 share both), reconnects with exponential backoff when the
// connection drops, and watches for stalls: a healthy stream produces a
// snapshot every refresh period, so silence longer than three estimated
// periods flips the status to "stalled" without dropping the
// connection.  Commands go out as POST /command and the server's reply
// is returned verbatim; transport failures are folded into an
// `{ok: false}` reply so callers always have something to log.

import type { CommandReply, Snapshot } from "./types.js";

export type ClientEvent =
  | { kind: "connecting"; at: number; attempt: number }
  | { kind: "connected"; at: number }
  | { kind: "snapshot"; at: number; snapshot: Snapshot }
  | { kind: "stalled"; at: number; silentMs: number }
  | { kind: "finished"; at: number }
  | { kind: "disconnected"; at: number; error: string; retryMs: number };

export interface StreamClientOptions {
  fetchFn?: typeof fetch;
  now?: () => number;
  sleep?: (ms: number) => Promise<void>;
  /** First retry delay; doubles per consecutive failure. */
  backoffBaseMs?: number;
  backoffCapMs?: number;
  /** Declare a stall after this many estimated periods of silence. */
  stallFactor?: number;
  /** Floor for the period estimate, so a burst can't arm a hair trigger. */
  minPeriodMs?: number;
}

/** Delay before reconnect attempt `attempt` (1-based): 500, 1000, ... cap. */
export function nextBackoffMs(
  attempt: number,
  base = 500,
  cap = 8000,
): number {
  return Math.min(cap, base * 2 ** Math.max(0, attempt - 1));
}

/** Exponentially weighted estimate of the snapshot period. */
export function estimatePeriodMs(
  previous: number | null,
  gapMs: number,
): number {
  if (previous === null) {
    return gapMs;
  }
  return previous + 0.25 * (gapMs - previous);
}

/** Reassembles newline-delimited records from arbitrary chunk splits. */
export class LineBuffer {
  private tail = "";

  push(chunk: string): string[] {
    const pieces = (this.tail + chunk).split("\n");
    this.tail = pieces.pop() ?? "";
    return pieces.filter((line) => line.trim().length > 0);
  }

  /** Whatever is left after the stream ends (normally nothing). */
  flush(): string[] {
    const rest = this.tail.trim();
    this.tail = "";
    return rest.length > 0 ? [rest] : [];
  }
}

const defaultSleep = (ms: number) =>
  new Promise<void>((resolve) => setTimeout(resolve, ms));

export class StreamClient {
  private readonly fetchFn: typeof fetch;
  private readonly now: () => number;
  private readonly sleep: (ms: number) => Promise<void>;
  private readonly backoffBaseMs: number;
  private readonly backoffCapMs: number;
  private readonly stallFactor: number;
  private readonly minPeriodMs: number;

  private stopped = false;
  private controller: AbortController | null = null;
  private stallTimer: ReturnType<typeof setTimeout> | null = null;
  private periodMs: number | null = null;
  private lastSnapshotAt: number | null = null;

  constructor(
    readonly endpoint: string,
    private readonly onEvent: (event: ClientEvent) => void,
    options: StreamClientOptions = {},
  ) {
    this.fetchFn = options.fetchFn ?? ((...args) => fetch(...args));
    this.now = options.now ?? (() => Date.now());
    this.sleep = options.sleep ?? defaultSleep;
    this.backoffBaseMs = options.backoffBaseMs ?? 500;
    this.backoffCapMs = options.backoffCapMs ?? 8000;
    this.stallFactor = options.stallFactor ?? 3;
    this.minPeriodMs = options.minPeriodMs ?? 100;
  }

  /** Begin streaming; returns once the loop is launched, not finished. */
  start(): void {
    void this.loop();
  }

  stop(): void {
    this.stopped = true;
    this.clearStall();
    this.controller?.abort();
  }

  async postCommand(command: { type: string }): Promise<CommandReply> {
    try {
      const response = await this.fetchFn(`${this.endpoint}/command`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(command),
      });
      return (await response.json()) as CommandReply;
    } catch (error) {
      return { ok: false, error: `transport: ${String(error)}` };
    }
  }

  private emit(event: ClientEvent): void {
    if (!this.stopped) {
      this.onEvent(event);
    }
  }

  private async loop(): Promise<void> {
    let failures = 0;
    while (!this.stopped) {
      this.emit({ kind: "connecting", at: this.now(), attempt: failures + 1 });
      let error = "stream ended";
      try {
        const finished = await this.readStream();
        if (finished) {
          this.emit({ kind: "finished", at: this.now() });
          return;
        }
      } catch (cause) {
        error = String(cause);
      }
      this.clearStall();
      if (this.stopped) {
        return;
      }
      failures += 1;
      const retryMs = nextBackoffMs(
        failures,
        this.backoffBaseMs,
        this.backoffCapMs,
      );
      this.emit({ kind: "disconnected", at: this.now(), error, retryMs });
      await this.sleep(retryMs);
    }
  }

  /** One connection's lifetime; true if the run finished cleanly. */
  private async readStream(): Promise<boolean> {
    this.controller = new AbortController();
    const response = await this.fetchFn(`${this.endpoint}/stream`, {
      signal: this.controller.signal,
    });
    if (!response.ok || response.body === null) {
      throw new Error(`HTTP ${response.status}`);
    }
    this.emit({ kind: "connected", at: this.now() });
    this.armStall();

    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    const lines = new LineBuffer();
    try {
      for (;;) {
        const { done, value } = await reader.read();
        const text = done
          ? decoder.decode()
          : decoder.decode(value, { stream: true });
        for (const line of done
          ? [...lines.push(text), ...lines.flush()]
          : lines.push(text)) {
          const snapshot = JSON.parse(line) as Snapshot;
          this.noteSnapshot();
          this.emit({ kind: "snapshot", at: this.now(), snapshot });
          if (snapshot.finished) {
            return true;
          }
        }
        if (done) {
          return false;
        }
      }
    } finally {
      this.clearStall();
      await reader.cancel().catch(() => undefined);
    }
  }

  private noteSnapshot(): void {
    const at = this.now();
    if (this.lastSnapshotAt !== null) {
      this.periodMs = estimatePeriodMs(this.periodMs, at - this.lastSnapshotAt);
    }
    this.lastSnapshotAt = at;
    this.armStall();
  }

  private armStall(): void {
    this.clearStall();
    const period = Math.max(this.minPeriodMs, this.periodMs ?? this.minPeriodMs);
    const silenceMs = this.stallFactor * period;
    this.stallTimer = setTimeout(() => {
      this.emit({ kind: "stalled", at: this.now(), silentMs: silenceMs });
    }, silenceMs);
  }

  private clearStall(): void {
    if (this.stallTimer !== null) {
      clearTimeout(this.stallTimer);
      this.stallTimer = null;
    }
  }
}
