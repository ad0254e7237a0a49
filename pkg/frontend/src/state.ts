/** Console state: controls, clamping, sequencing, suggestion handling.
 *
 * Pure logic only — no DOM, no sockets — so every invariant here is
 * unit-testable. The client module wires this to the transport.
 */

import { Euler, eulerToQuat, quatToEuler } from "./math.js";
import { StateUpdateResponse, SuggestionResponse } from "./protocol.js";

export interface Controls {
  euler: Euler;
  wrench: [number, number, number, number, number, number]; // fx fy fz tx ty tz
}

export const LIMITS = {
  angle: Math.PI / 2, // per-axis slider range, rad
  tangential: 5, // |fx|, |fy|, N
  fzMax: 20, // N; floor is 0
  torque: 20, // N*mm
};

export interface ClampResult {
  controls: Controls;
  clamped: boolean;
}

export function clampControls(c: Controls): ClampResult {
  const clip = (v: number, lo: number, hi: number) =>
    Math.max(lo, Math.min(hi, v));
  const euler: Euler = {
    roll: clip(c.euler.roll, -LIMITS.angle, LIMITS.angle),
    pitch: clip(c.euler.pitch, -LIMITS.angle, LIMITS.angle),
    yaw: clip(c.euler.yaw, -LIMITS.angle, LIMITS.angle),
  };
  const w = c.wrench;
  const wrench: Controls["wrench"] = [
    clip(w[0], -LIMITS.tangential, LIMITS.tangential),
    clip(w[1], -LIMITS.tangential, LIMITS.tangential),
    clip(w[2], 0, LIMITS.fzMax), // normal force floor at 0
    clip(w[3], -LIMITS.torque, LIMITS.torque),
    clip(w[4], -LIMITS.torque, LIMITS.torque),
    clip(w[5], -LIMITS.torque, LIMITS.torque),
  ];
  const clamped =
    euler.roll !== c.euler.roll ||
    euler.pitch !== c.euler.pitch ||
    euler.yaw !== c.euler.yaw ||
    wrench.some((v, i) => v !== w[i]);
  return { controls: { euler, wrench }, clamped };
}

/** Outgoing payload: always a canonical unit quaternion (w >= 0). */
export function controlsToPayload(c: Controls): {
  pose: number[];
  wrench: number[];
} {
  return { pose: [...eulerToQuat(c.euler)], wrench: [...c.wrench] };
}

/** Suggestion -> controls, field-for-field; wrench passes through exactly. */
export function suggestionToControls(s: SuggestionResponse): Controls {
  const [w, x, y, z] = s.pose;
  return {
    euler: quatToEuler([w, x, y, z]),
    wrench: [...s.wrench] as Controls["wrench"],
  };
}

/** Linear interpolation for follow-suggestion mode; t in [0, 1]. */
export function controlsTowards(
  from: Controls,
  to: Controls,
  t: number,
): Controls {
  const k = Math.max(0, Math.min(1, t));
  const mix = (a: number, b: number) => a + (b - a) * k;
  return {
    euler: {
      roll: mix(from.euler.roll, to.euler.roll),
      pitch: mix(from.euler.pitch, to.euler.pitch),
      yaw: mix(from.euler.yaw, to.euler.yaw),
    },
    wrench: from.wrench.map((v, i) => mix(v, to.wrench[i])) as Controls["wrench"],
  };
}

export const FOLLOW_DURATION_MS = 500;

/**
 * Monotonic sequence tracking: the display must never regress to a frame
 * older than the latest acknowledged state.
 */
export class FrameSequencer {
  private nextOut = 1;
  private lastShown = 0;

  nextSeq(): number {
    return this.nextOut++;
  }

  /** True when the update should be displayed; stale updates are dropped. */
  accept(seq: number): boolean {
    if (seq <= this.lastShown) return false;
    this.lastShown = seq;
    return true;
  }

  get displayedSeq(): number {
    return this.lastShown;
  }
}

/**
 * Latest-wins coalescing: at most one state message in flight; slider spam
 * while waiting collapses to the newest value.
 */
export class Coalescer<T> {
  private inFlight = false;
  private pending: T | null = null;

  constructor(private send: (value: T) => void) {}

  submit(value: T): void {
    if (this.inFlight) {
      this.pending = value;
      return;
    }
    this.inFlight = true;
    this.send(value);
  }

  /** Call when the in-flight message is acknowledged (or failed). */
  acknowledge(): void {
    this.inFlight = false;
    if (this.pending !== null) {
      const next = this.pending;
      this.pending = null;
      this.submit(next);
    }
  }

  get busy(): boolean {
    return this.inFlight;
  }
}

/** Reconnect backoff: 500 ms doubling to an 8 s ceiling. */
export function reconnectDelayMs(attempt: number): number {
  return Math.min(500 * 2 ** Math.max(0, attempt), 8000);
}

export interface ConsoleState {
  sessionId: string | null;
  mode: "manual" | "follow-suggestion";
  controls: Controls;
  lastUpdate: StateUpdateResponse | null;
  lastSuggestion: SuggestionResponse | null;
  connection: "connecting" | "connected" | "reconnecting" | "error";
  banner: string | null;
}

export function initialState(): ConsoleState {
  return {
    sessionId: null,
    mode: "manual",
    controls: {
      euler: { roll: 0, pitch: 0, yaw: 0 },
      wrench: [0, 0, 8, 0, 0, 0],
    },
    lastUpdate: null,
    lastSuggestion: null,
    connection: "connecting",
    banner: null,
  };
}
