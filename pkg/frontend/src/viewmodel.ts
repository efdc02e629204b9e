// Client-side session state. The view model never simulates the arm: the
// only robot state it exposes for rendering is the last state frame received
// from the server, and it keeps an audit trail so tests can diff rendered
// states against received ones.

import { ErrorFrame, StateFrame, rollPitchOf } from "./protocol.js";

export type ConnectionStatus = "connecting" | "open" | "closed";

export interface Toast {
  code: string;
  detail: string;
  at: number; // ms timestamp
}

export interface TracePoint {
  t: number;
  refRoll: number;
  refPitch: number;
  measRoll: number;
  measPitch: number;
  solveMs: number;
}

const TRACE_WINDOW_S = 30;
const TOAST_CAP = 6;

export class ViewModel {
  connection: ConnectionStatus = "connecting";
  control = false;
  robot = "";
  horizon = 0;
  latest: StateFrame | null = null;
  toasts: Toast[] = [];
  trace: TracePoint[] = [];
  lastFrameAtMs = 0;

  private receivedDigests = new Set<string>();
  private renderedDigests = new Set<string>();

  ingestHello(robot: string, horizon: number, control: boolean): void {
    this.robot = robot;
    this.horizon = horizon;
    this.control = control;
    this.connection = "open";
  }

  ingestState(frame: StateFrame, nowMs: number): void {
    this.latest = frame;
    this.lastFrameAtMs = nowMs;
    this.receivedDigests.add(digestOf(frame));
    const ref = rollPitchOf(frame.desired.quat);
    const meas = rollPitchOf(frame.ee.quat);
    this.trace.push({
      t: frame.t,
      refRoll: ref.roll,
      refPitch: ref.pitch,
      measRoll: meas.roll,
      measPitch: meas.pitch,
      solveMs: frame.solve.ms,
    });
    const cutoff = frame.t - TRACE_WINDOW_S;
    while (this.trace.length && this.trace[0].t < cutoff) {
      this.trace.shift();
    }
  }

  ingestError(err: ErrorFrame, nowMs: number): void {
    this.toasts.push({ code: err.code, detail: err.detail, at: nowMs });
    if (this.toasts.length > TOAST_CAP) this.toasts.shift();
  }

  markClosed(): void {
    this.connection = "closed";
  }

  stale(nowMs: number): boolean {
    return this.latest !== null && nowMs - this.lastFrameAtMs > 1000;
  }

  // The render loop must obtain robot state through here, so every state
  // that reaches the screen is registered for the round-trip audit.
  renderState(): StateFrame | null {
    if (this.latest !== null) {
      this.renderedDigests.add(digestOf(this.latest));
    }
    return this.latest;
  }

  // digests of states that were rendered without ever being received
  renderAuditDiff(): string[] {
    const diff: string[] = [];
    for (const d of this.renderedDigests) {
      if (!this.receivedDigests.has(d)) diff.push(d);
    }
    return diff;
  }
}

function digestOf(frame: StateFrame): string {
  return `${frame.t}|${frame.q.join(",")}|${frame.qd.join(",")}`;
}
