// Client-side session state. The view model never simulates the arm: the
// only robot state it exposes for rendering is the last state frame received
// from the server, and it keeps an audit trail so tests can diff rendered
// states against received ones.
import { rollPitchOf } from "./protocol.js";
const TRACE_WINDOW_S = 30;
const TOAST_CAP = 6;
export class ViewModel {
    constructor() {
        this.connection = "connecting";
        this.control = false;
        this.robot = "";
        this.horizon = 0;
        this.latest = null;
        this.toasts = [];
        this.trace = [];
        this.lastFrameAtMs = 0;
        this.receivedDigests = new Set();
        this.renderedDigests = new Set();
    }
    ingestHello(robot, horizon, control) {
        this.robot = robot;
        this.horizon = horizon;
        this.control = control;
        this.connection = "open";
    }
    ingestState(frame, nowMs) {
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
    ingestError(err, nowMs) {
        this.toasts.push({ code: err.code, detail: err.detail, at: nowMs });
        if (this.toasts.length > TOAST_CAP)
            this.toasts.shift();
    }
    markClosed() {
        this.connection = "closed";
    }
    stale(nowMs) {
        return this.latest !== null && nowMs - this.lastFrameAtMs > 1000;
    }
    // The render loop must obtain robot state through here, so every state
    // that reaches the screen is registered for the round-trip audit.
    renderState() {
        if (this.latest !== null) {
            this.renderedDigests.add(digestOf(this.latest));
        }
        return this.latest;
    }
    // digests of states that were rendered without ever being received
    renderAuditDiff() {
        const diff = [];
        for (const d of this.renderedDigests) {
            if (!this.receivedDigests.has(d))
                diff.push(d);
        }
        return diff;
    }
}
function digestOf(frame) {
    return `${frame.t}|${frame.q.join(",")}|${frame.qd.join(",")}`;
}
