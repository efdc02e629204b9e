import { RateLimiter, VirtualDevice } from "./device.js";
import { SessionLink } from "./net.js";
import { calibrateMessage, clutchMessage, inputPoseMessage, pauseMessage, resetMessage, setModeMessage, } from "./protocol.js";
import { drawPlots, drawScene } from "./render.js";
import { ViewModel } from "./viewmodel.js";
const vm = new ViewModel();
const device = new VirtualDevice();
const limiter = new RateLimiter(60);
const scene = document.getElementById("scene");
const plots = document.getElementById("plots");
const status = document.getElementById("status");
const toasts = document.getElementById("toasts");
const wsUrl = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws`;
const link = new SessionLink(wsUrl, {
    onHello: (f) => vm.ingestHello(f.robot, f.H, f.control),
    onState: (f) => vm.ingestState(f, performance.now()),
    onError: (f) => vm.ingestError(f, performance.now()),
    onClose: () => vm.markClosed(),
});
let poseDirty = false;
let paused = false;
function sendPose(force = false) {
    if (!force && !limiter.shouldSend(performance.now())) {
        poseDirty = true;
        return;
    }
    poseDirty = false;
    if (!link.send(inputPoseMessage(device.pos, device.quat))) {
        flashDisconnected();
    }
}
function flashDisconnected() {
    vm.ingestError({ type: "error", code: "disconnected", detail: "input discarded: no session" }, performance.now());
}
// pointer mapping: drag on the scene canvas
let dragging = false;
scene.addEventListener("pointerdown", (ev) => {
    dragging = true;
    scene.setPointerCapture(ev.pointerId);
});
scene.addEventListener("pointerup", () => {
    dragging = false;
});
scene.addEventListener("pointermove", (ev) => {
    if (!dragging)
        return;
    device.drag(ev.movementX, ev.movementY);
    sendPose();
});
scene.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    device.wheel(ev.deltaY);
    sendPose();
});
window.addEventListener("keydown", (ev) => {
    if (ev.repeat)
        return;
    if (ev.code === "Space") {
        ev.preventDefault();
        if (!link.send(clutchMessage(true)))
            flashDisconnected();
    }
    else if (ev.code === "KeyR") {
        device.toggleRotationMode();
    }
});
window.addEventListener("keyup", (ev) => {
    if (ev.code === "Space") {
        ev.preventDefault();
        if (!link.send(clutchMessage(false)))
            flashDisconnected();
    }
});
function hook(id, fn) {
    const el = document.getElementById(id);
    if (el)
        el.addEventListener("click", fn);
}
const identity = [1, 0, 0, 0];
const halfTurnZ = [0, 0, 0, 1];
hook("cal-identity", () => link.send(calibrateMessage(identity, identity)));
hook("cal-mirror", () => link.send(calibrateMessage(identity, halfTurnZ)));
hook("mode-relative", () => link.send(setModeMessage("relative")));
hook("mode-absolute", () => link.send(setModeMessage("absolute")));
hook("reset", () => {
    device.reset();
    link.send(resetMessage());
});
hook("pause", () => {
    paused = !paused;
    link.send(pauseMessage(paused));
});
function renderStatus() {
    const f = vm.latest;
    const bits = [
        `conn: ${vm.connection}${vm.control ? " (control)" : ""}`,
        `robot: ${vm.robot || "-"}`,
        f ? `t=${f.t.toFixed(2)}s` : "",
        f ? `mode: ${f.mode}` : "",
        f && f.clutch ? "CLUTCH" : "",
        f && f.paused ? "PAUSED" : "",
        device.rotationMode ? "ROTATE" : "TRANSLATE",
        f ? `solve ${f.solve.ms.toFixed(1)} ms${f.solve.converged ? "" : " (!)"}` : "",
    ];
    status.textContent = bits.filter(Boolean).join("  |  ");
    toasts.textContent = vm.toasts.slice(-3).map((t) => `[${t.code}] ${t.detail}`).join("\n");
}
function frameLoop() {
    if (poseDirty)
        sendPose();
    drawScene(scene, vm, device, performance.now());
    drawPlots(plots, vm);
    renderStatus();
    requestAnimationFrame(frameLoop);
}
requestAnimationFrame(frameLoop);
