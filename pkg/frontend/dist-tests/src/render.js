// Canvas scene: isometric projection of the arm, the four reference-frame
// triads, the desired-pose ghost, the planned path, and the Fig.-4 style
// roll/pitch plots with a solve-time sparkline.
import { quatRotate } from "./protocol.js";
const COS30 = Math.cos(Math.PI / 6);
const SIN30 = Math.sin(Math.PI / 6);
export function project(p, cam) {
    // isometric: x to the lower-right, y to the lower-left, z up
    const sx = (p[0] - p[1]) * COS30;
    const sy = (p[0] + p[1]) * SIN30 - p[2];
    return [cam.cx + sx * cam.scale, cam.cy + sy * cam.scale];
}
function line(ctx, a, b, cam, color, width = 1.5) {
    const [x0, y0] = project(a, cam);
    const [x1, y1] = project(b, cam);
    ctx.strokeStyle = color;
    ctx.lineWidth = width;
    ctx.beginPath();
    ctx.moveTo(x0, y0);
    ctx.lineTo(x1, y1);
    ctx.stroke();
}
function addScaled(p, d, s) {
    return [p[0] + d[0] * s, p[1] + d[1] * s, p[2] + d[2] * s];
}
function drawTriad(ctx, pose, cam, size, label, alpha = 1.0) {
    ctx.globalAlpha = alpha;
    const axes = [
        [[1, 0, 0], "#e05555"],
        [[0, 1, 0], "#4fae4f"],
        [[0, 0, 1], "#5b7fe0"],
    ];
    for (const [axis, color] of axes) {
        const tip = addScaled(pose.pos, quatRotate(pose.quat, axis), size);
        line(ctx, pose.pos, tip, cam, color, 2);
    }
    const [lx, ly] = project(pose.pos, cam);
    ctx.fillStyle = "#cfcfcf";
    ctx.font = "11px monospace";
    ctx.fillText(label, lx + 6, ly - 6);
    ctx.globalAlpha = 1.0;
}
function drawGrid(ctx, cam) {
    for (let i = -5; i <= 5; i++) {
        line(ctx, [i * 0.2, -1, 0], [i * 0.2, 1, 0], cam, "#27303a", 1);
        line(ctx, [-1, i * 0.2, 0], [1, i * 0.2, 0], cam, "#27303a", 1);
    }
    drawTriad(ctx, { pos: [0, 0, 0], quat: [1, 0, 0, 0] }, cam, 0.12, "world");
}
export function drawScene(canvas, vm, device, nowMs) {
    const ctx = canvas.getContext("2d");
    if (!ctx)
        return;
    const cam = { scale: canvas.height * 0.38, cx: canvas.width * 0.42, cy: canvas.height * 0.56 };
    ctx.fillStyle = "#10151b";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    drawGrid(ctx, cam);
    const frame = vm.renderState();
    if (frame === null) {
        ctx.fillStyle = "#8899aa";
        ctx.font = "14px monospace";
        ctx.fillText("waiting for server state...", 20, 28);
        return;
    }
    const stale = vm.stale(nowMs);
    ctx.globalAlpha = stale ? 0.35 : 1.0;
    // arm links from the server-supplied per-link poses
    if (frame.links && frame.links.length > 1) {
        for (let i = 1; i < frame.links.length; i++) {
            line(ctx, frame.links[i - 1].pos, frame.links[i].pos, cam, "#d8d8d8", 4);
        }
    }
    // planned end-effector path
    for (let i = 1; i < frame.planned_path.length; i++) {
        line(ctx, frame.planned_path[i - 1], frame.planned_path[i], cam, "#caa34f", 1.5);
    }
    // the two frame trees, desired ghost, end effector
    for (const [name, pose] of Object.entries(frame.frames)) {
        drawTriad(ctx, pose, cam, 0.07, `{${name}}`, 0.9);
    }
    drawTriad(ctx, frame.desired, cam, 0.1, "desired", 0.8);
    drawTriad(ctx, frame.ee, cam, 0.1, "ee");
    // local device marker in the lower-left corner frame
    const devCam = { scale: cam.scale * 0.6, cx: canvas.width * 0.85, cy: canvas.height * 0.78 };
    drawTriad(ctx, { pos: device.pos, quat: device.quat }, devCam, 0.1, frame.clutch ? "device [clutched]" : "device");
    ctx.globalAlpha = 1.0;
    if (stale) {
        ctx.fillStyle = "#b0b8c0";
        ctx.font = "14px monospace";
        ctx.fillText("connection stale", 20, 28);
    }
}
export function drawPlots(canvas, vm) {
    const ctx = canvas.getContext("2d");
    if (!ctx)
        return;
    const w = canvas.width;
    const h = canvas.height;
    ctx.fillStyle = "#10151b";
    ctx.fillRect(0, 0, w, h);
    const trace = vm.trace;
    if (trace.length < 2)
        return;
    const t1 = trace[trace.length - 1].t;
    const t0 = Math.max(trace[0].t, t1 - 30);
    const xOf = (t) => ((t - t0) / Math.max(t1 - t0, 1e-6)) * (w - 10) + 5;
    const half = (h - 30) / 2;
    const bands = [
        { pick: (p) => [p.refRoll, p.measRoll], y0: 12, label: "roll ref/meas" },
        { pick: (p) => [p.refPitch, p.measPitch], y0: 16 + half, label: "pitch ref/meas" },
    ];
    for (const band of bands) {
        ctx.fillStyle = "#8899aa";
        ctx.font = "10px monospace";
        ctx.fillText(band.label, 6, band.y0 - 2);
        for (const [idx, color] of [[0, "#caa34f"], [1, "#6fb3e0"]]) {
            ctx.strokeStyle = color;
            ctx.lineWidth = 1;
            ctx.beginPath();
            trace.forEach((p, i) => {
                const v = band.pick(p)[idx];
                const y = band.y0 + half / 2 - (v / Math.PI) * (half / 2);
                if (i === 0)
                    ctx.moveTo(xOf(p.t), y);
                else
                    ctx.lineTo(xOf(p.t), y);
            });
            ctx.stroke();
        }
    }
    // solve-time sparkline along the bottom
    const maxMs = Math.max(20, ...trace.map((p) => p.solveMs));
    ctx.strokeStyle = "#76d79a";
    ctx.beginPath();
    trace.forEach((p, i) => {
        const y = h - 4 - (p.solveMs / maxMs) * 18;
        if (i === 0)
            ctx.moveTo(xOf(p.t), y);
        else
            ctx.lineTo(xOf(p.t), y);
    });
    ctx.stroke();
    ctx.fillStyle = "#76d79a";
    ctx.fillText(`solve ${trace[trace.length - 1].solveMs.toFixed(1)} ms`, 6, h - 8);
}
