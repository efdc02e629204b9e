// Wire types for the session websocket protocol. All numbers are SI units
// and radians; quaternions are [w, x, y, z].
export function parseServerFrame(raw) {
    let obj;
    try {
        obj = JSON.parse(raw);
    }
    catch {
        return null;
    }
    if (typeof obj !== "object" || obj === null)
        return null;
    const type = obj.type;
    if (type === "hello" || type === "state" || type === "error") {
        return obj;
    }
    return null;
}
export function inputPoseMessage(pos, quat) {
    return JSON.stringify({ type: "input_pose", pos, quat });
}
export function clutchMessage(engaged) {
    return JSON.stringify({ type: "clutch", engaged });
}
export function calibrateMessage(rTI, rTM) {
    return JSON.stringify({ type: "calibrate", r_tI: rTI, r_tM: rTM });
}
export function setModeMessage(mode, strategies = {}) {
    return JSON.stringify({ type: "set_mode", mode, ...strategies });
}
export function resetMessage() {
    return JSON.stringify({ type: "reset" });
}
export function pauseMessage(on) {
    return JSON.stringify({ type: "pause", on });
}
// --- minimal quaternion helpers (Hamilton convention, [w, x, y, z]) ---
export function quatIdentity() {
    return [1, 0, 0, 0];
}
export function quatNormalize(q) {
    const n = Math.hypot(q[0], q[1], q[2], q[3]);
    return [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
}
export function quatMultiply(a, b) {
    const [aw, ax, ay, az] = a;
    const [bw, bx, by, bz] = b;
    return [
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ];
}
export function quatFromAxisAngle(axis, angle) {
    const n = Math.hypot(axis[0], axis[1], axis[2]);
    if (n < 1e-12)
        return quatIdentity();
    const s = Math.sin(angle / 2) / n;
    return [Math.cos(angle / 2), axis[0] * s, axis[1] * s, axis[2] * s];
}
export function quatRotate(q, v) {
    const [w, x, y, z] = q;
    // v' = v + 2 w (u x v) + 2 u x (u x v), u = [x, y, z]
    const ux = y * v[2] - z * v[1];
    const uy = z * v[0] - x * v[2];
    const uz = x * v[1] - y * v[0];
    return [
        v[0] + 2 * (w * ux + y * uz - z * uy),
        v[1] + 2 * (w * uy + z * ux - x * uz),
        v[2] + 2 * (w * uz + x * uy - y * ux),
    ];
}
// ZYX euler roll and pitch of the rotation, for the reference/measured plots
export function rollPitchOf(q) {
    const [w, x, y, z] = quatNormalize(q);
    const sinp = 2 * (w * y - z * x);
    const pitch = Math.abs(sinp) >= 1 ? (Math.sign(sinp) * Math.PI) / 2 : Math.asin(sinp);
    const roll = Math.atan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y));
    return { roll, pitch };
}
