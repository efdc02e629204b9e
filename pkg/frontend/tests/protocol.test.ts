import assert from "node:assert/strict";
import { test } from "node:test";

import {
  clutchMessage,
  inputPoseMessage,
  parseServerFrame,
  quatFromAxisAngle,
  quatMultiply,
  quatNormalize,
  quatRotate,
  rollPitchOf,
  setModeMessage,
} from "../src/protocol.js";

test("message encoders produce the wire schema", () => {
  assert.deepEqual(JSON.parse(inputPoseMessage([1, 2, 3], [1, 0, 0, 0])), {
    type: "input_pose",
    pos: [1, 2, 3],
    quat: [1, 0, 0, 0],
  });
  assert.deepEqual(JSON.parse(clutchMessage(true)), { type: "clutch", engaged: true });
  assert.deepEqual(JSON.parse(setModeMessage("absolute", { input_rotation: "device_at_clutch" })), {
    type: "set_mode",
    mode: "absolute",
    input_rotation: "device_at_clutch",
  });
});

test("parseServerFrame accepts known frames and rejects junk", () => {
  assert.equal(parseServerFrame("{not json"), null);
  assert.equal(parseServerFrame(JSON.stringify({ type: "mystery" })), null);
  const hello = parseServerFrame(JSON.stringify({ type: "hello", version: 1, robot: "ur5e", H: 10, control: true }));
  assert.ok(hello && hello.type === "hello" && hello.robot === "ur5e");
});

test("quaternion helpers compose rotations correctly", () => {
  const qz = quatFromAxisAngle([0, 0, 1], Math.PI / 2);
  const rotated = quatRotate(qz, [1, 0, 0]);
  assert.ok(Math.abs(rotated[0]) < 1e-12 && Math.abs(rotated[1] - 1) < 1e-12);

  const qx = quatFromAxisAngle([1, 0, 0], 0.4);
  const combined = quatNormalize(quatMultiply(qz, qx));
  const v = quatRotate(combined, [0, 0, 1]);
  const direct = quatRotate(qz, quatRotate(qx, [0, 0, 1]));
  for (let i = 0; i < 3; i++) assert.ok(Math.abs(v[i] - direct[i]) < 1e-12);
});

test("rollPitchOf extracts ZYX roll and pitch", () => {
  const roll = rollPitchOf(quatFromAxisAngle([1, 0, 0], 0.6));
  assert.ok(Math.abs(roll.roll - 0.6) < 1e-12 && Math.abs(roll.pitch) < 1e-12);
  const pitch = rollPitchOf(quatFromAxisAngle([0, 1, 0], -0.3));
  assert.ok(Math.abs(pitch.pitch + 0.3) < 1e-12 && Math.abs(pitch.roll) < 1e-12);
});
