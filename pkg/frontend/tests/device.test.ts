import assert from "node:assert/strict";
import { test } from "node:test";

import { RateLimiter, VirtualDevice } from "../src/device.js";
import { quatRotate, rollPitchOf } from "../src/protocol.js";

test("drag maps to ground-plane translation", () => {
  const dev = new VirtualDevice();
  dev.drag(100, -50);
  assert.ok(dev.pos[0] > 0, "drag right moves +x");
  assert.ok(dev.pos[1] > 0, "drag up moves +y");
  assert.equal(dev.pos[2], 0, "drag never changes z");
});

test("wheel maps to z in translate mode and yaw in rotate mode", () => {
  const dev = new VirtualDevice();
  dev.wheel(-200);
  assert.ok(dev.pos[2] > 0);
  const zBefore = dev.pos[2];
  dev.toggleRotationMode();
  dev.wheel(300);
  assert.equal(dev.pos[2], zBefore, "rotate-mode wheel leaves position alone");
  const x = quatRotate(dev.quat, [1, 0, 0]);
  assert.ok(Math.abs(x[1]) > 1e-4, "yaw rotated the body x-axis");
});

test("rotate-mode drag produces body roll and pitch", () => {
  const dev = new VirtualDevice();
  dev.toggleRotationMode();
  dev.drag(60, 0);
  const { roll, pitch } = rollPitchOf(dev.quat);
  assert.ok(Math.abs(roll) > 1e-3 && Math.abs(pitch) < 1e-9, "horizontal drag is pure roll");
  const before = dev.pos.slice();
  dev.drag(0, 40);
  assert.deepEqual(dev.pos, before, "rotation never moves the device");
  assert.ok(Math.abs(rollPitchOf(dev.quat).pitch) > 1e-3, "vertical drag added pitch");
});

test("reset restores identity and translate mode", () => {
  const dev = new VirtualDevice();
  dev.drag(10, 10);
  dev.toggleRotationMode();
  dev.drag(10, 10);
  dev.reset();
  assert.deepEqual(dev.pos, [0, 0, 0]);
  assert.deepEqual(dev.quat, [1, 0, 0, 0]);
  assert.equal(dev.rotationMode, false);
});

test("rate limiter caps outbound rate at the configured frequency", () => {
  const limiter = new RateLimiter(60);
  let sent = 0;
  // pointer events at 1 kHz for one simulated second
  for (let ms = 0; ms < 1000; ms += 1) {
    if (limiter.shouldSend(ms)) sent += 1;
  }
  assert.ok(sent <= 60, `sent ${sent} messages in 1 s, expected <= 60`);
  assert.ok(sent >= 55, `sent ${sent}, limiter overly aggressive`);
});
