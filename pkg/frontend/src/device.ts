// Virtual 6-DOF input device driven by pointer and keyboard.
//
// Mapping (documented on screen):
//   drag                 device x/y on the ground plane
//   wheel                device z
//   R (toggle) + drag    device roll (drag x) and pitch (drag y), body axes
//   R (toggle) + wheel   device yaw, body axis
//   Space (hold)         clutch engaged

import { Quat, Vec3, quatFromAxisAngle, quatIdentity, quatMultiply, quatNormalize } from "./protocol.js";

const MOVE_SCALE = 0.002; // m per pointer px
const WHEEL_SCALE = 0.0005; // m per wheel unit
const ROT_SCALE = 0.008; // rad per pointer px
const YAW_SCALE = 0.002; // rad per wheel unit

export class VirtualDevice {
  pos: Vec3 = [0, 0, 0];
  quat: Quat = quatIdentity();
  rotationMode = false;

  drag(dxPx: number, dyPx: number): void {
    if (this.rotationMode) {
      // body-axis roll from horizontal drag, pitch from vertical drag
      const roll = quatFromAxisAngle([1, 0, 0], dxPx * ROT_SCALE);
      const pitch = quatFromAxisAngle([0, 1, 0], -dyPx * ROT_SCALE);
      this.quat = quatNormalize(quatMultiply(this.quat, quatMultiply(roll, pitch)));
    } else {
      this.pos = [this.pos[0] + dxPx * MOVE_SCALE, this.pos[1] - dyPx * MOVE_SCALE, this.pos[2]];
    }
  }

  wheel(delta: number): void {
    if (this.rotationMode) {
      this.quat = quatNormalize(quatMultiply(this.quat, quatFromAxisAngle([0, 0, 1], delta * YAW_SCALE)));
    } else {
      this.pos = [this.pos[0], this.pos[1], this.pos[2] - delta * WHEEL_SCALE];
    }
  }

  toggleRotationMode(): void {
    this.rotationMode = !this.rotationMode;
  }

  reset(): void {
    this.pos = [0, 0, 0];
    this.quat = quatIdentity();
    this.rotationMode = false;
  }
}

// Keeps the outbound input_pose rate bounded no matter how fast pointer
// events arrive.
export class RateLimiter {
  private lastSentMs = -Infinity;
  private readonly minIntervalMs: number;

  constructor(maxHz: number) {
    this.minIntervalMs = 1000 / maxHz;
  }

  shouldSend(nowMs: number): boolean {
    if (nowMs - this.lastSentMs >= this.minIntervalMs) {
      this.lastSentMs = nowMs;
      return true;
    }
    return false;
  }
}
