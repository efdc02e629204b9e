// Scripted end-to-end session against the real Python service: engage the
// clutch, drag the virtual device 10 cm, rotate 90 degrees, release. The
// server is launched with the mirror calibration (half turn between the
// translation frames) and the input filter disabled so the separation check
// can demand bit-identical positions.

import assert from "node:assert/strict";
import { execFileSync, spawn } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { test } from "node:test";
import WebSocket from "ws";

import { RateLimiter, VirtualDevice } from "../src/device.js";
import { StateFrame, clutchMessage, inputPoseMessage, parseServerFrame } from "../src/protocol.js";
import { ViewModel } from "../src/viewmodel.js";

const PORT = 8917;
const BASE = `http://127.0.0.1:${PORT}`;

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

function writeServeScenario(dir: string): string {
  const path = join(dir, "serve_scenario.json");
  const code = [
    "import dataclasses, sys",
    "from teleop_mpc import scenarios, sim",
    "s = scenarios.build('mirror')",
    "s = dataclasses.replace(s, input_filter=sim.FilterConfig(enabled=False), input_stream=(), duration=1.0)",
    `sim.save_scenario(s, sys.argv[1])`,
  ].join("\n");
  execFileSync("python3", ["-c", code, path]);
  return path;
}

async function waitForHealth(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const res = await fetch(`${BASE}/api/health`);
      if (res.ok) return;
    } catch {
      // not up yet
    }
    await sleep(150);
  }
  throw new Error("service did not become healthy");
}

test("scripted UI session satisfies mirror and separation through the live service", async () => {
  const dir = mkdtempSync(join(tmpdir(), "teleop-ui-"));
  const scenarioPath = writeServeScenario(dir);
  const logDir = join(dir, "logs");
  const server = spawn("python3", [
    "-m", "teleop_mpc.cli", "serve",
    "--port", String(PORT),
    "--scenario", scenarioPath,
    "--log-dir", logDir,
  ], { stdio: ["ignore", "ignore", "pipe"] });
  let serverStderr = "";
  server.stderr?.on("data", (chunk) => (serverStderr += chunk));

  const vm = new ViewModel();
  const device = new VirtualDevice();
  const limiter = new RateLimiter(60);
  const frames: StateFrame[] = [];
  let sentPoses = 0;
  let firstSendMs = 0;
  let lastSendMs = 0;

  try {
    await waitForHealth(20000);
    const ws = new WebSocket(`ws://127.0.0.1:${PORT}/ws`);
    const opened = new Promise<void>((resolve, reject) => {
      ws.once("open", () => resolve());
      ws.once("error", (err) => reject(err));
    });
    ws.on("message", (data) => {
      const frame = parseServerFrame(data.toString());
      if (!frame) return;
      if (frame.type === "hello") vm.ingestHello(frame.robot, frame.H, frame.control);
      else if (frame.type === "state") {
        vm.ingestState(frame, Date.now());
        frames.push(frame);
        vm.renderState(); // the cockpit renders every frame it shows
      } else vm.ingestError(frame, Date.now());
    });
    await opened;

    const sendPose = () => {
      const now = Date.now();
      if (!limiter.shouldSend(now)) return;
      ws.send(inputPoseMessage(device.pos, device.quat));
      sentPoses += 1;
      if (firstSendMs === 0) firstSendMs = now;
      lastSendMs = now;
    };

    // let a few idle frames arrive, then clutch in
    await sleep(400);
    assert.ok(vm.control, "first client should hold control");
    const eeStartX = frames[frames.length - 1].ee.pos[0];
    ws.send(clutchMessage(true));

    // drag +x to 0.10 m over ~1 s (50 px of drag at 2 mm/px)
    for (let i = 0; i < 50; i++) {
      device.drag(1, 0);
      sendPose();
      await sleep(20);
    }
    assert.ok(Math.abs(device.pos[0] - 0.1) < 1e-9, "drag script reaches 0.10 m");
    await sleep(400); // let the last translation land before rotating

    // pure rotation: 90 degrees of body roll, position untouched
    const rotStartCount = frames.length;
    device.toggleRotationMode();
    for (let i = 0; i < 49; i++) {
      device.drag(4, 0);
      sendPose();
      await sleep(20);
    }
    await sleep(200);
    const rotEndCount = frames.length;
    ws.send(clutchMessage(false));

    // settle the closed loop, then stop
    await sleep(2000);
    ws.close();
    await sleep(200);

    // mirror: +0.10 m device drag lands the end effector at -0.10 m +- 2 mm
    const settled = frames[frames.length - 1];
    const dx = settled.ee.pos[0] - eeStartX;
    assert.ok(Math.abs(dx + 0.1) <= 2e-3, `mirror displacement ${dx.toFixed(4)} m, expected -0.100 +- 0.002`);

    // separation: frames received during the pure-rotation segment carry a
    // bit-identical desired position while the desired orientation moves
    const rotFrames = frames.slice(rotStartCount + 8, rotEndCount);
    assert.ok(rotFrames.length >= 5, `need rotation-window frames, got ${rotFrames.length}`);
    const posRef = JSON.stringify(rotFrames[0].desired.pos);
    for (const f of rotFrames) {
      assert.equal(JSON.stringify(f.desired.pos), posRef, "desired position changed during pure rotation");
    }
    const quatFirst = JSON.stringify(rotFrames[0].desired.quat);
    const quatLast = JSON.stringify(rotFrames[rotFrames.length - 1].desired.quat);
    assert.notEqual(quatFirst, quatLast, "desired orientation should change during rotation");

    // the view model never rendered a state the server did not send
    assert.deepEqual(vm.renderAuditDiff(), [], "rendered states must all come from the server");

    // outbound pose rate stayed within the 60 Hz budget
    const seconds = Math.max((lastSendMs - firstSendMs) / 1000, 1e-9);
    assert.ok(sentPoses / seconds <= 61, `outbound rate ${(sentPoses / seconds).toFixed(1)} Hz`);

    // clutch flag made it into the broadcast during the script
    assert.ok(frames.some((f) => f.clutch), "server reported the clutch engaged");
  } finally {
    server.kill("SIGTERM");
    await new Promise<void>((resolve) => {
      server.once("exit", () => resolve());
      setTimeout(() => {
        server.kill("SIGKILL");
        resolve();
      }, 5000);
    });
  }
  if (serverStderr.includes("Traceback")) {
    throw new Error(`server errors:\n${serverStderr}`);
  }

  // the session log written on shutdown shows the same mirror displacement
  const csv = readFileSync(join(logDir, "session_log.csv"), "utf-8").trim().split("\n");
  const header = csv[0].split(",");
  const xCol = header.indexOf("ee_px_m");
  const clutchCol = header.indexOf("clutch");
  assert.ok(xCol >= 0 && clutchCol >= 0);
  const firstX = parseFloat(csv[1].split(",")[xCol]);
  const lastX = parseFloat(csv[csv.length - 1].split(",")[xCol]);
  assert.ok(Math.abs(lastX - firstX + 0.1) <= 2e-3, `log displacement ${(lastX - firstX).toFixed(4)}`);
  assert.ok(csv.some((line) => line.split(",")[clutchCol] === "1"), "log shows clutched ticks");
});
