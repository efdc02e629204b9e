"""Live session host: FastAPI app with a websocket protocol for UI clients.

Architecture: SessionCore is the deterministic part. It owns one TeleopLoop,
queues inbound messages, stamps them with the time of the tick that will
consume them, and records the applied input samples as a trace. Replaying
that trace through sim.run_scenario reproduces the session exactly, because
both paths drive the same tick pipeline with the same timestamps; wall-clock
jitter only changes which tick a message lands in, never the result of a
given assignment.

The asyncio host schedules ticks against the wall clock, broadcasts state
snapshots at a fixed rate, and enforces single-writer control authority
(first connected client; promoted to the oldest remaining on disconnect).
Slow consumers get newest-wins delivery from a depth-1 queue and are dropped
when a send stalls.
"""

from __future__ import annotations

import asyncio
import contextlib
import json
import pathlib
from dataclasses import dataclass, replace

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse
from pydantic import ValidationError

from . import geometry, kinematics, protocol, retarget, sim
from .geometry import Transform
from .protocol import (
    CalibrateMsg,
    ClientEnvelope,
    ClutchMsg,
    ErrorMsg,
    HelloMsg,
    InputPoseMsg,
    PauseMsg,
    PoseModel,
    ResetMsg,
    SetModeMsg,
    SolveInfo,
    StateMsg,
)

BROADCAST_HZ = 30.0
SEND_TIMEOUT_S = 2.0
QUAT_NORM_TOL = 1e-3

_STRATEGY_SLOTS = ("input_translation", "input_rotation", "robot_translation", "robot_rotation")


class SessionError(Exception):
    def __init__(self, code: str, detail: str):
        self.code = code
        self.detail = detail
        super().__init__(f"{code}: {detail}")


def _pose_model(t: Transform) -> PoseModel:
    return PoseModel(pos=[float(v) for v in t.pos],
                     quat=[float(v) for v in geometry.quat_from_rotation(t.rot)])


def _quat_to_rotation(q: list[float], field: str) -> np.ndarray:
    arr = np.asarray(q, dtype=float)
    norm = float(np.linalg.norm(arr))
    if abs(norm - 1.0) > QUAT_NORM_TOL:
        raise SessionError("bad_quaternion", f"{field} norm {norm:.4f} deviates more than {QUAT_NORM_TOL}")
    return geometry.rotation_from_quat(arr / norm)


class SessionCore:
    """Deterministic session logic: message intake, tick advance, trace/log."""

    def __init__(self, scenario: sim.Scenario, include_links: bool = True):
        # the live session ignores any scripted stream and runs open-ended
        self.scenario = replace(scenario, input_stream=(), duration=1.0)
        sim.validate_scenario(self.scenario)
        self.include_links = include_links
        self.loop = sim.TeleopLoop(self.scenario)
        self.dt_sim = self.loop.dt_sim
        self._queue: list = []
        self._pending_clutch = False
        self._pending_pose = (np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))
        self._pending_cfg = scenario.retarget_cfg
        self.trace: list[sim.InputSample] = []
        self.records: list[sim.LogRecord] = []

    # -- message intake (validation happens here, effects at the next tick) --

    def handle(self, msg) -> None:
        if isinstance(msg, InputPoseMsg):
            _quat_to_rotation(msg.quat, "quat")  # norm validation
            quat = np.asarray(msg.quat, dtype=float)
            quat = quat / np.linalg.norm(quat)
            self._pending_pose = (np.asarray(msg.pos, dtype=float), quat)
            self._queue.append(("sample", self._pending_pose[0], quat, self._pending_clutch))
        elif isinstance(msg, ClutchMsg):
            if msg.engaged == self._pending_clutch:
                raise SessionError(
                    "already_engaged" if msg.engaged else "not_engaged",
                    "clutch is already in the requested state",
                )
            self._pending_clutch = msg.engaged
            pos, quat = self._pending_pose
            self._queue.append(("sample", pos, quat, msg.engaged))
        elif isinstance(msg, CalibrateMsg):
            r_in = _quat_to_rotation(msg.r_tI, "r_tI")
            r_rb = _quat_to_rotation(msg.r_tM, "r_tM")
            if (self._pending_cfg.input_translation.kind != "calibrated_fixed"
                    or self._pending_cfg.robot_translation.kind != "calibrated_fixed"):
                raise SessionError("strategy_mismatch", "translation strategies are not calibrated_fixed")
            self._queue.append(("event", sim.CalibrateEvent(r_in, r_rb)))
        elif isinstance(msg, SetModeMsg):
            cfg = self._build_config(msg)
            self._pending_cfg = cfg
            self._queue.append(("event", sim.SetModeEvent(cfg)))
        elif isinstance(msg, ResetMsg):
            self._queue.append(("reset",))
        else:
            raise SessionError("bad_message", f"unsupported message type {type(msg).__name__}")

    def _build_config(self, msg: SetModeMsg) -> retarget.RetargetConfig:
        current = self._pending_cfg
        kwargs = {"mode": msg.mode}
        for slot in _STRATEGY_SLOTS:
            name = getattr(msg, slot)
            if name is None:
                kwargs[slot] = getattr(current, slot)
            else:
                if name not in retarget.STRATEGY_KINDS:
                    raise SessionError("bad_strategy", f"unknown strategy {name!r} for {slot}")
                if name == "calibrated_fixed":
                    old = getattr(current, slot)
                    rotation = old.rotation if old.kind == "calibrated_fixed" else np.eye(3)
                    kwargs[slot] = retarget.Strategy(name, rotation)
                else:
                    kwargs[slot] = retarget.Strategy(name)
        try:
            return retarget.RetargetConfig(**kwargs)
        except ValueError as exc:
            raise SessionError("bad_strategy", str(exc)) from None

    # -- deterministic advance --

    def advance_tick(self) -> sim.LogRecord:
        queued, self._queue = self._queue, []
        events = []
        t_tick = self.loop.tick_index * self.dt_sim
        samples = [item for item in queued if item[0] == "sample"]
        stamp_base = t_tick - self.dt_sim
        sample_no = 0
        for item in queued:
            if item[0] == "sample":
                # spread same-tick stamps inside (t_tick - dt, t_tick] so a
                # replayed scenario stream stays strictly increasing and due
                # at exactly this tick
                sample_no += 1
                stamp = stamp_base + self.dt_sim * sample_no / len(samples)
                sample = sim.InputSample(t=stamp, pos=item[1], quat=item[2], clutch=item[3])
                events.append(sample)
                self.trace.append(sample)
            elif item[0] == "event":
                events.append(item[1])
            elif item[0] == "reset":
                self.loop.reset()
                self._pending_clutch = False
                self._pending_pose = (np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))
                self._pending_cfg = self.scenario.retarget_cfg
                self.trace.clear()
                self.records.clear()
                events.clear()
        record = self.loop.tick(tuple(events))
        self.records.append(record)
        return record

    # -- snapshots and replay --

    def snapshot(self, paused: bool) -> StateMsg:
        loop = self.loop
        cfg = loop.retargeter.cfg
        st = loop.retargeter.state
        if loop.plan is not None:
            path = [[float(v) for v in p] for p in loop.planned_path_world()]
            stats = loop.plan.stats
            solve = SolveInfo(ms=stats.solve_ms, iterations=stats.iterations,
                              converged=stats.converged, cost=loop.plan.cost)
        else:
            ee = loop.ee_world()
            path = [[float(v) for v in ee.pos]] * (self.scenario.ocp.horizon + 1)
            solve = SolveInfo(ms=0.0, iterations=0, converged=True, cost=0.0)
        links = [_pose_model(t) for t in loop.link_poses_world()] if self.include_links else None
        return StateMsg(
            t=loop.tick_index * self.dt_sim,
            q=[float(v) for v in loop.x.q],
            qd=[float(v) for v in loop.x.qd],
            ee=_pose_model(loop.ee_world()),
            desired=_pose_model(loop.desired_world()),
            clutch=loop.retargeter.engaged,
            paused=paused,
            mode=cfg.mode,
            strategies={slot: getattr(cfg, slot).kind for slot in _STRATEGY_SLOTS},
            solve=solve,
            planned_path=path,
            frames={
                "t_I": _pose_model(st.input_trans_frame),
                "r_I": _pose_model(st.input_rot_frame),
                "t_M": _pose_model(st.robot_trans_frame),
                "r_M": _pose_model(st.robot_rot_frame),
            },
            links=links,
        )

    def trace_scenario(self) -> sim.Scenario:
        """The scenario whose run_scenario output reproduces this session."""
        duration = max(self.loop.tick_index, 1) * self.dt_sim
        return replace(self.scenario, input_stream=tuple(self.trace), duration=duration)


@dataclass
class _Client:
    ws: WebSocket
    queue: asyncio.Queue
    send_lock: asyncio.Lock
    control: bool
    sender: asyncio.Task | None = None


class SessionHost:
    """Asyncio wrapper: wall-clock tick scheduling, broadcast, client registry."""

    def __init__(self, scenario: sim.Scenario, include_links: bool = True, log_dir: str | None = None):
        self.core = SessionCore(scenario, include_links)
        self.log_dir = pathlib.Path(log_dir) if log_dir else None
        self.paused = False
        self.clients: list[_Client] = []
        self._tasks: list[asyncio.Task] = []

    @property
    def robot_name(self) -> str:
        return self.core.scenario.robot.name

    def start(self):
        self._tasks = [
            asyncio.create_task(self._tick_loop()),
            asyncio.create_task(self._broadcast_loop()),
        ]

    async def stop(self):
        for task in self._tasks:
            task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await task
        self._tasks = []
        self.write_logs()

    def write_logs(self):
        if self.log_dir is None:
            return
        self.log_dir.mkdir(parents=True, exist_ok=True)
        sim.write_csv(self.core.records, self.log_dir / "session_log.csv")
        scenario = self.core.trace_scenario()
        with open(self.log_dir / "session_trace.json", "w") as f:
            json.dump(sim.scenario_to_json(scenario), f, indent=1)

    async def _tick_loop(self):
        loop = asyncio.get_running_loop()
        next_t = loop.time()
        while True:
            now = loop.time()
            if next_t > now:
                await asyncio.sleep(next_t - now)
            if not self.paused:
                self.core.advance_tick()
            next_t += self.core.dt_sim
            # when a solve overruns, reschedule from now instead of bursting
            if next_t < loop.time() - 0.25:
                next_t = loop.time()

    async def _broadcast_loop(self):
        while True:
            await asyncio.sleep(1.0 / BROADCAST_HZ)
            if not self.clients:
                continue
            frame = self.core.snapshot(self.paused).model_dump_json(exclude_none=True)
            for client in list(self.clients):
                if client.queue.full():
                    with contextlib.suppress(asyncio.QueueEmpty):
                        client.queue.get_nowait()  # newest wins
                client.queue.put_nowait(frame)

    async def _sender(self, client: _Client):
        try:
            while True:
                frame = await client.queue.get()
                async with client.send_lock:
                    await asyncio.wait_for(client.ws.send_text(frame), timeout=SEND_TIMEOUT_S)
        except (asyncio.TimeoutError, Exception):
            self.disconnect(client)

    def connect(self, ws: WebSocket) -> _Client:
        client = _Client(ws=ws, queue=asyncio.Queue(maxsize=1), send_lock=asyncio.Lock(),
                         control=not any(c.control for c in self.clients))
        client.sender = asyncio.create_task(self._sender(client))
        self.clients.append(client)
        return client

    def disconnect(self, client: _Client):
        if client in self.clients:
            self.clients.remove(client)
            if client.sender is not None:
                client.sender.cancel()
            if client.control and self.clients:
                self.clients[0].control = True

    def handle_client_message(self, client: _Client, raw: str) -> ErrorMsg | None:
        try:
            payload = json.loads(raw)
        except json.JSONDecodeError:
            return ErrorMsg(code="bad_message", detail="payload is not valid JSON")
        try:
            msg = ClientEnvelope(msg=payload).msg
        except ValidationError as exc:
            return ErrorMsg(code="bad_message", detail=exc.errors()[0].get("msg", "invalid message"))
        if not client.control:
            return ErrorMsg(code="not_authorized", detail="another client holds control")
        if isinstance(msg, PauseMsg):
            self.paused = msg.on
            return None
        try:
            self.core.handle(msg)
        except SessionError as exc:
            return ErrorMsg(code=exc.code, detail=exc.detail)
        return None


def create_app(scenario: sim.Scenario, include_links: bool = True, log_dir: str | None = None,
               static_dir: str | None = None) -> FastAPI:
    import contextlib as _ctx

    @_ctx.asynccontextmanager
    async def lifespan(app: FastAPI):
        host.start()
        yield
        await host.stop()

    host = SessionHost(scenario, include_links=include_links, log_dir=log_dir)
    app = FastAPI(title="teleop-mpc", lifespan=lifespan)
    app.state.host = host

    @app.get("/api/health")
    def health():
        return {
            "status": "ok",
            "robot": host.robot_name,
            "horizon": host.core.scenario.ocp.horizon,
            "clients": len(host.clients),
            "paused": host.paused,
        }

    @app.get("/api/presets")
    def presets():
        out = []
        for name in sorted(kinematics.PRESETS):
            model = kinematics.preset(name)
            out.append({"name": name, "reach_m": kinematics.max_reach(model)})
        return out

    @app.post("/api/scenarios/run")
    def run_scenario_endpoint(payload: dict):
        try:
            scen = sim.scenario_from_json(payload)
            records = sim.run_scenario(scen)
        except sim.ScenarioInvalid as exc:
            return JSONResponse(status_code=422, content={"error": str(exc)})
        return {
            "name": scen.name,
            "columns": sim.CSV_COLUMNS,
            "records": [sim.record_row(r) for r in records],
        }

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        client = host.connect(ws)
        hello = HelloMsg(robot=host.robot_name, H=host.core.scenario.ocp.horizon, control=client.control)
        async with client.send_lock:
            await ws.send_text(hello.model_dump_json())
        try:
            while True:
                raw = await ws.receive_text()
                err = host.handle_client_message(client, raw)
                if err is not None:
                    async with client.send_lock:
                        await ws.send_text(err.model_dump_json())
        except WebSocketDisconnect:
            pass
        finally:
            host.disconnect(client)

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
