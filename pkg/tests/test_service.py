import json
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from teleop_mpc import geometry, retarget, scenarios, sim
from teleop_mpc.protocol import (
    CalibrateMsg,
    ClutchMsg,
    InputPoseMsg,
    ResetMsg,
    SetModeMsg,
)
from teleop_mpc.service import SessionCore, SessionError, create_app


def session_scenario():
    s = scenarios.build("mirror")
    # live sessions ignore the scripted stream; drop the filter for exactness
    return sim.Scenario(**{**s.__dict__, "input_filter": sim.FilterConfig(enabled=False)})


def make_core():
    return SessionCore(session_scenario())


def pose_msg(pos, quat=(1.0, 0.0, 0.0, 0.0)):
    return InputPoseMsg(type="input_pose", pos=list(pos), quat=list(quat))


class TestSessionCore:
    def test_bad_quaternion_rejected(self):
        core = make_core()
        with pytest.raises(SessionError) as err:
            core.handle(pose_msg([0, 0, 0], (1.0, 0.1, 0.0, 0.0)))
        assert err.value.code == "bad_quaternion"

    def test_double_engage_rejected(self):
        core = make_core()
        core.handle(ClutchMsg(type="clutch", engaged=True))
        with pytest.raises(SessionError) as err:
            core.handle(ClutchMsg(type="clutch", engaged=True))
        assert err.value.code == "already_engaged"

    def test_release_without_engage_rejected(self):
        core = make_core()
        with pytest.raises(SessionError) as err:
            core.handle(ClutchMsg(type="clutch", engaged=False))
        assert err.value.code == "not_engaged"

    def test_calibrate_requires_calibrated_strategies(self):
        core = make_core()
        core.handle(SetModeMsg(type="set_mode", mode="relative",
                               input_translation="world_identity", robot_translation="world_identity"))
        with pytest.raises(SessionError) as err:
            core.handle(CalibrateMsg(type="calibrate", r_tI=[1, 0, 0, 0], r_tM=[1, 0, 0, 0]))
        assert err.value.code == "strategy_mismatch"

    def test_bad_strategy_name(self):
        core = make_core()
        with pytest.raises(SessionError) as err:
            core.handle(SetModeMsg(type="set_mode", mode="relative", input_rotation="warp"))
        assert err.value.code == "bad_strategy"

    def test_illegal_tree_strategy(self):
        core = make_core()
        with pytest.raises(SessionError) as err:
            core.handle(SetModeMsg(type="set_mode", mode="relative", robot_rotation="device_at_clutch"))
        assert err.value.code == "bad_strategy"

    def test_set_mode_applies_at_tick(self):
        core = make_core()
        core.handle(SetModeMsg(type="set_mode", mode="absolute"))
        assert core.loop.retargeter.cfg.mode == "relative"  # not yet applied
        core.advance_tick()
        assert core.loop.retargeter.cfg.mode == "absolute"
        snap = core.snapshot(paused=False)
        assert snap.mode == "absolute"

    def test_reset_restores_initial_state(self):
        core = make_core()
        core.handle(ClutchMsg(type="clutch", engaged=True))
        core.handle(pose_msg([0.2, 0, 0]))
        for _ in range(30):
            core.advance_tick()
        moved = core.loop.x.q.copy()
        core.handle(ResetMsg(type="reset"))
        core.advance_tick()
        np.testing.assert_array_equal(core.loop.x.q, np.asarray(scenarios.HOME_Q))
        assert not core.loop.retargeter.engaged
        assert core.loop.tick_index == 1
        assert np.abs(moved - core.loop.x.q).max() > 0  # it had actually moved

    def test_snapshot_contract(self):
        core = make_core()
        core.advance_tick()
        snap = core.snapshot(paused=False)
        assert len(snap.planned_path) == core.scenario.ocp.horizon + 1
        assert set(snap.frames) == {"t_I", "r_I", "t_M", "r_M"}
        assert len(snap.q) == 6 and len(snap.qd) == 6
        assert snap.links is not None and len(snap.links) == 7
        assert snap.solve.converged

    def test_snapshot_links_flag(self):
        core = SessionCore(session_scenario(), include_links=False)
        core.advance_tick()
        assert core.snapshot(paused=False).links is None

    def test_record_replay_equivalence(self):
        core = make_core()
        # scripted: engage, drag +x, rotate, release; messages between ticks
        core.advance_tick()
        core.handle(ClutchMsg(type="clutch", engaged=True))
        for i in range(40):
            x = 0.1 * (i + 1) / 40
            quat = geometry.quat_from_rotation(geometry.rot_x(0.5 * (i + 1) / 40))
            core.handle(pose_msg([x, 0, 0], tuple(quat)))
            core.advance_tick()
        core.handle(ClutchMsg(type="clutch", engaged=False))
        for _ in range(20):
            core.advance_tick()

        replay = sim.run_scenario(core.trace_scenario())
        assert len(replay) == len(core.records)
        worst = 0.0
        for a, b in zip(core.records, replay):
            worst = max(worst, np.abs(a.q - b.q).max(), np.abs(a.qd - b.qd).max(),
                        np.abs(a.ee.matrix() - b.ee.matrix()).max(),
                        np.abs(a.desired.matrix() - b.desired.matrix()).max())
        assert worst < 1e-9

    def test_multiple_samples_in_one_tick_stay_ordered(self):
        core = make_core()
        core.handle(ClutchMsg(type="clutch", engaged=True))
        core.handle(pose_msg([0.05, 0, 0]))
        core.handle(pose_msg([0.10, 0, 0]))
        core.advance_tick()
        stamps = [s.t for s in core.trace]
        assert stamps == sorted(stamps)
        assert len(set(stamps)) == len(stamps)
        replay = sim.run_scenario(core.trace_scenario())
        np.testing.assert_allclose(replay[-1].desired.matrix(), core.records[-1].desired.matrix(), atol=1e-12)


@pytest.fixture()
def client(tmp_path):
    app = create_app(session_scenario(), log_dir=str(tmp_path / "logs"))
    with TestClient(app) as c:
        c.log_dir = tmp_path / "logs"
        yield c


class TestHttpApi:
    def test_health(self, client):
        body = client.get("/api/health").json()
        assert body["status"] == "ok"
        assert body["robot"] == "ur5e"
        assert body["horizon"] == 10

    def test_presets(self, client):
        body = client.get("/api/presets").json()
        assert body[0]["name"] == "ur5e"
        assert body[0]["reach_m"] == pytest.approx(1.1498)

    def test_run_scenario_endpoint(self, client):
        scenario = scenarios.build("idle")
        payload = sim.scenario_to_json(scenario)
        payload["duration_s"] = 0.3
        body = client.post("/api/scenarios/run", json=payload).json()
        assert body["columns"] == list(sim.CSV_COLUMNS)
        assert len(body["records"]) == 30

    def test_run_scenario_invalid(self, client):
        resp = client.post("/api/scenarios/run", json={"version": 1, "duration_s": -1})
        assert resp.status_code == 422
        assert "duration" in resp.json()["error"]


class TestWebsocket:
    def test_hello_and_state_flow(self, client):
        with client.websocket_connect("/ws") as ws:
            hello = ws.receive_json()
            assert hello == {"type": "hello", "version": 1, "robot": "ur5e", "H": 10, "control": True}
            frame = ws.receive_json()
            assert frame["type"] == "state"
            assert len(frame["planned_path"]) == 11
            assert frame["strategies"]["input_rotation"] == "device_at_clutch"

    def test_error_frames(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.receive_json()
            ws.send_text("{broken")
            assert self._next_of_type(ws, "error")["code"] == "bad_message"
            ws.send_text(json.dumps({"type": "input_pose", "pos": [0, 0, 0], "quat": [2, 0, 0, 0]}))
            assert self._next_of_type(ws, "error")["code"] == "bad_quaternion"
            ws.send_text(json.dumps({"type": "clutch", "engaged": False}))
            assert self._next_of_type(ws, "error")["code"] == "not_engaged"

    @staticmethod
    def _next_of_type(ws, type_name, tries=50):
        for _ in range(tries):
            msg = ws.receive_json()
            if msg["type"] == type_name:
                return msg
        raise AssertionError(f"no {type_name} frame received")

    def test_second_client_is_not_authorized(self, client):
        with client.websocket_connect("/ws") as ws1:
            assert ws1.receive_json()["control"] is True
            with client.websocket_connect("/ws") as ws2:
                assert ws2.receive_json()["control"] is False
                ws2.send_text(json.dumps({"type": "clutch", "engaged": True}))
                assert self._next_of_type(ws2, "error")["code"] == "not_authorized"

    def test_pause_stops_plant(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.receive_json()
            ws.send_text(json.dumps({"type": "pause", "on": True}))
            time.sleep(0.1)
            f1 = self._next_of_type(ws, "state")
            time.sleep(0.2)
            f2 = self._next_of_type(ws, "state")
            assert f2["paused"] and f1["t"] == f2["t"] and f1["q"] == f2["q"]
            ws.send_text(json.dumps({"type": "pause", "on": False}))
            deadline = time.monotonic() + 3.0
            while time.monotonic() < deadline:
                f3 = self._next_of_type(ws, "state")
                if f3["t"] > f2["t"]:
                    break
            assert f3["t"] > f2["t"]

    def test_session_log_written_on_shutdown(self, tmp_path):
        app = create_app(session_scenario(), log_dir=str(tmp_path / "logs"))
        with TestClient(app) as c:
            with c.websocket_connect("/ws") as ws:
                ws.receive_json()
                ws.send_text(json.dumps({"type": "clutch", "engaged": True}))
                time.sleep(0.3)
        log = tmp_path / "logs" / "session_log.csv"
        trace = tmp_path / "logs" / "session_trace.json"
        assert log.exists() and trace.exists()
        header = log.read_text().split("\n")[0]
        assert header == ",".join(sim.CSV_COLUMNS)
        scenario = sim.scenario_from_json(json.loads(trace.read_text()))
        assert any(s.clutch for s in scenario.input_stream)
