import math

import numpy as np
import pytest

from teleop_mpc import geometry, kinematics
from teleop_mpc.checks import ZERO_CONFIG_POSITION, fk_oracle_matrix
from teleop_mpc.kinematics import DHRow, RobotModel, ur5e


@pytest.fixture(scope="module")
def model():
    return ur5e()


class TestForwardKinematics:
    def test_zero_config_position(self, model):
        fk = kinematics.forward_kinematics(model, np.zeros(6))
        np.testing.assert_allclose(fk.pos, ZERO_CONFIG_POSITION, atol=1e-4)

    def test_zero_config_closed_form(self, model):
        # x = a2 + a3, y = -(d4 + d6), z = d1 - d5 for the UR5e table
        dh = model.dh
        fk = kinematics.forward_kinematics(model, np.zeros(6))
        np.testing.assert_allclose(
            fk.pos, [dh[1].a + dh[2].a, -(dh[3].d + dh[5].d), dh[0].d - dh[4].d], atol=1e-15
        )

    def test_matches_matrix_chain_oracle(self, model):
        rng = np.random.default_rng(0)
        worst = 0.0
        for _ in range(300):
            q = rng.uniform(-math.pi, math.pi, 6)
            fk = kinematics.forward_kinematics(model, q).matrix()
            worst = max(worst, float(np.abs(fk - fk_oracle_matrix(model, q)).max()))
        assert worst < 1e-12

    def test_output_is_valid_transform(self, model):
        rng = np.random.default_rng(1)
        for _ in range(100):
            fk = kinematics.forward_kinematics(model, rng.uniform(-math.pi, math.pi, 6))
            assert geometry.is_rotation(fk.rot)

    def test_base_joint_rotates_about_z(self, model):
        rng = np.random.default_rng(2)
        q = rng.uniform(-1.0, 1.0, 6)
        theta = 0.83
        p0 = kinematics.forward_kinematics(model, q).pos
        q2 = q.copy()
        q2[0] += theta
        p1 = kinematics.forward_kinematics(model, q2).pos
        np.testing.assert_allclose(p1, geometry.rot_z(theta) @ p0, atol=1e-9)

    def test_batch_matches_single(self, model):
        rng = np.random.default_rng(3)
        qs = rng.uniform(-math.pi, math.pi, (20, 6))
        pos, rot, jp, jw = kinematics.fk_batch(model, qs)
        for i, q in enumerate(qs):
            fk = kinematics.forward_kinematics(model, q)
            np.testing.assert_allclose(pos[i], fk.pos, atol=1e-14)
            np.testing.assert_allclose(rot[i], fk.rot, atol=1e-14)
            np.testing.assert_allclose(jp[i], kinematics.position_jacobian(model, q), atol=1e-14)
            np.testing.assert_allclose(jw[i], kinematics.angular_jacobian(model, q), atol=1e-14)


class TestJacobians:
    def _fd_position_jacobian(self, model, q, h=1e-6):
        jac = np.empty((3, 6))
        for i in range(6):
            qp, qm = q.copy(), q.copy()
            qp[i] += h
            qm[i] -= h
            jac[:, i] = (
                kinematics.forward_kinematics(model, qp).pos - kinematics.forward_kinematics(model, qm).pos
            ) / (2 * h)
        return jac

    def test_position_jacobian_zero_config(self, model):
        q = np.zeros(6)
        jac = kinematics.position_jacobian(model, q)
        fd = self._fd_position_jacobian(model, q)
        np.testing.assert_allclose(jac, fd, rtol=1e-5, atol=1e-7)

    def test_position_jacobian_random(self, model):
        rng = np.random.default_rng(4)
        for _ in range(100):
            q = rng.uniform(-math.pi, math.pi, 6)
            jac = kinematics.position_jacobian(model, q)
            fd = self._fd_position_jacobian(model, q)
            assert np.abs(jac - fd).max() / max(1.0, np.abs(fd).max()) < 1e-5

    def test_orientation_jacobian_random(self, model):
        rng = np.random.default_rng(5)
        h = 1e-6
        for _ in range(50):
            q = rng.uniform(-math.pi, math.pi, 6)
            desired = geometry.quat_from_rotation(
                kinematics.forward_kinematics(model, rng.uniform(-1, 1, 6)).rot
            )
            jac = kinematics.orientation_error_jacobian(model, q, desired)
            fd = np.empty((3, 6))
            for i in range(6):
                qp, qm = q.copy(), q.copy()
                qp[i] += h
                qm[i] -= h
                ep = geometry.quat_error(
                    desired, geometry.quat_from_rotation(kinematics.forward_kinematics(model, qp).rot)
                )
                em = geometry.quat_error(
                    desired, geometry.quat_from_rotation(kinematics.forward_kinematics(model, qm).rot)
                )
                fd[:, i] = (ep - em) / (2 * h)
            assert np.abs(jac - fd).max() / max(1.0, np.abs(fd).max()) < 1e-5

    def test_last_joint_position_column_zero(self, model):
        # the tool point lies on the last joint axis, so moving it cannot
        # translate the end effector
        rng = np.random.default_rng(6)
        for _ in range(20):
            jac = kinematics.position_jacobian(model, rng.uniform(-math.pi, math.pi, 6))
            np.testing.assert_allclose(jac[:, 5], np.zeros(3), atol=1e-9)


class TestReach:
    def test_ur5e_value(self, model):
        assert kinematics.max_reach(model) == pytest.approx(1.1498, abs=1e-12)

    def test_zero_links(self):
        dh = tuple(DHRow(0.0, 0.0, 0.0) for _ in range(6))
        m = RobotModel(dh, -np.ones(6), np.ones(6), -np.ones(6), np.ones(6), -np.ones(6), np.ones(6))
        assert kinematics.max_reach(m) == 0.0

    def test_scaling_doubles(self, model):
        dh = tuple(DHRow(2 * r.a, 2 * r.d, r.alpha) for r in model.dh)
        m = RobotModel(dh, model.q_min, model.q_max, model.qd_min, model.qd_max, model.u_min, model.u_max)
        assert kinematics.max_reach(m) == pytest.approx(2 * kinematics.max_reach(model), abs=1e-12)

    def test_center_at_shoulder(self, model):
        np.testing.assert_allclose(kinematics.reach_center(model), [0, 0, model.dh[0].d], atol=0)


class TestModel:
    def test_preset_lookup(self):
        assert kinematics.preset("ur5e").name == "ur5e"
        with pytest.raises(KeyError):
            kinematics.preset("ur99")

    def test_requires_six_rows(self, model):
        with pytest.raises(ValueError):
            RobotModel(model.dh[:5], model.q_min, model.q_max, model.qd_min, model.qd_max,
                       model.u_min, model.u_max)

    def test_requires_ordered_bounds(self, model):
        with pytest.raises(ValueError):
            RobotModel(model.dh, model.q_max, model.q_min, model.qd_min, model.qd_max,
                       model.u_min, model.u_max)
