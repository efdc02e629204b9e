import numpy as np
import pytest

from teleop_mpc.qp import solve_qp


def random_psd(rng, n, cond=10.0):
    a = rng.normal(size=(n, n))
    q, _ = np.linalg.qr(a)
    eig = np.linspace(1.0, cond, n)
    return q @ np.diag(eig) @ q.T


def kkt_ok(h, g, a, b, res, tol=1e-7):
    x, lam = res.x, res.multipliers
    if a.size:
        assert np.max(a @ x - b) <= tol, "primal infeasible"
        assert np.min(lam) >= -tol, "negative multiplier"
        assert abs(lam @ (a @ x - b)) <= 1e-6, "complementarity"
        stat = h @ x + g + a.T @ lam
    else:
        stat = h @ x + g
    assert np.linalg.norm(stat, np.inf) <= 1e-6, f"stationarity {np.linalg.norm(stat, np.inf)}"


def test_unconstrained_matches_linear_solve():
    rng = np.random.default_rng(0)
    h = random_psd(rng, 8)
    g = rng.normal(size=8)
    res = solve_qp(h, g, np.zeros((0, 8)), np.zeros(0), np.zeros(8))
    np.testing.assert_allclose(res.x, -np.linalg.solve(h, g), atol=1e-10)
    assert res.status == "optimal"


def test_box_projection():
    # min ||x - c||^2 over box [-1, 1]: solution is clamped c
    n = 5
    h = 2.0 * np.eye(n)
    c = np.array([2.0, -3.0, 0.5, 1.0, -0.2])
    g = -2.0 * c
    a = np.vstack([np.eye(n), -np.eye(n)])
    b = np.ones(2 * n)
    res = solve_qp(h, g, a, b, np.zeros(n))
    np.testing.assert_allclose(res.x, np.clip(c, -1, 1), atol=1e-10)
    kkt_ok(h, g, a, b, res)


def test_active_constraint_multiplier():
    # min x^2 s.t. x <= -1 (written as -x <= -1 to force activity upward)
    h = np.array([[2.0]])
    g = np.array([0.0])
    a = np.array([[-1.0]])
    b = np.array([-1.0])
    res = solve_qp(h, g, a, b, np.array([2.0]))
    np.testing.assert_allclose(res.x, [1.0], atol=1e-10)
    assert res.multipliers[0] == pytest.approx(2.0, abs=1e-8)


def test_infeasible_start_rejected():
    h = np.eye(2)
    a = np.eye(2)
    b = -np.ones(2)
    with pytest.raises(ValueError):
        solve_qp(h, np.zeros(2), a, b, np.zeros(2))


def test_random_problems_satisfy_kkt():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = rng.integers(3, 12)
        m = int(rng.integers(1, 3 * n))
        h = random_psd(rng, n, cond=50.0)
        g = rng.normal(size=n)
        a = rng.normal(size=(m, n))
        # make x0 = 0 feasible with margin
        b = a @ np.zeros(n) + rng.uniform(0.1, 1.0, m)
        res = solve_qp(h, g, a, b, np.zeros(n))
        assert res.status == "optimal"
        kkt_ok(h, g, a, b, res)


def test_matches_brute_force_active_set_enumeration():
    rng = np.random.default_rng(2)
    for _ in range(20):
        n, m = 3, 4
        h = random_psd(rng, n)
        g = rng.normal(size=n)
        a = rng.normal(size=(m, n))
        b = rng.uniform(0.05, 0.5, m)
        res = solve_qp(h, g, a, b, np.zeros(n))
        # enumerate all active subsets, solve equality QPs, keep feasible best
        import itertools

        best = None
        for k in range(m + 1):
            for subset in itertools.combinations(range(m), k):
                aw = a[list(subset)]
                kkt = np.block([[h, aw.T], [aw, np.zeros((k, k))]])
                rhs = np.concatenate([-g, b[list(subset)]])
                try:
                    sol = np.linalg.solve(kkt, rhs)
                except np.linalg.LinAlgError:
                    continue
                x = sol[:n]
                if np.max(a @ x - b) > 1e-9:
                    continue
                f = 0.5 * x @ h @ x + g @ x
                if best is None or f < best[0]:
                    best = (f, x)
        f_solver = 0.5 * res.x @ h @ res.x + g @ res.x
        assert f_solver == pytest.approx(best[0], abs=1e-8)


def test_warm_set_gives_same_answer():
    rng = np.random.default_rng(3)
    n, m = 6, 20
    h = random_psd(rng, n)
    g = rng.normal(size=n)
    a = rng.normal(size=(m, n))
    b = rng.uniform(0.01, 0.3, m)
    cold = solve_qp(h, g, a, b, np.zeros(n))
    warm = solve_qp(h, g, a, b, np.zeros(n), warm_set=cold.active)
    np.testing.assert_allclose(warm.x, cold.x, atol=1e-9)
    assert warm.iterations <= cold.iterations
