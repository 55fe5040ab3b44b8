import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qisynth.qpsolve import QP, Settings, kkt_residuals, solve
from oracles import active_set_qp


def random_qp(rng, n, meq, min_):
    M = rng.standard_normal((n, n))
    P = M @ M.T + 0.1 * np.eye(n)
    q = rng.standard_normal(n)
    A = rng.standard_normal((meq, n))
    G = rng.standard_normal((min_, n))
    xf = rng.standard_normal(n)
    b = A @ xf
    h = G @ xf + rng.random(min_)
    return QP(P, q, A, b, G, h)


def test_scalar_bound():
    sol = solve(QP([[2.0]], [0.0], np.zeros((0, 1)), [], [[-1.0]], [-1.0]))
    assert sol.status == "optimal"
    assert sol.x == pytest.approx([1.0], abs=1e-8)
    assert sol.objective == pytest.approx(1.0, abs=1e-8)
    assert sol.y_in == pytest.approx([2.0], abs=1e-6)


def test_equality_only():
    sol = solve(QP(2 * np.eye(3), np.zeros(3), np.ones((1, 3)), [1.0], np.zeros((0, 3)), []))
    assert sol.status == "optimal"
    assert np.allclose(sol.x, 1 / 3, atol=1e-8)


def test_unconstrained_and_constant():
    P = np.array([[2.0, 0.5], [0.5, 1.0]])
    q = np.array([1.0, -1.0])
    sol = solve(QP(P, q, np.zeros((0, 2)), [], np.zeros((0, 2)), [], const=3.0))
    assert np.allclose(sol.x, np.linalg.solve(P, -q), atol=1e-10)
    assert sol.objective == pytest.approx(0.5 * sol.x @ P @ sol.x + q @ sol.x + 3.0)


def test_infeasible_certificate():
    # x <= -1 and -x <= -1
    qp = QP([[1.0]], [0.0], np.zeros((0, 1)), [], [[1.0], [-1.0]], [-1.0, -1.0])
    sol = solve(qp)
    assert sol.status == "infeasible"
    cert = sol.certificate
    y_in = cert[qp.A.shape[0]:]
    assert np.all(y_in >= -1e-9)
    assert np.allclose(qp.G.T @ y_in, 0.0, atol=1e-6 * np.abs(y_in).max())
    assert qp.h @ y_in < 0


def test_infeasible_equalities():
    qp = QP(np.eye(2), np.zeros(2), [[1.0, 1.0], [1.0, 1.0]], [0.0, 1.0], np.zeros((0, 2)), [])
    assert solve(qp).status == "infeasible"


def test_unbounded():
    # linear objective, unbounded below along x
    qp = QP(np.zeros((1, 1)), [1.0], np.zeros((0, 1)), [], [[1.0]], [0.0])
    assert solve(qp).status == "unbounded"


def test_max_iters_reported():
    rng = np.random.default_rng(0)
    qp = random_qp(rng, 20, 3, 30)
    sol = solve(qp, Settings(max_iters=1, polish=False))
    assert sol.status == "max_iters"


def test_kkt_residuals_of_exact_solution():
    qp = QP([[2.0]], [0.0], np.zeros((0, 1)), [], [[-1.0]], [-1.0])
    res = kkt_residuals(qp, [1.0], [], [2.0])
    assert res == {"primal": 0.0, "dual": 0.0, "gap": 0.0}
    bad = kkt_residuals(qp, [0.0], [], [-1.0])
    assert bad["primal"] == 1.0 and bad["dual"] >= 1.0


def test_env_settings(monkeypatch):
    monkeypatch.setenv("DCS_SOLVER_EPS_ABS", "1e-8")
    monkeypatch.setenv("DCS_SOLVER_MAX_ITERS", "123")
    s = Settings.from_env(eps_rel=1e-9)
    assert (s.eps_abs, s.eps_rel, s.max_iters) == (1e-8, 1e-9, 123)
    assert Settings.from_env(max_iters=None).max_iters == 123


def test_deterministic():
    rng = np.random.default_rng(4)
    qp = random_qp(rng, 15, 2, 20)
    a, b = solve(qp), solve(qp)
    assert np.array_equal(a.x, b.x) and a.iterations == b.iterations


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 20), st.integers(0, 4), st.integers(0, 25))
def test_matches_active_set_oracle(seed, n, meq, min_):
    rng = np.random.default_rng(seed)
    meq = min(meq, n - 1)
    qp = random_qp(rng, n, meq, min_)
    sol = solve(qp)
    assert sol.status == "optimal"
    x_ref, _, _ = active_set_qp(qp.P, qp.q, qp.A, qp.b, qp.G, qp.h)
    assert np.max(np.abs(sol.x - x_ref)) <= 1e-5 * max(1.0, np.max(np.abs(x_ref)))
    res = kkt_residuals(qp, sol.x, sol.y_eq, sol.y_in)
    assert max(res.values()) <= 1e-6 * max(1.0, abs(sol.objective))
