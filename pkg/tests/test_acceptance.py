"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import time

import numpy as np

from qisynth import io
from qisynth.binmat import BinaryMatrix, member
from qisynth.infostruct import big_S, comm_propagation_structure, constant_structure
from qisynth.lifted import ConstraintSpec, Plant, build_lifted
from qisynth.policy import (DisturbanceFeedbackPolicy, OutputFeedbackController, escape_witness,
                            l_to_q, q_to_l, scale_aware_tol)
from qisynth.qi import (qi_oracle, qi_test, qi_test_comm, qi_test_general, qi_test_sensing,
                        targeted_counterexample)
from qisynth.qpsolve import QP, kkt_residuals, solve
from qisynth.robust import CostSpec, synthesize
from qisynth.sim import rollout_disturbance_feedback, rollout_output_feedback, verify_robust
from conftest import FIXTURES, random_causal, random_custom, random_pattern, random_plant
from oracles import active_set_qp

RESULTS: dict[int, str] = {}


def verdict(k: int, ok: bool, detail: str) -> None:
    line = f"Criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS[k] = line
    print(line)
    assert ok, line


def rel_err(a, b):
    return float(np.max(np.abs(a - b), initial=0.0) / max(1.0, np.max(np.abs(b), initial=0.0)))


def test_criterion_1_example_structure():
    prob = io.load_problem(FIXTURES / "example1.json")
    t0 = time.perf_counter()
    rep = qi_test(prob.info, prob.plant)
    dt = time.perf_counter() - t0
    n = len(rep.conditions)
    ok = rep.quadratically_invariant and n == 5 and all(c.holds for c in rep.conditions) and dt < 0.1
    verdict(1, ok, f"{n} conditions, QI={rep.quadratically_invariant}, {dt * 1e3:.2f} ms")


def _unit_diag(rng, m):
    Z = rng.random((m, m)) < 0.4
    np.fill_diagonal(Z, True)
    return BinaryMatrix(Z)


def test_criterion_2_reduced_tests_agree():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    count = disagree = 0
    verdicts = set()
    for _ in range(200):
        n, m, p = (int(x) for x in rng.integers(1, 5, 3))
        pl = random_plant(rng, n, m, p, density=float(rng.uniform(0.2, 0.8)))
        S = random_pattern(rng, m, p, float(rng.uniform(0.3, 0.9)))
        N = int(rng.integers(n + 1, 7)) if n + 1 <= 6 else 6
        a = qi_test_general(constant_structure(S, N), pl).quadratically_invariant
        b = qi_test_sensing(S, pl).quadratically_invariant
        disagree += a != b
        verdicts.add(a)
        count += 1
    for _ in range(200):
        n, m, p = (int(x) for x in rng.integers(1, 5, 3))
        pl = random_plant(rng, n, m, p, density=float(rng.uniform(0.2, 0.8)))
        S = random_pattern(rng, m, p, float(rng.uniform(0.3, 0.9)))
        Z = _unit_diag(rng, m)
        N = int(rng.integers(1, 7))
        a = qi_test_general(comm_propagation_structure(S, Z, N), pl).quadratically_invariant
        b = qi_test_comm(S, Z, pl, N).quadratically_invariant
        disagree += a != b
        verdicts.add(a)
        count += 1
    dt = time.perf_counter() - t0
    ok = disagree == 0 and dt < 30 and verdicts == {True, False}
    verdict(2, ok, f"{count} instances, {disagree} disagreements, {dt:.2f} s")


def test_criterion_3_oracle_consistency():
    rng = np.random.default_rng(3)
    qi_count = non_qi = failures = exceptions = 0
    for _ in range(120):
        try:
            n, m, p = (int(x) for x in rng.integers(1, 4, 3))
            N = int(rng.integers(1, 5))
            pl = random_plant(rng, n, m, p, density=0.4)
            info = random_custom(rng, N, m, p, density=float(rng.uniform(0.3, 0.8)))
            rep = qi_test_general(info, pl)
            if rep.quadratically_invariant:
                qi_count += 1
                failures += not qi_oracle(info, pl, trials=500, seed=0, targeted=False).consistent
            else:
                non_qi += 1
                lifted = build_lifted(pl, N)
                bigS = big_S(info)
                for cond in rep.failing:
                    L, Lp, _ = targeted_counterexample(info, pl, cond)
                    failures += member(L @ lifted.CB @ Lp, bigS, 0.0)
        except Exception:  # noqa: BLE001 - counted, not hidden
            exceptions += 1
    ok = failures == 0 and exceptions == 0 and qi_count > 0 and non_qi > 0
    verdict(3, ok, f"{qi_count} QI / {non_qi} non-QI instances, {failures} mismatches, "
                   f"{exceptions} exceptions")


SIZE_CLASSES = [(1, 1, 1, 2), (2, 2, 2, 3), (3, 2, 3, 4), (4, 3, 2, 6), (4, 4, 4, 5)]


def test_criterion_4_policy_round_trips():
    rng = np.random.default_rng(4)
    worst_map = worst_traj = 0.0
    for n, m, p, N in SIZE_CLASSES:
        pl = Plant(rng.standard_normal((n, n)) / np.sqrt(n), rng.standard_normal((n, m)),
                   rng.standard_normal((p, n)), np.eye(n), 0.1 * rng.standard_normal((p, n)))
        lifted = build_lifted(pl, N)
        for _ in range(100):
            x0 = rng.standard_normal(n)
            L, g = random_causal(rng, N, m, p)
            ctrl = OutputFeedbackController(L, g, N, m, p)
            pol = l_to_q(ctrl, lifted, x0)
            back = q_to_l(pol, lifted, x0)
            Q, v = random_causal(rng, N, m, p)
            pol2 = DisturbanceFeedbackPolicy(Q, v, N, m, p)
            back2 = l_to_q(q_to_l(pol2, lifted, x0), lifted, x0)
            worst_map = max(worst_map, rel_err(back.L, L), rel_err(back.g, g),
                            rel_err(back2.Q, Q), rel_err(back2.v, v))
            w = rng.standard_normal((N, n))
            a = rollout_output_feedback(pl, ctrl, x0, w)
            b = rollout_disturbance_feedback(pl, pol, lifted, x0, w)
            worst_traj = max(worst_traj, rel_err(b.inputs, a.inputs))
    ok = worst_map <= 1e-8 and worst_traj <= 1e-8
    verdict(4, ok, f"{100 * len(SIZE_CLASSES)} controllers per direction, round-trip rel err "
                   f"{worst_map:.1e}, input trajectory rel err {worst_traj:.1e}")


def test_criterion_5_sparsity_transfer():
    rng = np.random.default_rng(5)
    qi_ok = qi_seen = escaped = non_qi_seen = 0
    for _ in range(150):
        n, m, p = (int(x) for x in rng.integers(1, 4, 3))
        N = int(rng.integers(2, 5))
        pl = random_plant(rng, n, m, p, density=0.5)
        info = random_custom(rng, N, m, p, density=0.5)
        lifted = build_lifted(pl, N)
        bigS = big_S(info)
        if qi_test_general(info, pl).quadratically_invariant:
            qi_seen += 1
            L = np.where(bigS.bits, rng.standard_normal(bigS.shape), 0.0)
            g = np.zeros(m * (N + 1))
            Q = l_to_q(OutputFeedbackController(L, g, N, m, p), lifted, np.zeros(n)).Q
            qi_ok += member(Q, bigS, scale_aware_tol(Q))
        else:
            non_qi_seen += 1
            L, Q = escape_witness(info, pl)
            escaped += member(L, bigS, 0.0) and not member(Q, bigS, scale_aware_tol(Q))
    ok = qi_seen > 0 and non_qi_seen > 0 and qi_ok == qi_seen and escaped == non_qi_seen
    verdict(5, ok, f"QI: {qi_ok}/{qi_seen} stay in the subspace; non-QI: {escaped}/{non_qi_seen} "
                   f"witnesses escape")


def test_criterion_6_robust_synthesis():
    prob = io.load_problem(FIXTURES / "synthesis_2x2.json")
    t0 = time.perf_counter()
    res = synthesize(prob.plant, prob.info, prob.constraints, prob.cost, prob.x0)
    rep = verify_robust(prob.plant, res.controller, prob.constraints, prob.x0, method="vertices") \
        if res.status == "optimal" else None
    dt = time.perf_counter() - t0
    ok = rep is not None and rep.worst_slack >= -1e-6 and dt < 10
    slack = rep.worst_slack if rep is not None else float("nan")
    verdict(6, ok, f"status {res.status}, {rep.checked if rep else 0} vertex sequences, "
                   f"worst slack {slack:.3e}, {dt:.2f} s")


def batch_constrained_lqr(A, B, Qx, Ru, x0, N, x_max, u_max):
    """Condensed finite-horizon problem over stacked inputs, solved by the active-set oracle."""
    n, m = B.shape
    Phi = np.vstack([np.linalg.matrix_power(A, k) for k in range(N + 1)])
    Gam = np.zeros((n * (N + 1), m * N))
    for k in range(1, N + 1):
        for j in range(k):
            Gam[k * n:(k + 1) * n, j * m:(j + 1) * m] = np.linalg.matrix_power(A, k - j - 1) @ B
    Qb = np.kron(np.eye(N + 1), Qx)
    Rb = np.kron(np.eye(N), Ru)
    H = 2 * (Gam.T @ Qb @ Gam + Rb)
    f = 2 * Gam.T @ Qb @ Phi @ x0
    c = x0 @ Phi.T @ Qb @ Phi @ x0
    G = np.vstack([Gam, -Gam, np.eye(m * N), -np.eye(m * N)])
    h = np.concatenate([x_max - Phi @ x0, x_max + Phi @ x0, np.full(2 * m * N, u_max)])
    u, _, _ = active_set_qp(H, f, np.zeros((0, m * N)), np.zeros(0), G, h)
    return u, 0.5 * u @ H @ u + f @ u + c


def test_criterion_7_zero_disturbance_lqr():
    A = np.array([[1.1, 0.2], [0.0, 0.95]])
    pl = Plant(A, np.eye(2), np.eye(2))
    N, x0 = 5, np.array([1.5, -1.0])
    Qx, Ru = np.eye(2), 0.1 * np.eye(2)
    spec = ConstraintSpec.boxes(2, 2, 2.0, 0.5, 0.0)
    info = constant_structure(BinaryMatrix.ones(2, 2), N)
    res = synthesize(pl, info, spec, CostSpec.uniform(N, Qx, Ru), x0)
    u_ref, J_ref = batch_constrained_lqr(A, np.eye(2), Qx, Ru, x0, N, 2.0, 0.5)
    active = bool(np.any(np.isclose(np.abs(u_ref), 0.5, atol=1e-9)))
    err = abs(res.objective - J_ref) / abs(J_ref) if res.status == "optimal" else np.inf
    ok = err <= 1e-5 and active
    verdict(7, ok, f"cost {res.objective:.8f} vs oracle {J_ref:.8f}, rel err {err:.1e}, "
                   f"input limits active: {active}")


def test_criterion_8_qp_solver():
    rng = np.random.default_rng(8)
    worst_x = worst_kkt = 0.0
    bad = 0
    for i in range(100):
        n = int(rng.integers(2, 31))
        meq = int(rng.integers(0, min(5, n)))
        min_ = int(rng.integers(0, 2 * n))
        M = rng.standard_normal((n, n))
        P = M @ M.T + 0.1 * np.eye(n)
        q = rng.standard_normal(n)
        A = rng.standard_normal((meq, n))
        G = rng.standard_normal((min_, n))
        xf = rng.standard_normal(n)
        qp = QP(P, q, A, A @ xf, G, G @ xf + rng.random(min_))
        sol = solve(qp)
        x_ref, _, _ = active_set_qp(qp.P, qp.q, qp.A, qp.b, qp.G, qp.h)
        if sol.status != "optimal":
            bad += 1
            continue
        worst_x = max(worst_x, float(np.max(np.abs(sol.x - x_ref))))
        worst_kkt = max(worst_kkt, max(kkt_residuals(qp, sol.x, sol.y_eq, sol.y_in).values()))
    ok = bad == 0 and worst_x <= 1e-5 and worst_kkt <= 1e-6
    verdict(8, ok, f"100 QPs, {bad} not optimal, max |x - x_ref| {worst_x:.1e}, "
                   f"max KKT residual {worst_kkt:.1e}")
