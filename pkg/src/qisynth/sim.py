"""Closed-loop rollouts and worst-case constraint verification."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .lifted import ConstraintSpec, LiftedSystem, Plant, stack_constraints
from .policy import DisturbanceFeedbackPolicy, OutputFeedbackController
from .polytope import sample_uniform, vertices

VERTEX_BUDGET = 2 ** 12


class VertexBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray        # (N+1, n)
    inputs: np.ndarray        # (N, m)
    outputs: np.ndarray       # (N+1, p)
    disturbances: np.ndarray  # (N, n)
    nominal_cost: float | None = None

    def to_dict(self) -> dict:
        return {"states": self.states.tolist(), "inputs": self.inputs.tolist(),
                "outputs": self.outputs.tolist(), "disturbances": self.disturbances.tolist(),
                "nominal_cost": self.nominal_cost}


def _as_w(w, N: int, n: int) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.size == N * n and w.ndim <= 2:
        return w.reshape(N, n)
    raise ValueError(f"disturbance sequence must have {N} stages of size {n}, got shape {w.shape}")


def _rollout_batch(plant: Plant, ctrl: OutputFeedbackController, x0, W: np.ndarray):
    """Vectorised rollout over a batch ``W`` of shape ``(K, N, n)``."""
    N, m, p = ctrl.N, ctrl.m, ctrl.p
    K = W.shape[0]
    n = plant.n
    X = np.zeros((K, N + 1, n))
    U = np.zeros((K, N, m))
    Y = np.zeros((K, N + 1, p))
    X[:, 0] = x0
    for k in range(N + 1):
        wk = W[:, k] if k < N else np.zeros((K, n))
        Y[:, k] = X[:, k] @ plant.C.T + wk @ plant.H.T
        if k == N:
            break
        uk = np.broadcast_to(ctrl.offset(k), (K, m)).copy()
        for j in range(k + 1):
            uk += Y[:, j] @ ctrl.block(k, j).T
        U[:, k] = uk
        X[:, k + 1] = X[:, k] @ plant.A.T + uk @ plant.B.T + wk @ plant.D.T
    return X, U, Y


def rollout_output_feedback(plant: Plant, ctrl: OutputFeedbackController, x0, w,
                            cost=None) -> Trajectory:
    """Simulate ``u_k = sum_{j<=k} L[k,j] y_j + g_k`` step by step.

    ``nominal_cost`` is the cost of the disturbance-free run of the same
    controller, if a cost is given.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != plant.n:
        raise ValueError(f"x0 has size {x0.size}, expected {plant.n}")
    if (ctrl.m, ctrl.p) != (plant.m, plant.p):
        raise ValueError("controller dimensions do not match the plant")
    w = _as_w(w, ctrl.N, plant.n)
    X, U, Y = _rollout_batch(plant, ctrl, x0, w[None])
    nominal = None
    if cost is not None:
        Xn, Un, _ = _rollout_batch(plant, ctrl, x0, np.zeros((1, ctrl.N, plant.n)))
        nominal = cost.nominal(Xn[0], Un[0])
    return Trajectory(X[0], U[0], Y[0], w, nominal)


def rollout_disturbance_feedback(plant: Plant, policy: DisturbanceFeedbackPolicy,
                                 lifted: LiftedSystem, x0, w, cost=None) -> Trajectory:
    """Apply ``u = Q P w + v`` (computed in one shot) and roll the plant forward."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    N, m, n = policy.N, policy.m, plant.n
    w = _as_w(w, N, n)
    wstack = np.concatenate([w.reshape(-1), np.zeros(n)])
    u = (policy.Q @ lifted.P @ wstack + policy.v)[:N * m].reshape(N, m)
    X = np.zeros((N + 1, n))
    Y = np.zeros((N + 1, plant.p))
    X[0] = x0
    for k in range(N):
        Y[k] = plant.C @ X[k] + plant.H @ w[k]
        X[k + 1] = plant.A @ X[k] + plant.B @ u[k] + plant.D @ w[k]
    Y[N] = plant.C @ X[N]
    nominal = None
    if cost is not None:
        un = policy.v[:N * m].reshape(N, m)
        xn = np.zeros((N + 1, n))
        xn[0] = x0
        for k in range(N):
            xn[k + 1] = plant.A @ xn[k] + plant.B @ un[k]
        nominal = cost.nominal(xn, un)
    return Trajectory(X, u, Y, w, nominal)


@dataclass(frozen=True, eq=False)
class RobustReport:
    worst_slack: float
    method: str
    checked: int
    violating_w: np.ndarray | None = None
    worst_row: int | None = None
    worst_w: np.ndarray | None = None

    @property
    def ok(self) -> bool:
        return self.violating_w is None

    def to_dict(self) -> dict:
        out = {"worst_slack": self.worst_slack, "method": self.method, "checked": self.checked,
               "worst_row": self.worst_row, "robustly_feasible": self.ok}
        if self.violating_w is not None:
            out["violating_w"] = self.violating_w.tolist()
        return out


def _slacks(plant, ctrl, spec, x0, W):
    N, m, n = ctrl.N, ctrl.m, plant.n
    X, U, _ = _rollout_batch(plant, ctrl, x0, W)
    boldU, boldV, rhs = stack_constraints(spec, N, n, m)
    xs = X.reshape(X.shape[0], -1)
    us = np.concatenate([U.reshape(U.shape[0], -1), np.zeros((U.shape[0], m))], axis=1)
    return rhs[None, :] - xs @ boldU.T - us @ boldV.T


def verify_robust(plant: Plant, ctrl: OutputFeedbackController, spec: ConstraintSpec, x0,
                  method: str = "vertices", count: int = 1000, seed=None,
                  budget: int = VERTEX_BUDGET, tol: float = 1e-6,
                  chunk: int = 4096) -> RobustReport:
    """Smallest constraint slack over disturbance sequences drawn from ``W^N``.

    ``method="vertices"`` checks every sequence of per-step vertices, which
    contains the worst case because the closed loop is affine in ``w``; it
    refuses to run when the number of sequences exceeds ``budget``.
    ``method="sample"`` draws ``count`` uniform sequences. A sequence is
    reported as violating when its slack is below ``-tol``.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    N, n = ctrl.N, plant.n
    if method == "vertices":
        if spec.q > 20:
            raise VertexBudgetExceeded("vertex enumeration is limited to 20 facets; use sampling")
        V = vertices(spec.Aw, spec.bw)
        total = len(V) ** N
        if total > budget:
            raise VertexBudgetExceeded(f"{len(V)}^{N} = {total} vertex sequences exceed "
                                       f"the budget of {budget}")
        combos = itertools.product(range(len(V)), repeat=N)

        def batches():
            while True:
                idx = list(itertools.islice(combos, chunk))
                if not idx:
                    return
                yield V[np.array(idx)]
        label = "vertices"
    elif method == "sample":
        rng = np.random.default_rng(seed)
        draws = sample_uniform(spec.Aw, spec.bw, count * N, rng).reshape(count, N, n)

        def batches():
            for s in range(0, count, chunk):
                yield draws[s:s + chunk]
        label = f"sample({count})"
    else:
        raise ValueError(f"unknown method {method!r}")

    worst = np.inf
    worst_w = None
    worst_row = None
    checked = 0
    for W in batches():
        sl = _slacks(plant, ctrl, spec, x0, W)
        if sl.shape[1] == 0:
            checked += len(W)
            continue
        per = sl.min(axis=1)
        b = int(np.argmin(per))  # first minimiser keeps the reduction order-stable
        if per[b] < worst:
            worst = float(per[b])
            worst_w = W[b].copy()
            worst_row = int(np.argmin(sl[b]))
        checked += len(W)
    violating = worst_w if worst < -tol else None
    return RobustReport(worst_slack=float(worst), method=label, checked=checked,
                        violating_w=violating, worst_row=worst_row, worst_w=worst_w)
