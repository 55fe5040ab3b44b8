"""Output-feedback and disturbance-feedback controllers and the map between them.

An output-feedback controller ``u = L y + g`` and a disturbance-feedback
policy ``u = Q P w + v`` describe the same closed loop when

    Q = L (I - CB L)^-1,      v = Q (CB g + CA x0) + g,
    L = Q (I + CB Q)^-1,      g = v - L (CB v + CA x0).

Both ``I - CB L`` and ``I + CB Q`` are unit lower triangular for causal
controllers, so the maps never fail and are computed by triangular solves.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .binmat import BinaryMatrix, member
from .lifted import LiftedSystem, build_lifted
from .qi import qi_test_general, targeted_counterexample


def causal_pattern(N: int, m: int, p: int) -> BinaryMatrix:
    """Block lower-triangular pattern with zero last block row and column."""
    blocks = np.tril(np.ones((N + 1, N + 1), dtype=bool))
    blocks[N, :] = False
    blocks[:, N] = False
    return BinaryMatrix(np.kron(blocks, np.ones((m, p), dtype=bool)))


def _check_causal(M: np.ndarray, g: np.ndarray, N: int, m: int, p: int, what: str) -> None:
    if M.shape != (m * (N + 1), p * (N + 1)):
        raise ValueError(f"{what} matrix has shape {M.shape}, expected {(m * (N + 1), p * (N + 1))}")
    if g.shape != (m * (N + 1),):
        raise ValueError(f"{what} offset has shape {g.shape}, expected {(m * (N + 1),)}")
    if not member(M, causal_pattern(N, m, p), 0.0):
        raise ValueError(f"{what} matrix violates the causal block pattern")
    if np.any(g[N * m:] != 0.0):
        raise ValueError(f"{what} offset must have a zero last block")


@dataclass(frozen=True, eq=False)
class OutputFeedbackController:
    """``u_k = sum_j L[k,j] y_j + g_k`` in stacked form."""

    L: np.ndarray
    g: np.ndarray
    N: int
    m: int
    p: int

    def __post_init__(self):
        L = np.array(self.L, dtype=float)
        g = np.array(self.g, dtype=float).reshape(-1)
        _check_causal(L, g, self.N, self.m, self.p, "controller")
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "g", g)

    def block(self, k: int, j: int) -> np.ndarray:
        m, p = self.m, self.p
        return self.L[k * m:(k + 1) * m, j * p:(j + 1) * p]

    def offset(self, k: int) -> np.ndarray:
        return self.g[k * self.m:(k + 1) * self.m]


@dataclass(frozen=True, eq=False)
class DisturbanceFeedbackPolicy:
    """``u = Q P w + v`` in stacked form."""

    Q: np.ndarray
    v: np.ndarray
    N: int
    m: int
    p: int

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        v = np.array(self.v, dtype=float).reshape(-1)
        _check_causal(Q, v, self.N, self.m, self.p, "policy")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "v", v)


def closed_loop_map(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """``h(X, Y) = -X (I - Y X)^-1`` for arbitrary conformable matrices.

    Raises ``numpy.linalg.LinAlgError`` if ``I - Y X`` is singular.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.shape != X.shape[::-1]:
        raise ValueError(f"closed_loop_map: X is {X.shape} but Y is {Y.shape}")
    M = np.eye(Y.shape[0]) - Y @ X
    # X M^-1 = (M^-T X^T)^T
    return -np.linalg.solve(M.T, X.T).T


def _right_unit_lower_solve(X: np.ndarray, M: np.ndarray) -> np.ndarray:
    """``X M^-1`` for unit lower-triangular ``M``."""
    return solve_triangular(M.T, X.T, lower=False, unit_diagonal=True, check_finite=False).T


def q_to_l(policy: DisturbanceFeedbackPolicy, lifted: LiftedSystem, x0) -> OutputFeedbackController:
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    Q, v = policy.Q, policy.v
    CB = lifted.CB
    M = np.eye(CB.shape[0]) + CB @ Q
    L = _right_unit_lower_solve(Q, M)
    g = v - L @ (CB @ v + lifted.CA @ x0)
    # products of exact zeros stay exact; clamp the padding explicitly anyway
    g[lifted.N * lifted.m:] = 0.0
    return OutputFeedbackController(L * causal_pattern(lifted.N, lifted.m, lifted.p).bits, g,
                                    lifted.N, lifted.m, lifted.p)


def l_to_q(ctrl: OutputFeedbackController, lifted: LiftedSystem, x0) -> DisturbanceFeedbackPolicy:
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    L, g = ctrl.L, ctrl.g
    CB = lifted.CB
    M = np.eye(CB.shape[0]) - CB @ L
    Q = _right_unit_lower_solve(L, M)
    v = Q @ (CB @ g + lifted.CA @ x0) + g
    v[lifted.N * lifted.m:] = 0.0
    return DisturbanceFeedbackPolicy(Q * causal_pattern(lifted.N, lifted.m, lifted.p).bits, v,
                                     lifted.N, lifted.m, lifted.p)


def check_membership(M, pattern: BinaryMatrix, tol: float = 0.0) -> bool:
    return member(M, pattern, tol)


def scale_aware_tol(M, rel: float = 1e-7) -> float:
    """Membership tolerance ``rel * max|M|``."""
    M = np.asarray(M, dtype=float)
    return rel * float(np.max(np.abs(M), initial=0.0))


def escape_witness(info, plant, tol: float = 1e-9):
    """``L`` in the structure whose disturbance-feedback image leaves it.

    Only exists when the structure is not quadratically invariant. Built as
    ``L = La + Lb`` from the single-entry pair of a violated condition: every
    other product ``Lx CB Ly`` vanishes by causality, so
    ``Q = L + La CB Lb`` exactly and the violated entry is nonzero in ``Q``.
    Returns ``(L, Q)`` or ``None``.
    """
    lifted = build_lifted(plant, info.N)
    for cond in qi_test_general(info, plant, tol=tol).failing:
        found = targeted_counterexample(info, plant, cond, tol=tol)
        if found is None:
            continue
        La, Lb, _ = found
        zero = np.zeros(info.m * (info.N + 1))
        ctrl = OutputFeedbackController(La + Lb, zero, info.N, info.m, info.p)
        return ctrl.L, l_to_q(ctrl, lifted, np.zeros(plant.n)).Q
    return None
