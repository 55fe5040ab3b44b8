"""Robust finite-horizon synthesis as a convex QP in the disturbance-feedback policy.

Decision variables are the entries of ``Q`` allowed by the stacked
information pattern, the first ``mN`` entries of ``v``, and nonnegative
multipliers that certify the worst case of each constrained row stage by
stage: for constraint row ``i`` and stage ``t``,

    max_{w_t in W} M[i, t] w_t = min { bw' lam : Aw' lam = M[i, t]', lam >= 0 },

where ``M = F Q P + G``. The row then reads
``F[i] v + sum_t bw' lam[i, t] <= c[i]``.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .binmat import DEFAULT_TOL, BinaryMatrix, off_pattern_max
from .infostruct import InformationStructure, big_S
from .lifted import ConstraintData, ConstraintSpec, LiftedSystem, Plant, build_constraint_data, build_lifted
from .policy import DisturbanceFeedbackPolicy, OutputFeedbackController, q_to_l, scale_aware_tol
from .qi import QIReport, qi_test
from .qpsolve import QP, QPSolution, Settings, solve


class NotQuadraticallyInvariantWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class CostSpec:
    """Quadratic cost on the disturbance-free trajectory.

    ``Qx`` holds ``N+1`` state weights (the last is terminal) and ``Ru`` holds
    ``N`` input weights.
    """

    Qx: list
    Ru: list

    def __post_init__(self):
        Qx = [np.asarray(W, dtype=float) for W in self.Qx]
        Ru = [np.asarray(W, dtype=float) for W in self.Ru]
        for name, mats in (("Qx", Qx), ("Ru", Ru)):
            for k, W in enumerate(mats):
                if W.ndim != 2 or W.shape[0] != W.shape[1]:
                    raise ValueError(f"{name}[{k}] must be square, got {W.shape}")
                if not np.allclose(W, W.T, atol=1e-12):
                    raise ValueError(f"{name}[{k}] is not symmetric")
                if W.size and np.min(np.linalg.eigvalsh(W)) < -1e-10:
                    raise ValueError(f"{name}[{k}] is not positive semidefinite")
        object.__setattr__(self, "Qx", Qx)
        object.__setattr__(self, "Ru", Ru)

    @classmethod
    def uniform(cls, N: int, Qx, Ru, Qf=None) -> "CostSpec":
        Qx = np.atleast_2d(np.asarray(Qx, dtype=float))
        Ru = np.atleast_2d(np.asarray(Ru, dtype=float))
        Qf = Qx if Qf is None else np.atleast_2d(np.asarray(Qf, dtype=float))
        return cls([Qx] * N + [Qf], [Ru] * N)

    def check(self, N: int, n: int, m: int) -> None:
        if len(self.Qx) != N + 1 or len(self.Ru) != N:
            raise ValueError(f"cost needs {N + 1} state weights and {N} input weights, "
                             f"got {len(self.Qx)} and {len(self.Ru)}")
        if any(W.shape != (n, n) for W in self.Qx) or any(W.shape != (m, m) for W in self.Ru):
            raise ValueError("cost weight dimensions do not match the plant")

    def nominal(self, x: np.ndarray, u: np.ndarray) -> float:
        """Cost of state rows ``x[0..N]`` and input rows ``u[0..N-1]``."""
        return float(sum(xk @ W @ xk for xk, W in zip(x, self.Qx))
                     + sum(uk @ W @ uk for uk, W in zip(u, self.Ru)))


@dataclass(frozen=True, eq=False)
class Layout:
    """Where each decision variable lives."""

    N: int
    n: int
    m: int
    p: int
    q: int
    q_index: np.ndarray          # (nQ, 2) row/col of each free Q entry
    lam_pairs: list              # (constraint row, stage) with multipliers
    row_labels: list             # readable name of each constraint row

    @property
    def n_q(self) -> int:
        return len(self.q_index)

    @property
    def n_v(self) -> int:
        return self.m * self.N

    @property
    def n_lam(self) -> int:
        return len(self.lam_pairs) * self.q

    @property
    def n_vars(self) -> int:
        return self.n_q + self.n_v + self.n_lam

    @property
    def v_slice(self) -> slice:
        return slice(self.n_q, self.n_q + self.n_v)

    @property
    def lam_slice(self) -> slice:
        return slice(self.n_q + self.n_v, self.n_vars)

    def names(self) -> list[str]:
        out = [f"Q[{r},{c}]" for r, c in self.q_index]
        out += [f"v[{i}]" for i in range(self.n_v)]
        out += [f"lam[{i},{t},{l}]" for i, t in self.lam_pairs for l in range(self.q)]
        return out


@dataclass(frozen=True, eq=False)
class QPProblem:
    qp: QP
    layout: Layout
    data: ConstraintData
    lifted: LiftedSystem
    pattern: BinaryMatrix
    x0: np.ndarray
    qi_checked: bool = True


def _labels(spec: ConstraintSpec, N: int) -> list[str]:
    out = [f"stage {k} row {i}" for k in range(N) for i in range(spec.s)]
    out += [f"terminal row {i}" for i in range(spec.r)]
    return out


def assemble(lifted: LiftedSystem, info: InformationStructure, spec: ConstraintSpec,
             cost: CostSpec, x0, regularize_q: float = 0.0,
             qi_report: QIReport | None = None, plant: Plant | None = None,
             check_qi: bool = True, mode: str = "numeric", tol: float = DEFAULT_TOL) -> QPProblem:
    """Build the robust QP with ``Q`` restricted to the stacked pattern.

    If the pattern is not quadratically invariant the restriction is still
    applied and a :class:`NotQuadraticallyInvariantWarning` is emitted; the
    QP is then a restriction of the original problem rather than equivalent.
    """
    N, n, m, p = lifted.N, lifted.n, lifted.m, lifted.p
    if (info.N, info.m, info.p) != (N, m, p):
        raise ValueError("information structure does not match the lifted system")
    cost.check(N, n, m)
    spec.check_dims(n, m)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if qi_report is None and check_qi and plant is not None:
        qi_report = qi_test(info, plant, mode=mode, tol=tol)
    qi_ok = qi_report.quadratically_invariant if qi_report is not None else None
    if qi_ok is False:
        warnings.warn("information structure is not quadratically invariant; restricting Q "
                      "to the pattern gives a conservative restriction, not the optimum",
                      NotQuadraticallyInvariantWarning, stacklevel=2)

    data = build_constraint_data(spec, lifted, x0)
    F, G, c = data.F, data.G, data.c
    P = lifted.P
    pattern = big_S(info)
    q_index = np.argwhere(pattern.bits)
    nQ = len(q_index)
    nrows = F.shape[0]
    qw = spec.q

    # coefficient of Q[a, b] in M[i, col] is F[i, a] * P[b, col]; w_N is dropped
    Pw = P[:, :n * N]
    coef = F[:, q_index[:, 0]][:, None, :] * Pw[q_index[:, 1], :].T[None, :, :] if nQ \
        else np.zeros((nrows, n * N, 0))
    Gw = G[:, :n * N]

    lam_pairs = []
    for i in range(nrows):
        for t in range(N):
            cols = slice(t * n, (t + 1) * n)
            if np.any(Gw[i, cols] != 0.0) or np.any(coef[i, cols, :] != 0.0):
                lam_pairs.append((i, t))
    layout = Layout(N=N, n=n, m=m, p=p, q=qw, q_index=q_index, lam_pairs=lam_pairs,
                    row_labels=_labels(spec, N))
    nv = layout.n_vars
    vs, ls = layout.v_slice, layout.lam_slice
    lam0 = ls.start

    # objective in v only (plus optional Tikhonov on Q)
    Bv = lifted.boldB[:, :m * N]
    Qbig = np.zeros((n * (N + 1), n * (N + 1)))
    for k, W in enumerate(cost.Qx):
        Qbig[k * n:(k + 1) * n, k * n:(k + 1) * n] = W
    Rbig = np.zeros((m * N, m * N))
    for k, W in enumerate(cost.Ru):
        Rbig[k * m:(k + 1) * m, k * m:(k + 1) * m] = W
    xfree = lifted.boldA @ x0
    Pobj = np.zeros((nv, nv))
    qobj = np.zeros(nv)
    Pobj[vs, vs] = 2.0 * (Bv.T @ Qbig @ Bv + Rbig)
    qobj[vs] = 2.0 * Bv.T @ Qbig @ xfree
    if regularize_q:
        Pobj[:nQ, :nQ] += 2.0 * regularize_q * np.eye(nQ)
    const = float(xfree @ Qbig @ xfree)

    # Aw' lam[i,t] - (F Q P)[i, t-block]' = G[i, t-block]'
    Aeq = np.zeros((len(lam_pairs) * n, nv))
    beq = np.zeros(len(lam_pairs) * n)
    AwT = spec.Aw.T
    for e, (i, t) in enumerate(lam_pairs):
        rows = slice(e * n, (e + 1) * n)
        cols = slice(t * n, (t + 1) * n)
        Aeq[rows, :nQ] = -coef[i, cols, :]
        Aeq[rows, lam0 + e * qw:lam0 + (e + 1) * qw] = AwT
        beq[rows] = Gw[i, cols]

    # F[i] v + sum_t bw' lam[i,t] <= c[i];  lam >= 0
    nlam = layout.n_lam
    Gin = np.zeros((nrows + nlam, nv))
    hin = np.zeros(nrows + nlam)
    Gin[:nrows, vs] = F[:, :m * N]
    for e, (i, t) in enumerate(lam_pairs):
        Gin[i, lam0 + e * qw:lam0 + (e + 1) * qw] = spec.bw
    hin[:nrows] = c
    Gin[nrows:, ls] = -np.eye(nlam)

    qp = QP(P=Pobj, q=qobj, A=Aeq, b=beq, G=Gin, h=hin, const=const)
    return QPProblem(qp=qp, layout=layout, data=data, lifted=lifted, pattern=pattern, x0=x0,
                     qi_checked=bool(qi_ok))


class NotConvergedError(RuntimeError):
    pass


def extract(solution, layout: Layout) -> tuple[DisturbanceFeedbackPolicy, float]:
    """Scatter a solution vector into ``(Q, v)``.

    ``solution`` is a :class:`QPSolution` (which must be optimal) or a raw
    decision vector, in which case the objective is returned as NaN.
    """
    if isinstance(solution, QPSolution):
        if solution.status != "optimal":
            raise NotConvergedError(f"solver status is {solution.status!r}")
        x, obj = solution.x, solution.objective
    else:
        x, obj = np.asarray(solution, dtype=float), float("nan")
    if x.size != layout.n_vars:
        raise ValueError(f"solution has {x.size} entries, layout expects {layout.n_vars}")
    N, m, p = layout.N, layout.m, layout.p
    Q = np.zeros((m * (N + 1), p * (N + 1)))
    if layout.n_q:
        Q[layout.q_index[:, 0], layout.q_index[:, 1]] = x[:layout.n_q]
    v = np.zeros(m * (N + 1))
    v[:m * N] = x[layout.v_slice]
    return DisturbanceFeedbackPolicy(Q, v, N, m, p), obj


def export_triplets(problem: QPProblem) -> dict:
    """Sparse-triplet description of the assembled QP.

    Matrices are ``{"shape": [r, c], "rows": [...], "cols": [...], "vals": [...]}``;
    the objective is ``1/2 x'Px + q'x + const`` and constraints are
    ``A x = b`` and ``G x <= h``.
    """
    def trip(M):
        r, c = np.nonzero(M)
        return {"shape": list(M.shape), "rows": r.tolist(), "cols": c.tolist(),
                "vals": M[r, c].tolist()}
    qp = problem.qp
    return {
        "variables": problem.layout.names(),
        "objective": {"P": trip(qp.P), "q": qp.q.tolist(), "const": qp.const},
        "equalities": {"A": trip(qp.A), "b": qp.b.tolist()},
        "inequalities": {"G": trip(qp.G), "h": qp.h.tolist()},
    }


@dataclass
class SynthesisResult:
    status: str                     # optimal | infeasible | max_iters | not_qi | unbounded
    qi: QIReport | None
    controller: OutputFeedbackController | None = None
    policy: DisturbanceFeedbackPolicy | None = None
    objective: float | None = None
    residuals: dict = field(default_factory=dict)
    iterations: int = 0
    controller_off_pattern: float | None = None
    infeasible_row: str | None = None
    problem: QPProblem | None = None
    solution: QPSolution | None = None

    def summary(self) -> dict:
        out = {"status": self.status,
               "quadratically_invariant": None if self.qi is None else self.qi.quadratically_invariant,
               "objective": self.objective, "residuals": self.residuals,
               "iterations": self.iterations}
        if self.controller_off_pattern is not None:
            out["controller_off_pattern_max"] = self.controller_off_pattern
        if self.infeasible_row is not None:
            out["infeasible_row"] = self.infeasible_row
        return out


def synthesize(plant: Plant, info: InformationStructure, spec: ConstraintSpec, cost: CostSpec,
               x0, settings: Settings | None = None, mode: str = "numeric",
               tol: float = DEFAULT_TOL, force_restrict: bool = False,
               regularize_q: float = 0.0) -> SynthesisResult:
    """Certify QI, solve the robust QP and map the optimum to ``(L, g)``."""
    report = qi_test(info, plant, mode=mode, tol=tol)
    if not report.quadratically_invariant and not force_restrict:
        return SynthesisResult(status="not_qi", qi=report)
    lifted = build_lifted(plant, info.N)
    with warnings.catch_warnings():
        if force_restrict:
            warnings.simplefilter("ignore", NotQuadraticallyInvariantWarning)
        prob = assemble(lifted, info, spec, cost, x0, regularize_q=regularize_q, qi_report=report)
    sol = solve(prob.qp, settings or Settings())
    result = SynthesisResult(status=sol.status, qi=report, residuals=sol.residuals,
                             iterations=sol.iterations, problem=prob, solution=sol)
    if sol.status == "infeasible":
        result.infeasible_row = _first_violated(prob, sol)
        return result
    if sol.status != "optimal":
        return result
    policy, obj = extract(sol, prob.layout)
    ctrl = q_to_l(policy, lifted, x0)
    off = off_pattern_max(ctrl.L, prob.pattern)
    if off <= scale_aware_tol(ctrl.L):
        # clean up round-off outside the pattern
        ctrl = OutputFeedbackController(np.where(prob.pattern.bits, ctrl.L, 0.0), ctrl.g,
                                        ctrl.N, ctrl.m, ctrl.p)
    result.policy = policy
    result.controller = ctrl
    result.objective = obj
    result.controller_off_pattern = off
    return result


def _first_violated(prob: QPProblem, sol: QPSolution) -> str | None:
    """Constraint row carrying the largest weight in the infeasibility certificate."""
    cert = sol.certificate
    if cert is None:
        return None
    meq = prob.qp.A.shape[0]
    nrows = prob.data.F.shape[0]
    rows = np.abs(cert[meq:meq + nrows])
    if not rows.size or rows.max() == 0:
        return None
    return prob.layout.row_labels[int(np.argmax(rows))]


def problem_to_json(problem: QPProblem) -> str:
    return json.dumps(export_triplets(problem))
