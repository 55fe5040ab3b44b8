"""Dense convex QP solver (operator splitting with active-set polishing).

Solves

    minimize    1/2 x'Px + q'x
    subject to  A x = b,  G x <= h

with the ADMM iteration popularised by OSQP: Ruiz equilibration, adaptive
step size, infeasibility certificates from successive dual iterates, and a
final polish that solves the equality-constrained KKT system on the guessed
active set. All linear algebra is dense.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lu_factor, lu_solve

log = logging.getLogger(__name__)

INF = np.inf


@dataclass(frozen=True, eq=False)
class QP:
    P: np.ndarray
    q: np.ndarray
    A: np.ndarray
    b: np.ndarray
    G: np.ndarray
    h: np.ndarray
    const: float = 0.0

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        nv = P.shape[0]
        q = np.asarray(self.q, dtype=float).reshape(nv)
        A = np.asarray(self.A, dtype=float).reshape(-1, nv)
        b = np.asarray(self.b, dtype=float).reshape(A.shape[0])
        G = np.asarray(self.G, dtype=float).reshape(-1, nv)
        h = np.asarray(self.h, dtype=float).reshape(G.shape[0])
        if P.shape != (nv, nv):
            raise ValueError(f"P must be square, got {P.shape}")
        for name, val in (("P", P), ("q", q), ("A", A), ("b", b), ("G", G), ("h", h)):
            object.__setattr__(self, name, val)

    @property
    def n_vars(self) -> int:
        return self.P.shape[0]

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.P @ x + self.q @ x + self.const)


def _env_float(name: str, default: float) -> float:
    val = os.environ.get(name)
    return float(val) if val not in (None, "") else default


@dataclass
class Settings:
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    max_iters: int = 20000
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    scaling_iters: int = 10
    adaptive_rho: bool = True
    check_every: int = 25
    eps_prim_inf: float = 1e-5
    eps_dual_inf: float = 1e-5
    polish: bool = True
    polish_delta: float = 1e-9
    polish_refine: int = 5
    # accepted for interface symmetry; the iteration is deterministic
    seed: int | None = None

    @classmethod
    def from_env(cls, **overrides) -> "Settings":
        """Defaults overridden by ``DCS_SOLVER_*`` variables, then by ``overrides``."""
        base = cls(
            eps_abs=_env_float("DCS_SOLVER_EPS_ABS", cls.eps_abs),
            eps_rel=_env_float("DCS_SOLVER_EPS_REL", cls.eps_rel),
            max_iters=int(_env_float("DCS_SOLVER_MAX_ITERS", cls.max_iters)),
        )
        for key, val in overrides.items():
            if val is not None:
                setattr(base, key, val)
        return base


@dataclass
class QPSolution:
    x: np.ndarray
    y_eq: np.ndarray
    y_in: np.ndarray
    status: str  # optimal | max_iters | infeasible | unbounded
    objective: float
    residuals: dict = field(default_factory=dict)
    iterations: int = 0
    polished: bool = False
    certificate: np.ndarray | None = None

    @property
    def primal(self) -> np.ndarray:
        return self.x

    @property
    def duals(self) -> tuple[np.ndarray, np.ndarray]:
        return self.y_eq, self.y_in


def kkt_residuals(problem: QP, x, y_eq=None, y_in=None) -> dict:
    """Infinity-norm KKT residuals of a candidate point.

    ``primal``: equality violation and positive part of ``Gx - h``.
    ``dual``: stationarity ``Px + q + A'y + G'lam`` and negative part of ``lam``.
    ``gap``: ``|x'Px + q'x + b'y + h'lam|``, the primal-dual objective gap.
    Missing multipliers are taken as zero.
    """
    x = np.asarray(x, dtype=float)
    y_eq = np.zeros(problem.A.shape[0]) if y_eq is None else np.asarray(y_eq, dtype=float)
    y_in = np.zeros(problem.G.shape[0]) if y_in is None else np.asarray(y_in, dtype=float)
    Px = problem.P @ x
    r_eq = problem.A @ x - problem.b
    r_in = np.maximum(problem.G @ x - problem.h, 0.0)
    prim = max(np.max(np.abs(r_eq), initial=0.0), np.max(r_in, initial=0.0))
    stat = Px + problem.q + problem.A.T @ y_eq + problem.G.T @ y_in
    dual = max(np.max(np.abs(stat), initial=0.0), np.max(-y_in, initial=0.0))
    gap = abs(x @ Px + problem.q @ x + problem.b @ y_eq + problem.h @ y_in)
    return {"primal": float(prim), "dual": float(dual), "gap": float(gap)}


def _tolerances(problem: QP, x, y_eq, y_in, s: Settings) -> dict:
    Ax = np.concatenate([problem.A @ x, problem.G @ x])
    rhs = np.concatenate([problem.b, problem.h])
    Px = problem.P @ x
    Aty = problem.A.T @ y_eq + problem.G.T @ y_in
    obj = 0.5 * x @ Px + problem.q @ x
    inf = lambda v: float(np.max(np.abs(v), initial=0.0))  # noqa: E731
    return {
        "primal": s.eps_abs + s.eps_rel * max(inf(Ax), inf(rhs)),
        "dual": s.eps_abs + s.eps_rel * max(inf(Px), inf(Aty), inf(problem.q)),
        "gap": s.eps_abs + s.eps_rel * abs(obj),
    }


def _converged(res: dict, tol: dict) -> bool:
    return all(res[k] <= tol[k] for k in ("primal", "dual", "gap"))


class _Scaled:
    """Ruiz-equilibrated copy of the problem in ``l <= Ax <= u`` form."""

    def __init__(self, problem: QP, iters: int):
        P = problem.P
        A = np.vstack([problem.A, problem.G])
        self.l = np.concatenate([problem.b, np.full(problem.G.shape[0], -INF)])
        self.u = np.concatenate([problem.b, problem.h])
        nv, nc = P.shape[0], A.shape[0]
        D = np.ones(nv)
        E = np.ones(nc)
        Ps, As, qs = P.copy(), A.copy(), problem.q.copy()
        c = 1.0
        for _ in range(iters):
            col = np.max(np.abs(np.vstack([Ps, As])), axis=0) if nv else np.ones(0)
            row = np.max(np.abs(As), axis=1) if nc and nv else np.ones(nc)
            dD = 1.0 / np.sqrt(np.where(col < 1e-4, 1.0, np.minimum(col, 1e4)))
            dE = 1.0 / np.sqrt(np.where(row < 1e-4, 1.0, np.minimum(row, 1e4)))
            Ps = dD[:, None] * Ps * dD[None, :]
            As = dE[:, None] * As * dD[None, :]
            qs = dD * qs
            D *= dD
            E *= dE
            mean_col = float(np.mean(np.max(np.abs(Ps), axis=0))) if nv else 0.0
            gamma = max(mean_col, float(np.max(np.abs(qs), initial=0.0)))
            gamma = 1.0 / float(np.clip(gamma, 1e-4, 1e4)) if gamma > 0 else 1.0
            Ps *= gamma
            qs *= gamma
            c *= gamma
        self.P, self.A, self.q = Ps, As, qs
        self.D, self.E, self.c = D, E, c
        self.ls = E * self.l
        self.us = E * self.u
        self.eq = np.isfinite(self.l) & (self.l == self.u)

    def unscale(self, x, y, z):
        return self.D * x, self.E * y / self.c, z / self.E


def _split_y(problem: QP, y: np.ndarray):
    meq = problem.A.shape[0]
    return y[:meq], y[meq:]


def solve(problem: QP, settings: Settings | None = None, **kwargs) -> QPSolution:
    """Solve a convex QP; keyword arguments override individual settings."""
    if hasattr(problem, "qp") and not isinstance(problem, QP):
        problem = problem.qp
    s = settings or Settings()
    if kwargs:
        s = Settings(**{**s.__dict__, **kwargs})
    nv = problem.n_vars
    nc = problem.A.shape[0] + problem.G.shape[0]
    if nc == 0:
        return _solve_unconstrained(problem, s)

    sc = _Scaled(problem, s.scaling_iters)
    rho_vec = np.where(sc.eq, s.rho * 1e3, s.rho)

    def factor(rv):
        K = sc.P + s.sigma * np.eye(nv) + sc.A.T @ (rv[:, None] * sc.A)
        return cho_factor(K, check_finite=False)

    K = factor(rho_vec)
    x = np.zeros(nv)
    z = np.zeros(nc)
    y = np.zeros(nc)
    best = None
    last_polish_key = None
    status = "max_iters"
    it = 0
    for it in range(1, s.max_iters + 1):
        x_prev, y_prev = x, y
        rhs = s.sigma * x - sc.q + sc.A.T @ (rho_vec * z - y)
        xt = cho_solve(K, rhs, check_finite=False)
        zt = sc.A @ xt
        x = s.alpha * xt + (1 - s.alpha) * x_prev
        zr = s.alpha * zt + (1 - s.alpha) * z
        z = np.clip(zr + y / rho_vec, sc.ls, sc.us)
        y = y + rho_vec * (zr - z)

        if it % s.check_every and it != s.max_iters:
            continue
        xu, yu, zu = sc.unscale(x, y, z)
        y_eq, y_in = _split_y(problem, yu)
        res = kkt_residuals(problem, xu, y_eq, np.maximum(y_in, 0.0))
        tol = _tolerances(problem, xu, y_eq, y_in, s)
        best = (xu, y_eq, np.maximum(y_in, 0.0), res)
        if _converged(res, tol):
            status = "optimal"
            break
        cert = _primal_infeasible(problem, sc, y - y_prev, s)
        if cert is not None:
            sol = QPSolution(xu, y_eq, y_in, "infeasible", np.nan, res, it, certificate=cert)
            log.info("QP primal infeasible after %d iterations", it)
            return sol
        if _dual_infeasible(problem, sc, x - x_prev, s):
            return QPSolution(xu, y_eq, y_in, "unbounded", -np.inf, res, it)
        if s.polish:
            near = all(res[k] <= 1e3 * tol[k] for k in ("primal", "dual"))
            key = _active_key(sc, y, z)
            if near and key != last_polish_key:
                last_polish_key = key
                pol = _polish(problem, sc, x, y, z, s)
                if pol is not None and _converged(pol[3], _tolerances(problem, pol[0], pol[1], pol[2], s)):
                    return _finish(problem, pol, "optimal", it, True)
        if s.adaptive_rho:
            new_rho = _rho_estimate(sc, x, y, z, rho_vec)
            if new_rho is not None:
                rho_vec = np.where(sc.eq, new_rho * 1e3, new_rho)
                K = factor(rho_vec)

    xu, yu, zu = sc.unscale(x, y, z)
    if s.polish:
        pol = _polish(problem, sc, x, y, z, s)
        if pol is not None:
            if _converged(pol[3], _tolerances(problem, pol[0], pol[1], pol[2], s)):
                return _finish(problem, pol, "optimal", it, True)
            if status == "optimal" and _better(pol[3], best[3]):
                return _finish(problem, pol, status, it, True)
    return _finish(problem, best, status, it, False)


def _finish(problem: QP, cand, status: str, it: int, polished: bool) -> QPSolution:
    x, y_eq, y_in, res = cand
    return QPSolution(x, y_eq, y_in, status, problem.objective(x), res, it, polished)


def _better(a: dict, b: dict) -> bool:
    return all(a[k] <= b[k] for k in ("primal", "dual", "gap"))


def _solve_unconstrained(problem: QP, s: Settings) -> QPSolution:
    nv = problem.n_vars
    K = problem.P + s.polish_delta * np.eye(nv)
    x = np.linalg.solve(K, -problem.q) if nv else np.zeros(0)
    for _ in range(s.polish_refine):
        x = x + np.linalg.solve(K, -problem.q - problem.P @ x)
    res = kkt_residuals(problem, x)
    tol = _tolerances(problem, x, np.zeros(0), np.zeros(0), s)
    status = "optimal" if _converged(res, tol) else "unbounded"
    return QPSolution(x, np.zeros(0), np.zeros(0), status, problem.objective(x), res, 0, True)


def _active_key(sc: _Scaled, y: np.ndarray, z: np.ndarray) -> bytes:
    lower = (z - sc.ls < -y) & ~sc.eq
    upper = (sc.us - z < y) & ~sc.eq
    return np.packbits(np.concatenate([lower, upper])).tobytes()


def _polish(problem: QP, sc: _Scaled, x, y, z, s: Settings):
    """Solve the KKT system on the active set guessed from the ADMM iterate."""
    lower = (z - sc.ls < -y) | sc.eq
    upper = (sc.us - z < y) & ~sc.eq
    lower &= np.isfinite(sc.ls)
    act = np.nonzero(lower | upper)[0]
    bound = np.where(upper[act], sc.us[act], sc.ls[act])
    nv, na = sc.P.shape[0], act.size
    Aact = sc.A[act]
    K = np.block([[sc.P, Aact.T], [Aact, np.zeros((na, na))]])
    Kreg = K.copy()
    Kreg[:nv, :nv] += s.polish_delta * np.eye(nv)
    Kreg[nv:, nv:] -= s.polish_delta * np.eye(na)
    rhs = np.concatenate([-sc.q, bound])
    try:
        fac = lu_factor(Kreg, check_finite=False)
    except (ValueError, np.linalg.LinAlgError):
        return None
    sol = lu_solve(fac, rhs, check_finite=False)
    for _ in range(s.polish_refine):
        sol = sol + lu_solve(fac, rhs - K @ sol, check_finite=False)
    if not np.all(np.isfinite(sol)):
        return None
    xs = sol[:nv]
    ys = np.zeros_like(y)
    ys[act] = sol[nv:]
    xu, yu, _ = sc.unscale(xs, ys, sc.A @ xs)
    y_eq, y_in = _split_y(problem, yu)
    res = kkt_residuals(problem, xu, y_eq, y_in)
    return xu, y_eq, y_in, res


def _rho_estimate(sc: _Scaled, x, y, z, rho_vec):
    Ax = sc.A @ x
    Px = sc.P @ x
    Aty = sc.A.T @ y
    inf = lambda v: float(np.max(np.abs(v), initial=0.0))  # noqa: E731
    r_p = inf(Ax - z) / (max(inf(Ax), inf(z)) + 1e-30)
    r_d = inf(Px + sc.q + Aty) / (max(inf(Px), inf(Aty), inf(sc.q)) + 1e-30)
    rho = float(np.min(rho_vec))
    new = float(np.clip(rho * np.sqrt(r_p / (r_d + 1e-30)), 1e-6, 1e6))
    if new > 5 * rho or new < rho / 5:
        return new
    return None


def _primal_infeasible(problem: QP, sc: _Scaled, dy: np.ndarray, s: Settings):
    dyu = sc.E * dy
    norm = float(np.max(np.abs(dyu), initial=0.0))
    if norm < 1e-12:
        return None
    A = np.vstack([problem.A, problem.G])
    if np.max(np.abs(A.T @ dyu)) > s.eps_prim_inf * norm:
        return None
    pos = np.maximum(dyu, 0.0)
    neg = np.minimum(dyu, 0.0)
    # unbounded sides must carry no weight
    if np.any((pos > 0) & ~np.isfinite(sc.u)) or np.any((neg < 0) & ~np.isfinite(sc.l)):
        return None
    u = np.where(np.isfinite(sc.u), sc.u, 0.0)
    l = np.where(np.isfinite(sc.l), sc.l, 0.0)
    if u @ pos + l @ neg < -s.eps_prim_inf * norm:
        return dyu / norm
    return None


def _dual_infeasible(problem: QP, sc: _Scaled, dx: np.ndarray, s: Settings) -> bool:
    dxu = sc.D * dx
    norm = float(np.max(np.abs(dxu), initial=0.0))
    if norm < 1e-12:
        return False
    eps = s.eps_dual_inf * norm
    if np.max(np.abs(problem.P @ dxu)) > eps or problem.q @ dxu >= -eps:
        return False
    Adx = np.vstack([problem.A, problem.G]) @ dxu
    ok_hi = np.where(np.isfinite(sc.u), Adx <= eps, True)
    ok_lo = np.where(np.isfinite(sc.l), Adx >= -eps, True)
    return bool(np.all(ok_hi & ok_lo))
