"""Quadratic-invariance certification over finitely many binary inequalities.

The stacked pattern ``S`` is quadratically invariant with respect to the lifted
plant ``CB`` iff, for every admissible ``(k, j, h, g)``,

    S[k, h] . Delta_g . S[h-g-1, j]  <=  S[k, j],      Delta_g = Struct(C A^g B).

Each inequality forbids one way for a controller at time ``k`` to infer,
through the plant, output information about time ``j`` that it was not given.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .binmat import (DEFAULT_TOL, BinaryMatrix, OrderReport, bool_chain, bool_mul, leq,
                     off_pattern_max, struct_of)
from .infostruct import InformationStructure, big_S, diameter
from .lifted import Plant, build_lifted, delta


@dataclass(frozen=True)
class QICondition:
    """One binary inequality ``lhs <= rhs`` of the finite test.

    For the general test the indices are ``(k, j, h, g)``. The reduced tests
    reuse the same record: the sensing test sets only ``g``; the
    communication test stores the hop count ``r`` in ``h``.
    """

    k: int | None
    j: int | None
    h: int | None
    g: int
    lhs: BinaryMatrix
    rhs: BinaryMatrix
    holds: bool
    violations: list[tuple[int, int]] = field(default_factory=list)

    @property
    def index(self) -> tuple:
        return (self.k, self.j, self.h, self.g)

    def to_dict(self) -> dict:
        return {"k": self.k, "j": self.j, "h": self.h, "g": self.g,
                "lhs": self.lhs.to_list(), "rhs": self.rhs.to_list(),
                "holds": self.holds, "violations": [list(v) for v in self.violations]}


@dataclass(frozen=True)
class QIReport:
    quadratically_invariant: bool
    conditions: list[QICondition]
    mode: str
    tol: float
    test_kind: str
    # verdict of every delta mode that was evaluated; the structural one is
    # sufficient-only because its Delta_g over-approximates
    verdicts: dict[str, bool] = field(default_factory=dict)

    @property
    def failing(self) -> list[QICondition]:
        return [c for c in self.conditions if not c.holds]

    def to_dict(self) -> dict:
        return {"quadratically_invariant": self.quadratically_invariant,
                "test_kind": self.test_kind, "mode": self.mode, "tol": self.tol,
                "verdicts": dict(self.verdicts),
                "n_conditions": len(self.conditions),
                "n_violated": len(self.failing),
                "conditions": [c.to_dict() for c in self.conditions]}


def enumerate_conditions(N: int) -> list[tuple[int, int, int, int]]:
    """All ``(k, j, h, g)`` with ``1<=k<=N-1``, ``0<=j<=k-1``, ``j+1<=h<=k``, ``0<=g<=h-j-1``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return [(k, j, h, g)
            for k in range(1, N)
            for j in range(k)
            for h in range(j + 1, k + 1)
            for g in range(h - j)]


def condition_count(N: int) -> int:
    return sum(h - j for k in range(1, N) for j in range(k) for h in range(j + 1, k + 1))


def _check_dims(info: InformationStructure, plant: Plant) -> None:
    if (info.m, info.p) != (plant.m, plant.p):
        raise ValueError(f"structure is {info.m}x{info.p} per block but plant has "
                         f"m={plant.m}, p={plant.p}")


def _deltas(plant: Plant, count: int, mode: str, tol: float) -> list[BinaryMatrix]:
    return [delta(plant, g, tol, mode) for g in range(count)]


def _evaluate_general(info: InformationStructure, deltas: list[BinaryMatrix]) -> list[QICondition]:
    out = []
    S = info.blocks
    for k, j, h, g in enumerate_conditions(info.N):
        lhs = bool_chain([S[k, h], deltas[g], S[h - g - 1, j]])
        rep = leq(lhs, S[k, j])
        out.append(QICondition(k, j, h, g, lhs, S[k, j], rep.holds, rep.violations))
    return out


def qi_test_general(info: InformationStructure, plant: Plant, mode: str = "numeric",
                    tol: float = DEFAULT_TOL) -> QIReport:
    """Exact finite test for an arbitrary information structure.

    All violated inequalities are collected, not just the first one.
    """
    _check_dims(info, plant)
    n_g = max(info.N - 1, 0)
    verdicts = {}
    conditions = None
    for md in ("numeric", "structural"):
        conds = _evaluate_general(info, _deltas(plant, n_g, md, tol))
        verdicts[md] = all(c.holds for c in conds)
        if md == mode:
            conditions = conds
    if conditions is None:
        raise ValueError(f"unknown delta mode {mode!r}")
    return QIReport(verdicts[mode], conditions, mode, tol, "general", verdicts)


def qi_test_sensing(S: BinaryMatrix, plant: Plant, mode: str = "numeric",
                    tol: float = DEFAULT_TOL) -> QIReport:
    """Reduced test for a time-invariant sensing pattern: ``S Delta_g S <= S`` for ``g < n``."""
    S = S if isinstance(S, BinaryMatrix) else BinaryMatrix(S)
    if S.shape != (plant.m, plant.p):
        raise ValueError(f"S is {S.shape}, expected {(plant.m, plant.p)}")
    conds = []
    for g, dg in enumerate(_deltas(plant, plant.n, mode, tol)):
        lhs = bool_chain([S, dg, S])
        rep = leq(lhs, S)
        conds.append(QICondition(None, None, None, g, lhs, S, rep.holds, rep.violations))
    ok = all(c.holds for c in conds)
    return QIReport(ok, conds, mode, tol, "sensing", {mode: ok})


def qi_test_comm(S: BinaryMatrix, Z: BinaryMatrix, plant: Plant, N: int,
                 mode: str = "numeric", tol: float = DEFAULT_TOL) -> QIReport:
    """Reduced test for sensing plus store-and-forward communication.

    Checks ``S Delta_g Z^r S <= Z^(g+r+1) S`` for ``g < n``, ``r <= diameter(Z)``
    and ``g + r <= N - 2``. The hop count ``r`` is reported in the ``h`` slot.
    """
    S = S if isinstance(S, BinaryMatrix) else BinaryMatrix(S)
    Z = Z if isinstance(Z, BinaryMatrix) else BinaryMatrix(Z)
    if S.shape != (plant.m, plant.p):
        raise ValueError(f"S is {S.shape}, expected {(plant.m, plant.p)}")
    if Z.shape != (plant.m, plant.m):
        raise ValueError(f"Z is {Z.shape}, expected {(plant.m, plant.m)}")
    D = diameter(Z)
    deltas = _deltas(plant, plant.n, mode, tol)
    max_pow = plant.n + D + 1
    zpow = [BinaryMatrix.identity(Z.rows)]
    for _ in range(max_pow):
        zpow.append(bool_mul(zpow[-1], Z))
    zs = [bool_mul(zp, S) for zp in zpow]
    conds = []
    for g in range(plant.n):
        for r in range(D + 1):
            if g + r > N - 2:
                continue
            lhs = bool_chain([S, deltas[g], zs[r]])
            rhs = zs[g + r + 1]
            rep = leq(lhs, rhs)
            conds.append(QICondition(None, None, r, g, lhs, rhs, rep.holds, rep.violations))
    ok = all(c.holds for c in conds)
    return QIReport(ok, conds, mode, tol, "comm", {mode: ok})


def qi_test(info: InformationStructure, plant: Plant, mode: str = "numeric",
            tol: float = DEFAULT_TOL) -> QIReport:
    """Dispatch to the smallest applicable test for the structure's kind."""
    _check_dims(info, plant)
    if info.kind == "constant" and info.N >= plant.n + 1:
        return qi_test_sensing(info.params["S"], plant, mode, tol)
    if info.kind == "comm":
        return qi_test_comm(info.params["S"], info.params["Z"], plant, info.N, mode, tol)
    return qi_test_general(info, plant, mode, tol)


def aggregate_blocks(info: InformationStructure, plant: Plant, mode: str = "numeric",
                     tol: float = DEFAULT_TOL) -> dict[tuple[int, int], BinaryMatrix]:
    """Blocks ``Phi[k, j]`` of the stacked product ``S Delta S`` as boolean sums.

    QI holds iff ``Phi[k, j] <= S[k, j]`` for every ``k >= 1``, ``j < k``.
    """
    deltas = _deltas(plant, max(info.N - 1, 0), mode, tol)
    S = info.blocks
    phi = {}
    for k in range(1, info.N):
        for j in range(k):
            acc = BinaryMatrix.zeros(info.m, info.p)
            for h in range(j + 1, k + 1):
                for g in range(h - j):
                    acc = acc + bool_chain([S[k, h], deltas[g], S[h - g - 1, j]])
            phi[k, j] = acc
    return phi


def stacked_test(info: InformationStructure, plant: Plant, tol: float = DEFAULT_TOL) -> OrderReport:
    """Direct check ``S . Struct(CB) . S <= S`` on the stacked pattern."""
    lifted = build_lifted(plant, info.N)
    bigS = big_S(info)
    return leq(bool_chain([bigS, struct_of(lifted.CB, tol), bigS]), bigS)


# -- brute-force check against the definition --------------------------------

@dataclass(frozen=True)
class OracleResult:
    consistent: bool
    counterexample: tuple[np.ndarray, np.ndarray, tuple[int, int]] | None = None
    trials: int = 0

    def to_dict(self) -> dict:
        out = {"consistent": self.consistent, "trials": self.trials}
        if self.counterexample is not None:
            L, Lp, entry = self.counterexample
            out["counterexample"] = {"L": L.tolist(), "L_prime": Lp.tolist(), "entry": list(entry)}
        return out


def random_in_pattern(pattern: BinaryMatrix, rng: np.random.Generator) -> np.ndarray:
    return np.where(pattern.bits, rng.uniform(-1.0, 1.0, pattern.shape), 0.0)


def qi_oracle(info: InformationStructure, plant: Plant, trials: int = 500, seed=None,
              tol: float = DEFAULT_TOL, targeted: bool = True, mode: str = "numeric") -> OracleResult:
    """Sample ``L, L'`` in the stacked subspace and test ``L CB L'`` for membership.

    Random sampling is exact for QI instances (no false alarms). For non-QI
    instances, when ``targeted`` is set and the finite test reports a violated
    inequality, the witness of :func:`targeted_counterexample` is tried first.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    _check_dims(info, plant)
    lifted = build_lifted(plant, info.N)
    CB = lifted.CB
    bigS = big_S(info)
    if targeted:
        rep = qi_test_general(info, plant, mode=mode, tol=tol)
        for cond in rep.failing:
            witness = targeted_counterexample(info, plant, cond, tol=tol)
            if witness is not None:
                return OracleResult(False, witness, 0)
    rng = np.random.default_rng(seed)
    outside = ~bigS.bits
    for t in range(1, trials + 1):
        L = random_in_pattern(bigS, rng)
        Lp = random_in_pattern(bigS, rng)
        prod = L @ CB @ Lp
        scale = tol * max(1.0, float(np.max(np.abs(prod), initial=0.0)))
        bad = np.argwhere(outside & (np.abs(prod) > scale))
        if bad.size:
            i, j = (int(x) for x in bad[0])
            return OracleResult(False, (L, Lp, (i, j)), t)
    return OracleResult(True, None, trials)


def _embed(N: int, m: int, p: int, k: int, j: int, block: np.ndarray) -> np.ndarray:
    out = np.zeros((m * (N + 1), p * (N + 1)))
    out[k * m:(k + 1) * m, j * p:(j + 1) * p] = block
    return out


def targeted_counterexample(info: InformationStructure, plant: Plant, cond: QICondition,
                            tol: float = DEFAULT_TOL):
    """Single-entry ``L, L'`` whose product escapes the pattern at a violated entry.

    ``L`` is nonzero only at one entry of block ``(k, h)`` and ``L'`` only at
    one entry of block ``(h-g-1, j)``, so block ``(k, j)`` of ``L CB L'`` is
    exactly ``L[k,h] C A^g B L'[h-g-1,j]``. Returns ``(L, L', entry)`` in
    stacked coordinates, or ``None`` when the violation exists only because a
    structural ``Delta_g`` ignored a numerical cancellation.
    """
    k, j, h, g = cond.index
    if None in (k, j, h):
        raise ValueError("targeted construction needs a general (k, j, h, g) condition")
    N, m, p = info.N, info.m, info.p
    S_left = info[k, h].bits
    S_right = info[h - g - 1, j].bits
    M = plant.markov(g)
    for a, b in cond.violations:
        for c in np.nonzero(S_left[a])[0]:
            for d in np.nonzero(S_right[:, b])[0]:
                if abs(M[c, d]) <= tol:
                    continue
                Lblk = np.zeros((m, p))
                Lblk[a, c] = 1.0
                Rblk = np.zeros((m, p))
                Rblk[d, b] = 1.0
                L = _embed(N, m, p, k, h, Lblk)
                Lp = _embed(N, m, p, h - g - 1, j, Rblk)
                return L, Lp, (k * m + a, j * p + b)
    return None


def escapes(L: np.ndarray, Lp: np.ndarray, info: InformationStructure, plant: Plant,
            tol: float = DEFAULT_TOL) -> bool:
    """True if ``L CB L'`` has an entry above ``tol`` outside the stacked pattern."""
    CB = build_lifted(plant, info.N).CB
    return off_pattern_max(L @ CB @ Lp, big_S(info)) > tol
