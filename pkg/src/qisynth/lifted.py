"""Finite-horizon stacked ("lifted") system matrices.

Over a horizon ``N`` the trajectories ``x = [x_0; ...; x_N]``,
``u = [u_0; ...; u_{N-1}; 0]`` and ``w = [w_0; ...; w_{N-1}; 0]`` satisfy

    x = A_lift x0 + B_lift u + ED w,     y = C_lift x + H_lift w.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .binmat import DEFAULT_TOL, BinaryMatrix, bool_chain, bool_pow, struct_of
from .polytope import bounding_box


def _mat(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class Plant:
    """Discrete-time LTI plant ``x+ = A x + B u + D w``, ``y = C x + H w``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray | None = None
    H: np.ndarray | None = None

    def __post_init__(self):
        A = _mat(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        B = _mat(self.B, "B")
        C = _mat(self.C, "C")
        D = np.eye(n) if self.D is None else _mat(self.D, "D")
        H = np.zeros((C.shape[0], n)) if self.H is None else _mat(self.H, "H")
        if B.shape[0] != n:
            raise ValueError(f"B has {B.shape[0]} rows, expected n={n}")
        if C.shape[1] != n:
            raise ValueError(f"C has {C.shape[1]} columns, expected n={n}")
        if D.shape != (n, n):
            raise ValueError(f"D must be {n}x{n}, got {D.shape}")
        if H.shape != (C.shape[0], n):
            raise ValueError(f"H must be {C.shape[0]}x{n}, got {H.shape}")
        for name, val in zip("ABCDH", (A, B, C, D, H)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def markov(self, g: int) -> np.ndarray:
        """``C A^g B``: effect of an input on the output ``g+1`` steps later."""
        return self.C @ np.linalg.matrix_power(self.A, g) @ self.B


def delta(plant: Plant, g: int, tol: float = DEFAULT_TOL, mode: str = "numeric") -> BinaryMatrix:
    """Pattern of ``C A^g B``.

    ``mode="numeric"`` thresholds the real product at ``tol``; ``"structural"``
    multiplies the patterns of C, A and B in the boolean semiring, which can
    only add ones (it ignores cancellation).
    """
    if g < 0:
        raise ValueError("g must be nonnegative")
    if mode == "numeric":
        return struct_of(plant.markov(g), tol)
    if mode == "structural":
        return bool_chain([struct_of(plant.C, 0.0), bool_pow(struct_of(plant.A, 0.0), g),
                           struct_of(plant.B, 0.0)])
    raise ValueError(f"unknown delta mode {mode!r}")


@dataclass(frozen=True, eq=False)
class LiftedSystem:
    N: int
    n: int
    m: int
    p: int
    boldA: np.ndarray
    boldE: np.ndarray
    boldB: np.ndarray
    boldED: np.ndarray
    boldC: np.ndarray
    boldH: np.ndarray

    @cached_property
    def P(self) -> np.ndarray:
        """Disturbance-to-output map ``C_lift ED + H_lift``."""
        return self.boldC @ self.boldED + self.boldH

    @cached_property
    def CB(self) -> np.ndarray:
        return self.boldC @ self.boldB

    @cached_property
    def CA(self) -> np.ndarray:
        return self.boldC @ self.boldA


def build_lifted(plant: Plant, N: int) -> LiftedSystem:
    if N < 1:
        raise ValueError("horizon N must be >= 1")
    n = plant.n
    powers = [np.eye(n)]
    for _ in range(N):
        powers.append(plant.A @ powers[-1])
    boldA = np.vstack(powers)
    boldE = np.zeros((n * (N + 1), n * (N + 1)))
    for i in range(1, N + 1):
        for j in range(i):
            boldE[i * n:(i + 1) * n, j * n:(j + 1) * n] = powers[i - j - 1]
    eye = np.eye(N + 1)
    return LiftedSystem(
        N=N, n=n, m=plant.m, p=plant.p,
        boldA=boldA,
        boldE=boldE,
        boldB=boldE @ np.kron(eye, plant.B),
        boldED=boldE @ np.kron(eye, plant.D),
        boldC=np.kron(eye, plant.C),
        boldH=np.kron(eye, plant.H),
    )


@dataclass(frozen=True, eq=False)
class ConstraintSpec:
    """Stage polytope ``U x + V u <= b``, terminal set ``R x <= z`` and
    per-step disturbance polytope ``Aw w <= bw``."""

    U: np.ndarray
    V: np.ndarray
    b: np.ndarray
    R: np.ndarray
    z: np.ndarray
    Aw: np.ndarray
    bw: np.ndarray
    validate: bool = True

    def __post_init__(self):
        U, V, R, Aw = (np.asarray(x, dtype=float) for x in (self.U, self.V, self.R, self.Aw))
        b, z, bw = (np.asarray(x, dtype=float).reshape(-1) for x in (self.b, self.z, self.bw))
        n = Aw.shape[1] if Aw.ndim == 2 else None
        if Aw.ndim != 2 or Aw.shape[0] != bw.size:
            raise ValueError(f"Aw {Aw.shape} and bw {bw.shape} are inconsistent")
        U = U.reshape(-1, n)
        R = R.reshape(-1, n)
        s = U.shape[0]
        V = V.reshape(s, -1) if V.size else np.zeros((s, V.shape[-1] if V.ndim == 2 else 0))
        if V.shape[0] != s or b.size != s:
            raise ValueError(f"stage constraint rows disagree: U {U.shape}, V {V.shape}, b {b.shape}")
        if z.size != R.shape[0]:
            raise ValueError(f"terminal constraint rows disagree: R {R.shape}, z {z.shape}")
        for name, val in (("U", U), ("V", V), ("b", b), ("R", R), ("z", z), ("Aw", Aw), ("bw", bw)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        if self.validate:
            bounding_box(Aw, bw)

    @property
    def s(self) -> int:
        return self.U.shape[0]

    @property
    def r(self) -> int:
        return self.R.shape[0]

    @property
    def q(self) -> int:
        return self.Aw.shape[0]

    def check_dims(self, n: int, m: int) -> None:
        if self.U.shape[1] != n or self.R.shape[1] != n or self.Aw.shape[1] != n:
            raise ValueError(f"constraint state dimension does not match n={n}")
        if self.s and self.V.shape[1] != m:
            raise ValueError(f"V has {self.V.shape[1]} columns, expected m={m}")

    @classmethod
    def boxes(cls, n: int, m: int, x_max, u_max, w_max, terminal: bool = True) -> "ConstraintSpec":
        """Symmetric box limits ``|x| <= x_max``, ``|u| <= u_max``, ``|w| <= w_max``."""
        x_max = np.broadcast_to(np.asarray(x_max, dtype=float), (n,))
        u_max = np.broadcast_to(np.asarray(u_max, dtype=float), (m,))
        w_max = np.broadcast_to(np.asarray(w_max, dtype=float), (n,))
        In, Im = np.eye(n), np.eye(m)
        U = np.vstack([In, -In, np.zeros((2 * m, n))])
        V = np.vstack([np.zeros((2 * n, m)), Im, -Im])
        b = np.concatenate([x_max, x_max, u_max, u_max])
        R = np.vstack([In, -In]) if terminal else np.zeros((0, n))
        z = np.concatenate([x_max, x_max]) if terminal else np.zeros(0)
        return cls(U=U, V=V, b=b, R=R, z=z, Aw=np.vstack([In, -In]),
                   bw=np.concatenate([w_max, w_max]))


@dataclass(frozen=True, eq=False)
class ConstraintData:
    """``F v + (F Q P + G) w <= c`` together with the stacked U and V."""

    F: np.ndarray
    G: np.ndarray
    c: np.ndarray
    boldU: np.ndarray
    boldV: np.ndarray
    rhs: np.ndarray  # [1 (x) b; z], the x0-free right-hand side

    def __iter__(self):
        return iter((self.F, self.G, self.c))


def stack_constraints(spec: ConstraintSpec, N: int, n: int, m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    s, r = spec.s, spec.r
    boldU = np.zeros((N * s + r, n * (N + 1)))
    boldV = np.zeros((N * s + r, m * (N + 1)))
    boldU[:N * s, :N * n] = np.kron(np.eye(N), spec.U)
    boldU[N * s:, N * n:] = spec.R
    if s:
        boldV[:N * s, :N * m] = np.kron(np.eye(N), spec.V)
    rhs = np.concatenate([np.tile(spec.b, N), spec.z])
    return boldU, boldV, rhs


def build_constraint_data(spec: ConstraintSpec, lifted: LiftedSystem, x0) -> ConstraintData:
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != lifted.n:
        raise ValueError(f"x0 has size {x0.size}, expected n={lifted.n}")
    spec.check_dims(lifted.n, lifted.m)
    boldU, boldV, rhs = stack_constraints(spec, lifted.N, lifted.n, lifted.m)
    F = boldU @ lifted.boldB + boldV
    G = boldU @ lifted.boldED
    c = rhs - boldU @ lifted.boldA @ x0
    return ConstraintData(F=F, G=G, c=c, boldU=boldU, boldV=boldV, rhs=rhs)
