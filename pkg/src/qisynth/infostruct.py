"""Information structures: which past outputs each input may use.

An information structure over a horizon ``N`` is the family of ``m x p``
binary matrices ``S[k, j]`` for ``0 <= j <= k <= N-1``; ``S[k, j](a, b) = 1``
means input ``a`` at time ``k`` knows output ``b`` at time ``j``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .binmat import BinaryMatrix, bool_mul, bool_pow

Key = tuple[int, int]


def causal_keys(N: int) -> list[Key]:
    """All ``(k, j)`` with ``0 <= j <= k <= N-1``, lexicographic."""
    return [(k, j) for k in range(N) for j in range(k + 1)]


@dataclass(frozen=True)
class InformationStructure:
    N: int
    m: int
    p: int
    blocks: Mapping[Key, BinaryMatrix]
    kind: str = "custom"
    # generating data for structured kinds (e.g. S and Z for "comm"),
    # used to dispatch the reduced QI tests
    params: Mapping[str, object] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("horizon N must be >= 1")
        expected = set(causal_keys(self.N))
        got = set(self.blocks)
        acausal = sorted(key for key in got if key[1] > key[0])
        if acausal:
            raise ValueError(f"acausal block(s) {acausal}: need j <= k")
        extra = sorted(got - expected)
        if extra:
            raise ValueError(f"block(s) {extra} outside horizon N={self.N}")
        missing = sorted(expected - got)
        if missing:
            raise ValueError(f"missing block(s) {missing}")
        for key, blk in self.blocks.items():
            if not isinstance(blk, BinaryMatrix):
                raise TypeError(f"block {key} is not a BinaryMatrix")
            if blk.shape != (self.m, self.p):
                raise ValueError(
                    f"block {key} has shape {blk.shape}, expected {(self.m, self.p)}")

    def __getitem__(self, key: Key) -> BinaryMatrix:
        return self.blocks[key]

    def keys(self) -> list[Key]:
        return causal_keys(self.N)

    def big_S(self) -> BinaryMatrix:
        return big_S(self)


def custom_structure(blocks: Mapping[Key, object], N: int, m: int, p: int) -> InformationStructure:
    conv = {tuple(int(i) for i in key): (b if isinstance(b, BinaryMatrix) else BinaryMatrix(b))
            for key, b in blocks.items()}
    return InformationStructure(N=N, m=m, p=p, blocks=conv)


def constant_structure(S: BinaryMatrix, N: int) -> InformationStructure:
    """Time-invariant sensing topology: every block equals ``S``."""
    S = S if isinstance(S, BinaryMatrix) else BinaryMatrix(S)
    blocks = {key: S for key in causal_keys(N)}
    return InformationStructure(N=N, m=S.rows, p=S.cols, blocks=blocks,
                                kind="constant", params={"S": S})


def _delay_pattern(delay: np.ndarray, age: int) -> BinaryMatrix:
    # info about y_j is known at time k iff j <= k - d, i.e. d <= age
    return BinaryMatrix(delay <= age)


def fixed_delay_structure(d, N: int) -> InformationStructure:
    """Constant delays ``d[a, b]`` (``math.inf`` for never) from output b to input a."""
    d = np.asarray(d, dtype=float)
    if d.ndim != 2:
        raise ValueError("delay matrix must be 2-D")
    if np.any(d < 0) or np.any(np.isnan(d)):
        raise ValueError("delays must be nonnegative")
    blocks = {(k, j): _delay_pattern(d, k - j) for k, j in causal_keys(N)}
    return InformationStructure(N=N, m=d.shape[0], p=d.shape[1], blocks=blocks,
                                kind="fixed_delay", params={"delays": d})


def time_varying_delay_structure(e: Callable[[int, int, int], float] | Sequence, N: int,
                                 m: int | None = None, p: int | None = None) -> InformationStructure:
    """Delays that depend on the current time ``k``.

    ``e`` is either a callable ``e(k, a, b)`` (then ``m`` and ``p`` are required)
    or an array of shape ``(N, m, p)`` whose slice ``k`` holds the delays at time k.
    """
    if callable(e):
        if m is None or p is None:
            raise ValueError("m and p are required when e is a callable")
        table = np.array([[[float(e(k, a, b)) for b in range(p)] for a in range(m)]
                          for k in range(N)], dtype=float).reshape(N, m, p)
    else:
        table = np.asarray(e, dtype=float)
        if table.ndim != 3 or table.shape[0] != N:
            raise ValueError(f"delay table must have shape (N={N}, m, p), got {table.shape}")
        m, p = table.shape[1:]
    if np.any(table < 0) or np.any(np.isnan(table)):
        raise ValueError("delays must be nonnegative")
    blocks = {(k, j): _delay_pattern(table[k], k - j) for k, j in causal_keys(N)}
    return InformationStructure(N=N, m=m, p=p, blocks=blocks,
                                kind="time_varying_delay", params={"delays": table})


def _check_comm(Z: BinaryMatrix) -> None:
    if Z.rows != Z.cols:
        raise ValueError(f"communication topology must be square, got {Z.shape}")
    if not np.all(np.diag(Z.bits)):
        raise ValueError("communication topology must have a unit diagonal (Z(i,i)=1)")


def diameter(Z: BinaryMatrix) -> int:
    """Index at which the boolean powers of a unit-diagonal ``Z`` stop growing."""
    Z = Z if isinstance(Z, BinaryMatrix) else BinaryMatrix(Z)
    _check_comm(Z)
    cur = BinaryMatrix.identity(Z.rows)
    D = 0
    while True:
        nxt = bool_mul(cur, Z)
        if nxt == cur:
            return D
        cur = nxt
        D += 1


def comm_propagation_structure(S: BinaryMatrix, Z: BinaryMatrix, N: int) -> InformationStructure:
    """Sensing ``S`` plus memory-and-forward communication over ``Z``.

    Input ``a`` knows ``y_{k-r}`` once the measurement has had ``r`` hops to
    travel from a sensing controller to ``a``; powers are capped at the diameter.
    """
    S = S if isinstance(S, BinaryMatrix) else BinaryMatrix(S)
    Z = Z if isinstance(Z, BinaryMatrix) else BinaryMatrix(Z)
    _check_comm(Z)
    if Z.rows != S.rows:
        raise ValueError(f"Z is {Z.shape} but S has {S.rows} rows")
    D = diameter(Z)
    by_age = [bool_mul(bool_pow(Z, r), S) for r in range(min(D, N - 1) + 1)]
    blocks = {(k, j): by_age[min(D, k - j)] for k, j in causal_keys(N)}
    return InformationStructure(N=N, m=S.rows, p=S.cols, blocks=blocks,
                                kind="comm", params={"S": S, "Z": Z})


def big_S(info: InformationStructure) -> BinaryMatrix:
    """Stacked ``m(N+1) x p(N+1)`` causal pattern with a zero last block row/column."""
    N, m, p = info.N, info.m, info.p
    out = np.zeros((m * (N + 1), p * (N + 1)), dtype=bool)
    for (k, j), blk in info.blocks.items():
        out[k * m:(k + 1) * m, j * p:(j + 1) * p] = blk.bits
    return BinaryMatrix(out)


def from_big_S(bigS: BinaryMatrix, N: int, m: int, p: int) -> InformationStructure:
    """Inverse of :func:`big_S` on valid stacked patterns."""
    if bigS.shape != (m * (N + 1), p * (N + 1)):
        raise ValueError(f"stacked pattern has shape {bigS.shape}")
    bits = bigS.bits
    blocks = {(k, j): BinaryMatrix(bits[k * m:(k + 1) * m, j * p:(j + 1) * p])
              for k, j in causal_keys(N)}
    info = InformationStructure(N=N, m=m, p=p, blocks=blocks)
    if big_S(info) != bigS:
        raise ValueError("stacked pattern has entries outside the causal blocks")
    return info


def sample_structure(candidates, N: int, seed=None) -> InformationStructure:
    """Draw each block independently from a set of admissible sparsities.

    ``candidates`` is a sequence of ``m x p`` binary matrices shared by all
    blocks, or a mapping from ``(k, j)`` to such a sequence.
    """
    rng = np.random.default_rng(seed)
    blocks = {}
    for key in causal_keys(N):
        pool = candidates[key] if isinstance(candidates, Mapping) else candidates
        pool = [c if isinstance(c, BinaryMatrix) else BinaryMatrix(c) for c in pool]
        blocks[key] = pool[int(rng.integers(len(pool)))]
    first = blocks[(0, 0)]
    return InformationStructure(N=N, m=first.rows, p=first.cols, blocks=blocks)


def delay_to_json(d) -> object:
    """Delay arrays to JSON lists, with ``math.inf`` written as the string ``"inf"``."""
    arr = np.asarray(d, dtype=float)
    if arr.ndim == 0:
        v = float(arr)
        return "inf" if math.isinf(v) else int(v) if v.is_integer() else v
    return [delay_to_json(x) for x in arr]


def delay_from_json(obj) -> np.ndarray:
    def conv(x):
        if isinstance(x, list):
            return [conv(y) for y in x]
        if isinstance(x, str):
            if x.strip().lower() in ("inf", "infinity"):
                return math.inf
            raise ValueError(f"bad delay {x!r}")
        return float(x)
    return np.array(conv(obj), dtype=float)
