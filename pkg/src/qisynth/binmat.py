"""Boolean-semiring matrix algebra for sparsity patterns.

A :class:`BinaryMatrix` is an immutable 0/1 matrix. Products and sums follow
the boolean semiring (``1 + 1 = 1``), so ``X @ Z`` is the pattern of the real
product of any two matrices with patterns ``X`` and ``Z`` (barring cancellation).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

DEFAULT_TOL = 1e-9


class BinaryMatrix:
    """Dense immutable 0/1 matrix.

    Parameters
    ----------
    bits : array_like
        Two-dimensional array whose entries are all exactly 0 or 1
        (booleans are accepted).
    """

    __slots__ = ("_bits",)

    def __init__(self, bits):
        arr = np.asarray(bits)
        if arr.ndim != 2:
            if arr.size == 0:
                arr = arr.reshape(0, 0)
            else:
                raise ValueError(f"binary matrix must be 2-D, got shape {arr.shape}")
        if arr.dtype != np.bool_:
            if arr.size and not np.all((arr == 0) | (arr == 1)):
                raise ValueError("binary matrix entries must be 0 or 1")
            arr = arr.astype(bool)
        arr = arr.copy()
        arr.setflags(write=False)
        self._bits = arr

    # -- constructors -----------------------------------------------------
    @classmethod
    def zeros(cls, rows: int, cols: int) -> "BinaryMatrix":
        return cls(np.zeros((rows, cols), dtype=bool))

    @classmethod
    def ones(cls, rows: int, cols: int) -> "BinaryMatrix":
        return cls(np.ones((rows, cols), dtype=bool))

    @classmethod
    def identity(cls, n: int) -> "BinaryMatrix":
        return cls(np.eye(n, dtype=bool))

    # -- basic properties -------------------------------------------------
    @property
    def bits(self) -> np.ndarray:
        """Read-only boolean view of the entries."""
        return self._bits

    @property
    def shape(self) -> tuple[int, int]:
        return self._bits.shape

    @property
    def rows(self) -> int:
        return self._bits.shape[0]

    @property
    def cols(self) -> int:
        return self._bits.shape[1]

    def to_array(self, dtype=float) -> np.ndarray:
        return self._bits.astype(dtype)

    def to_list(self) -> list[list[int]]:
        return self._bits.astype(int).tolist()

    @property
    def nnz(self) -> int:
        return int(self._bits.sum())

    def __getitem__(self, idx):
        out = self._bits[idx]
        if isinstance(out, np.ndarray):
            return out.astype(int)
        return int(out)

    # -- algebra ----------------------------------------------------------
    def __matmul__(self, other: "BinaryMatrix") -> "BinaryMatrix":
        return bool_mul(self, other)

    def __add__(self, other: "BinaryMatrix") -> "BinaryMatrix":
        return bool_add(self, other)

    __or__ = __add__

    def __le__(self, other: "BinaryMatrix") -> bool:
        return leq(self, other).holds

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryMatrix):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._bits, other._bits))

    def __hash__(self) -> int:
        return hash((self.shape, self._bits.tobytes()))

    def __repr__(self) -> str:
        return f"BinaryMatrix({self.to_list()})"


@dataclass(frozen=True)
class OrderReport:
    """Result of comparing two binary matrices entrywise."""

    holds: bool
    violations: list[tuple[int, int]] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.holds


def _check_same_shape(X: BinaryMatrix, Y: BinaryMatrix, what: str) -> None:
    if X.shape != Y.shape:
        raise ValueError(f"{what}: dimension mismatch {X.shape} vs {Y.shape}")


def struct_of(Y, tol: float = DEFAULT_TOL) -> BinaryMatrix:
    """Sparsity pattern of a real matrix: 1 where ``|Y(i,j)| > tol``."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        Y = Y.reshape(1, -1) if Y.size else Y.reshape(0, 0)
    return BinaryMatrix(np.abs(Y) > tol)


def bool_mul(X: BinaryMatrix, Z: BinaryMatrix) -> BinaryMatrix:
    if X.cols != Z.rows:
        raise ValueError(f"bool_mul: dimension mismatch {X.shape} @ {Z.shape}")
    # integer counts are exact; any positive count means some path exists
    prod = X.bits.astype(np.int64) @ Z.bits.astype(np.int64)
    return BinaryMatrix(prod > 0)


def bool_add(X: BinaryMatrix, Y: BinaryMatrix) -> BinaryMatrix:
    _check_same_shape(X, Y, "bool_add")
    return BinaryMatrix(X.bits | Y.bits)


def bool_sum(mats: Iterable[BinaryMatrix], rows: int, cols: int) -> BinaryMatrix:
    acc = np.zeros((rows, cols), dtype=bool)
    for M in mats:
        if M.shape != (rows, cols):
            raise ValueError(f"bool_sum: expected {(rows, cols)}, got {M.shape}")
        acc |= M.bits
    return BinaryMatrix(acc)


def leq(X: BinaryMatrix, Y: BinaryMatrix) -> OrderReport:
    """Entrywise order ``X <= Y``, listing every entry where X is 1 and Y is 0."""
    _check_same_shape(X, Y, "leq")
    bad = X.bits & ~Y.bits
    viol = [(int(i), int(j)) for i, j in zip(*np.nonzero(bad))]
    return OrderReport(holds=not viol, violations=viol)


def bool_pow(Z: BinaryMatrix, r: int) -> BinaryMatrix:
    if Z.rows != Z.cols:
        raise ValueError(f"bool_pow: matrix must be square, got {Z.shape}")
    if r < 0:
        raise ValueError("bool_pow: exponent must be nonnegative")
    result = BinaryMatrix.identity(Z.rows)
    base = Z
    # square-and-multiply; the semiring product is associative
    while r:
        if r & 1:
            result = bool_mul(result, base)
        r >>= 1
        if r:
            base = bool_mul(base, base)
    return result


def bool_chain(mats: Sequence[BinaryMatrix]) -> BinaryMatrix:
    """Left-to-right boolean product of a non-empty sequence."""
    out = mats[0]
    for M in mats[1:]:
        out = bool_mul(out, M)
    return out


def member(Y, X: BinaryMatrix, tol: float = 0.0) -> bool:
    """True iff ``Y`` lies in the sparsity subspace of ``X`` (up to ``tol``)."""
    Y = np.asarray(Y, dtype=float)
    if Y.shape != X.shape:
        raise ValueError(f"member: dimension mismatch {Y.shape} vs {X.shape}")
    if Y.size == 0:
        return True
    return bool(np.all(np.abs(Y[~X.bits]) <= tol))


def off_pattern_max(Y, X: BinaryMatrix) -> float:
    """Largest magnitude of ``Y`` outside the support of ``X`` (0 if none)."""
    Y = np.asarray(Y, dtype=float)
    if Y.shape != X.shape:
        raise ValueError(f"dimension mismatch {Y.shape} vs {X.shape}")
    outside = np.abs(Y[~X.bits])
    return float(outside.max()) if outside.size else 0.0


def project(Y, X: BinaryMatrix) -> np.ndarray:
    """Zero every entry of ``Y`` outside the support of ``X``."""
    Y = np.asarray(Y, dtype=float)
    if Y.shape != X.shape:
        raise ValueError(f"project: dimension mismatch {Y.shape} vs {X.shape}")
    return np.where(X.bits, Y, 0.0)
