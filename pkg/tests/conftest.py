from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from qisynth.binmat import BinaryMatrix
from qisynth.infostruct import custom_structure, causal_keys
from qisynth.lifted import Plant

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "qisynth" / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def example1_plant() -> Plant:
    A = np.array([[0, 0, 1], [-2, 0, 0], [0, 3, 0]], dtype=float)
    B = np.array([[1, 0], [1, 0], [0, 1]], dtype=float)
    return Plant(A, B, np.eye(3))


EXAMPLE1_BLOCKS = {
    (0, 0): [[0, 0, 0], [1, 0, 0]],
    (1, 0): [[0, 0, 1], [0, 1, 1]],
    (1, 1): [[1, 0, 0], [1, 0, 0]],
    (2, 0): [[1, 1, 1], [0, 0, 1]],
    (2, 1): [[1, 0, 1], [1, 1, 0]],
    (2, 2): [[0, 1, 0], [0, 0, 0]],
}


@pytest.fixture
def example1_info():
    return custom_structure(EXAMPLE1_BLOCKS, 3, 2, 3)


def random_plant(rng, n, m, p, density=0.5, D=True) -> Plant:
    """Sparse Gaussian plant; sparsity makes both QI verdicts likely."""
    def sp(r, c):
        return rng.standard_normal((r, c)) * (rng.random((r, c)) < density)
    Dm = sp(n, n) if D else None
    H = sp(p, n) * 0.5
    return Plant(sp(n, n) / np.sqrt(n), sp(n, m), sp(p, n), Dm, H)


def random_pattern(rng, r, c, density=0.5) -> BinaryMatrix:
    return BinaryMatrix(rng.random((r, c)) < density)


def random_custom(rng, N, m, p, density=0.5):
    return custom_structure({key: random_pattern(rng, m, p, density) for key in causal_keys(N)},
                            N, m, p)


def random_causal(rng, N, m, p, scale=1.0):
    from qisynth.policy import causal_pattern
    pat = causal_pattern(N, m, p).bits
    M = np.where(pat, rng.standard_normal(pat.shape) * scale, 0.0)
    v = np.zeros(m * (N + 1))
    v[:N * m] = rng.standard_normal(N * m)
    return M, v


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
