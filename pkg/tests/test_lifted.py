import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qisynth.binmat import BinaryMatrix
from qisynth.lifted import (ConstraintSpec, Plant, build_constraint_data, build_lifted, delta,
                            stack_constraints)
from qisynth.polytope import UnboundedPolytopeError
from conftest import random_causal, random_plant
from oracles import rollout


def test_plant_defaults_and_validation():
    pl = Plant(np.eye(2), np.ones((2, 1)), np.ones((1, 2)))
    assert np.array_equal(pl.D, np.eye(2)) and np.array_equal(pl.H, np.zeros((1, 2)))
    assert (pl.n, pl.m, pl.p) == (2, 1, 1)
    with pytest.raises(ValueError):
        Plant(np.eye(2), np.ones((3, 1)), np.eye(2))
    with pytest.raises(ValueError):
        Plant(np.ones((2, 3)), np.ones((2, 1)), np.eye(2))


def test_trivial_lift():
    L = build_lifted(Plant(np.zeros((2, 2)), np.eye(2), np.eye(2)), 1)
    assert np.array_equal(L.boldA, np.vstack([np.eye(2), np.zeros((2, 2))]))
    assert np.array_equal(L.boldE[2:, :2], np.eye(2))
    assert not L.boldE[:2].any() and not L.boldE[:, 2:].any()


def test_example_CB_blocks(example1_plant):
    L = build_lifted(example1_plant, 3)
    A, B, C = example1_plant.A, example1_plant.B, example1_plant.C
    blk = lambda M, i, j: M[3 * i:3 * i + 3, 2 * j:2 * j + 2]  # noqa: E731
    for k in range(3):
        assert np.array_equal(blk(L.CB, k + 1, k), C @ B)
    assert np.array_equal(blk(L.CB, 3, 0), C @ A @ A @ B)
    for i in range(4):
        for j in range(i, 4):
            assert not blk(L.CB, i, j).any()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 4), st.integers(1, 3), st.integers(1, 3),
       st.integers(1, 6))
def test_lifted_matches_rollout(seed, n, m, p, N):
    rng = np.random.default_rng(seed)
    pl = random_plant(rng, n, m, p, density=0.7)
    L = build_lifted(pl, N)
    x0 = rng.standard_normal(n)
    u = rng.standard_normal((N, m))
    w = rng.standard_normal((N, n))
    xs, ys = rollout(pl.A, pl.B, pl.C, pl.D, pl.H, x0, u, w)
    ustack = np.concatenate([u.ravel(), np.zeros(m)])
    wstack = np.concatenate([w.ravel(), np.zeros(n)])
    x = L.boldA @ x0 + L.boldB @ ustack + L.boldED @ wstack
    y = L.boldC @ x + L.boldH @ wstack
    scale = max(1.0, np.abs(xs).max())
    assert np.allclose(x, xs.ravel(), rtol=0, atol=1e-10 * scale)
    assert np.allclose(y, ys.ravel(), rtol=0, atol=1e-10 * max(1.0, np.abs(ys).max()))
    # y = CA x0 + CB u + P w
    assert np.allclose(y, L.CA @ x0 + L.CB @ ustack + L.P @ wstack, atol=1e-10 * scale)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 5))
def test_nilpotent_and_invertible(seed, N):
    rng = np.random.default_rng(seed)
    pl = random_plant(rng, 3, 2, 2, density=0.8)
    L = build_lifted(pl, N)
    assert not np.linalg.matrix_power(L.CB, N + 1).any()
    K, _ = random_causal(rng, N, 2, 2)
    M = np.eye(L.CB.shape[0]) - L.CB @ K
    assert np.allclose(np.diag(M), 1.0) and np.allclose(np.triu(M, 1), 0.0)
    assert abs(np.linalg.det(M) - 1.0) < 1e-8


class TestDelta:
    def test_example(self, example1_plant):
        assert delta(example1_plant, 0) == BinaryMatrix([[1, 0], [1, 0], [0, 1]])
        assert delta(example1_plant, 1) == BinaryMatrix([[0, 1], [1, 0], [1, 0]])

    def test_zero_input_matrix(self):
        pl = Plant(np.ones((2, 2)), np.zeros((2, 2)), np.eye(2))
        for g in range(4):
            for mode in ("numeric", "structural"):
                assert delta(pl, g, mode=mode).nnz == 0

    def test_cancellation_only_structural(self):
        # C A B = [1 -1] [1; 1] = 0 numerically, structurally nonzero
        pl = Plant(np.eye(2), np.array([[1.0], [1.0]]), np.array([[1.0, -1.0]]))
        assert delta(pl, 0).nnz == 0
        assert delta(pl, 0, mode="structural").nnz == 1

    def test_bad_mode(self, example1_plant):
        with pytest.raises(ValueError):
            delta(example1_plant, 0, mode="symbolic")

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2 ** 31), st.integers(0, 5))
    def test_structural_superset(self, seed, g):
        rng = np.random.default_rng(seed)
        pl = random_plant(rng, 4, 3, 2, density=0.4)
        assert delta(pl, g) <= delta(pl, g, mode="structural")


class TestConstraints:
    def test_vacuous(self, example1_plant):
        spec = ConstraintSpec(U=np.zeros((2, 3)), V=np.zeros((2, 2)), b=[1.0, 2.0],
                              R=np.zeros((1, 3)), z=[3.0], Aw=np.vstack([np.eye(3), -np.eye(3)]),
                              bw=np.ones(6))
        L = build_lifted(example1_plant, 3)
        data = build_constraint_data(spec, L, [1.0, 2.0, 3.0])
        assert not data.F.any() and not data.G.any()
        assert np.array_equal(data.c, [1, 2, 1, 2, 1, 2, 3])

    def test_zero_initial_state(self, example1_plant):
        spec = ConstraintSpec.boxes(3, 2, 2.0, 1.0, 0.1)
        L = build_lifted(example1_plant, 3)
        data = build_constraint_data(spec, L, np.zeros(3))
        assert np.array_equal(data.c, np.concatenate([np.tile(spec.b, 3), spec.z]))

    def test_unbounded_polytope_rejected(self):
        with pytest.raises(UnboundedPolytopeError):
            ConstraintSpec(U=np.zeros((0, 2)), V=np.zeros((0, 1)), b=[], R=np.zeros((0, 2)), z=[],
                           Aw=[[1.0, 0.0]], bw=[1.0])

    def test_dimension_mismatch(self, example1_plant):
        spec = ConstraintSpec.boxes(2, 2, 1.0, 1.0, 0.1)
        with pytest.raises(ValueError):
            build_constraint_data(spec, build_lifted(example1_plant, 2), np.zeros(3))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2 ** 31))
    def test_stacked_matches_stagewise(self, seed):
        rng = np.random.default_rng(seed)
        n, m, N = 3, 2, 4
        pl = random_plant(rng, n, m, 3)
        spec = ConstraintSpec(U=rng.standard_normal((4, n)), V=rng.standard_normal((4, m)),
                              b=rng.random(4) * 3, R=rng.standard_normal((2, n)), z=rng.random(2) * 3,
                              Aw=np.vstack([np.eye(n), -np.eye(n)]), bw=np.full(2 * n, 0.2))
        x0 = rng.standard_normal(n) * 0.3
        u = rng.standard_normal((N, m)) * 0.3
        w = rng.uniform(-0.2, 0.2, (N, n))
        xs, _ = rollout(pl.A, pl.B, pl.C, pl.D, pl.H, x0, u, w)
        stage_ok = all(np.all(spec.U @ xs[k] + spec.V @ u[k] <= spec.b) for k in range(N))
        stage_ok &= bool(np.all(spec.R @ xs[N] <= spec.z))
        boldU, boldV, rhs = stack_constraints(spec, N, n, m)
        lhs = boldU @ xs.ravel() + boldV @ np.concatenate([u.ravel(), np.zeros(m)])
        assert bool(np.all(lhs <= rhs)) == stage_ok
        # the same rows through F, G, c
        L = build_lifted(pl, N)
        data = build_constraint_data(spec, L, x0)
        via = data.F @ np.concatenate([u.ravel(), np.zeros(m)]) + data.G @ np.concatenate(
            [w.ravel(), np.zeros(n)])
        assert np.allclose(via - data.c, lhs - rhs, atol=1e-10)
