from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracrelax.control_geometry import FiniteControlSet, convex_hull, weak_norm
from fracrelax.errors import DomainError, PreconditionError, UnsupportedDimensionError
from fracrelax.fractional_ops import TimeGrid
from fracrelax.problem import CostSpec, RelaxedControl, Sampled
from fracrelax.relaxation import (
    EpigraphAtoms,
    bipolar_envelope,
    caratheodory_decompose,
    chattering_sequence,
    effective_set,
    restricted_cost,
)
from fracrelax.verification import pairwise_envelope


def envelope(points, costs):
    return bipolar_envelope(EpigraphAtoms(np.asarray(points, dtype=float), np.asarray(costs, dtype=float)))


class TestRestrictedCost:
    def test_square(self):
        cost = CostSpec(np.zeros((1, 1)), Sampled(np.zeros(1)), "quadratic", {"Q": [[1.0]]})
        ep = restricted_cost(cost, FiniteControlSet([[-1.0], [1.0]]), 0.0, [0.0])
        np.testing.assert_array_equal(ep.costs, [1.0, 1.0])

    def test_zero(self):
        cost = CostSpec(np.zeros((1, 1)), Sampled(np.zeros(1)))
        ep = restricted_cost(cost, FiniteControlSet([[-1.0], [0.5], [1.0]]), 0.3, [2.0])
        np.testing.assert_array_equal(ep.costs, [0.0, 0.0, 0.0])

    def test_reevaluation(self, rng):
        Q = np.array([[2.0, 0.3], [0.3, 1.0]])
        c = np.array([0.5, -1.0])
        cost = CostSpec(np.eye(2), Sampled(np.array([0.1, 0.2])), "quadratic", {"Q": Q, "c": c, "d": 0.7})
        U = FiniteControlSet(rng.standard_normal((5, 2)))
        x = np.array([0.4, -0.3])
        ep = restricted_cost(cost, U, 0.5, x)
        direct = [x @ x + 0.1 * x[0] + 0.2 * x[1] + u @ Q @ u + c @ u + 0.7 for u in U.atoms]
        np.testing.assert_allclose(ep.costs, direct, rtol=1e-14)

    def test_shape_check(self):
        with pytest.raises(PreconditionError):
            EpigraphAtoms(np.zeros((3, 1)), np.zeros(2))


class TestEnvelope1D:
    def test_equal_costs(self):
        env = envelope([[-1.0], [1.0]], [1.0, 1.0])
        assert all(env(u) == 1.0 for u in np.linspace(-1, 1, 11))

    def test_middle_point_above_chord(self):
        env = envelope([[-1.0], [0.0], [1.0]], [1.0, 2.0, 1.0])
        lam2 = np.linspace(0, 1, 10_000)
        brute = np.min((1 - lam2) * 1.0 + lam2 * 2.0)
        assert env(0.0) == pytest.approx(brute, abs=1e-10)
        assert env(0.0) == 1.0

    def test_abs_shape(self):
        env = envelope([[-1.0], [0.0], [1.0]], [1.0, 0.0, 1.0])
        assert env(0.0) == 0.0
        assert env(0.5) == pytest.approx(0.5) and env(-0.5) == pytest.approx(0.5)

    def test_outside_hull(self):
        env = envelope([[-1.0], [1.0]], [0.0, 0.0])
        assert env(1.5) == np.inf

    def test_pairwise_oracle(self, rng):
        for _ in range(20):
            k = rng.integers(1, 7)
            pts = rng.choice(np.linspace(-3, 3, 61), size=k, replace=False)
            c = rng.standard_normal(k)
            env = envelope(pts[:, None], c)
            grid = np.linspace(pts.min(), pts.max(), 1001)
            dev = max(abs(env(u) - pairwise_envelope(pts, c, u)) for u in grid)
            assert dev <= 1e-10

    @given(st.lists(st.floats(min_value=-3, max_value=3), min_size=2, max_size=6, unique=True), st.data())
    def test_sandwich_and_convexity(self, pts, data):
        pts = np.array(pts)
        c = np.array(data.draw(st.lists(st.floats(min_value=-5, max_value=5), min_size=len(pts), max_size=len(pts))))
        env = envelope(pts[:, None], c)
        for p, cp in zip(pts, c):
            assert env(p) <= cp + 1e-12
        assert env(pts[np.argmin(c)]) == pytest.approx(c.min(), abs=1e-12)
        u = np.linspace(pts.min(), pts.max(), 21)
        v = env.values(u)
        assert np.all(v[1:-1] <= 0.5 * (v[:-2] + v[2:]) + 1e-9)
        assert np.all(v >= c.min() - 1e-12)


class TestEnvelope2D:
    def test_square_with_low_center(self):
        pts = [[-1, -1], [1, -1], [1, 1], [-1, 1], [0, 0]]
        env = envelope(pts, [1, 1, 1, 1, -1])
        assert env([0.0, 0.0]) == pytest.approx(-1.0)
        assert env([0.5, 0.0]) == pytest.approx(0.0)
        assert env([1.0, 1.0]) == pytest.approx(1.0)
        assert env([1.5, 0.0]) == np.inf

    def test_collinear_reduces_to_segment(self):
        env = envelope([[0, 0], [1, 1], [2, 2]], [0.0, 5.0, 0.0])
        assert env.hull.kind == "segment"
        assert env([1.0, 1.0]) == pytest.approx(0.0)
        assert env([1.0, 0.0]) == np.inf

    def test_lp_oracle(self, rng):
        from scipy.optimize import linprog

        for _ in range(10):
            P = rng.standard_normal((6, 2))
            c = rng.standard_normal(6)
            env = envelope(P, c)
            for _ in range(5):
                lam = rng.dirichlet(np.ones(6))
                u = lam @ P
                res = linprog(c, A_eq=np.vstack([P.T, np.ones(6)]), b_eq=np.append(u, 1.0), bounds=(0, None))
                assert env(u) == pytest.approx(res.fun, abs=1e-8)

    def test_unsupported(self):
        with pytest.raises(UnsupportedDimensionError):
            envelope(np.zeros((2, 3)) + np.arange(2)[:, None], [0.0, 1.0])


class TestEffectiveSet:
    def test_interval(self):
        assert effective_set(envelope([[-1.0], [1.0]], [0, 0])).interval == (-1.0, 1.0)

    def test_singleton(self):
        assert effective_set(envelope([[0.3]], [2.0])).kind == "point"

    def test_triangle(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        h = effective_set(envelope(pts, [0.0, 1.0, 2.0]))
        assert h.kind == "polygon"
        np.testing.assert_array_equal(h.vertices, convex_hull(pts).vertices)


class TestCaratheodory:
    def test_atom(self):
        env = envelope([[-1.0], [0.0], [1.0]], [1.0, 0.0, 1.0])
        out = caratheodory_decompose(env, 1.0)
        assert len(out) == 1 and out[0][0] == 2 and out[0][2] == 1.0

    def test_symmetric(self):
        env = envelope([[-1.0], [1.0]], [1.0, 1.0])
        assert [w for _, _, w in caratheodory_decompose(env, 0.0)] == [0.5, 0.5]

    def test_left_segment_on_ties(self):
        env = envelope([[-1.0], [0.0], [1.0]], [1.0, 0.0, 1.0])
        out = caratheodory_decompose(env, 0.0)
        assert [j for j, _, _ in out] == [1]
        env = envelope([[-1.0], [0.0], [1.0]], [0.0, 0.0, 0.0])
        # collinear lifted atoms are not breakpoints: the outer chord is used
        assert [(j, w) for j, _, w in caratheodory_decompose(env, 0.0)] == [(0, 0.5), (2, 0.5)]
        env = envelope([[-1.0], [0.0], [1.0]], [2.0, 0.0, 1.0])
        out = caratheodory_decompose(env, 0.0)
        assert [j for j, _, _ in out] == [1]

    @given(st.floats(min_value=-1, max_value=1))
    def test_reconstruction_1d(self, u):
        P = np.array([[-1.0], [0.2], [1.0]])
        c = np.array([0.5, -0.3, 1.2])
        env = envelope(P, c)
        out = caratheodory_decompose(env, u)
        lam = np.array([w for _, _, w in out])
        assert len(out) <= 2 and np.all(lam > 0) and lam.sum() == pytest.approx(1.0, abs=1e-15)
        assert sum(w * p[0] for _, p, w in out) == pytest.approx(u, abs=1e-12)
        assert sum(w * c[j] for j, _, w in out) == pytest.approx(env(u), abs=1e-10)

    def test_reconstruction_2d(self, rng):
        for _ in range(10):
            P = rng.standard_normal((7, 2))
            c = rng.standard_normal(7)
            env = envelope(P, c)
            u = rng.dirichlet(np.ones(7)) @ P
            out = caratheodory_decompose(env, u)
            assert len(out) <= 3
            np.testing.assert_allclose(sum(w * p for _, p, w in out), u, atol=1e-12)
            assert sum(w * c[j] for j, _, w in out) == pytest.approx(env(u), abs=1e-10)

    def test_outside(self):
        with pytest.raises(DomainError):
            caratheodory_decompose(envelope([[-1.0], [1.0]], [0, 0]), 2.0)


class TestChattering:
    atoms = np.array([[-1.0], [1.0]])

    @pytest.mark.parametrize("N", [1, 4, 16, 64])
    def test_square_wave(self, N):
        rel = RelaxedControl.uniform(TimeGrid(1.0, 1), self.atoms)
        u = chattering_sequence(rel, N)
        assert u.grid.N == 2 * N
        np.testing.assert_array_equal(u.values[0, :, 0], np.tile([-1.0, 1.0], N))
        assert weak_norm(u.values[0], u.grid.h) == pytest.approx(1 / (2 * N), abs=1e-15)

    def test_pure_atom(self):
        rel = RelaxedControl.from_atom_indices(TimeGrid(1.0, 4), self.atoms, [[1, 1, 1, 1]])
        u = chattering_sequence(rel, 8)
        assert np.all(u.values == 1.0)

    def test_block_averages_track_weights(self, rng):
        grid = TimeGrid(1.0, 4)
        w = rng.dirichlet(np.ones(3), size=(1, 4))
        atoms = np.array([[-1.0], [0.5], [2.0]])
        rel = RelaxedControl(grid, w, atoms)
        for N in (4, 16, 64):
            u = chattering_sequence(rel, N, sub=8)
            star = rel.refine(u.grid.N // 4).barycenter()
            d = weak_norm(u.values[0] - star.values[0], u.grid.h)
            assert d <= 3.0 * 1.0 / N

    def test_weak_distance_nonincreasing(self, rng):
        # switching times are quantized to 1/sub of a block; with sub = 16 the
        # rounding carry stays below the within-block excursion
        grid = TimeGrid(1.0, 2)
        rel = RelaxedControl(grid, rng.dirichlet(np.ones(2), size=(1, 2)), self.atoms)
        d = []
        for N in (2, 4, 8, 16, 32):
            u = chattering_sequence(rel, N, sub=16)
            star = rel.refine(u.grid.N // 2).barycenter()
            d.append(weak_norm(u.values[0] - star.values[0], u.grid.h))
            assert d[-1] <= 2.0 * 1.0 / (2 * N) + 1e-12
        assert all(b <= a + 1e-15 for a, b in zip(d, d[1:]))

    def test_multiple_required(self):
        rel = RelaxedControl.uniform(TimeGrid(1.0, 4), self.atoms)
        with pytest.raises(PreconditionError):
            chattering_sequence(rel, 6)
