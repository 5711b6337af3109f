from __future__ import annotations

import numpy as np
import pytest

from fracrelax.control_geometry import FiniteControlSet
from fracrelax.errors import HypothesisError, PreconditionError
from fracrelax.fractional_ops import TimeGrid
from fracrelax.problem import (
    ControlSignal,
    CostSpec,
    DynamicsSpec,
    NonlocalSpec,
    ProblemSpec,
    RelaxedControl,
    Sampled,
)
from fracrelax.sobolev_system import OperatorTriple


def make(alpha=0.5, beta=0.25, taus=(), H=(), control_time=0.0):
    return ProblemSpec(
        alpha, 1.0, np.zeros(1), OperatorTriple.scalar(1, 1, 0), (np.eye(1),),
        DynamicsSpec(Sampled(np.zeros(1)), np.zeros((1, 1)), (np.eye(1),)),
        NonlocalSpec(np.zeros(1), taus, H, control_time),
        (CostSpec(np.eye(1), Sampled(np.zeros(1))),),
        FiniteControlSet([[-1.0], [1.0]]), beta=beta,
    )


class TestSampled:
    def test_constant(self):
        s = Sampled(np.array([1.0, 2.0]))
        assert s.constant
        np.testing.assert_array_equal(s(np.array([0.0, 0.7])), [[1.0, 2.0], [1.0, 2.0]])

    def test_interpolated(self):
        s = Sampled(np.array([[0.0], [2.0]]), horizon=2.0)
        np.testing.assert_allclose(s(np.array([0.5, 1.0]))[:, 0], [0.5, 1.0])


class TestDynamics:
    def test_evaluation(self):
        d = DynamicsSpec(Sampled(np.array([1.0])), [[2.0]], ([[3.0]],), "sin", 0.5)
        out = d(np.array([0.0]), np.array([[0.2]]), np.array([[[0.1]]]))
        assert out[0, 0] == pytest.approx(1.0 + 0.4 + 0.3 + 0.5 * np.sin(0.2))
        assert d.k1 == pytest.approx(3.0)

    def test_saturation(self):
        d = DynamicsSpec(Sampled(np.zeros(1)), [[0.0]], ([[0.0]],), "saturation", 2.0)
        assert d.nu(np.array([[5.0]]))[0, 0] == 2.0

    def test_unknown_nonlinearity(self):
        with pytest.raises(PreconditionError):
            DynamicsSpec(Sampled(np.zeros(1)), [[0.0]], ([[0.0]],), "cubic")


class TestCost:
    @pytest.mark.parametrize("kind, params, u, expected", [
        ("zero", {}, [[2.0]], 0.0),
        ("quadratic", {"Q": [[2.0]], "c": [1.0], "d": 0.5}, [[3.0]], 18.0 + 3.0 + 0.5),
        ("double_well", {"w": 2.0}, [[2.0]], 2.0 * 9.0),
    ])
    def test_catalog(self, kind, params, u, expected):
        c = CostSpec(np.zeros((1, 1)), Sampled(np.zeros(1)), kind, params)
        assert c.q(np.array(u))[0] == pytest.approx(expected)

    def test_lipschitz_in_control(self, rng):
        c = CostSpec(np.eye(1), Sampled(np.zeros(1)), "double_well", {"w": 1.5})
        _, ku = c.lipschitz(1.0, 2.0)
        u = rng.uniform(-2, 2, (200, 1))
        v = rng.uniform(-2, 2, (200, 1))
        assert np.all(np.abs(c.q(u) - c.q(v)) <= ku * np.abs(u - v)[:, 0] + 1e-12)


class TestProblem:
    def test_beta_default(self):
        assert make(beta=None).beta == 0.25

    def test_beta_hypothesis(self):
        with pytest.raises(HypothesisError, match=r"\(H1\.3\) there exists a constant 0 < beta < alpha"):
            make(beta=0.6)

    def test_nonlocal_times(self):
        with pytest.raises(HypothesisError, match=r"\(H2\.1\)"):
            make(taus=(1.5,), H=(np.eye(1),))
        with pytest.raises(HypothesisError):
            make(control_time=-0.1)

    def test_alpha_range(self):
        with pytest.raises(HypothesisError):
            make(alpha=1.0, beta=0.5)

    def test_constants(self):
        p = make(taus=(0.5,), H=(0.2 * np.eye(1),))
        k = p.constants()
        assert k["k2"] == pytest.approx(0.2) and k["c2"] == pytest.approx(0.2)
        assert k["a3"] == 1.0 and k["C1"] == 1.0
        assert p.q == 4.0


class TestControls:
    def test_at(self):
        u = ControlSignal(TimeGrid(1.0, 4), np.arange(4.0)[None, :, None])
        assert u.at(0.0)[0, 0] == 0.0
        assert u.at(0.3)[0, 0] == 1.0
        assert u.at(1.0)[0, 0] == 3.0

    def test_on_grid(self):
        u = ControlSignal(TimeGrid(1.0, 2), np.array([[[1.0], [2.0]]]))
        np.testing.assert_array_equal(u.on_grid(TimeGrid(1.0, 4)).values[0, :, 0], [1, 1, 2, 2])
        with pytest.raises(PreconditionError):
            u.on_grid(TimeGrid(1.0, 3))

    def test_relaxed_simplex(self):
        g = TimeGrid(1.0, 2)
        with pytest.raises(PreconditionError):
            RelaxedControl(g, np.array([[[0.5, 0.6], [0.5, 0.5]]]), [[-1.0], [1.0]])
        with pytest.raises(PreconditionError):
            RelaxedControl(g, np.array([[[1.5, -0.5], [0.5, 0.5]]]), [[-1.0], [1.0]])

    def test_barycenter(self):
        rel = RelaxedControl(TimeGrid(1.0, 2), np.array([[[0.25, 0.75], [1.0, 0.0]]]), [[-1.0], [1.0]])
        np.testing.assert_allclose(rel.barycenter().values[0, :, 0], [0.5, -1.0])
