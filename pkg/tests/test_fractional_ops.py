from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracrelax.errors import GridTooCoarseError, PreconditionError
from fracrelax.fractional_ops import GridFunction, TimeGrid, caputo_derivative, gronwall_bound, rl_integral


def gf(grid, fn):
    return GridFunction(grid, fn(grid.nodes))


class TestTimeGrid:
    def test_nodes(self):
        g = TimeGrid(2.0, 4)
        np.testing.assert_array_equal(g.nodes, [0.0, 0.5, 1.0, 1.5, 2.0])
        assert g.h == 0.5
        np.testing.assert_array_equal(g.midpoints, [0.25, 0.75, 1.25, 1.75])

    def test_refine(self):
        assert TimeGrid(1.0, 3).refine(4) == TimeGrid(1.0, 12)

    @pytest.mark.parametrize("a, N", [(0.0, 4), (-1.0, 4), (1.0, 0), (1.0, 2.5)])
    def test_invalid(self, a, N):
        with pytest.raises(PreconditionError):
            TimeGrid(a, N)

    def test_grid_function_shape(self):
        with pytest.raises(PreconditionError):
            GridFunction(TimeGrid(1.0, 4), np.zeros(4))
        with pytest.raises(PreconditionError):
            GridFunction(TimeGrid(1.0, 1), np.array([0.0, np.nan]))


class TestRLIntegral:
    def test_zero(self):
        g = TimeGrid(1.0, 16)
        assert np.all(rl_integral(gf(g, np.zeros_like), 0.4).values == 0.0)

    def test_order_one_is_cumulative_integral(self):
        g = TimeGrid(1.5, 30)
        np.testing.assert_allclose(rl_integral(gf(g, np.ones_like), 1.0).values[:, 0], g.nodes, atol=1e-14)

    def test_constant_half_order(self):
        g = TimeGrid(1.0, 50)
        out = rl_integral(gf(g, np.ones_like), 0.5).values[:, 0]
        np.testing.assert_allclose(out, g.nodes**0.5 / math.gamma(1.5), atol=1e-10)

    @pytest.mark.parametrize("alpha", [0.2, 0.5, 0.9])
    def test_linear_exact(self, alpha):
        # piecewise-linear interpolation reproduces t exactly
        g = TimeGrid(1.0, 20)
        out = rl_integral(gf(g, lambda t: t), alpha).values[:, 0]
        np.testing.assert_allclose(out, g.nodes ** (1 + alpha) / math.gamma(2 + alpha), atol=1e-13)

    def test_convergence_smooth(self):
        errs = []
        for N in (20, 40, 80):
            g = TimeGrid(1.0, N)
            out = rl_integral(gf(g, lambda t: t**2), 0.6).values[:, 0]
            errs.append(np.max(np.abs(out - 2 * g.nodes**2.6 / math.gamma(3.6))))
        assert errs[0] / errs[1] > 2.0 and errs[1] / errs[2] > 2.0

    @given(
        st.floats(min_value=-3, max_value=3),
        st.floats(min_value=-3, max_value=3),
        st.floats(min_value=0.05, max_value=1.0),
    )
    def test_linearity(self, a, b, alpha):
        g = TimeGrid(1.0, 24)
        f1 = gf(g, np.sin)
        f2 = gf(g, lambda t: np.exp(-t))
        lhs = rl_integral(a * f1 + b * f2, alpha).values
        rhs = (a * rl_integral(f1, alpha) + b * rl_integral(f2, alpha)).values
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_semigroup(self):
        errs = []
        for N in (32, 64, 128):
            g = TimeGrid(1.0, N)
            f = gf(g, np.cos)
            errs.append(np.max(np.abs(rl_integral(rl_integral(f, 0.4), 0.3).values - rl_integral(f, 0.7).values)))
        # I^0.4 cos behaves like t^0.4 near 0, so the rate is only about h^0.7
        assert errs[2] < errs[1] < errs[0] < 2e-2

    def test_invalid_alpha(self):
        with pytest.raises(PreconditionError):
            rl_integral(gf(TimeGrid(1.0, 4), np.ones_like), 1.2)


class TestCaputo:
    @given(st.floats(min_value=-100, max_value=100), st.floats(min_value=0.01, max_value=0.99))
    def test_constant_exactly_zero(self, c, alpha):
        g = TimeGrid(1.0, 40)
        assert np.all(caputo_derivative(gf(g, lambda t: np.full_like(t, c)), alpha).values == 0.0)

    def test_linear(self):
        g = TimeGrid(1.0, 400)
        out = caputo_derivative(gf(g, lambda t: t), 0.5).values[:, 0]
        assert np.max(np.abs(out - g.nodes**0.5 / math.gamma(1.5))) <= 5e-3

    def test_quadratic_refinement(self):
        errs = []
        for N in (50, 100, 200):
            g = TimeGrid(1.0, N)
            out = caputo_derivative(gf(g, lambda t: t**2), 0.6).values[:, 0]
            errs.append(np.max(np.abs(out - 2 * g.nodes**1.4 / math.gamma(2.4))))
        assert errs[0] / errs[1] >= 2.0 and errs[1] / errs[2] >= 2.0

    def test_inverts_fractional_integral(self):
        errs = []
        for N in (50, 100, 200):
            g = TimeGrid(1.0, N)
            f = gf(g, lambda t: np.sin(2 * t))
            back = caputo_derivative(rl_integral(f, 0.5), 0.5).values
            errs.append(np.max(np.abs(back[1:] - f.values[1:])))
        assert errs[2] < errs[1] < errs[0] < 0.05

    def test_quadratic_rate(self):
        # the L1 scheme is exact for linear data; t^2 exposes its h^(2 - alpha) order
        errs = []
        for N in (100, 200, 400, 800):
            g = TimeGrid(1.0, N)
            d = caputo_derivative(gf(g, lambda t: t**2), 0.5).values[:, 0]
            errs.append(np.max(np.abs(d - 2 * g.nodes**1.5 / math.gamma(2.5))))
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        assert np.all(ratios >= 2.0)
        assert errs[2] <= 5e-3

    def test_too_coarse(self):
        with pytest.raises(GridTooCoarseError):
            caputo_derivative(gf(TimeGrid(1.0, 1), lambda t: t), 0.5)


def volterra_picard(lam, gamma, N, a=1.0, sweeps=200):
    """x(t) = 1 + lam int_0^t (t - s)^(-gamma) x(s) ds with x frozen at the
    left end of each cell (the kernel is integrated exactly)."""
    t = np.linspace(0, a, N + 1)
    x = np.ones(N + 1)
    for _ in range(sweeps):
        new = np.ones(N + 1)
        for k in range(1, N + 1):
            w = ((t[k] - t[:k]) ** (1 - gamma) - (t[k] - t[1:k + 1]) ** (1 - gamma)) / (1 - gamma)
            new[k] = 1 + lam * np.dot(w, x[:k])
        if np.max(np.abs(new - x)) < 1e-14:
            break
        x = new
    return t, x


class TestGronwall:
    def test_lambda_zero(self):
        g = TimeGrid(1.0, 10)
        psi = gf(g, lambda t: 1 + t)
        np.testing.assert_array_equal(gronwall_bound(psi, 0.0, 0.3).values, psi.values)

    def test_classical(self):
        g = TimeGrid(2.0, 20)
        out = gronwall_bound(gf(g, lambda t: np.full_like(t, 3.0)), 0.7, 0.0).values[:, 0]
        np.testing.assert_allclose(out, 3.0 * np.exp(0.7 * g.nodes), rtol=1e-12)

    def test_dominates_volterra_solution(self):
        t, x = volterra_picard(0.3, 0.5, 200)
        g = TimeGrid(1.0, 200)
        bound = gronwall_bound(gf(g, np.ones_like), 0.3, 0.5).values[:, 0]
        assert np.all(bound >= x - 1e-14)

    @given(st.floats(min_value=0, max_value=2), st.floats(min_value=0, max_value=2))
    def test_monotone_in_lambda(self, l1, l2):
        g = TimeGrid(1.0, 10)
        psi = gf(g, lambda t: 1 + t)
        lo, hi = sorted((l1, l2))
        assert np.all(gronwall_bound(psi, lo, 0.4).values <= gronwall_bound(psi, hi, 0.4).values)

    def test_monotone_in_psi(self):
        g = TimeGrid(1.0, 10)
        a = gronwall_bound(gf(g, lambda t: 1 + t), 1.0, 0.4).values
        b = gronwall_bound(gf(g, lambda t: 2 + t), 1.0, 0.4).values
        assert np.all(a <= b)

    def test_decreasing_psi_rejected(self):
        g = TimeGrid(1.0, 10)
        with pytest.raises(PreconditionError, match="nondecreasing"):
            gronwall_bound(gf(g, lambda t: 1 - t), 1.0, 0.4)

    def test_negative_psi_rejected(self):
        g = TimeGrid(1.0, 10)
        with pytest.raises(PreconditionError, match="nonnegative"):
            gronwall_bound(gf(g, lambda t: t - 1), 1.0, 0.4)
