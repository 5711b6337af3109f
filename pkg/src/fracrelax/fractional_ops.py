"""Fractional integral, Caputo derivative and the singular Gronwall majorant
on uniform time grids."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from fracrelax.errors import GridTooCoarseError, PreconditionError
from fracrelax.special_functions import gamma_fn, mittag_leffler

__all__ = [
    "TimeGrid",
    "GridFunction",
    "rl_weights",
    "rl_integral",
    "caputo_derivative",
    "gronwall_bound",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = k a / N`` on ``[0, a]``."""

    a: float
    N: int

    def __post_init__(self) -> None:
        if not (self.a > 0 and math.isfinite(self.a)):
            raise PreconditionError(f"horizon must be positive and finite, got {self.a}")
        if int(self.N) != self.N or self.N < 1:
            raise PreconditionError(f"N must be a positive integer, got {self.N}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def h(self) -> float:
        return self.a / self.N

    @property
    def nodes(self) -> np.ndarray:
        return self.a * np.arange(self.N + 1) / self.N

    @property
    def midpoints(self) -> np.ndarray:
        return self.a * (np.arange(self.N) + 0.5) / self.N

    def refine(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.a, self.N * int(factor))


@dataclass(frozen=True)
class GridFunction:
    """Vector-valued function sampled at the nodes of a grid.

    ``values`` has shape ``(N + 1, n)``; one-dimensional input is treated as
    a scalar function (``n = 1``).
    """

    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != self.grid.N + 1:
            raise PreconditionError(
                f"expected {self.grid.N + 1} node values, got array of shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise PreconditionError("grid function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, grid: TimeGrid, fn) -> "GridFunction":
        return cls(grid, np.array([np.atleast_1d(fn(t)) for t in grid.nodes], dtype=float))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def sup_norm(self) -> float:
        """max over nodes of the Euclidean norm."""
        return float(np.max(np.linalg.norm(self.values, axis=1)))

    def __add__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "GridFunction":
        return GridFunction(self.grid, float(c) * self.values)

    __rmul__ = __mul__


@lru_cache(maxsize=32)
def rl_weights(N: int, alpha: float) -> np.ndarray:
    r"""Product-integration weights for the fractional integral.

    Returns the lower-triangular ``(N + 1, N + 1)`` matrix ``W`` with
    ``(I^alpha f)(t_k) = h^alpha * sum_j W[k, j] f(t_j)`` when ``f`` is
    interpolated piecewise linearly.
    """
    W = np.zeros((N + 1, N + 1))
    p = alpha + 1.0
    scale = 1.0 / gamma_fn(alpha + 2.0)
    for k in range(1, N + 1):
        j = np.arange(1, k)
        m = (k - j).astype(float)
        W[k, 0] = (k - 1.0) ** p - (k - alpha - 1.0) * k**alpha
        W[k, 1:k] = (m + 1.0) ** p - 2.0 * m**p + (m - 1.0) ** p
        W[k, k] = 1.0
    W *= scale
    W.setflags(write=False)
    return W


def rl_integral(f: GridFunction, alpha: float) -> GridFunction:
    """Riemann-Liouville integral of order ``alpha`` in (0, 1] on the grid of ``f``."""
    alpha = float(alpha)
    if not 0 < alpha <= 1:
        raise PreconditionError(f"alpha must lie in (0, 1], got {alpha}")
    grid = f.grid
    W = rl_weights(grid.N, alpha)
    return GridFunction(grid, grid.h**alpha * (W @ f.values))


@lru_cache(maxsize=32)
def _l1_coefficients(N: int, alpha: float) -> np.ndarray:
    m = np.arange(N, dtype=float)
    b = (m + 1.0) ** (1.0 - alpha) - m ** (1.0 - alpha)
    b.setflags(write=False)
    return b


def caputo_derivative(x: GridFunction, alpha: float) -> GridFunction:
    """L1 approximation of the Caputo derivative of order ``alpha`` in (0, 1).

    The value at ``t_0`` is set to zero (the derivative of the linear
    interpolant vanishes on an empty history).
    """
    alpha = float(alpha)
    if not 0 < alpha < 1:
        raise PreconditionError(f"alpha must lie in (0, 1), got {alpha}")
    grid = x.grid
    if grid.N < 2:
        raise GridTooCoarseError(f"the L1 scheme needs N >= 2, got N = {grid.N}")
    b = _l1_coefficients(grid.N, alpha)
    dx = np.diff(x.values, axis=0)
    out = np.zeros_like(x.values)
    # D x(t_k) = c * sum_{j<k} b_{k-1-j} (x_{j+1} - x_j)
    for k in range(1, grid.N + 1):
        out[k] = b[:k][::-1] @ dx[:k]
    out *= grid.h ** (-alpha) / gamma_fn(2.0 - alpha)
    return GridFunction(grid, out)


def gronwall_bound(psi: GridFunction, lam: float, gamma: float) -> GridFunction:
    r"""Majorant :math:`\psi(t) E_{1-\gamma}(\lambda \Gamma(1-\gamma) t^{1-\gamma})`.

    Any continuous ``x >= 0`` with
    :math:`x(t) \le \psi(t) + \lambda \int_0^t (t-s)^{-\gamma} x(s) ds`
    and nondecreasing ``psi`` stays below this function.
    """
    lam = float(lam)
    gamma = float(gamma)
    if not lam >= 0:
        raise PreconditionError(f"lambda must be nonnegative, got {lam}")
    if not 0 <= gamma < 1:
        raise PreconditionError(f"gamma must lie in [0, 1), got {gamma}")
    if psi.dim != 1:
        raise PreconditionError("psi must be scalar valued")
    p = psi.values[:, 0]
    if np.any(p < 0):
        raise PreconditionError("psi must be nonnegative")
    if np.any(np.diff(p) < 0):
        raise PreconditionError("psi must be nondecreasing")
    beta = 1.0 - gamma
    c = lam * gamma_fn(beta)
    factor = np.array([mittag_leffler(beta, 1.0, c * t**beta) for t in psi.grid.nodes])
    return GridFunction(psi.grid, p * factor)
