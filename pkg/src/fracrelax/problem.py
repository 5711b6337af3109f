"""Problem data: dynamics, nonlocal condition, costs, channels and controls.

All nonlinear ingredients come from a small catalog so that the Lipschitz and
growth constants entering the a-priori estimates are known exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from fracrelax.control_geometry import FiniteControlSet
from fracrelax.errors import HypothesisError, PreconditionError
from fracrelax.fractional_ops import TimeGrid
from fracrelax.sobolev_system import OperatorTriple

__all__ = [
    "NONLINEARITIES",
    "COST_KINDS",
    "Sampled",
    "DynamicsSpec",
    "NonlocalSpec",
    "CostSpec",
    "ProblemSpec",
    "ControlSignal",
    "RelaxedControl",
]

NONLINEARITIES = ("zero", "sin", "saturation")
COST_KINDS = ("zero", "quadratic", "double_well")


def _matrix(name: str, X, shape: tuple[int, int]) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 0 and shape == (1, 1):
        X = X.reshape(1, 1)
    if X.shape != shape:
        raise PreconditionError(f"{name} must have shape {shape}, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise PreconditionError(f"{name} has non-finite entries")
    X = X.copy()
    X.setflags(write=False)
    return X


def _norm(X) -> float:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        return float(np.linalg.norm(X))
    return float(np.linalg.norm(X, 2))


@dataclass(frozen=True, eq=False)
class Sampled:
    """Vector-valued function of time: constant, or samples on a uniform grid
    of ``[0, horizon]`` interpolated linearly."""

    values: np.ndarray
    horizon: float = 1.0

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2 or not np.all(np.isfinite(v)):
            raise PreconditionError("sampled function must be a finite (K, n) array")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def constant(self) -> bool:
        return self.values.shape[0] == 1

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __call__(self, t) -> np.ndarray:
        """Values at times ``t`` (scalar or 1d array), shape ``(len(t), n)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.constant:
            return np.broadcast_to(self.values[0], (t.size, self.dim)).copy()
        knots = np.linspace(0.0, self.horizon, self.values.shape[0])
        return np.stack([np.interp(t, knots, self.values[:, c]) for c in range(self.dim)], axis=1)

    def sup_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.values, axis=1)))

    def tolist(self):
        return self.values[0].tolist() if self.constant else self.values.tolist()


@dataclass(frozen=True, eq=False)
class DynamicsSpec:
    r"""Right-hand side :math:`f(t, x, v_1..v_r) = F_0(t) + C x + \sum_i D_i v_i + \nu(x)`.

    ``v_i = B_i u_i`` is the contribution of channel ``i``; ``nu`` is one of
    ``zero``, ``sin`` (``kappa * sin(x)`` componentwise) or ``saturation``
    (``kappa * clip(x, -1, 1)``).
    """

    forcing: Sampled
    C: np.ndarray
    D: tuple
    nonlinearity: str = "zero"
    kappa: float = 0.0

    def __post_init__(self) -> None:
        if self.nonlinearity not in NONLINEARITIES:
            raise PreconditionError(
                f"nonlinearity must be one of {NONLINEARITIES}, got {self.nonlinearity!r}"
            )
        if not (self.kappa >= 0 and math.isfinite(self.kappa)):
            raise HypothesisError("(H1.2) the nonlinearity scale kappa must be finite and >= 0")
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        n = C.shape[0]
        object.__setattr__(self, "C", _matrix("C", C, (n, n)))
        object.__setattr__(self, "D", tuple(_matrix(f"D_{i + 1}", Di, (n, n)) for i, Di in enumerate(self.D)))
        if not isinstance(self.forcing, Sampled):
            object.__setattr__(self, "forcing", Sampled(self.forcing))

    @property
    def n(self) -> int:
        return self.C.shape[0]

    @property
    def nu_lipschitz(self) -> float:
        return 0.0 if self.nonlinearity == "zero" else float(self.kappa)

    @property
    def k1(self) -> float:
        """Lipschitz constant in ``(x, v_1..v_r)`` with the sum norm on the channels."""
        state = _norm(self.C) + self.nu_lipschitz
        channels = max((_norm(Di) for Di in self.D), default=0.0)
        return max(state, channels)

    @property
    def a1(self) -> float:
        return self.forcing.sup_norm()

    @property
    def c1(self) -> float:
        return self.k1

    def nu(self, x: np.ndarray) -> np.ndarray:
        if self.nonlinearity == "zero" or self.kappa == 0:
            return np.zeros_like(x)
        if self.nonlinearity == "sin":
            return self.kappa * np.sin(x)
        return self.kappa * np.clip(x, -1.0, 1.0)

    def __call__(self, t, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Vectorized evaluation: ``t`` (K,), ``x`` (K, n), ``v`` (K, r, n)."""
        out = self.forcing(t) + x @ self.C.T + self.nu(x)
        for i, Di in enumerate(self.D):
            out = out + v[:, i, :] @ Di.T
        return out


@dataclass(frozen=True, eq=False)
class NonlocalSpec:
    """``h(x, v) = h0 + sum_k H_k x(tau_k) + G v(tau_u)`` with ``v = B_r u_r``."""

    offset: np.ndarray
    taus: tuple = ()
    H: tuple = ()
    control_time: float = 0.0
    G: np.ndarray | None = None

    def __post_init__(self) -> None:
        h0 = np.atleast_1d(np.asarray(self.offset, dtype=float))
        n = h0.size
        object.__setattr__(self, "offset", h0)
        if len(self.taus) != len(self.H):
            raise PreconditionError("each nonlocal sample time needs one coefficient matrix")
        object.__setattr__(self, "taus", tuple(float(t) for t in self.taus))
        object.__setattr__(self, "H", tuple(_matrix(f"H_{k + 1}", Hk, (n, n)) for k, Hk in enumerate(self.H)))
        if self.G is not None:
            object.__setattr__(self, "G", _matrix("G", self.G, (n, n)))
        object.__setattr__(self, "control_time", float(self.control_time))

    @property
    def k2(self) -> float:
        return sum((_norm(Hk) for Hk in self.H), 0.0) + (0.0 if self.G is None else _norm(self.G))

    @property
    def a2(self) -> float:
        return float(np.linalg.norm(self.offset))

    @property
    def c2(self) -> float:
        return max(sum((_norm(Hk) for Hk in self.H), 0.0), 0.0 if self.G is None else _norm(self.G))

    @property
    def trivial(self) -> bool:
        return not np.any(self.offset) and not self.H and (self.G is None or not np.any(self.G))

    def __call__(self, nodes: np.ndarray, x: np.ndarray, v_at_tau: np.ndarray) -> np.ndarray:
        out = np.array(self.offset, dtype=float)
        for tau, Hk in zip(self.taus, self.H):
            xt = np.array([np.interp(tau, nodes, x[:, c]) for c in range(x.shape[1])])
            out = out + Hk @ xt
        if self.G is not None:
            out = out + self.G @ v_at_tau
        return out


@dataclass(frozen=True, eq=False)
class CostSpec:
    """``g(t, x, u) = x' P x + p(t)' x + q(u)``.

    ``q`` is ``zero``, ``quadratic`` (``u' Q u + c' u + d``) or
    ``double_well`` (``w (||u||^2 - 1)^2``).
    """

    P: np.ndarray
    p: Sampled
    q_kind: str = "zero"
    q_params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.q_kind not in COST_KINDS:
            raise PreconditionError(f"cost kind must be one of {COST_KINDS}, got {self.q_kind!r}")
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        object.__setattr__(self, "P", _matrix("P", P, (P.shape[0], P.shape[0])))
        if not isinstance(self.p, Sampled):
            object.__setattr__(self, "p", Sampled(self.p))

    def q(self, u: np.ndarray) -> np.ndarray:
        """Control part for ``u`` of shape (K, m)."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        if self.q_kind == "zero":
            return np.zeros(u.shape[0])
        if self.q_kind == "quadratic":
            m = u.shape[1]
            Q = np.asarray(self.q_params.get("Q", np.zeros((m, m))), dtype=float).reshape(m, m)
            c = np.asarray(self.q_params.get("c", np.zeros(m)), dtype=float).reshape(m)
            d = float(self.q_params.get("d", 0.0))
            return np.einsum("ki,ij,kj->k", u, Q, u) + u @ c + d
        w = float(self.q_params.get("w", 1.0))
        return w * (np.sum(u * u, axis=1) - 1.0) ** 2

    def state_part(self, t, x: np.ndarray) -> np.ndarray:
        return np.einsum("ki,ij,kj->k", x, self.P, x) + np.sum(self.p(t) * x, axis=1)

    def __call__(self, t, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.state_part(t, x) + self.q(u)

    def lipschitz(self, state_radius: float, control_radius: float) -> tuple[float, float]:
        """Lipschitz constants in x and u on balls of the given radii."""
        kx = 2.0 * _norm(self.P) * state_radius + self.p.sup_norm()
        if self.q_kind == "zero":
            ku = 0.0
        elif self.q_kind == "quadratic":
            Q = np.atleast_2d(np.asarray(self.q_params.get("Q", 0.0), dtype=float))
            c = np.atleast_1d(np.asarray(self.q_params.get("c", 0.0), dtype=float))
            ku = 2.0 * _norm(Q) * control_radius + float(np.linalg.norm(c))
        else:
            w = float(self.q_params.get("w", 1.0))
            ku = 4.0 * abs(w) * control_radius * abs(control_radius**2 - 1.0) + 4.0 * abs(w) * control_radius
        return kx, ku


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Complete optimal control problem with ``r`` channels."""

    alpha: float
    horizon: float
    x0: np.ndarray
    triple: OperatorTriple
    channels: tuple
    dynamics: DynamicsSpec
    nonlocal_: NonlocalSpec
    costs: tuple
    constraint: FiniteControlSet
    beta: float | None = None
    solver: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        alpha = float(self.alpha)
        if not 0 < alpha < 1:
            raise HypothesisError(f"the fractional order must satisfy 0 < alpha < 1, got {alpha}")
        beta = alpha / 2.0 if self.beta is None else float(self.beta)
        if not 0 < beta < alpha:
            raise HypothesisError(
                f"(H1.3) there exists a constant 0 < beta < alpha; got beta = {beta}, alpha = {alpha}"
            )
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        if not self.horizon > 0:
            raise PreconditionError(f"horizon must be positive, got {self.horizon}")
        n = self.triple.n
        m = self.constraint.m
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if x0.shape != (n,):
            raise PreconditionError(f"x0 must have length {n}")
        object.__setattr__(self, "x0", x0)
        if len(self.channels) < 1:
            raise PreconditionError("at least one control channel is required")
        chans = tuple(_matrix(f"B_{i + 1}", B, (n, m)) for i, B in enumerate(self.channels))
        object.__setattr__(self, "channels", chans)
        if self.dynamics.n != n or len(self.dynamics.D) != len(chans):
            raise PreconditionError("dynamics must have one D matrix per channel and match the state dimension")
        if self.dynamics.forcing.dim != n:
            raise PreconditionError("forcing must have the state dimension")
        if len(self.costs) != len(chans):
            raise PreconditionError(f"expected {len(chans)} cost integrands, got {len(self.costs)}")
        for tau in (*self.nonlocal_.taus, self.nonlocal_.control_time):
            if not 0 <= tau <= self.horizon:
                raise HypothesisError(f"(H2.1) nonlocal sample time {tau} lies outside [0, a]")
        if self.constraint.state_dependent and self.constraint.state_shift.shape[1] != n:
            raise PreconditionError("state_shift must have n columns")

    @property
    def n(self) -> int:
        return self.triple.n

    @property
    def m(self) -> int:
        return self.constraint.m

    @property
    def r(self) -> int:
        return len(self.channels)

    @property
    def q(self) -> float:
        """Exponent of the control space ``L^{1/beta}``."""
        return 1.0 / self.beta

    @property
    def nonlocal_spec(self) -> NonlocalSpec:
        return self.nonlocal_

    def constants(self) -> dict:
        """Derived constants of the standing hypotheses."""
        d = self.dynamics
        h = self.nonlocal_
        U = self.constraint
        return {
            "C1": self.triple.C1,
            "C2": self.triple.C2,
            "M0": self.triple.M0,
            "k1": d.k1,
            "a1": d.a1,
            "c1": d.c1,
            "k2": h.k2,
            "a2": h.a2,
            "c2": h.c2,
            "k3": U.k3,
            "a3": U.a3,
            "c3": U.c3,
        }

    def grid(self, N: int | None = None) -> TimeGrid:
        return TimeGrid(self.horizon, int(N if N is not None else self.solver.get("grid", 64)))


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """Piecewise-constant controls: ``values[i, j]`` is channel ``i`` on cell ``j``."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 2:
            v = v[:, :, None]
        if v.ndim != 3 or v.shape[1] != self.grid.N:
            raise PreconditionError(
                f"controls must have shape (r, {self.grid.N}, m), got {np.shape(self.values)}"
            )
        if not np.all(np.isfinite(v)):
            raise PreconditionError("control values must be finite")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def r(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[2]

    @classmethod
    def constant(cls, grid: TimeGrid, value, r: int = 1) -> "ControlSignal":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(grid, np.broadcast_to(value, (r, grid.N, value.size)).copy())

    def channel(self, i: int) -> np.ndarray:
        return self.values[i]

    def at(self, t: float) -> np.ndarray:
        """Values of all channels at time ``t`` (right-continuous, last cell closed)."""
        j = min(int(math.floor(t / self.grid.h)), self.grid.N - 1)
        return self.values[:, max(j, 0), :]

    def refine(self, factor: int) -> "ControlSignal":
        factor = int(factor)
        return ControlSignal(self.grid.refine(factor), np.repeat(self.values, factor, axis=1))

    def on_grid(self, grid: TimeGrid) -> "ControlSignal":
        """Same signal on a grid whose cell count is a multiple of this one."""
        if grid.a != self.grid.a or grid.N % self.grid.N:
            raise PreconditionError(
                f"cannot transfer controls from N={self.grid.N} to N={grid.N}"
            )
        return self.refine(grid.N // self.grid.N)


@dataclass(frozen=True, eq=False)
class RelaxedControl:
    """Simplex weights over the atoms of ``U`` on every cell and channel.

    ``weights[i, j, l]`` is the weight of atom ``l`` for channel ``i`` on
    cell ``j``; the control value is the barycenter of the atoms.
    """

    grid: TimeGrid
    weights: np.ndarray
    atoms: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        P = np.asarray(self.atoms, dtype=float)
        if P.ndim == 1:
            P = P[:, None]
        if w.ndim == 2:
            w = w[None]
        if w.ndim != 3 or w.shape[1] != self.grid.N or w.shape[2] != P.shape[0]:
            raise PreconditionError(
                f"weights must have shape (r, {self.grid.N}, {P.shape[0]}), got {np.shape(self.weights)}"
            )
        if not np.all(np.isfinite(w)) or np.any(w < -1e-12):
            raise PreconditionError("weights must be finite and nonnegative")
        if np.max(np.abs(w.sum(axis=2) - 1.0)) > 1e-9:
            raise PreconditionError("weights must sum to one on every cell")
        w = np.clip(w, 0.0, None)
        w.setflags(write=False)
        P = P.copy()
        P.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "atoms", P)

    @property
    def r(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def uniform(cls, grid: TimeGrid, atoms, r: int = 1) -> "RelaxedControl":
        P = np.asarray(atoms, dtype=float)
        k = P.shape[0]
        return cls(grid, np.full((r, grid.N, k), 1.0 / k), P)

    @classmethod
    def from_atom_indices(cls, grid: TimeGrid, atoms, indices) -> "RelaxedControl":
        """One-hot weights selecting ``atoms[indices[i, j]]``."""
        P = np.asarray(atoms, dtype=float)
        idx = np.asarray(indices, dtype=int)
        if idx.ndim == 1:
            idx = idx[None]
        w = np.zeros(idx.shape + (P.shape[0],))
        np.put_along_axis(w, idx[..., None], 1.0, axis=2)
        return cls(grid, w, P)

    def barycenter(self, shift=None) -> ControlSignal:
        """Barycentric control; ``shift`` (r, N, m) translates the atoms."""
        vals = self.weights @ self.atoms
        if shift is not None:
            vals = vals + shift
        return ControlSignal(self.grid, vals)

    def refine(self, factor: int) -> "RelaxedControl":
        factor = int(factor)
        return RelaxedControl(
            self.grid.refine(factor), np.repeat(self.weights, factor, axis=1), self.atoms
        )
