"""Mild solutions of the controlled Sobolev-type system with a nonlocal
initial condition, their residuals, and the a-priori bound on trajectories.

The integral equation

    x(t) = S_alpha(t) M [x0 - h(x, B_r u_r)]
           + int_0^t (t - s)^{alpha-1} T_alpha(t - s) L^{-1} f(s, x(s), B u(s)) ds

is discretized on a uniform grid.  On each cell the operator ``T_alpha`` is
frozen at the cell midpoint and the weakly singular factor is integrated
exactly; the dynamics are evaluated at the cell midpoint with the cell
control.  The resulting discrete fixed-point problem is solved by
successive approximation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from fracrelax.control_geometry import weak_norm
from fracrelax.errors import BoundUnavailableError, ContractionError, PreconditionError
from fracrelax.fractional_ops import GridFunction, TimeGrid, caputo_derivative
from fracrelax.problem import ControlSignal, ProblemSpec
from fracrelax.sobolev_system import s_alpha, t_alpha
from fracrelax.special_functions import gamma_fn, mittag_leffler

__all__ = [
    "Trajectory",
    "solve_mild",
    "residual",
    "residual_norm",
    "nonlocal_defect",
    "AprioriBound",
    "apriori_bound",
    "control_lipschitz",
    "ProbeReport",
    "continuity_probe",
]

FFT_THRESHOLD = 2048


@dataclass(frozen=True, eq=False)
class Trajectory(GridFunction):
    """Mild solution on the grid together with solver diagnostics."""

    iterations: int = 0
    last_update: float = 0.0


def _kernel_tables(problem: ProblemSpec, grid: TimeGrid, method: str):
    """``S_alpha(t_k) M`` for all nodes and the convolution kernel
    ``K_m = w_m T_alpha((m - 1/2) h) L^{-1}`` for ``m = 1..N``."""
    triple = problem.triple
    alpha = problem.alpha
    key = ("mild-tables", alpha, grid.a, grid.N, method)
    cached = triple._cache.get(key)
    if cached is not None:
        return cached
    h = grid.h
    N = grid.N
    if not np.any(triple.A):
        # S and T are constant multiples of M^{-1}
        SM = np.broadcast_to(triple.M_inv @ triple.M, (N + 1, triple.n, triple.n))
        T = np.broadcast_to(triple.M_inv / gamma_fn(alpha), (N, triple.n, triple.n))
    else:
        SM = np.stack([s_alpha(triple, alpha, t, method) @ triple.M for t in grid.nodes])
        T = np.stack([t_alpha(triple, alpha, (m - 0.5) * h, method) for m in range(1, N + 1)])
    m = np.arange(1, N + 1, dtype=float)
    w = h**alpha / alpha * (m**alpha - (m - 1.0) ** alpha)
    K = w[:, None, None] * (T @ triple.L_inv)
    SM = np.ascontiguousarray(SM)
    out = (SM, K)
    triple._cache[key] = out
    return out


def _convolve(K: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``y_k = sum_{j<k} K_{k-j} g_j`` for ``k = 0..N`` (``y_0 = 0``)."""
    N, n, _ = K.shape
    y = np.zeros((N + 1, n))
    conv = fftconvolve if N > FFT_THRESHOLD else np.convolve
    for a in range(n):
        for b in range(n):
            kab = K[:, a, b]
            if not np.any(kab):
                continue
            # full convolution index p corresponds to k = p + 1
            y[1:, a] += conv(kab, g[:, b])[:N]
    return y


def _channel_terms(problem: ProblemSpec, controls: ControlSignal) -> np.ndarray:
    """``v[j, i] = B_i u_i`` on every cell, shape (N, r, n)."""
    return np.stack(
        [controls.values[i] @ B.T for i, B in enumerate(problem.channels)], axis=1
    )


def _check_controls(problem: ProblemSpec, controls: ControlSignal, grid: TimeGrid) -> ControlSignal:
    if controls.r != problem.r or controls.m != problem.m:
        raise PreconditionError(
            f"controls must have {problem.r} channels of dimension {problem.m}"
        )
    if controls.grid != grid:
        controls = controls.on_grid(grid)
    return controls


def _contraction_estimate(problem: ProblemSpec) -> float:
    tr = problem.triple
    KS = tr.C2 * tr.M0 * float(np.linalg.norm(tr.M, 2))
    # controls are fixed inside the solve, so only the trajectory samples count
    return KS * sum(float(np.linalg.norm(Hk, 2)) for Hk in problem.nonlocal_.H)


def solve_mild(
    problem: ProblemSpec,
    controls: ControlSignal,
    grid: TimeGrid | None = None,
    tol: float = 1e-10,
    max_iter: int = 200,
    method: str = "series",
) -> Trajectory:
    """Successive approximation for the discretized mild equation.

    Raises :class:`ContractionError` carrying the last sup-norm update when
    ``max_iter`` sweeps do not bring the update below ``tol``.  A damping
    factor of 1/2 is applied whenever the update grows.
    """
    grid = controls.grid if grid is None else grid
    if grid.a != problem.horizon:
        raise PreconditionError("grid horizon differs from the problem horizon")
    controls = _check_controls(problem, controls, grid)
    if _contraction_estimate(problem) >= 1.0:
        warnings.warn(
            "estimated contraction factor of the nonlocal term is >= 1; "
            "successive approximation may fail",
            RuntimeWarning,
            stacklevel=2,
        )
    SM, K = _kernel_tables(problem, grid, method)
    nodes = grid.nodes
    mids = grid.midpoints
    v = _channel_terms(problem, controls)
    v_r = problem.channels[-1] @ controls.at(problem.nonlocal_.control_time)[-1]
    dyn = problem.dynamics
    hspec = problem.nonlocal_
    x0 = problem.x0

    x = np.broadcast_to(x0, (grid.N + 1, problem.n)).copy()
    prev_update = math.inf
    update = math.inf
    for it in range(1, max_iter + 1):
        xbar = 0.5 * (x[1:] + x[:-1])
        f = dyn(mids, xbar, v)
        y = _convolve(K, f)
        c = x0 - hspec(nodes, x, v_r)
        x_new = SM @ c + y
        diff = x_new - x
        update = float(np.max(np.linalg.norm(diff, axis=1)))
        if update > prev_update:
            x = x + 0.5 * diff
        else:
            x = x_new
        prev_update = update
        if update < tol:
            return Trajectory(grid, x, iterations=it, last_update=update)
    raise ContractionError(
        f"successive approximation did not converge in {max_iter} sweeps "
        f"(last update {update:.3g})",
        last_update=update,
    )


def nonlocal_defect(problem: ProblemSpec, x: GridFunction, controls: ControlSignal) -> float:
    """``||x(0) + h(x, B_r u_r) - x0||``."""
    controls = _check_controls(problem, controls, x.grid)
    v_r = problem.channels[-1] @ controls.at(problem.nonlocal_.control_time)[-1]
    h = problem.nonlocal_(x.grid.nodes, x.values, v_r)
    return float(np.linalg.norm(x.values[0] + h - problem.x0))


def residual(problem: ProblemSpec, x: GridFunction, controls: ControlSignal) -> GridFunction:
    """``L D^alpha[M x] + E x - f`` at the nodes ``t_1..t_N`` (zero at ``t_0``).

    The control at node ``t_k`` is the value on the cell ending there.
    """
    grid = x.grid
    controls = _check_controls(problem, controls, grid)
    tr = problem.triple
    Mx = GridFunction(grid, x.values @ tr.M.T)
    D = caputo_derivative(Mx, problem.alpha).values
    v = _channel_terms(problem, controls)
    f = problem.dynamics(grid.nodes[1:], x.values[1:], v)
    res = np.zeros_like(x.values)
    res[1:] = D[1:] @ tr.L.T + x.values[1:] @ tr.E.T - f
    return GridFunction(grid, res)


def residual_norm(res: GridFunction, t_min: float = 0.0) -> float:
    """Max residual norm over nodes ``t_k >= t_min`` (excluding ``t_0``)."""
    nodes = res.grid.nodes
    mask = (nodes >= t_min) & (np.arange(nodes.size) > 0)
    return float(np.max(np.linalg.norm(res.values[mask], axis=1)))


# {{{ a-priori bound


@dataclass(frozen=True)
class AprioriBound:
    """Uniform bound ``L0`` on admissible trajectories and the control bound
    ``phi = a3 + c3 L0``."""

    L0: float
    phi: float
    details: dict = field(default_factory=dict)


def _holder_factor(alpha: float, beta: float, a: float) -> float:
    # || (t - .)^{alpha-1} ||_{L^{1/(1-beta)}(0,t)} <= this for t <= a
    return ((1.0 - beta) / (alpha - beta) * a ** ((alpha - beta) / (1.0 - beta))) ** (1.0 - beta)


def apriori_bound(problem: ProblemSpec) -> AprioriBound:
    r"""Gronwall bound on ``||x||_C`` valid for every admissible control.

    Writing ``K_S = C2 M0 ||M||`` and ``lambda = C1 C2 M0 c1 (1 + c3 sum ||B_i||) / Gamma(alpha)``,
    every admissible trajectory satisfies

    .. math::

        \|x(t)\| \le Q_0 + \rho \|x\|_C + \lambda \int_0^t (t-s)^{\alpha-1} \|x(s)\| ds

    with :math:`\rho = K_S c_2 (1 + c_3 \|B_r\|)`.  The singular Gronwall
    inequality then gives :math:`\|x\|_C \le Q_0 E^* / (1 - \rho E^*)` with
    :math:`E^* = E_\alpha(\lambda \Gamma(\alpha) a^\alpha)`, which requires
    :math:`\rho E^* < 1`.
    """
    tr = problem.triple
    alpha, beta, a = problem.alpha, problem.beta, problem.horizon
    k = problem.constants()
    norm_M = float(np.linalg.norm(tr.M, 2))
    B_norms = [float(np.linalg.norm(B, 2)) for B in problem.channels]
    sum_B = sum(B_norms)
    B_r = B_norms[-1]
    a1, c1 = k["a1"], k["c1"]
    a2, c2 = k["a2"], k["c2"]
    a3, c3 = k["a3"], k["c3"]

    KS = tr.C2 * tr.M0 * norm_M
    rho = KS * c2 * (1.0 + c3 * B_r)
    if rho >= 1.0:
        raise BoundUnavailableError(
            f"nonlocal term cannot be absorbed: C2 M0 ||M|| c2 (1 + c3 ||B_r||) = {rho:.4g} >= 1"
        )
    kernel = tr.C1 * tr.C2 * tr.M0 / gamma_fn(alpha)
    # sup-bounded growth data: ||g||_{L^{1/beta}} <= sup|g| a^beta
    Lq = a**beta
    P = kernel * _holder_factor(alpha, beta, a) * (a1 * Lq + c1 * sum_B * a3 * Lq)
    lam = kernel * c1 * (1.0 + c3 * sum_B)
    Q0 = KS * (float(np.linalg.norm(problem.x0)) + a2 + c2 * B_r * a3) + P
    E_star = mittag_leffler(alpha, 1.0, lam * gamma_fn(alpha) * a**alpha)
    if rho * E_star >= 1.0:
        raise BoundUnavailableError(
            f"nonlocal term cannot be absorbed after the Gronwall step: rho E* = {rho * E_star:.4g} >= 1"
        )
    L0 = Q0 * E_star / (1.0 - rho * E_star)
    details = {
        "K_S": KS,
        "rho": rho,
        "lambda": lam,
        "P": P,
        "Q0": Q0,
        "E_star": E_star,
        **k,
    }
    return AprioriBound(L0=L0, phi=a3 + c3 * L0, details=details)


def control_lipschitz(problem: ProblemSpec) -> float:
    """Constant ``Lip`` with ``||x_u - x_w||_C <= Lip ||u - w||_inf`` (state-independent ``U``).

    Obtained from the same Gronwall argument applied to the difference of two
    mild solutions.
    """
    tr = problem.triple
    alpha, a = problem.alpha, problem.horizon
    k1 = problem.dynamics.k1
    KS = tr.C2 * tr.M0 * float(np.linalg.norm(tr.M, 2))
    B_norms = [float(np.linalg.norm(B, 2)) for B in problem.channels]
    h = problem.nonlocal_
    G = 0.0 if h.G is None else float(np.linalg.norm(h.G, 2))
    sum_H = sum(float(np.linalg.norm(Hk, 2)) for Hk in h.H)
    kernel = tr.C1 * tr.C2 * tr.M0 / gamma_fn(alpha)
    lam = kernel * k1
    E_star = mittag_leffler(alpha, 1.0, lam * gamma_fn(alpha) * a**alpha)
    if KS * sum_H * E_star >= 1.0:
        raise BoundUnavailableError("nonlocal trajectory samples prevent a Lipschitz estimate")
    forcing = KS * G * B_norms[-1] + kernel * a**alpha / alpha * k1 * sum(B_norms)
    return forcing * E_star / (1.0 - KS * sum_H * E_star)


# }}}


# {{{ continuity probe


@dataclass(frozen=True)
class ProbeReport:
    """Weak-norm control distances against sup-norm trajectory distances."""

    weak_distances: tuple
    trajectory_distances: tuple
    monotone: bool
    final_ok: bool
    tol: float

    @property
    def rows(self) -> list[tuple[float, float]]:
        return list(zip(self.weak_distances, self.trajectory_distances))


def _weak_distance(u: ControlSignal, w: ControlSignal) -> float:
    return max(
        weak_norm(u.values[i] - w.values[i], u.grid.h) for i in range(u.r)
    )


def continuity_probe(
    problem: ProblemSpec,
    u_star: ControlSignal,
    sequence: list,
    tol: float = 1e-2,
    solver_tol: float = 1e-12,
) -> ProbeReport:
    """Solve for ``u_star`` and each control of ``sequence`` and tabulate
    ``(||u_n - u*||_w, ||x_n - x*||_C)``.

    Controls in ``sequence`` may live on finer grids than ``u_star``; the
    reference solution is recomputed on each grid.  ``monotone`` records
    whether the trajectory distances are nonincreasing and ``final_ok``
    whether the last one is at most ``tol``.
    """
    weak, traj = [], []
    for u_n in sequence:
        grid = u_n.grid
        ref = u_star.on_grid(grid) if u_star.grid != grid else u_star
        x_star = solve_mild(problem, ref, grid, tol=solver_tol)
        x_n = solve_mild(problem, u_n, grid, tol=solver_tol)
        weak.append(_weak_distance(u_n, ref))
        traj.append(float(np.max(np.linalg.norm(x_n.values - x_star.values, axis=1))))
    monotone = all(b <= a + 1e-15 for a, b in zip(traj, traj[1:]))
    final_ok = bool(traj) and traj[-1] <= tol
    return ProbeReport(tuple(weak), tuple(traj), monotone, final_ok, tol)


# }}}
