"""Direct transcription of the original problem (P) and of its relaxation (RP).

Controls are piecewise constant on a uniform grid.  Problem (P) searches over
atom-valued controls; problem (RP) optimizes simplex weights over the atoms
on every cell, the dynamics being driven by the barycenter.  Costs are
integrated with the trapezoid rule on every cell and the functionals of the
``r`` channels are aggregated by their maximum.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from fracrelax.control_geometry import weak_norm
from fracrelax.errors import ContractionError, PreconditionError
from fracrelax.fractional_ops import TimeGrid
from fracrelax.mild_solver import Trajectory, solve_mild
from fracrelax.problem import ControlSignal, ProblemSpec, RelaxedControl
from fracrelax.relaxation import EpigraphAtoms, bipolar_envelope, chattering_sequence

__all__ = [
    "RelaxedControl",
    "SolveReport",
    "ExperimentRow",
    "ExperimentReport",
    "project_simplex",
    "RelaxedObjective",
    "evaluate_P",
    "evaluate_RP",
    "young_objective",
    "solve_P",
    "solve_RP",
    "relaxation_experiment",
]

ENUMERATION_LIMIT = 4096


@dataclass
class SolveReport:
    """Outcome of an evaluation or a solve.

    ``J`` holds the functionals of the original problem, ``J_star`` those
    of the relaxed problem (when applicable); ``aggregate`` is the maximum
    over channels of whichever family was optimized.
    """

    J: tuple | None
    aggregate: float
    trajectory: Trajectory
    controls: ControlSignal
    J_star: tuple | None = None
    relaxed: RelaxedControl | None = None
    history: list = field(default_factory=list)
    iterations: int = 0
    stalled: bool = False
    exhaustive: bool = False
    gap: float | None = None


# {{{ state feedback and cost quadrature


def _cell_shift(problem: ProblemSpec, x: np.ndarray) -> np.ndarray:
    """Translation of the atoms on each cell, evaluated at the cell average state."""
    U = problem.constraint
    N = x.shape[0] - 1
    if not U.state_dependent:
        return np.zeros((problem.r, N, problem.m))
    xbar = 0.5 * (x[1:] + x[:-1])
    s = np.stack([U.shift(xj) for xj in xbar])
    return np.broadcast_to(s, (problem.r, N, problem.m)).copy()


def _realize(
    problem: ProblemSpec, relaxed: RelaxedControl, tol: float, max_feedback: int = 100
) -> tuple[Trajectory, ControlSignal, np.ndarray]:
    """Trajectory driven by the barycenter of ``relaxed``.

    For state-dependent control sets the atoms move with the state, which is
    resolved by a fixed-point loop over the cellwise translations.
    """
    grid = relaxed.grid
    shift = np.zeros((problem.r, grid.N, problem.m))
    for _ in range(max_feedback):
        controls = relaxed.barycenter(shift)
        x = solve_mild(problem, controls, grid, tol=tol)
        if not problem.constraint.state_dependent:
            return x, controls, shift
        new = _cell_shift(problem, x.values)
        if np.max(np.abs(new - shift)) <= 10 * tol:
            return x, relaxed.barycenter(new), new
        shift = new
    raise ContractionError("state feedback of the control set did not settle", float(np.max(np.abs(new - shift))))


def _state_cells(problem: ProblemSpec, i: int, grid: TimeGrid, x: np.ndarray) -> np.ndarray:
    """Trapezoid integral of the state part of ``g_i`` on every cell."""
    sp = problem.costs[i].state_part(grid.nodes, x)
    return 0.5 * grid.h * (sp[1:] + sp[:-1])


def _functionals_P(problem: ProblemSpec, grid: TimeGrid, x: np.ndarray, controls: ControlSignal) -> tuple:
    out = []
    for i, cost in enumerate(problem.costs):
        q = cost.q(controls.values[i])
        out.append(float(np.sum(_state_cells(problem, i, grid, x)) + grid.h * np.sum(q)))
    return tuple(out)


def _envelope_q(problem: ProblemSpec, i: int, atoms: np.ndarray):
    cost = problem.costs[i]
    return bipolar_envelope(EpigraphAtoms(atoms, cost.q(atoms)))


def _functionals_RP(
    problem: ProblemSpec, grid: TimeGrid, x: np.ndarray, relaxed: RelaxedControl, shift: np.ndarray
) -> tuple:
    """``int g**(t, x, barycenter)``: the state part is affine-free in ``u``, so
    the envelope only acts on the control part of the cost."""
    out = []
    base = relaxed.atoms
    bary = relaxed.weights @ base
    static = not problem.constraint.state_dependent
    for i in range(problem.r):
        env = _envelope_q(problem, i, base) if static else None
        vals = np.empty(grid.N)
        for j in range(grid.N):
            if static:
                vals[j] = env(bary[i, j])
            else:
                e = _envelope_q(problem, i, base + shift[i, j])
                vals[j] = e(bary[i, j] + shift[i, j])
        out.append(float(np.sum(_state_cells(problem, i, grid, x)) + grid.h * np.sum(vals)))
    return tuple(out)


def _functionals_young(
    problem: ProblemSpec, grid: TimeGrid, x: np.ndarray, relaxed: RelaxedControl, shift: np.ndarray
) -> tuple:
    out = []
    atoms = relaxed.atoms
    for i, cost in enumerate(problem.costs):
        if problem.constraint.state_dependent:
            q = np.stack([cost.q(atoms + shift[i, j]) for j in range(grid.N)])
        else:
            q = np.broadcast_to(cost.q(atoms), (grid.N, atoms.shape[0]))
        mixed = np.sum(relaxed.weights[i] * q, axis=1)
        out.append(float(np.sum(_state_cells(problem, i, grid, x)) + grid.h * np.sum(mixed)))
    return tuple(out)


# }}}


# {{{ evaluation


def evaluate_P(problem: ProblemSpec, controls: ControlSignal, tol: float = 1e-12) -> SolveReport:
    """Solve the state equation for ``controls`` and integrate every ``g_i``."""
    grid = controls.grid
    x = solve_mild(problem, controls, grid, tol=tol)
    J = _functionals_P(problem, grid, x.values, controls)
    return SolveReport(J=J, aggregate=max(J), trajectory=x, controls=controls)


def evaluate_RP(problem: ProblemSpec, relaxed: RelaxedControl, tol: float = 1e-12) -> SolveReport:
    """Relaxed functionals ``J_i** = int g_i**(t, x, u_i)`` at the barycentric control."""
    x, controls, shift = _realize(problem, relaxed, tol)
    J_star = _functionals_RP(problem, relaxed.grid, x.values, relaxed, shift)
    return SolveReport(
        J=None, aggregate=max(J_star), trajectory=x, controls=controls, J_star=J_star, relaxed=relaxed
    )


def young_objective(problem: ProblemSpec, relaxed: RelaxedControl, tol: float = 1e-12) -> tuple:
    """``int sum_l lambda_l g_i(t, x, u_l)`` for every channel (dynamics at the barycenter)."""
    x, _, shift = _realize(problem, relaxed, tol)
    return _functionals_young(problem, relaxed.grid, x.values, relaxed, shift)


def _evaluate_indices(problem: ProblemSpec, grid: TimeGrid, idx: np.ndarray, tol: float):
    relaxed = RelaxedControl.from_atom_indices(grid, problem.constraint.atoms, idx)
    x, controls, _ = _realize(problem, relaxed, tol)
    J = _functionals_P(problem, grid, x.values, controls)
    return J, x, controls


# }}}


# {{{ problem (P)


def _rounded_start(problem: ProblemSpec, grid: TimeGrid) -> np.ndarray:
    """Atom indices of the chattering control built from uniform weights."""
    k = problem.constraint.size
    relaxed = RelaxedControl(
        grid, np.full((problem.r, grid.N, k), 1.0 / k), np.arange(k, dtype=float)[:, None]
    )
    return chattering_sequence(relaxed, grid.N, sub=1).values[:, :, 0].astype(int)


def solve_P(
    problem: ProblemSpec,
    N: int,
    restarts: int = 2,
    sweeps: int = 20,
    seed: int = 0,
    tol: float = 1e-12,
) -> SolveReport:
    """Best atom-valued control found on an ``N``-cell grid.

    Enumerates all controls when there are at most 4096 of them; otherwise
    runs cellwise coordinate descent from a chattering start, the constant
    starts and ``restarts`` seeded random starts.  ``history`` records the
    incumbent after every sweep and is nonincreasing.
    """
    grid = problem.grid(N)
    k = problem.constraint.size
    r = problem.r
    total = k ** (r * grid.N)
    best = None
    history: list[float] = []

    def consider(idx, J, x, controls):
        nonlocal best
        if best is None or max(J) < best[0]:
            best = (max(J), J, x, controls, idx.copy())

    if total <= ENUMERATION_LIMIT:
        for flat in itertools.product(range(k), repeat=r * grid.N):
            idx = np.array(flat, dtype=int).reshape(r, grid.N)
            consider(idx, *_evaluate_indices(problem, grid, idx, tol))
            history.append(best[0])
        agg, J, x, controls, _ = best
        return SolveReport(J=J, aggregate=agg, trajectory=x, controls=controls,
                           history=history, iterations=total, exhaustive=True)

    rng = np.random.default_rng(seed)
    starts = [_rounded_start(problem, grid)]
    starts += [np.full((r, grid.N), l, dtype=int) for l in range(k)]
    starts += [rng.integers(0, k, size=(r, grid.N)) for _ in range(restarts)]
    iterations = 0
    for idx in starts:
        J, x, controls = _evaluate_indices(problem, grid, idx, tol)
        consider(idx, J, x, controls)
        current = max(J)
        for _ in range(sweeps):
            improved = False
            for j in range(grid.N):
                for i in range(r):
                    keep = idx[i, j]
                    for l in range(k):
                        if l == keep:
                            continue
                        idx[i, j] = l
                        J_try, x_try, c_try = _evaluate_indices(problem, grid, idx, tol)
                        if max(J_try) < current - 1e-15:
                            current = max(J_try)
                            keep = l
                            improved = True
                            consider(idx, J_try, x_try, c_try)
                    idx[i, j] = keep
            iterations += 1
            history.append(best[0])
            if not improved:
                break
    agg, J, x, controls, _ = best
    return SolveReport(J=J, aggregate=agg, trajectory=x, controls=controls,
                       history=history, iterations=iterations)


# }}}


# {{{ problem (RP)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row of ``v`` onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    flat = v.reshape(-1, v.shape[-1])
    u = -np.sort(-flat, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    ind = np.arange(1, flat.shape[1] + 1)
    cond = u - css / ind > 0
    rho = flat.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(flat.shape[0]), rho] / (rho + 1.0)
    return np.maximum(flat - theta[:, None], 0.0).reshape(v.shape)


class RelaxedObjective:
    def __init__(self, problem: ProblemSpec, grid: TimeGrid, tol: float) -> None:
        self.problem = problem
        self.grid = grid
        self.tol = tol
        self.atoms = problem.constraint.atoms
        self.shape = (problem.r, grid.N, problem.constraint.size)
        self.evaluations = 0

    def relaxed(self, w: np.ndarray) -> RelaxedControl:
        return RelaxedControl(self.grid, w.reshape(self.shape), self.atoms)

    def raw(self, w: np.ndarray) -> float:
        # the Young functional is defined for any weights with unit row sums,
        # so finite differences may step slightly outside the simplex
        self.evaluations += 1
        W = w.reshape(self.shape)
        bary = W @ self.atoms
        x = solve_mild(self.problem, ControlSignal(self.grid, bary), self.grid, tol=self.tol)
        if self.problem.constraint.state_dependent:
            return max(young_objective(self.problem, self.relaxed(project_simplex(W)), self.tol))
        J = []
        for i, cost in enumerate(self.problem.costs):
            q = cost.q(self.atoms)
            J.append(float(np.sum(_state_cells(self.problem, i, self.grid, x.values))
                           + self.grid.h * np.sum(W[i] @ q)))
        return max(J)

    def gradient(self, w: np.ndarray) -> np.ndarray:
        g = np.zeros_like(w)
        for p in range(w.size):
            step = 1e-6 * (1.0 + abs(w[p]))
            e = np.zeros_like(w)
            e[p] = step
            g[p] = (self.raw(w + e) - self.raw(w - e)) / (2.0 * step)
        return g


def _pattern_search(obj: RelaxedObjective, w: np.ndarray, f: float, max_rounds: int = 20):
    W = w.reshape(obj.shape).copy()
    for delta in (0.25, 0.05, 0.01):
        for _ in range(max_rounds):
            improved = False
            for i in range(obj.shape[0]):
                for j in range(obj.shape[1]):
                    for a in range(obj.shape[2]):
                        for b in range(obj.shape[2]):
                            if a == b or W[i, j, a] <= 0.0:
                                continue
                            move = min(delta, W[i, j, a])
                            W[i, j, a] -= move
                            W[i, j, b] += move
                            f_try = obj.raw(W.ravel())
                            if f_try < f - 1e-15:
                                f = f_try
                                improved = True
                            else:
                                W[i, j, a] += move
                                W[i, j, b] -= move
            if not improved:
                break
    return W.ravel(), f


def _spg(obj: RelaxedObjective, w0: np.ndarray, max_iter: int, history: list):
    """Projected gradient with Barzilai-Borwein steps and Armijo backtracking."""
    w = w0.copy()
    f = obj.raw(w)
    g = obj.gradient(w)
    step = 1.0
    small = 0
    stalled = False
    it = 0
    history.append(f)
    for it in range(1, max_iter + 1):
        d = project_simplex((w - step * g).reshape(obj.shape)).ravel() - w
        if np.max(np.abs(d)) < 1e-14:
            break
        slope = float(g @ d)
        s = 1.0
        for _ in range(40):
            f_new = obj.raw(w + s * d)
            if f_new <= f + 1e-4 * s * slope:
                break
            s *= 0.5
        else:
            stalled = True
            break
        w_new = project_simplex((w + s * d).reshape(obj.shape)).ravel()
        g_new = obj.gradient(w_new)
        sk, yk = w_new - w, g_new - g
        sy = float(sk @ yk)
        step = float(sk @ sk) / sy if sy > 1e-16 else 1e3
        step = min(max(step, 1e-8), 1e8)
        rel = abs(f - f_new) / max(1.0, abs(f))
        small = small + 1 if rel < 1e-8 else 0
        w, f, g = w_new, f_new, g_new
        history.append(f)
        if small >= 5:
            break
    return w, f, it, stalled


def solve_RP(
    problem: ProblemSpec,
    N: int,
    max_iter: int = 200,
    restarts: int = 0,
    seed: int = 0,
    tol: float = 1e-12,
) -> SolveReport:
    """Minimize the relaxed functional over simplex weights on an ``N``-cell grid.

    Starts from uniform weights (plus ``restarts`` seeded Dirichlet draws),
    runs projected gradient with finite-difference gradients and polishes the
    result by a pattern search that moves mass between atoms.  Ties between
    starts keep the earlier one.
    """
    grid = problem.grid(N)
    obj = RelaxedObjective(problem, grid, tol)
    k = problem.constraint.size
    rng = np.random.default_rng(seed)
    starts = [np.full(obj.shape, 1.0 / k).ravel()]
    starts += [rng.dirichlet(np.ones(k), size=obj.shape[:2]).ravel() for _ in range(restarts)]
    best = None
    history: list[float] = []
    total_it = 0
    for w0 in starts:
        if k == 1:
            w, f, it, stalled = w0, obj.raw(w0), 0, False
        else:
            w, f, it, stalled = _spg(obj, w0, max_iter, history)
            w_ps, f_ps = _pattern_search(obj, w, f)
            if f_ps < f:
                w, f = w_ps, f_ps
                history.append(f)
        total_it += it
        if best is None or f < best[1]:
            best = (w, f, stalled)
    w, f, stalled = best
    relaxed = obj.relaxed(project_simplex(w.reshape(obj.shape)))
    rep = evaluate_RP(problem, relaxed, tol)
    young = young_objective(problem, relaxed, tol)
    rep.J = young
    rep.history = history
    rep.iterations = total_it
    rep.stalled = stalled
    return rep


# }}}


# {{{ relaxation experiment


@dataclass(frozen=True)
class ExperimentRow:
    N: int
    traj_err_sup: float
    weak_norm_dist: float
    gap: float
    window_sup: float
    runtime_ms: float


@dataclass
class ExperimentReport:
    rp: SolveReport
    rows: list
    monotone: dict
    final_gap_ok: bool
    gap_tol: float

    @property
    def ok(self) -> bool:
        return all(self.monotone.values()) and self.final_gap_ok


def _window_sup(grid: TimeGrid, a: np.ndarray, b: np.ndarray) -> float:
    """``sup_{t1 <= t2} |int_{t1}^{t2} (a - b)|`` for cellwise integrals ``a``, ``b``."""
    return weak_norm((a - b) / grid.h, grid.h)


def relaxation_experiment(
    problem: ProblemSpec,
    N_list,
    rp_grid: int | None = None,
    sub: int = 2,
    gap_tol: float = 1e-2,
    seed: int = 0,
    tol: float = 1e-12,
    rp: SolveReport | None = None,
) -> ExperimentReport:
    """Solve (RP) once and compare it with chattering controls for each ``N``.

    For every ``N`` the chattering control has ``N`` blocks of ``sub`` cells.
    Columns: sup distance of trajectories, weak distance of controls, gap of
    the aggregated functionals and the largest windowed cost discrepancy.
    """
    N_list = [int(N) for N in N_list]
    if not N_list or any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise PreconditionError("N_list must be a nonempty ascending list")
    if rp is None:
        rp = solve_RP(problem, rp_grid or N_list[0], seed=seed, tol=tol)
    relaxed = rp.relaxed
    rows = []
    for N in N_list:
        t0 = time.perf_counter()
        u_N = chattering_sequence(relaxed, N, sub=sub)
        fine = u_N.grid
        fine_relaxed = relaxed.refine(fine.N // relaxed.grid.N)
        star = evaluate_RP(problem, fine_relaxed, tol)
        if problem.constraint.state_dependent:
            idx = _indices_of(problem, u_N)
            J_N, x_N, u_N = _evaluate_indices(problem, fine, idx, tol)
        else:
            x_N = solve_mild(problem, u_N, fine, tol=tol)
            J_N = _functionals_P(problem, fine, x_N.values, u_N)
        traj = float(np.max(np.linalg.norm(x_N.values - star.trajectory.values, axis=1)))
        weak = max(
            weak_norm(u_N.values[i] - star.controls.values[i], fine.h) for i in range(problem.r)
        )
        gap = abs(max(J_N) - max(star.J_star))
        window = 0.0
        for i in range(problem.r):
            cost = problem.costs[i]
            a_cells = _state_cells(problem, i, fine, x_N.values) + fine.h * cost.q(u_N.values[i])
            env = None if problem.constraint.state_dependent else _envelope_q(problem, i, relaxed.atoms)
            if problem.constraint.state_dependent:
                shifts = _cell_shift(problem, star.trajectory.values)[i]
                q_star = np.array([
                    _envelope_q(problem, i, relaxed.atoms + s)(c)
                    for s, c in zip(shifts, star.controls.values[i])
                ])
            else:
                q_star = env.values(star.controls.values[i])
            b_cells = _state_cells(problem, i, fine, star.trajectory.values) + fine.h * q_star
            window = max(window, _window_sup(fine, b_cells, a_cells))
        rows.append(ExperimentRow(N, traj, weak, gap, window, 1e3 * (time.perf_counter() - t0)))
    cols = {
        "traj_err_sup": [r.traj_err_sup for r in rows],
        "weak_norm_dist": [r.weak_norm_dist for r in rows],
        "gap": [r.gap for r in rows],
        "window_sup": [r.window_sup for r in rows],
    }
    monotone = {k: all(b <= a + 1e-15 for a, b in zip(v, v[1:])) for k, v in cols.items()}
    rp.gap = rows[-1].gap
    return ExperimentReport(rp, rows, monotone, rows[-1].gap <= gap_tol, gap_tol)


def _indices_of(problem: ProblemSpec, controls: ControlSignal) -> np.ndarray:
    atoms = problem.constraint.atoms
    d = np.linalg.norm(controls.values[:, :, None, :] - atoms[None, None], axis=3)
    return np.argmin(d, axis=2)


# }}}
