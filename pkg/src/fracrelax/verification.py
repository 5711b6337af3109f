"""Self-checks and timings exposed through the command line.

Each check compares two independent computations (or a computation with a
closed form) and reports the observed discrepancy against its tolerance.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from fracrelax.control_geometry import FiniteControlSet
from fracrelax.fractional_ops import GridFunction, TimeGrid, caputo_derivative
from fracrelax.mild_solver import solve_mild
from fracrelax.optimizer import project_simplex
from fracrelax.problem import ControlSignal, CostSpec, DynamicsSpec, NonlocalSpec, ProblemSpec, Sampled
from fracrelax.relaxation import EpigraphAtoms, bipolar_envelope
from fracrelax.sobolev_system import OperatorTriple, s_alpha, t_alpha
from fracrelax.special_functions import density_moment, gamma_fn, mittag_leffler

__all__ = ["CheckResult", "random_stable_triple", "benchmark_problem", "pairwise_envelope", "run_checks", "run_timings", "CHECKS"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    error: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.error <= self.tol)


def random_stable_triple(rng: np.random.Generator, n: int = 3) -> OperatorTriple:
    """``L``, ``M`` near the identity and ``E = L B M`` with ``B`` of positive
    definite symmetric part, so that ``A = -B`` is dissipative."""
    L = np.eye(n) + 0.3 * rng.standard_normal((n, n))
    M = np.eye(n) + 0.3 * rng.standard_normal((n, n))
    G = rng.standard_normal((n, n))
    K = rng.standard_normal((n, n))
    B = G @ G.T / 3.0 + 0.5 * np.eye(n) + 0.5 * (K - K.T)
    return OperatorTriple(L, M, L @ B @ M)


def benchmark_problem(alpha: float = 0.5, forcing: float = 0.0, E: float = 0.0) -> ProblemSpec:
    """Scalar problem ``D^alpha x = F0 + u``, ``x(0) = 0``, ``g = x^2``, ``U = {-1, 1}``."""
    return ProblemSpec(
        alpha,
        1.0,
        np.zeros(1),
        OperatorTriple.scalar(1.0, 1.0, E),
        (np.eye(1),),
        DynamicsSpec(Sampled(np.array([forcing])), np.zeros((1, 1)), (np.eye(1),)),
        NonlocalSpec(np.zeros(1)),
        (CostSpec(np.eye(1), Sampled(np.zeros(1))),),
        FiniteControlSet([[-1.0], [1.0]]),
        beta=alpha / 2.0,
    )


def _operator_pair(seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(2):
        tr = random_stable_triple(rng)
        for alpha, t in ((0.6, 0.5), (0.9, 1.0)):
            for fn in (s_alpha, t_alpha):
                d = fn(tr, alpha, t, "subordination") - fn(tr, alpha, t, "series")
                worst = max(worst, float(np.max(np.abs(d))))
    return CheckResult("operators: subordination vs series", worst, 1e-6)


def _density_laws(seed: int) -> CheckResult:
    worst = 0.0
    for alpha in (0.3, 0.5, 0.7):
        worst = max(worst, abs(density_moment(alpha, 0) - 1.0))
        worst = max(worst, abs(density_moment(alpha, 1) - 1.0 / gamma_fn(1.0 + alpha)))
    return CheckResult("density: mass and first moment", worst, 1e-6)


def _ml_closed_forms(seed: int) -> CheckResult:
    worst = 0.0
    for z in (-3.0, -0.5, 0.5, 2.0):
        worst = max(worst, abs(mittag_leffler(1.0, 1.0, z) - math.exp(z)) / math.exp(z))
        ref = math.exp(z * z) * math.erfc(-z)
        worst = max(worst, abs(mittag_leffler(0.5, 1.0, z) - ref) / ref)
    return CheckResult("Mittag-Leffler: exp and erfc forms", worst, 1e-10)


def _caputo_linear(seed: int) -> CheckResult:
    grid = TimeGrid(1.0, 200)
    x = GridFunction(grid, grid.nodes[:, None])
    d = caputo_derivative(x, 0.5).values[:, 0]
    exact = grid.nodes**0.5 / gamma_fn(1.5)
    return CheckResult("Caputo: derivative of t", float(np.max(np.abs(d - exact))), 1e-10)


def _mild_closed_form(seed: int) -> CheckResult:
    problem = benchmark_problem()
    grid = problem.grid(100)
    x = solve_mild(problem, ControlSignal.constant(grid, 1.0), grid)
    exact = grid.nodes**0.5 / gamma_fn(1.5)
    return CheckResult("mild solver: constant forcing", float(np.max(np.abs(x.values[:, 0] - exact))), 1e-4)


def pairwise_envelope(points: np.ndarray, costs: np.ndarray, u: float) -> float:
    """Lower envelope at ``u`` by enumerating every atom and every pair of
    atoms whose segment covers ``u`` (Caratheodory in one dimension)."""
    best = math.inf
    for k in range(len(points)):
        if points[k] == u:
            best = min(best, costs[k])
    for i, j in itertools.combinations(range(len(points)), 2):
        lo, hi = (i, j) if points[i] < points[j] else (j, i)
        if points[lo] < points[hi] and points[lo] <= u <= points[hi]:
            lam = (u - points[lo]) / (points[hi] - points[lo])
            best = min(best, (1.0 - lam) * costs[lo] + lam * costs[hi])
    return best


def _envelope_brute_force(seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(5):
        pts = rng.choice(np.linspace(-2, 2, 41), size=5, replace=False)
        c = rng.standard_normal(5)
        env = bipolar_envelope(EpigraphAtoms(pts, c))
        for u in np.linspace(pts.min(), pts.max(), 101):
            worst = max(worst, float(abs(env(u) - pairwise_envelope(pts, c, u))))
    return CheckResult("envelope: pairwise brute force", worst, 1e-10)


def _simplex(seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    v = 3.0 * rng.standard_normal((50, 4))
    w = project_simplex(v)
    err = float(np.max(np.abs(w.sum(axis=1) - 1.0))) + float(max(0.0, -w.min()))
    return CheckResult("simplex projection: feasibility", err, 1e-12)


CHECKS = (
    _ml_closed_forms,
    _density_laws,
    _operator_pair,
    _caputo_linear,
    _mild_closed_form,
    _envelope_brute_force,
    _simplex,
)


def run_checks(seed: int = 0) -> list[CheckResult]:
    """Run every self-check; the list order is fixed."""
    return [check(seed) for check in CHECKS]


def run_timings(seed: int = 0, repeats: int = 3) -> list[tuple[str, float]]:
    """Best-of-``repeats`` wall time (ms) of a representative call per module."""
    rng = np.random.default_rng(seed)
    tr = random_stable_triple(rng)
    problem = benchmark_problem()
    grid = problem.grid(512)
    u = ControlSignal.constant(grid, 1.0)
    x = GridFunction(grid, grid.nodes[:, None] ** 2)
    atoms = EpigraphAtoms(np.linspace(-1, 1, 6), rng.standard_normal(6))
    cases = [
        ("special_functions", lambda: density_moment(0.5, 1)),
        ("sobolev_system", lambda: s_alpha(OperatorTriple(tr.L, tr.M, tr.E), 0.6, 0.5, "subordination")),
        ("fractional_ops", lambda: caputo_derivative(x, 0.5)),
        ("mild_solver", lambda: solve_mild(problem, u, grid)),
        ("relaxation", lambda: bipolar_envelope(atoms)),
        ("optimizer", lambda: project_simplex(rng.standard_normal((1000, 4)))),
    ]
    out = []
    for name, fn in cases:
        best = math.inf
        for _ in range(repeats):
            t0 = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - t0)
        out.append((name, 1e3 * best))
    return out
