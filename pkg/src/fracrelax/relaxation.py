"""Convex envelopes of costs restricted to finite control sets, their
Caratheodory decompositions, and chattering controls.

For a finite set ``U = {u_1..u_k}`` the restriction of a cost ``g`` to ``U``
is ``+inf`` off the atoms, so its largest convex minorant (the bipolar) is the
lower convex envelope of the lifted points ``(u_j, g(u_j))`` over
``conv U``:

    g**(u) = min { sum_j lambda_j g(u_j) : sum_j lambda_j u_j = u, lambda in simplex }.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from fracrelax.control_geometry import FiniteControlSet, Hull, convex_hull
from fracrelax.errors import DomainError, PreconditionError, UnsupportedDimensionError
from fracrelax.problem import ControlSignal, CostSpec, RelaxedControl

__all__ = [
    "EpigraphAtoms",
    "EnvelopeFunction",
    "restricted_cost",
    "bipolar_envelope",
    "effective_set",
    "caratheodory_decompose",
    "chattering_sequence",
]


@dataclass(frozen=True, eq=False)
class EpigraphAtoms:
    """Lifted atoms ``(u_j, tau_j)`` with ``tau_j = g(u_j)``."""

    points: np.ndarray
    costs: np.ndarray

    def __post_init__(self) -> None:
        P = np.asarray(self.points, dtype=float)
        if P.ndim == 1:
            P = P[:, None]
        c = np.asarray(self.costs, dtype=float).reshape(-1)
        if P.ndim != 2 or P.shape[0] == 0 or c.shape != (P.shape[0],):
            raise PreconditionError("need one finite cost per atom")
        if not (np.all(np.isfinite(P)) and np.all(np.isfinite(c))):
            raise PreconditionError("atoms and costs must be finite")
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "costs", c)

    @property
    def m(self) -> int:
        return self.points.shape[1]

    @property
    def pairs(self) -> list[tuple[np.ndarray, float]]:
        return [(p, float(c)) for p, c in zip(self.points, self.costs)]


def restricted_cost(cost: CostSpec, U: FiniteControlSet, t: float, x) -> EpigraphAtoms:
    """Graph of ``g(t, x, .)`` over the atoms of ``U(t, x)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    atoms = U.values(x)
    k = atoms.shape[0]
    tt = np.full(k, float(t))
    vals = cost(tt, np.broadcast_to(x, (k, x.size)), atoms)
    return EpigraphAtoms(atoms, vals)


# {{{ envelopes


@dataclass(frozen=True, eq=False)
class EnvelopeFunction:
    """Lower convex envelope of lifted atoms.

    In one dimension ``breakpoints`` are the indices of the atoms on the lower
    hull in increasing order.  In two dimensions ``facets`` lists index
    triples of lower facets and ``planes`` the affine functions ``(a, b)``
    with value ``a . u + b`` on each facet.  Collinear planar atoms reduce to
    the one-dimensional case along their common line.
    """

    atoms: EpigraphAtoms
    hull: Hull
    breakpoints: tuple = ()
    facets: tuple = ()
    planes: np.ndarray | None = None
    line: tuple | None = None

    @property
    def m(self) -> int:
        return self.atoms.m

    def _coordinate(self, u: np.ndarray) -> float:
        origin, direction = self.line
        return float((u - origin) @ direction)

    def __call__(self, u) -> float:
        """Envelope value at ``u``; ``+inf`` outside the hull."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if not self.hull.contains(u, tol=1e-12):
            return math.inf
        P, c = self.atoms.points, self.atoms.costs
        if self.hull.kind == "point":
            return float(c.min())
        if self.planes is None:
            s = self._coordinate(u) if self.line is not None else float(u[0])
            bp = list(self.breakpoints)
            xs = self._coords()[bp]
            return float(np.interp(s, xs, c[bp]))
        vals = self.planes[:, :2] @ u + self.planes[:, 2]
        return float(vals.max())

    def values(self, U) -> np.ndarray:
        """Envelope at each row of ``U`` (shape (K, m), or (K,) when m = 1)."""
        U = np.asarray(U, dtype=float).reshape(-1, self.m)
        return np.array([self(u) for u in U])

    def _coords(self) -> np.ndarray:
        P = self.atoms.points
        if self.line is None:
            return P[:, 0]
        origin, direction = self.line
        return (P - origin) @ direction


def _lower_hull_1d(x: np.ndarray, y: np.ndarray) -> list[int]:
    # among equal abscissae only the lowest value can support the envelope
    order = sorted(range(len(x)), key=lambda i: (x[i], y[i]))
    hull: list[int] = []
    for i in order:
        if hull and x[hull[-1]] == x[i]:
            continue
        while len(hull) >= 2:
            o, a = hull[-2], hull[-1]
            cross = (x[a] - x[o]) * (y[i] - y[o]) - (y[a] - y[o]) * (x[i] - x[o])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return hull


def _lower_facets_2d(P: np.ndarray, c: np.ndarray) -> tuple[tuple, np.ndarray]:
    k = len(P)
    scale = max(1.0, float(np.max(np.abs(c))), float(np.max(np.abs(P))))
    tol = 1e-10 * scale
    facets, planes = [], []
    for tri in itertools.combinations(range(k), 3):
        Q = P[list(tri)]
        area = (Q[1, 0] - Q[0, 0]) * (Q[2, 1] - Q[0, 1]) - (Q[1, 1] - Q[0, 1]) * (Q[2, 0] - Q[0, 0])
        if abs(area) <= 1e-14 * scale * scale:
            continue
        coeff = np.linalg.solve(np.column_stack([Q, np.ones(3)]), c[list(tri)])
        if np.all(c - (P @ coeff[:2] + coeff[2]) >= -tol):
            facets.append(tri)
            planes.append(coeff)
    return tuple(facets), np.array(planes)


def bipolar_envelope(atoms: EpigraphAtoms) -> EnvelopeFunction:
    """Lower convex envelope of the lifted atoms over their convex hull."""
    if atoms.m > 2:
        raise UnsupportedDimensionError(f"envelopes are supported for m <= 2, got m = {atoms.m}")
    P, c = atoms.points, atoms.costs
    hull = convex_hull(P)
    if hull.kind == "point":
        return EnvelopeFunction(atoms, hull)
    if atoms.m == 1:
        return EnvelopeFunction(atoms, hull, breakpoints=tuple(_lower_hull_1d(P[:, 0], c)))
    if hull.kind == "segment":
        origin = hull.vertices[0]
        span = hull.vertices[1] - origin
        direction = span / np.linalg.norm(span)
        s = (P - origin) @ direction
        return EnvelopeFunction(
            atoms, hull, breakpoints=tuple(_lower_hull_1d(s, c)), line=(origin, direction)
        )
    facets, planes = _lower_facets_2d(P, c)
    return EnvelopeFunction(atoms, hull, facets=facets, planes=planes)


def effective_set(envelope: EnvelopeFunction) -> Hull:
    """Domain where the envelope is finite: the convex hull of the atoms."""
    return envelope.hull


def caratheodory_decompose(envelope: EnvelopeFunction, u_star) -> list[tuple[int, np.ndarray, float]]:
    """Write ``(u*, g**(u*))`` as a convex combination of lifted atoms.

    Returns ``(atom_index, atom, weight)`` triples with positive weights; at
    most two atoms in one dimension and three in two.  A point on a
    breakpoint shared by two segments is decomposed on the left segment.
    """
    u = np.atleast_1d(np.asarray(u_star, dtype=float))
    hull = envelope.hull
    if u.shape != (envelope.m,):
        raise PreconditionError(f"u* must have dimension {envelope.m}")
    if not hull.contains(u, tol=1e-12):
        raise DomainError(f"u* = {u} lies outside the convex hull of the atoms")
    P, c = envelope.atoms.points, envelope.atoms.costs
    if hull.kind == "point":
        j = int(np.argmin(c))
        return [(j, P[j].copy(), 1.0)]
    if envelope.planes is None:
        s = envelope._coordinate(u) if envelope.line is not None else float(u[0])
        bp = list(envelope.breakpoints)
        xs = envelope._coords()[bp]
        s = min(max(s, xs[0]), xs[-1])
        # left segment on ties: first right endpoint with s <= x_right
        k = int(np.searchsorted(xs, s, side="left"))
        k = min(max(k, 1), len(bp) - 1)
        left, right = bp[k - 1], bp[k]
        lam_right = (s - xs[k - 1]) / (xs[k] - xs[k - 1])
        out = [(left, P[left].copy(), 1.0 - lam_right), (right, P[right].copy(), lam_right)]
        return [(j, p, float(w)) for j, p, w in out if w > 0.0]
    value = envelope(u)
    best = None
    for tri, plane in zip(envelope.facets, envelope.planes):
        if abs(plane[:2] @ u + plane[2] - value) > 1e-9 * max(1.0, abs(value)):
            continue
        Q = P[list(tri)]
        lam = np.linalg.solve(np.vstack([Q.T, np.ones(3)]), np.append(u, 1.0))
        if np.all(lam >= -1e-12):
            best = (tri, np.clip(lam, 0.0, None) / np.clip(lam, 0.0, None).sum())
            break
    if best is None:
        raise DomainError(f"no supporting facet contains u* = {u}")
    tri, lam = best
    return [(j, P[j].copy(), float(w)) for j, w in zip(tri, lam) if w > 0.0]


# }}}


# {{{ chattering


def _apportion(weights: np.ndarray, carry: np.ndarray, slots: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer counts summing to ``slots`` that track ``slots * weights``.

    The rounding error is carried to the next block so that cumulative counts
    never drift from the cumulative targets by more than one slot.
    """
    target = slots * weights + carry
    counts = np.floor(target).astype(int)
    short = slots - int(counts.sum())
    if short > 0:
        order = np.argsort(-(target - counts), kind="stable")
        counts[order[:short]] += 1
    elif short < 0:
        order = np.argsort(target - counts, kind="stable")
        for j in order:
            if short == 0:
                break
            take = min(counts[j], -short)
            counts[j] -= take
            short += take
    return counts, target - counts


def chattering_sequence(relaxed: RelaxedControl, N_blocks: int, sub: int = 2) -> ControlSignal:
    """Atom-valued control whose block averages reproduce the relaxed control.

    ``[0, a]`` is split into ``N_blocks`` equal blocks of ``sub`` cells each.
    Within a block atom ``j`` occupies a run of cells whose count tracks
    ``sub * lambda_j``; runs appear in atom order.  ``N_blocks`` must be a
    multiple of the number of cells of the relaxed control.
    """
    N_blocks = int(N_blocks)
    sub = int(sub)
    if N_blocks < 1 or sub < 1:
        raise PreconditionError("N_blocks and sub must be positive")
    w = relaxed.weights
    if np.any(w < -1e-12) or np.max(np.abs(w.sum(axis=2) - 1.0)) > 1e-9:
        raise PreconditionError("relaxed weights must lie in the simplex")
    N = relaxed.grid.N
    if N_blocks % N:
        raise PreconditionError(
            f"N_blocks = {N_blocks} must be a multiple of the relaxed grid size {N}"
        )
    per_cell = N_blocks // N
    atoms = relaxed.atoms
    r, _, k = w.shape
    out = np.empty((r, N_blocks * sub, atoms.shape[1]))
    for i in range(r):
        carry = np.zeros(k)
        for b in range(N_blocks):
            counts, carry = _apportion(w[i, b // per_cell], carry, sub)
            idx = np.repeat(np.arange(k), counts)
            out[i, b * sub:(b + 1) * sub] = atoms[idx]
    return ControlSignal(relaxed.grid.refine(per_cell * sub), out)


# }}}
