"""Finite control sets, their convex hulls, Hausdorff distances and the weak
norm ``sup_{t1 <= t2} ||int_{t1}^{t2} u||`` of piecewise-constant controls."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fracrelax.errors import PreconditionError, UnsupportedDimensionError

__all__ = [
    "FiniteControlSet",
    "Hull",
    "hausdorff",
    "radial_retraction",
    "convex_hull",
    "hull_hausdorff",
    "weak_norm",
    "lq_norm",
]


def _points(P, name: str = "points") -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if P.ndim != 2 or P.shape[0] == 0:
        raise PreconditionError(f"{name} must be a nonempty list of points")
    if not np.all(np.isfinite(P)):
        raise PreconditionError(f"{name} must be finite")
    return P


def radial_retraction(x, L0: float) -> np.ndarray:
    """Identity on the closed ball of radius ``L0``, ``L0 x / ||x||`` outside."""
    if not L0 > 0:
        raise PreconditionError(f"retraction radius must be positive, got {L0}")
    x = np.asarray(x, dtype=float)
    nrm = float(np.linalg.norm(x))
    if nrm <= L0:
        return x.copy()
    return x * (L0 / nrm)


@dataclass(frozen=True, eq=False)
class FiniteControlSet:
    """Finitely many control values, optionally translated by the state.

    With ``state_shift = W`` (shape ``(m, n)``) and ``radius = L0`` the set at
    state ``x`` is ``{u_j + W pr_{L0}(x)}``; without it the set is constant.
    """

    atoms: np.ndarray
    state_shift: np.ndarray | None = None
    radius: float | None = None

    def __post_init__(self) -> None:
        P = _points(self.atoms, "atoms")
        if len(np.unique(P, axis=0)) != len(P):
            raise PreconditionError("atoms must be distinct")
        P.setflags(write=False)
        object.__setattr__(self, "atoms", P)
        if self.state_shift is not None:
            W = np.atleast_2d(np.asarray(self.state_shift, dtype=float))
            if W.shape[0] != P.shape[1]:
                raise PreconditionError(f"state_shift must have {P.shape[1]} rows, got {W.shape}")
            if self.radius is None or not self.radius > 0:
                raise PreconditionError("a state-dependent set needs a positive retraction radius")
            W.setflags(write=False)
            object.__setattr__(self, "state_shift", W)

    @property
    def m(self) -> int:
        return self.atoms.shape[1]

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    @property
    def state_dependent(self) -> bool:
        return self.state_shift is not None and bool(np.any(self.state_shift))

    @property
    def k3(self) -> float:
        """Hausdorff-Lipschitz constant in the state."""
        if self.state_shift is None:
            return 0.0
        return float(np.linalg.norm(self.state_shift, 2))

    @property
    def a3(self) -> float:
        return float(np.max(np.linalg.norm(self.atoms, axis=1)))

    @property
    def c3(self) -> float:
        return self.k3

    def shift(self, x=None) -> np.ndarray:
        if not self.state_dependent or x is None:
            return np.zeros(self.m)
        return self.state_shift @ radial_retraction(x, self.radius)

    def values(self, x=None) -> np.ndarray:
        """Atoms of the set at state ``x``, shape ``(k, m)``."""
        return self.atoms + self.shift(x)[None, :]

    def with_radius(self, radius: float) -> "FiniteControlSet":
        return FiniteControlSet(self.atoms, self.state_shift, radius)


def _directed(A: np.ndarray, B: np.ndarray) -> float:
    d = np.linalg.norm(A[:, None, :] - B[None, :, :], axis=2)
    return float(d.min(axis=1).max())


def hausdorff(A, B) -> float:
    """Hausdorff distance between two finite point sets."""
    A = _points(A, "A")
    B = _points(B, "B")
    if A.shape[1] != B.shape[1]:
        raise PreconditionError("point sets live in different dimensions")
    return max(_directed(A, B), _directed(B, A))


# {{{ convex hulls


def _cross(o: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    return float((a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]))


def _monotone_chain(P: np.ndarray) -> np.ndarray:
    pts = sorted(map(tuple, np.unique(P, axis=0)))
    if len(pts) <= 2:
        return np.array(pts)
    scale = max(1.0, float(np.max(np.abs(P))))
    eps = 1e-12 * scale * scale

    def half(seq):
        out: list = []
        for p in seq:
            while len(out) >= 2 and _cross(np.array(out[-2]), np.array(out[-1]), np.array(p)) <= eps:
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(reversed(pts))
    return np.array(lower[:-1] + upper[:-1])


@dataclass(frozen=True, eq=False)
class Hull:
    """Convex hull of finitely many points in one or two dimensions.

    ``kind`` is ``"point"``, ``"segment"`` or ``"polygon"``.  Segments carry
    their two endpoints and polygons their vertices in counter-clockwise
    order.
    """

    vertices: np.ndarray
    kind: str
    dim: int

    @property
    def diameter(self) -> float:
        V = self.vertices
        return float(np.max(np.linalg.norm(V[:, None] - V[None], axis=2)))

    @property
    def interval(self) -> tuple[float, float]:
        if self.dim != 1:
            raise PreconditionError("interval is only defined for one-dimensional hulls")
        return float(self.vertices[0, 0]), float(self.vertices[-1, 0])

    def distance(self, u) -> float:
        """Euclidean distance from ``u`` to the hull (zero inside)."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if u.shape != (self.dim,):
            raise PreconditionError(f"point must have dimension {self.dim}")
        if self.kind == "point":
            return float(np.linalg.norm(u - self.vertices[0]))
        if self.kind == "segment":
            return _segment_distance(u, self.vertices[0], self.vertices[1])
        V = self.vertices
        scale = max(1.0, float(np.max(np.abs(V))))
        inside = all(
            _cross(V[i], V[(i + 1) % len(V)], u) >= -1e-14 * scale * scale for i in range(len(V))
        )
        if inside:
            return 0.0
        return min(_segment_distance(u, V[i], V[(i + 1) % len(V)]) for i in range(len(V)))

    def contains(self, u, tol: float = 1e-12) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.vertices))))
        return self.distance(u) <= tol * scale


def _segment_distance(u: np.ndarray, p: np.ndarray, q: np.ndarray) -> float:
    d = q - p
    dd = float(d @ d)
    s = 0.0 if dd == 0 else min(1.0, max(0.0, float((u - p) @ d) / dd))
    return float(np.linalg.norm(u - (p + s * d)))


def convex_hull(atoms) -> Hull:
    """Minimal description of the convex hull of ``atoms`` (dimension 1 or 2)."""
    P = _points(atoms, "atoms")
    m = P.shape[1]
    if m > 2:
        raise UnsupportedDimensionError(f"convex hulls are supported for m <= 2, got m = {m}")
    if m == 1:
        lo, hi = float(P.min()), float(P.max())
        if lo == hi:
            return Hull(np.array([[lo]]), "point", 1)
        return Hull(np.array([[lo], [hi]]), "segment", 1)
    V = _monotone_chain(P)
    if len(V) == 1:
        return Hull(V, "point", 2)
    if len(V) == 2:
        return Hull(V, "segment", 2)
    return Hull(V, "polygon", 2)


def hull_hausdorff(A: Hull, B: Hull) -> float:
    """Hausdorff distance between two hulls.

    The distance to a convex set is a convex function, so its maximum over
    a polytope is attained at a vertex.
    """
    if A.dim != B.dim:
        raise PreconditionError("hulls live in different dimensions")
    da = max(B.distance(v) for v in A.vertices)
    db = max(A.distance(v) for v in B.vertices)
    return max(da, db)


# }}}


# {{{ norms of piecewise-constant controls


def _cells(u, h: float) -> np.ndarray:
    U = np.asarray(u, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    if U.ndim != 2:
        raise PreconditionError("control values must have shape (cells, m)")
    if not h > 0:
        raise PreconditionError("cell width must be positive")
    return U


def weak_norm(u, h: float, q: float | None = None) -> float:
    """``sup_{0 <= t1 <= t2 <= a} || int_{t1}^{t2} u(s) ds ||`` for piecewise-constant ``u``.

    ``u`` holds one value per cell of width ``h``.  The cumulative integral is
    piecewise linear, so the supremum is attained at cell boundaries and
    equals the diameter of the set of cumulative values there.  ``q`` is
    accepted for symmetry with the Lebesgue norms and only validated.
    """
    if q is not None and not q > 1:
        raise PreconditionError(f"q must exceed 1, got {q}")
    U = _cells(u, h)
    cum = np.vstack([np.zeros((1, U.shape[1])), np.cumsum(U * h, axis=0)])
    if U.shape[1] == 1:
        return float(cum.max() - cum.min())
    if U.shape[1] == 2:
        V = _monotone_chain(cum)
        if len(V) == 1:
            return 0.0
        return float(np.max(np.linalg.norm(V[:, None] - V[None], axis=2)))
    best = 0.0
    for i in range(len(cum)):
        best = max(best, float(np.max(np.linalg.norm(cum[i:] - cum[i], axis=1))))
    return best


def lq_norm(u, h: float, q: float) -> float:
    """``(int ||u||^q)^{1/q}`` for piecewise-constant ``u``."""
    U = _cells(u, h)
    if math.isinf(q):
        return float(np.max(np.linalg.norm(U, axis=1)))
    return float((h * np.sum(np.linalg.norm(U, axis=1) ** q)) ** (1.0 / q))


# }}}
