"""Operator triple ``(L, M, E)`` of the Sobolev-type equation
``L D^alpha [M x] + E x = f`` and its characteristic solution operators.

With ``A = -L^{-1} E M^{-1}`` and ``Q(t) = exp(A t)`` the two operators are

    S_alpha(t) = M^{-1} int_0^inf zeta_alpha(theta) Q(t^alpha theta) dtheta
               = M^{-1} E_{alpha,1}(A t^alpha)
    T_alpha(t) = alpha M^{-1} int_0^inf theta zeta_alpha(theta) Q(t^alpha theta) dtheta
               = M^{-1} E_{alpha,alpha}(A t^alpha)

Both the series form and the subordination integral are implemented; they
are independent routes to the same matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from fracrelax.errors import InvertibilityError, PreconditionError
from fracrelax.special_functions import (
    density_cutoff,
    gamma_fn,
    gauss_kronrod,
    mittag_leffler_matrix,
    wright_density,
)

__all__ = ["OperatorTriple", "generator", "semigroup", "s_alpha", "t_alpha", "METHODS"]

METHODS = ("series", "subordination")

COND_LIMIT = 1e8


def _as_square(name: str, X, n: int | None = None) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise PreconditionError(f"{name} must be a square matrix, got shape {X.shape}")
    if n is not None and X.shape[0] != n:
        raise PreconditionError(f"{name} must be {n}x{n}, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise PreconditionError(f"{name} has non-finite entries")
    return X


def _inverse(name: str, X: np.ndarray) -> np.ndarray:
    cond = np.linalg.cond(X)
    if not cond < COND_LIMIT:
        raise InvertibilityError(f"{name} is singular or ill-conditioned (cond = {cond:.3g})")
    return np.linalg.inv(X)


@dataclass(frozen=True, eq=False)
class OperatorTriple:
    """Invertible ``L``, ``M`` and arbitrary ``E`` with derived constants.

    ``M0`` estimates ``sup_t ||exp(A t)||`` by sampling a geometric grid on
    ``(0, m0_horizon]``; it is an estimate, not a certified bound.
    """

    L: np.ndarray
    M: np.ndarray
    E: np.ndarray
    m0_horizon: float = 50.0
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self) -> None:
        L = _as_square("L", self.L)
        n = L.shape[0]
        M = _as_square("M", self.M, n)
        E = _as_square("E", self.E, n)
        L_inv = _inverse("L", L)
        M_inv = _inverse("M", M)
        A = -L_inv @ E @ M_inv
        if not np.all(np.isfinite(A)):
            raise InvertibilityError("generator has non-finite entries")
        for name, val in (("L", L), ("M", M), ("E", E), ("L_inv", L_inv), ("M_inv", M_inv), ("A", A)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "C1", float(np.linalg.norm(L_inv, 2)))
        object.__setattr__(self, "C2", float(np.linalg.norm(M_inv, 2)))
        object.__setattr__(self, "M0", _sampled_semigroup_sup(A, float(self.m0_horizon)))

    @property
    def n(self) -> int:
        return self.L.shape[0]

    @property
    def spectral_abscissa(self) -> float:
        return float(np.max(np.linalg.eigvals(self.A).real))

    @property
    def log_norm(self) -> float:
        """Largest eigenvalue of the symmetric part of ``A``; ``||e^{At}|| <= e^{t log_norm}``."""
        return float(np.linalg.eigvalsh(0.5 * (self.A + self.A.T)).max())

    @classmethod
    def scalar(cls, L: float = 1.0, M: float = 1.0, E: float = 0.0, **kw) -> "OperatorTriple":
        return cls(np.array([[L]]), np.array([[M]]), np.array([[E]]), **kw)


def _sampled_semigroup_sup(A: np.ndarray, horizon: float, samples: int = 400) -> float:
    if not horizon > 0:
        raise PreconditionError(f"m0_horizon must be positive, got {horizon}")
    if not np.any(A):
        return 1.0
    ts = np.geomspace(min(1e-3, horizon), horizon, samples)
    norms = np.linalg.norm(expm(ts[:, None, None] * A[None]), ord=2, axis=(1, 2))
    return float(max(1.0, np.max(norms)))


def generator(triple: OperatorTriple) -> np.ndarray:
    """``A = -L^{-1} E M^{-1}``."""
    return triple.A


def semigroup(triple: OperatorTriple, t: float) -> np.ndarray:
    return expm(triple.A * float(t))


def _check(alpha: float, t: float, method: str) -> tuple[float, float]:
    alpha = float(alpha)
    t = float(t)
    if not 0 < alpha < 1:
        raise PreconditionError(f"alpha must lie in (0, 1), got {alpha}")
    if not (t >= 0 and math.isfinite(t)):
        raise PreconditionError(f"t must be finite and nonnegative, got {t}")
    if method not in METHODS:
        raise PreconditionError(f"method must be one of {METHODS}, got {method!r}")
    return alpha, t


def _subordination(triple: OperatorTriple, alpha: float, t: float, moment: int) -> np.ndarray:
    At = triple.A * t**alpha
    if triple.spectral_abscissa < 0:
        # ||Q|| <= M0 uniformly, so only the density tail matters
        growth = 0.0
        tail = 1e-13 / triple.M0
    else:
        growth = max(triple.log_norm, 0.0) * t**alpha
        tail = 1e-13
    cutoff = density_cutoff(alpha, growth=growth, tail=tail)

    def integrand(theta: np.ndarray) -> np.ndarray:
        weight = wright_density(alpha, theta)
        if moment:
            weight = weight * theta
        return weight[:, None, None] * expm(theta[:, None, None] * At[None])

    res = gauss_kronrod(integrand, 0.0, cutoff, tol=1e-10)
    total = np.asarray(res.value)
    if moment:
        total = alpha * total
    return triple.M_inv @ total


def _operator(triple: OperatorTriple, alpha: float, t: float, method: str, kind: str) -> np.ndarray:
    alpha, t = _check(alpha, t, method)
    key = (kind, alpha, t, method)
    cached = triple._cache.get(key)
    if cached is not None:
        return cached.copy()
    beta = 1.0 if kind == "S" else alpha
    if t == 0.0:
        out = triple.M_inv / gamma_fn(beta)
    elif method == "series":
        out = triple.M_inv @ mittag_leffler_matrix(alpha, beta, triple.A * t**alpha)
    else:
        out = _subordination(triple, alpha, t, moment=0 if kind == "S" else 1)
    if len(triple._cache) > 100_000:
        triple._cache.clear()
    out.setflags(write=False)
    triple._cache[key] = out
    return out.copy()


def s_alpha(triple: OperatorTriple, alpha: float, t: float, method: str = "series") -> np.ndarray:
    """Characteristic operator ``S_alpha(t)``.

    ``method="series"`` evaluates ``M^{-1} E_{alpha,1}(A t^alpha)``;
    ``method="subordination"`` integrates the semigroup against the
    subordination density by adaptive quadrature.
    """
    return _operator(triple, alpha, t, method, "S")


def t_alpha(triple: OperatorTriple, alpha: float, t: float, method: str = "series") -> np.ndarray:
    """Characteristic operator ``T_alpha(t)``; see :func:`s_alpha`."""
    return _operator(triple, alpha, t, method, "T")
