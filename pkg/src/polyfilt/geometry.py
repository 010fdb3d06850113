"""H-polytope representation and the geometric operations built on it.

A polytope is stored as the pair (A, b) describing {x | A x <= b}.  The same
representation also serves unbounded polyhedra; operations that require
boundedness say so and raise if it fails to hold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import lp
from .errors import (
    DimensionMismatchError,
    IllConditionedError,
    NotSPDError,
    PolyfiltError,
)

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class HPolytope:
    """Halfspace intersection {x | A x <= b}.

    A is p x n (one row per bounding hyperplane), b has length p.  Rows of A
    must be nonzero; boundedness is not enforced by the type.
    """

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.ndim != 2 or b.ndim != 1 or A.shape[0] != b.shape[0]:
            raise DimensionMismatchError(
                f"A has shape {A.shape} but b has shape {b.shape}"
            )
        if A.shape[0] < 1 or A.shape[1] < 1:
            raise DimensionMismatchError("need p >= 1 constraints and n >= 1 dims")
        if np.any(np.all(A == 0.0, axis=1)):
            raise PolyfiltError("zero row in constraint matrix")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def p(self) -> int:
        return self.A.shape[0]

    def to_json(self) -> dict:
        return {"A": self.A.tolist(), "b": self.b.tolist(), "n": self.n}

    @classmethod
    def from_json(cls, obj: dict) -> "HPolytope":
        return cls(np.asarray(obj["A"], dtype=float), np.asarray(obj["b"], dtype=float))

    def dumps(self) -> str:
        return json.dumps(self.to_json())


_VALIDATED_COV: list = [None]


@dataclass(frozen=True)
class Moments:
    """Mean vector and symmetric PSD covariance matrix."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        n = mean.shape[0]
        if cov.shape != (n, n):
            raise DimensionMismatchError(
                f"mean has length {n} but cov has shape {cov.shape}"
            )
        # identity cache: mixture components share one covariance array, so
        # skip re-validating the exact same object
        if cov is not _VALIDATED_COV[0]:
            scale = max(1.0, float(np.abs(cov).max()))
            if np.abs(cov - cov.T).max() > 1e-12 * scale:
                raise NotSPDError("covariance is not symmetric")
            w = np.linalg.eigvalsh(cov)
            if w.min() < -1e-12 * max(w.max(), 0.0) - 1e-300:
                raise NotSPDError("covariance has a negative eigenvalue")
            _VALIDATED_COV[0] = cov
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def n(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class ChebyshevResult:
    """Center and radius of the largest inscribed ball."""

    center: np.ndarray
    radius: float


@dataclass(frozen=True)
class OmegaPoints:
    """Cube center plus facet centers, used as a moment-preserving quadrature.

    ``points`` is n x (2n+1); the physical column layout is
    [-n, ..., -1, 0, +1, ..., +n] so the center sits in column n.
    ``weights`` follows the same layout.
    """

    points: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def center(self) -> np.ndarray:
        return self.points[:, self.n]


# ---------------------------------------------------------------------------
# closure operations


def intersect(P1: HPolytope, P2: HPolytope) -> HPolytope:
    """Stack the constraint systems; no redundancy elimination."""
    if P1.n != P2.n:
        raise DimensionMismatchError(f"dimension mismatch: {P1.n} vs {P2.n}")
    return HPolytope(np.vstack([P1.A, P2.A]), np.concatenate([P1.b, P2.b]))


def affine_image(P: HPolytope, C: np.ndarray, d: np.ndarray) -> HPolytope:
    """Image C @ P + d for invertible C: (A C^-1, b + A C^-1 d)."""
    C = np.asarray(C, dtype=float)
    d = np.asarray(d, dtype=float)
    if C.shape != (P.n, P.n) or d.shape != (P.n,):
        raise DimensionMismatchError("C must be n x n and d length n")
    if np.linalg.cond(C) > _COND_LIMIT:
        raise IllConditionedError("transformation matrix is singular or ill-conditioned")
    ACinv = np.linalg.solve(C.T, P.A.T).T
    return HPolytope(ACinv, P.b + ACinv @ d)


def pullback_measurement_polyhedron(Py: HPolytope, H: np.ndarray) -> HPolytope:
    """Preimage {x | H x in Py} as the system (A_Y H, b_Y)."""
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != Py.n:
        raise DimensionMismatchError(
            f"H has {H.shape[0]} rows but the measurement polytope lives in {Py.n} dims"
        )
    return HPolytope(Py.A @ H, Py.b.copy())


def contains(P: HPolytope, x: np.ndarray, tol: float = 1e-9) -> bool:
    x = np.asarray(x, dtype=float)
    if x.shape != (P.n,):
        raise DimensionMismatchError(f"point has shape {x.shape}, expected ({P.n},)")
    if tol < 0:
        raise PolyfiltError("tol must be nonnegative")
    return bool(np.all(P.A @ x <= P.b + tol))


def contains_batch(P: HPolytope, X: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Vectorized membership for points stored as columns of X (n x B)."""
    return np.all(P.A @ X <= P.b[:, None] + tol, axis=0)


# ---------------------------------------------------------------------------
# cube constructions


def unit_cube(n: int) -> HPolytope:
    """Axis-aligned cube [0, 1]^n as {x <= 1, -x <= 0}."""
    if n < 1:
        raise PolyfiltError("n must be >= 1")
    A = np.vstack([np.eye(n), -np.eye(n)])
    b = np.concatenate([np.ones(n), np.zeros(n)])
    return HPolytope(A, b)


def matrix_sqrt(Sigma: np.ndarray) -> np.ndarray:
    """Eigendecomposition square root V sqrt(L) with a deterministic convention.

    Eigenvalues are clamped at zero and sorted descending; each eigenvector is
    sign-fixed so its first nonzero entry is positive.
    """
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    scale = max(1.0, float(np.abs(Sigma).max()))
    if np.abs(Sigma - Sigma.T).max() > 1e-10 * scale:
        raise NotSPDError("matrix is not symmetric")
    w, V = np.linalg.eigh(Sigma)
    order = np.argsort(w)[::-1]
    w = np.clip(w[order], 0.0, None)
    V = V[:, order]
    for k in range(V.shape[1]):
        col = V[:, k]
        nz = np.nonzero(np.abs(col) > 1e-12)[0]
        if nz.size and col[nz[0]] < 0:
            V[:, k] = -col
    return V * np.sqrt(w)[None, :]


def covariance_cube(mu: np.ndarray, Sigma: np.ndarray) -> tuple[HPolytope, Moments]:
    """Cube whose uniform distribution has exactly mean mu and covariance Sigma."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    n = mu.shape[0]
    w = np.linalg.eigvalsh((Sigma + Sigma.T) / 2.0)
    if w.min() <= 0:
        raise NotSPDError("covariance must be positive definite")
    C = np.sqrt(12.0) * matrix_sqrt(Sigma)
    d = mu - 0.5 * C @ np.ones(n)
    return affine_image(unit_cube(n), C, d), Moments(mu, Sigma)


def hyperplane_from_point_normal(c: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, float]:
    """Row a = v^T and offset b = a c; points opposite the normal satisfy a x <= b."""
    c = np.asarray(c, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.all(v == 0.0):
        raise PolyfiltError("normal vector must be nonzero")
    a = v.copy()
    return a, float(a @ c)


# ---------------------------------------------------------------------------
# Chebyshev center


def chebyshev_center(P: HPolytope) -> ChebyshevResult:
    """Center/radius of the largest inscribed ball, via the internal simplex.

    Raises EmptyPolytopeError for an empty set and UnboundedPolyhedronError
    when the inscribed radius is unbounded (the input is a polyhedron).
    """
    from .errors import EmptyPolytopeError

    norms = np.linalg.norm(P.A, axis=1)
    G = np.hstack([P.A, norms[:, None]])
    c = np.zeros(P.n + 1)
    c[-1] = -1.0  # maximize r
    sol = lp.solve_lp(c, G, P.b)
    center, radius = sol[: P.n], float(sol[-1])
    if radius < -1e-9:
        raise EmptyPolytopeError("polytope is empty (negative inscribed radius)")
    return ChebyshevResult(center, max(radius, 0.0))


# ---------------------------------------------------------------------------
# omega-point quadrature


def omega_points(mu: np.ndarray, Sigma: np.ndarray) -> OmegaPoints:
    """Center and facet centers of the covariance cube of (mu, Sigma)."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    n = mu.shape[0]
    w = np.linalg.eigvalsh((Sigma + Sigma.T) / 2.0)
    if w.min() <= 0:
        raise NotSPDError("covariance must be positive definite")
    S = matrix_sqrt(Sigma)
    pts = np.empty((n, 2 * n + 1))
    pts[:, :n] = -np.sqrt(3.0) * S
    pts[:, n] = 0.0
    pts[:, n + 1 :] = np.sqrt(3.0) * S
    pts += mu[:, None]
    weights = np.full(2 * n + 1, n / 3.0)
    weights[n] = 1.0
    return OmegaPoints(pts, weights)


def omega_moments(op: OmegaPoints) -> Moments:
    """Recover the generating (mu, Sigma) from omega points.

    The covariance uses the 1/(2n) normalization under which the facet-center
    weights n/3 reproduce Sigma exactly.
    """
    n = op.n
    mu = op.center
    dev = op.points - mu[:, None]
    cov = (dev * op.weights[None, :]) @ dev.T / (2.0 * n)
    cov = (cov + cov.T) / 2.0
    return Moments(mu, cov)


def omega_expectation(
    op: OmegaPoints,
    f: Callable[[np.ndarray], float],
    weighting: str = "paper_w",
) -> float:
    """Quadrature sum over the omega points.

    ``paper_w`` normalizes the weights so constants are reproduced; ``uniform``
    is the plain unweighted, unnormalized sum over all 2n+1 points (callers
    normalize across mixture components).
    """
    vals = np.array([f(op.points[:, k]) for k in range(op.points.shape[1])])
    if not np.all(np.isfinite(vals)):
        raise PolyfiltError("integrand is not finite at an omega point")
    if weighting == "paper_w":
        w = op.weights / op.weights.sum()
        return float(w @ vals)
    if weighting == "uniform":
        return float(vals.sum())
    raise PolyfiltError(f"unknown weighting mode {weighting!r}")
