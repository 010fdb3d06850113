"""Reproducible random streams, hit-and-run polytope sampling, resampling.

Streams are counter-based (Philox) and keyed by (seed, stream_id), so child
streams can be derived in any order without affecting each other.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegeneratePolytopeError,
    PolyfiltError,
    UnboundedPolyhedronError,
)
from .geometry import HPolytope, chebyshev_center, contains

_MASK64 = (1 << 64) - 1
_DIR_EPS = 1e-12


def _mix64(*tokens) -> int:
    """Stable 64-bit hash of arbitrary tokens (independent of PYTHONHASHSEED)."""
    h = hashlib.blake2b(digest_size=8)
    for t in tokens:
        h.update(repr(t).encode())
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


@dataclass
class RngStream:
    """Counter-based random stream keyed by (seed, stream_id)."""

    seed: int
    stream_id: int = 0
    _gen: np.random.Generator | None = field(default=None, repr=False, compare=False)

    @property
    def gen(self) -> np.random.Generator:
        if self._gen is None:
            key = (self.seed & _MASK64) | ((self.stream_id & _MASK64) << 64)
            self._gen = np.random.Generator(np.random.Philox(key=key))
        return self._gen

    def child(self, *tokens) -> "RngStream":
        """Derive an independent stream; deterministic and order-independent."""
        return RngStream(self.seed, _mix64(self.stream_id, *tokens))


def sphere_direction(rng: RngStream, n: int) -> np.ndarray:
    """Uniform direction on the unit sphere (normalized standard normal)."""
    if n < 1:
        raise PolyfiltError("n must be >= 1")
    while True:
        u = rng.gen.standard_normal(n)
        norm = np.linalg.norm(u)
        if norm > 1e-30:
            return u / norm


@dataclass
class HitAndRunConfig:
    steps: int = 25
    start: str = "chebyshev"  # or "given"
    start_point: np.ndarray | None = None
    tol: float = 1e-9

    def __post_init__(self):
        if self.steps < 1:
            raise PolyfiltError("steps must be >= 1")
        if self.start not in ("chebyshev", "given"):
            raise PolyfiltError(f"unknown start mode {self.start!r}")
        if self.start == "given" and self.start_point is None:
            raise PolyfiltError("start mode 'given' requires start_point")


def hit_bounds(P: HPolytope, z: np.ndarray, u: np.ndarray) -> tuple[float, float]:
    """Closed-form chord extents (r_minus, r_plus) along u from interior z."""
    z = np.asarray(z, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.all(u == 0.0):
        raise PolyfiltError("direction must be nonzero")
    if not contains(P, z, 1e-9):
        raise PolyfiltError("start point is outside the polytope")
    c = P.A @ u
    d = P.b - P.A @ z
    pos = c > _DIR_EPS
    neg = c < -_DIR_EPS
    if not pos.any() or not neg.any():
        raise UnboundedPolyhedronError("chord is unbounded; input is a polyhedron")
    r_plus = float((d[pos] / c[pos]).min())
    r_minus = float((d[neg] / c[neg]).max())
    return min(r_minus, 0.0), max(r_plus, 0.0)


def hit_and_run_batch(
    A: np.ndarray,
    b: np.ndarray,
    z0: np.ndarray,
    steps: int,
    rng: RngStream,
) -> np.ndarray:
    """Vectorized hit-and-run over B chains.

    A is (p, n) shared, or (B, p, n) per-chain; b is (B, p); z0 is (B, n).
    Returns (B, n) samples after ``steps`` iterations per chain.
    """
    z = np.array(z0, dtype=float)
    B, n = z.shape
    shared = A.ndim == 2
    At = A.T if shared else None
    degenerate = np.zeros(B, dtype=int)
    g = rng.gen
    for _ in range(steps):
        U = g.standard_normal((B, n))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        if shared:
            AU = U @ At
            AZ = z @ At
        else:
            AU = np.einsum("bpn,bn->bp", A, U)
            AZ = np.einsum("bpn,bn->bp", A, z)
        D = b - AZ
        with np.errstate(divide="ignore", invalid="ignore"):
            rp = np.where(AU > _DIR_EPS, D / AU, np.inf).min(axis=1)
            rm = np.where(AU < -_DIR_EPS, D / AU, -np.inf).max(axis=1)
        if not (np.isfinite(rp).all() and np.isfinite(rm).all()):
            raise UnboundedPolyhedronError("chord is unbounded; input is a polyhedron")
        rm = np.minimum(rm, 0.0)
        rp = np.maximum(rp, 0.0)
        span = rp - rm
        degenerate = np.where(span < 1e-14, degenerate + 1, 0)
        if np.any(degenerate >= n):
            raise DegeneratePolytopeError("polytope has zero volume along n directions")
        t = g.random(B)
        z += ((rm + t * span))[:, None] * U
    return z


def hit_and_run(P: HPolytope, cfg: HitAndRunConfig, rng: RngStream) -> np.ndarray:
    """Single hit-and-run sample from the uniform distribution on P."""
    if cfg.start == "chebyshev":
        z0 = chebyshev_center(P).center
    else:
        z0 = np.asarray(cfg.start_point, dtype=float)
        if not contains(P, z0, cfg.tol):
            raise PolyfiltError("given start point is outside the polytope")
    out = hit_and_run_batch(P.A, P.b[None, :], z0[None, :], cfg.steps, rng)
    return out[0]


def categorical_resample(weights: np.ndarray, count: int, rng: RngStream) -> np.ndarray:
    """Systematic (low-variance) resampling of ``count`` indices."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise PolyfiltError("weights must be nonnegative")
    total = w.sum()
    if total <= 0:
        raise PolyfiltError("weights sum to zero")
    positions = (rng.gen.random() + np.arange(count)) / count
    cum = np.cumsum(w / total)
    cum[-1] = 1.0  # guard against roundoff
    return np.searchsorted(cum, positions, side="right").clip(0, w.size - 1)
