"""Single-polytope Bayesian updates.

The intersection update serves both the linear and the extended (linearized)
case, as does the Kalmanized affine update: for linear measurement operators
the extended formulas reduce exactly to the linear ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .errors import (
    DimensionMismatchError,
    EmptyPolytopeError,
    IllConditionedError,
    InconsistentMeasurementError,
    NotSPDError,
    PolyfiltError,
)
from .geometry import (
    HPolytope,
    Moments,
    affine_image,
    chebyshev_center,
    contains_batch,
    intersect,
)

_COND_LIMIT = 1e12


# ---------------------------------------------------------------------------
# measurement noise descriptions


class GaussianNoise:
    """Gaussian measurement noise with covariance R."""

    def __init__(self, R: np.ndarray):
        R = np.atleast_2d(np.asarray(R, dtype=float))
        w = np.linalg.eigvalsh((R + R.T) / 2.0)
        if w.min() <= 0:
            raise NotSPDError("R must be symmetric positive definite")
        self.R = R
        self.m = R.shape[0]
        self._chol = np.linalg.cholesky(R)
        self._logdet = 2.0 * np.log(np.diag(self._chol)).sum()

    def logpdf(self, Z: np.ndarray, center: np.ndarray) -> np.ndarray:
        """Log density of N(center, R) at the columns of Z (m x B)."""
        Z = np.atleast_2d(Z)
        dev = Z - np.asarray(center, dtype=float)[:, None]
        sol = np.linalg.solve(self._chol, dev)
        quad = np.sum(sol * sol, axis=0)
        return -0.5 * (quad + self._logdet + self.m * np.log(2.0 * np.pi))


class UniformPolytopeNoise:
    """Uniform measurement noise on an H-polytope (in measurement space).

    ``log_volume`` is optional; when unknown, log densities are reported up to
    the (component-constant) volume normalization.
    """

    def __init__(self, polytope: HPolytope, log_volume: float | None = None):
        self.polytope = polytope
        self.log_volume = log_volume
        self.m = polytope.n

    def logpdf(self, Z: np.ndarray, center: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(Z)
        dev = Z - np.asarray(center, dtype=float)[:, None]
        inside = contains_batch(self.polytope, dev, 0.0)
        level = 0.0 if self.log_volume is None else -self.log_volume
        return np.where(inside, level, -np.inf)


@dataclass
class NoiseComponent:
    """One mixture component; ``mean`` is an offset relative to the observation."""

    weight: float
    mean: np.ndarray
    cov: np.ndarray
    dist: object | None = None  # defaults to GaussianNoise(cov)

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if self.dist is None:
            self.dist = GaussianNoise(self.cov)


class MixtureNoise:
    """Finite mixture of noise components; weights must sum to one."""

    def __init__(self, components: list[NoiseComponent]):
        if not components:
            raise PolyfiltError("mixture needs at least one component")
        wsum = sum(c.weight for c in components)
        if abs(wsum - 1.0) > 1e-12:
            raise PolyfiltError("mixture weights must sum to 1")
        self.components = components
        self.m = components[0].mean.shape[0]

    def logpdf(self, Z: np.ndarray, center: np.ndarray) -> np.ndarray:
        center = np.asarray(center, dtype=float)
        parts = np.stack(
            [
                np.log(c.weight) + c.dist.logpdf(Z, center + c.mean)
                if c.weight > 0
                else np.full(np.atleast_2d(Z).shape[1], -np.inf)
                for c in self.components
            ]
        )
        return logsumexp(parts, axis=0)


def _default_h_batch(h: Callable, X: np.ndarray) -> np.ndarray:
    return np.stack([np.atleast_1d(h(X[:, i])) for i in range(X.shape[1])], axis=1)


def _default_jacobian_batch(jac: Callable, X: np.ndarray) -> np.ndarray:
    return np.stack([np.atleast_2d(jac(X[:, i])) for i in range(X.shape[1])])


@dataclass
class MeasurementModel:
    """Nonlinear measurement map, its Jacobian, and a noise description."""

    h: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    noise: object
    m: int
    h_batch: Callable[[np.ndarray], np.ndarray] | None = None
    jacobian_batch: Callable[[np.ndarray], np.ndarray] | None = None
    linear: bool = False  # True when the Jacobian is state-independent

    def eval_h(self, X: np.ndarray) -> np.ndarray:
        """h applied to the columns of X (n x B) -> (m x B)."""
        if self.h_batch is not None:
            return self.h_batch(X)
        return _default_h_batch(self.h, X)

    def eval_jacobian(self, X: np.ndarray) -> np.ndarray:
        """Jacobians at the columns of X -> (B, m, n)."""
        if self.jacobian_batch is not None:
            return self.jacobian_batch(X)
        return _default_jacobian_batch(self.jacobian, X)


# ---------------------------------------------------------------------------
# gains


@dataclass(frozen=True)
class Gains:
    """Kalman gain K (mean update) and modified gain K_tilde (anomaly update)."""

    K: np.ndarray
    K_tilde: np.ndarray


def _sqrtm_spd(M: np.ndarray) -> np.ndarray:
    """Principal square root of a (stack of) symmetric PSD matrices."""
    sym = (M + np.swapaxes(M, -1, -2)) / 2.0
    w, V = np.linalg.eigh(sym)
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)[..., None, :]) @ np.swapaxes(V, -1, -2)


def compute_gains_batch(
    Sigmas: np.ndarray, Hs: np.ndarray, R: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Batched gains: Sigmas (k, n, n), Hs (k, m, n), R (m, m) shared.

    Broadcasting applies, so a leading axis of length 1 computes once.
    Returns (K, K_tilde) with shapes (k, n, m).
    """
    R = np.atleast_2d(R)
    w, V = np.linalg.eigh((R + R.T) / 2.0)
    if w.min() <= 0:
        raise NotSPDError("R must be symmetric positive definite")
    Rhalf = (V * np.sqrt(w)[None, :]) @ V.T
    Rinvhalf = (V / np.sqrt(w)[None, :]) @ V.T

    HS = Hs @ Sigmas  # (k, m, n)
    S = HS @ np.swapaxes(Hs, -1, -2)  # (k, m, m)
    innov = S + R
    if np.any(np.linalg.cond(innov) > _COND_LIMIT):
        raise IllConditionedError("singular innovation matrix")
    K = np.swapaxes(np.linalg.solve(innov, HS), -1, -2)
    M = _sqrtm_spd(np.eye(R.shape[0]) + Rinvhalf @ S @ Rinvhalf)
    denom = S + R + Rhalf @ M @ Rhalf
    K_tilde = np.swapaxes(np.linalg.solve(denom, HS), -1, -2)
    return K, K_tilde


def compute_gains(Sigma: np.ndarray, H: np.ndarray, R: np.ndarray) -> Gains:
    """Kalman gain and square-root modified gain for one (Sigma, H, R)."""
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if H.shape[1] != Sigma.shape[0] or R.shape[0] != H.shape[0]:
        raise DimensionMismatchError("inconsistent gain dimensions")
    K, Kt = compute_gains_batch(Sigma[None], H[None], R)
    return Gains(K[0], Kt[0])


# ---------------------------------------------------------------------------
# updates


def cpf_update(
    prior: HPolytope,
    model: MeasurementModel,
    y: np.ndarray,
    prior_mean: np.ndarray,
) -> HPolytope:
    """Intersection update with a uniform-polytope measurement.

    Linearizes h at the prior mean; for linear h the linearization terms
    cancel exactly and the update is the exact intersection.
    """
    if not isinstance(model.noise, UniformPolytopeNoise):
        raise PolyfiltError("intersection update requires uniform polytope noise")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    mu = np.asarray(prior_mean, dtype=float)
    Peta = model.noise.polytope
    # measurement polytope = noise polytope shifted by the observation
    Ay, by = Peta.A, Peta.b + Peta.A @ y
    Hm = np.atleast_2d(model.jacobian(mu))
    hm = np.atleast_1d(model.h(mu))
    rows = Ay @ Hm
    offs = by + Ay @ (Hm @ mu) - Ay @ hm
    posterior = intersect(prior, HPolytope(rows, offs))
    try:
        chebyshev_center(posterior)
    except EmptyPolytopeError as exc:
        raise InconsistentMeasurementError(
            "measurement polytope does not intersect the prior"
        ) from exc
    return posterior


def kcpf_update(
    prior: HPolytope,
    prior_moments: Moments,
    model: MeasurementModel,
    y: np.ndarray,
) -> tuple[HPolytope, Moments]:
    """Affine (Kalmanized) update of the prior polytope and its moments."""
    if not isinstance(model.noise, GaussianNoise):
        raise PolyfiltError("Kalmanized update requires Gaussian noise")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    mu, Sigma = prior_moments.mean, prior_moments.cov
    Hm = np.atleast_2d(model.jacobian(mu))
    hm = np.atleast_1d(model.h(mu))
    gains = compute_gains(Sigma, Hm, model.noise.R)
    K, Kt = gains.K, gains.K_tilde
    n = prior.n
    C = np.eye(n) - Kt @ Hm
    d = Kt @ (Hm @ mu) + K @ y - K @ hm
    posterior = affine_image(prior, C, d)
    mu_post = mu - K @ (hm - y)
    cov_post = C @ Sigma @ C.T
    cov_post = (cov_post + cov_post.T) / 2.0
    return posterior, Moments(mu_post, cov_post)
