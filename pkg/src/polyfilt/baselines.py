"""Comparison filters: square-root EnKF, bootstrap particle filter, EnGMF."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import PolyfiltError
from .filters_exact import GaussianNoise, MeasurementModel, compute_gains_batch
from .sampling import RngStream, categorical_resample


@dataclass
class BaselineConfig:
    inflation: float = 1.001
    localization_radius: float | None = None
    process_noise_cov: np.ndarray | None = None
    d_f: float = 1e-4

    def __post_init__(self):
        if self.inflation < 1.0:
            raise PolyfiltError("inflation must be >= 1")
        if self.localization_radius is not None and self.localization_radius <= 0:
            raise PolyfiltError("localization radius must be positive")


def localization_matrix(n: int, radius: float) -> np.ndarray:
    """Gaussian decorrelation taper on a cyclic grid of n sites."""
    if radius <= 0:
        raise PolyfiltError("radius must be positive")
    i = np.arange(n)
    diff = np.abs(i[:, None] - i[None, :])
    d = np.minimum(diff, n - diff)
    return np.exp(-(d.astype(float) ** 2) / (2.0 * radius * radius))


def _localized_cov(members: np.ndarray, cfg: BaselineConfig) -> np.ndarray:
    Sig = np.atleast_2d(np.cov(members))
    if cfg.localization_radius is not None:
        Sig = Sig * localization_matrix(members.shape[0], cfg.localization_radius)
    return Sig


def _apply_defensive(weights: np.ndarray, d_f: float) -> np.ndarray:
    return (1.0 - d_f) * weights + d_f / weights.size


def enkf_step(ens, model: MeasurementModel, y: np.ndarray, cfg: BaselineConfig):
    """Square-root EnKF analysis: mean updated with K, anomalies with K_tilde.

    The Jacobian is evaluated at the (inflated) ensemble mean.
    """
    from .filters_ensemble import Ensemble

    if not isinstance(model.noise, GaussianNoise):
        raise PolyfiltError("EnKF requires Gaussian measurement noise")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    X = np.array(ens.members)
    mu = X.mean(axis=1)
    A = cfg.inflation * (X - mu[:, None])
    X = mu[:, None] + A
    Sig = _localized_cov(X, cfg)
    H = np.atleast_2d(model.jacobian(mu))
    K, Kt = compute_gains_batch(Sig[None], H[None], model.noise.R)
    K, Kt = K[0], Kt[0]
    hm = np.atleast_1d(model.h(mu))
    mu_post = mu - K @ (hm - y)
    A_post = A - Kt @ (H @ A)
    return Ensemble(mu_post[:, None] + A_post)


def bpf_step(
    ens,
    model: MeasurementModel,
    y: np.ndarray,
    cfg: BaselineConfig,
    rng: RngStream,
):
    """Bootstrap particle filter analysis with optional process noise,
    defensive factor, and systematic resampling."""
    from .filters_ensemble import Ensemble

    y = np.atleast_1d(np.asarray(y, dtype=float))
    X = np.array(ens.members)
    n, N = X.shape
    if cfg.process_noise_cov is not None:
        L = np.linalg.cholesky(np.atleast_2d(cfg.process_noise_cov))
        X = X + L @ rng.child("noise").gen.standard_normal((n, N))
    logw = model.noise.logpdf(model.eval_h(X), y)
    mx = logw.max()
    if not np.isfinite(mx):
        raise PolyfiltError("all particle weights underflowed")
    w = np.exp(logw - mx)
    w /= w.sum()
    w = _apply_defensive(w, cfg.d_f)
    idx = categorical_resample(w, N, rng.child("resample"))
    return Ensemble(X[:, idx])


def engmf_posterior(
    ens,
    model: MeasurementModel,
    y: np.ndarray,
    cfg: BaselineConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Posterior Gaussian mixture of the ensemble Gaussian mixture filter.

    Returns (weights (N,), means (n, N), covs (k, n, n)) with k = 1 for a
    state-independent Jacobian (the covariance is shared) and k = N otherwise.
    """
    if not isinstance(model.noise, GaussianNoise):
        raise PolyfiltError("EnGMF requires Gaussian measurement noise")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    X = np.array(ens.members)
    n, N = X.shape
    R = model.noise.R
    h_G = (4.0 / ((n + 2) * N)) ** (1.0 / (n + 4))
    Sig = _localized_cov(X, cfg)
    B = (h_G * h_G) * Sig

    if model.linear:
        Hs = np.atleast_2d(model.jacobian(X[:, 0]))[None]
    else:
        Hs = model.eval_jacobian(X)  # (N, m, n)
    hx = model.eval_h(X)  # (m, N)

    K, _ = compute_gains_batch(B[None], Hs, R)  # (k, n, m)
    k = K.shape[0]
    HB = Hs @ B  # (k, m, n)
    S = HB @ np.swapaxes(Hs, -1, -2) + R  # (k, m, m)

    # component log-likelihoods N(y; h(x_i), H B H^T + R)
    dev = y[:, None] - hx  # (m, N)
    m = R.shape[0]
    Ls = np.linalg.cholesky(S)
    logdet = 2.0 * np.log(np.diagonal(Ls, axis1=-2, axis2=-1)).sum(axis=-1)  # (k,)
    if k == 1:
        sol = np.linalg.solve(Ls[0], dev)
        quad = np.sum(sol * sol, axis=0)
        logw = -0.5 * (quad + logdet[0] + m * np.log(2 * np.pi))
    else:
        sol = np.linalg.solve(Ls, dev.T[:, :, None])[:, :, 0]
        quad = np.sum(sol * sol, axis=1)
        logw = -0.5 * (quad + logdet + m * np.log(2 * np.pi))
    w = np.exp(logw - logw.max())
    w /= w.sum()
    w = _apply_defensive(w, cfg.d_f)

    # per-component posterior means and shared-form covariance
    if k == 1:
        mu_post = X + K[0] @ (dev)  # (n, N)
    else:
        mu_post = X + np.einsum("bnm,mb->nb", K, dev)
    P_post = (np.eye(n)[None] - K @ Hs) @ B  # (k, n, n)
    P_post = (P_post + np.swapaxes(P_post, -1, -2)) / 2.0
    return w, mu_post, P_post


def engmf_step(
    ens,
    model: MeasurementModel,
    y: np.ndarray,
    cfg: BaselineConfig,
    rng: RngStream,
):
    """Ensemble Gaussian mixture filter: Gaussian KDE, per-component Kalman
    update with likelihood weights, and resampling from the posterior mixture."""
    from .filters_ensemble import Ensemble

    w, mu_post, P_post = engmf_posterior(ens, model, y, cfg)
    n, N = mu_post.shape
    # eigh-based square roots (robust to tiny negative eigenvalues)
    wP, VP = np.linalg.eigh(P_post)
    sqrtP = VP * np.sqrt(np.clip(wP, 0.0, None))[..., None, :]  # (k, n, n)

    idx = categorical_resample(w, N, rng.child("resample"))
    Z = rng.child("draw").gen.standard_normal((N, n))
    if P_post.shape[0] == 1:
        out = mu_post[:, idx] + sqrtP[0] @ Z.T
    else:
        out = mu_post[:, idx] + np.einsum("bij,bj->bi", sqrtP[idx], Z).T
    return Ensemble(out)
