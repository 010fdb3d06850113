"""Cube kernel density estimation and the convergent ensemble polytope updates.

All weight arithmetic is done in the log domain; likelihoods are only
exponentiated after max-subtraction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .baselines import localization_matrix
from .errors import (
    DegenerateWeightsError,
    EmptyPolytopeError,
    IllConditionedError,
    PolyfiltError,
)
from .filters_exact import (
    GaussianNoise,
    MeasurementModel,
    MixtureNoise,
    UniformPolytopeNoise,
    compute_gains_batch,
)
from .geometry import (
    HPolytope,
    Moments,
    chebyshev_center,
    contains,
    contains_batch,
    matrix_sqrt,
    unit_cube,
)
from .sampling import HitAndRunConfig, RngStream, categorical_resample, hit_and_run_batch

_COND_LIMIT = 1e12


@dataclass
class Ensemble:
    """Particles stored as columns of an n x N matrix."""

    members: np.ndarray

    def __post_init__(self):
        self.members = np.atleast_2d(np.asarray(self.members, dtype=float))
        if self.members.shape[1] < 2:
            raise PolyfiltError("ensemble needs N >= 2 members")
        if not np.all(np.isfinite(self.members)):
            raise PolyfiltError("ensemble members must be finite")

    @property
    def n(self) -> int:
        return self.members.shape[0]

    @property
    def N(self) -> int:
        return self.members.shape[1]

    @property
    def mean(self) -> np.ndarray:
        return self.members.mean(axis=1)


@dataclass
class MixtureComponent:
    weight: float
    polytope: HPolytope
    moments: Moments | None = None


@dataclass
class PolytopeMixture:
    """Weighted list of uniform-on-polytope components; weights sum to one."""

    components: list[MixtureComponent]
    regularized: bool = False

    def __post_init__(self):
        w = self.weights
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise PolyfiltError("mixture weights must be nonnegative and sum to 1")

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    def with_weights(self, w: np.ndarray) -> "PolytopeMixture":
        comps = [
            MixtureComponent(float(wi), c.polytope, c.moments)
            for wi, c in zip(w, self.components)
        ]
        return PolytopeMixture(comps, self.regularized)

    def mixture_moments(self) -> Moments:
        """Law-of-total-variance moments; requires per-component moments."""
        w = self.weights
        means = np.stack([c.moments.mean for c in self.components])
        covs = np.stack([c.moments.cov for c in self.components])
        mean = w @ means
        dev = means - mean
        cov = np.einsum("i,ijk->jk", w, covs) + (dev.T * w) @ dev
        return Moments(mean, (cov + cov.T) / 2.0)


@dataclass
class KdeConfig:
    bandwidth_mode: str = "silverman_uniform"  # or "fixed"
    fixed_bandwidth: float | None = None
    covariance_source: str = "ensemble"  # or "supplied"
    supplied_cov: np.ndarray | None = None
    localization_radius: float | None = None

    def __post_init__(self):
        if self.bandwidth_mode not in ("silverman_uniform", "fixed"):
            raise PolyfiltError(f"unknown bandwidth mode {self.bandwidth_mode!r}")
        if self.bandwidth_mode == "fixed" and not (
            self.fixed_bandwidth and self.fixed_bandwidth > 0
        ):
            raise PolyfiltError("fixed bandwidth must be positive")
        if self.covariance_source == "supplied" and self.supplied_cov is None:
            raise PolyfiltError("covariance_source 'supplied' requires supplied_cov")


def silverman_uniform_bandwidth(n: int, N: int) -> float:
    """AMISE-optimal bandwidth for the uniform cube kernel (Gaussian reference)."""
    if n < 1 or N < 2:
        raise PolyfiltError("need n >= 1 and N >= 2")
    return float((4.0 * (np.pi / 3.0) ** (n / 2.0) * n / ((n + 2) * N)) ** (1.0 / (n + 4)))


def cube_kde(ens: Ensemble, cfg: KdeConfig) -> PolytopeMixture:
    """Equal-weight mixture of covariance cubes centered at the particles.

    All components share the kernel covariance h^2 * Sigma_hat (and therefore
    the constraint-normal matrix A), which the ensemble updates exploit.
    """
    n, N = ens.n, ens.N
    if cfg.covariance_source == "supplied":
        Sig = np.array(cfg.supplied_cov, dtype=float)
    else:
        Sig = np.cov(ens.members)  # 1/(N-1) normalization
        Sig = np.atleast_2d(Sig)
    if cfg.localization_radius is not None:
        Sig = Sig * localization_matrix(n, cfg.localization_radius)
    regularized = False
    w = np.linalg.eigvalsh((Sig + Sig.T) / 2.0)
    if w.min() <= 1e-12 * max(w.max(), 1e-300):
        Sig = Sig + 1e-10 * (np.trace(Sig) / n + 1e-300) * np.eye(n)
        regularized = True

    if cfg.bandwidth_mode == "fixed":
        h = cfg.fixed_bandwidth
    else:
        h = silverman_uniform_bandwidth(n, N)
    kernel_cov = (h * h) * Sig

    # shared geometry: A = A_unit @ C^-1 with C = sqrt(12) * sqrtm(kernel_cov)
    C = np.sqrt(12.0) * matrix_sqrt(kernel_cov)
    if np.linalg.cond(C) > _COND_LIMIT:
        raise IllConditionedError("kernel covariance square root is ill-conditioned")
    base = unit_cube(n)
    A = np.linalg.solve(C.T, base.A.T).T
    half = 0.5 * C @ np.ones(n)
    # b_i = b_unit + A @ (x_i - half)
    b_all = base.b[None, :] + (A @ (ens.members - half[:, None])).T  # (N, p)
    comps = []
    for i in range(N):
        poly = HPolytope(A, b_all[i])
        comps.append(
            MixtureComponent(1.0 / N, poly, Moments(ens.members[:, i], kernel_cov))
        )
    return PolytopeMixture(comps, regularized)


# ---------------------------------------------------------------------------
# internal stacked views


def _stack_moments(prior: PolytopeMixture) -> tuple[np.ndarray, np.ndarray]:
    """Means (B, n) and covariances (1 or B, n, n), shared-cov aware."""
    comps = prior.components
    if any(c.moments is None for c in comps):
        raise PolyfiltError("update requires per-component moments")
    means = np.stack([c.moments.mean for c in comps])
    cov0 = comps[0].moments.cov
    if all(c.moments.cov is cov0 for c in comps):
        covs = cov0[None]
    else:
        covs = np.stack([c.moments.cov for c in comps])
    return means, covs


def _omega_offsets(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Omega-point offsets (n, 2n+1) about zero and the raw quadrature weights."""
    n = cov.shape[0]
    S = matrix_sqrt(cov)
    off = np.empty((n, 2 * n + 1))
    off[:, :n] = -np.sqrt(3.0) * S
    off[:, n] = 0.0
    off[:, n + 1 :] = np.sqrt(3.0) * S
    w = np.full(2 * n + 1, n / 3.0)
    w[n] = 1.0
    return off, w


def _omega_loglik(
    means: np.ndarray,
    covs: np.ndarray,
    model: MeasurementModel,
    logdensity,
    weighting: str,
) -> np.ndarray:
    """Per-component log of the omega-quadrature likelihood sum.

    ``logdensity`` maps measurement-space points (m, K) to log densities (K,).
    """
    B, n = means.shape
    L = 2 * n + 1
    if covs.shape[0] == 1:
        off, wq = _omega_offsets(covs[0])
        pts = means.T[:, :, None] + off[:, None, :]  # (n, B, L)
    else:
        pts = np.empty((n, B, L))
        for i in range(B):
            off, wq = _omega_offsets(covs[i])
            pts[:, i, :] = means[i][:, None] + off
    Z = model.eval_h(pts.reshape(n, B * L))
    logp = logdensity(Z).reshape(B, L)
    if weighting == "paper_w":
        lw = np.log(wq / wq.sum())
        return logsumexp(logp + lw[None, :], axis=1)
    if weighting == "uniform":
        return logsumexp(logp, axis=1)
    raise PolyfiltError(f"unknown weighting mode {weighting!r}")


def _normalize_logw(logw: np.ndarray) -> np.ndarray:
    mx = logw.max()
    if not np.isfinite(mx):
        raise DegenerateWeightsError("all mixture weights underflowed to zero")
    w = np.exp(logw - mx)
    return w / w.sum()


# ---------------------------------------------------------------------------
# updates


def bcpf_update(
    prior: PolytopeMixture,
    model: MeasurementModel,
    y: np.ndarray,
    weighting: str = "paper_w",
) -> PolytopeMixture:
    """Reweight the prior components by the quadrature likelihood; supports
    any pointwise-evaluable noise density.  Component polytopes are unchanged."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    means, covs = _stack_moments(prior)
    loglik = _omega_loglik(
        means, covs, model, lambda Z: model.noise.logpdf(Z, y), weighting
    )
    with np.errstate(divide="ignore"):
        logw = np.log(prior.weights) + loglik
    return prior.with_weights(_normalize_logw(logw))


def _measurement_components(noise, y: np.ndarray):
    """(weight, center, cov, density) tuples of the measurement mixture."""
    if isinstance(noise, GaussianNoise):
        return [(1.0, y, noise.R, noise)]
    if isinstance(noise, MixtureNoise):
        return [(c.weight, y + c.mean, c.cov, c.dist) for c in noise.components]
    raise PolyfiltError("noise must be Gaussian or a mixture")


def enkcpf_update(
    prior: PolytopeMixture,
    model: MeasurementModel,
    y: np.ndarray,
    weighting: str = "uniform",
) -> PolytopeMixture:
    """Per-component Kalmanized affine update against each measurement
    component, with omega-quadrature weights.

    Returns the N x M posterior mixture in (prior component)-major order.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    means, covs = _stack_moments(prior)
    B, n = means.shape
    comps_in = prior.components
    A0 = comps_in[0].polytope.A
    shared_A = all(c.polytope.A is A0 for c in comps_in)
    if shared_A:
        A_stack = A0[None]
    else:
        A_stack = np.stack([c.polytope.A for c in comps_in])
    b_stack = np.stack([c.polytope.b for c in comps_in])  # (B, p)

    if model.linear:
        Hs = np.atleast_2d(model.jacobian(means[0]))[None]  # (1, m, n)
    else:
        Hs = model.eval_jacobian(means.T)  # (B, m, n)
    hm = model.eval_h(means.T).T  # (B, m)
    with np.errstate(divide="ignore"):
        log_prior_w = np.log(prior.weights)

    def _apply(Mstack: np.ndarray, X: np.ndarray) -> np.ndarray:
        # Mstack (k, r, c) with k in {1, B}; X (B, c) -> (B, r)
        if Mstack.shape[0] == 1:
            return X @ Mstack[0].T
        return np.einsum("bij,bj->bi", Mstack, X)

    out_comps: list[MixtureComponent] = []
    out_logw: list[np.ndarray] = []
    for wj, yj, Rj, dist in _measurement_components(model.noise, y):
        K, Kt = compute_gains_batch(covs, Hs, Rj)  # (k, n, m)
        C = np.eye(n)[None] - Kt @ Hs  # (k, n, n)
        if np.any(np.linalg.cond(C) > _COND_LIMIT):
            raise IllConditionedError("affine update matrix is singular")
        k = C.shape[0]
        # d_i = Kt H mu_i + K y_j - K h(mu_i)
        KtH = Kt @ Hs  # (k, n, n)
        Ky = np.einsum("knm,m->kn", K, yj)  # (k, n)
        d = _apply(KtH, means) + (Ky if k > 1 else Ky[0][None, :]) - _apply(K, hm)
        # posterior constraint systems: A C^-1, b + (A C^-1) d
        Ct = np.swapaxes(C, -1, -2)
        A_post = np.swapaxes(np.linalg.solve(Ct, np.swapaxes(A_stack, -1, -2)), -1, -2)
        if A_post.shape[0] == 1:
            b_post = b_stack + d @ A_post[0].T
        else:
            b_post = b_stack + np.einsum("bpj,bj->bp", A_post, d)
        # posterior moments
        mu_post = means - _apply(K, hm - yj[None, :])
        cov_post = C @ covs @ Ct  # (k, n, n)
        cov_post = (cov_post + np.swapaxes(cov_post, -1, -2)) / 2.0
        # weights via omega quadrature of the measurement density
        loglik = _omega_loglik(
            means, covs, model, lambda Z: dist.logpdf(Z, yj), weighting
        )
        with np.errstate(divide="ignore"):
            logw = log_prior_w + (np.log(wj) if wj > 0 else -np.inf) + loglik
        out_logw.append(logw)

        shared_cov_out = k == 1
        cov_shared = cov_post[0] if shared_cov_out else None
        for i in range(B):
            Ai = A_post[0] if A_post.shape[0] == 1 else A_post[i]
            ci = cov_shared if shared_cov_out else cov_post[i]
            out_comps.append(
                MixtureComponent(
                    0.0,
                    HPolytope(Ai, b_post[i]),
                    Moments(mu_post[i], ci),
                )
            )

    # interleave to (i-major, j-minor) order
    M = len(out_logw)
    logw_all = np.stack(out_logw, axis=1).reshape(-1)  # (B*M,) i-major
    comps_om = [out_comps[j * B + i] for i in range(B) for j in range(M)]
    w = _normalize_logw(logw_all)
    for wi, c in zip(w, comps_om):
        c.weight = float(wi)
    return PolytopeMixture(comps_om, prior.regularized)


def encpf_update(
    prior: PolytopeMixture,
    model: MeasurementModel,
    y: np.ndarray,
    weight_mc_budget: int = 10_000,
    hr_cfg: HitAndRunConfig | None = None,
    rng: RngStream | None = None,
) -> PolytopeMixture:
    """Intersection update against a uniform-polytope measurement mixture.

    Weights are Monte Carlo estimates of the overlap integral using
    hit-and-run samples of each prior component; empty intersections get
    weight zero.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if rng is None:
        rng = RngStream(0)
    if hr_cfg is None:
        hr_cfg = HitAndRunConfig()
    if isinstance(model.noise, UniformPolytopeNoise):
        meas = [(1.0, model.noise)]
    elif isinstance(model.noise, MixtureNoise) and all(
        isinstance(c.dist, UniformPolytopeNoise) for c in model.noise.components
    ):
        meas = [(c.weight, c.dist) for c in model.noise.components]
    else:
        raise PolyfiltError("intersection mixture update requires uniform polytope noise")

    comps_out: list[MixtureComponent] = []
    raw_w: list[float] = []
    for i, comp in enumerate(prior.components):
        mu_i = (
            comp.moments.mean
            if comp.moments is not None
            else chebyshev_center(comp.polytope).center
        )
        Hm = np.atleast_2d(model.jacobian(mu_i))
        hm = np.atleast_1d(model.h(mu_i))
        # MC overlap estimate shared across measurement components
        z0 = np.tile(mu_i, (weight_mc_budget, 1))
        samples = hit_and_run_batch(
            comp.polytope.A,
            np.tile(comp.polytope.b, (weight_mc_budget, 1)),
            z0,
            hr_cfg.steps,
            rng.child("encpf", i),
        )
        hx = model.eval_h(samples.T)  # (m, budget)
        for wj, unoise in meas:
            Peta = unoise.polytope
            Ay, by = Peta.A, Peta.b + Peta.A @ y
            rows = Ay @ Hm
            offs = by + Ay @ (Hm @ mu_i) - Ay @ hm
            post = HPolytope(
                np.vstack([comp.polytope.A, rows]),
                np.concatenate([comp.polytope.b, offs]),
            )
            inside = np.all(Ay @ hx <= by[:, None] + 1e-12, axis=0)
            frac = float(inside.mean())
            vol_term = 1.0 if unoise.log_volume is None else np.exp(-unoise.log_volume)
            weight = comp.weight * wj * frac * vol_term
            try:
                chebyshev_center(post)
            except EmptyPolytopeError:
                weight = 0.0
            comps_out.append(MixtureComponent(0.0, post, None))
            raw_w.append(weight)

    w = np.asarray(raw_w)
    if w.sum() <= 0:
        raise DegenerateWeightsError("all posterior intersections are empty")
    w = w / w.sum()
    for wi, c in zip(w, comps_out):
        c.weight = float(wi)
    return PolytopeMixture(comps_out, prior.regularized)


def apply_defensive_factor(weights: np.ndarray, d_f: float) -> np.ndarray:
    """Blend the weights toward uniform: w <- (1 - d_f) w + d_f / N."""
    w = np.asarray(weights, dtype=float)
    if not 0.0 <= d_f <= 1.0:
        raise PolyfiltError("defensive factor must be in [0, 1]")
    return (1.0 - d_f) * w + d_f / w.size


def mixture_resample(
    post: PolytopeMixture,
    N_out: int,
    cfg: HitAndRunConfig,
    rng: RngStream,
) -> Ensemble:
    """Systematic component selection followed by one hit-and-run sample per
    selected component, started at the stored posterior mean when interior."""
    weights = post.weights
    idx = categorical_resample(weights, N_out, rng.child("select"))
    comps = post.components
    n = comps[0].polytope.n

    # one batched chain per selected sample; the constraint matrix is passed
    # shared when all components alias the same array, stacked otherwise
    A0 = comps[0].polytope.A
    shared_A = all(c.polytope.A is A0 for c in comps)
    if shared_A:
        A = A0
    else:
        A = np.stack([comps[int(ci)].polytope.A for ci in idx])
    b = np.stack([comps[int(ci)].polytope.b for ci in idx])

    z0 = np.empty((N_out, n))
    cheb_cache: dict[int, np.ndarray] = {}
    for r, ci in enumerate(idx):
        ci = int(ci)
        comp = comps[ci]
        start = None
        if comp.moments is not None:
            mu = comp.moments.mean
            if contains(comp.polytope, mu, cfg.tol):
                start = mu
        if start is None:
            if ci not in cheb_cache:
                cheb_cache[ci] = chebyshev_center(comp.polytope).center
            start = cheb_cache[ci]
        z0[r] = start
    samples = hit_and_run_batch(A, b, z0, cfg.steps, rng.child("hnr"))
    return Ensemble(samples.T)
