import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import multivariate_normal

from polyfilt.errors import (
    InconsistentMeasurementError,
    NotSPDError,
    PolyfiltError,
)
from polyfilt.filters_exact import (
    GaussianNoise,
    MeasurementModel,
    MixtureNoise,
    NoiseComponent,
    UniformPolytopeNoise,
    compute_gains,
    compute_gains_batch,
    cpf_update,
    kcpf_update,
)
from polyfilt.geometry import (
    Moments,
    contains,
    contains_batch,
    covariance_cube,
)
from polyfilt.models import linear_measurement, range_measurement


def random_spd(rng, n):
    A = rng.standard_normal((n, n))
    return A @ A.T + n * np.eye(n)


# ---------------------------------------------------------------------------
# noise models


def test_gaussian_noise_logpdf_matches_reference():
    rng = np.random.default_rng(0)
    R = random_spd(rng, 3)
    noise = GaussianNoise(R)
    center = rng.standard_normal(3)
    Z = rng.standard_normal((3, 20))
    ref = multivariate_normal(mean=center, cov=R).logpdf(Z.T)
    assert np.allclose(noise.logpdf(Z, center), ref, atol=1e-10)
    with pytest.raises(NotSPDError):
        GaussianNoise(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_uniform_polytope_noise_logpdf():
    poly, _ = covariance_cube(np.zeros(1), np.array([[1.0 / 4.0]]))  # [-√3/2, √3/2]
    noise = UniformPolytopeNoise(poly, log_volume=np.log(np.sqrt(3.0)))
    Z = np.array([[0.0, 0.8, 1.0]])
    lp = noise.logpdf(Z, np.zeros(1))
    assert lp[0] == pytest.approx(-np.log(np.sqrt(3.0)))
    assert lp[1] == lp[0] and lp[2] == -np.inf


def test_mixture_noise_weights_and_logpdf():
    comps = [
        NoiseComponent(0.3, np.array([-1.0]), np.array([[1.0]])),
        NoiseComponent(0.7, np.array([2.0]), np.array([[0.5]])),
    ]
    mix = MixtureNoise(comps)
    Z = np.array([[0.0, 1.0]])
    y = np.array([0.5])
    ref = np.log(
        0.3 * np.exp(GaussianNoise(comps[0].cov).logpdf(Z, y + comps[0].mean))
        + 0.7 * np.exp(GaussianNoise(comps[1].cov).logpdf(Z, y + comps[1].mean))
    )
    assert np.allclose(mix.logpdf(Z, y), ref)
    with pytest.raises(PolyfiltError):
        MixtureNoise([NoiseComponent(0.5, np.zeros(1), np.eye(1))])


def test_measurement_model_batch_fallbacks():
    model = MeasurementModel(
        h=lambda x: np.array([x[0] ** 2]),
        jacobian=lambda x: np.array([[2 * x[0], 0.0]]),
        noise=GaussianNoise(np.eye(1)),
        m=1,
    )
    X = np.array([[1.0, 2.0], [0.0, 0.0]])
    assert np.allclose(model.eval_h(X), [[1.0, 4.0]])
    assert model.eval_jacobian(X).shape == (2, 1, 2)


# ---------------------------------------------------------------------------
# gains


def test_scalar_gain_oracle():
    g = compute_gains(np.eye(1), np.eye(1), np.eye(1))
    assert g.K[0, 0] == pytest.approx(0.5, abs=1e-14)
    assert g.K_tilde[0, 0] == pytest.approx(1.0 / (2.0 + np.sqrt(2.0)), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_square_root_gain_identity(seed):
    """(I - K̃H) Σ (I - K̃H)^T equals the Kalman posterior (I - KH) Σ."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    m = int(rng.integers(1, n + 1))
    Sigma = random_spd(rng, n)
    H = rng.standard_normal((m, n))
    R = random_spd(rng, m)
    g = compute_gains(Sigma, H, R)
    left = (np.eye(n) - g.K_tilde @ H) @ Sigma @ (np.eye(n) - g.K_tilde @ H).T
    right = (np.eye(n) - g.K @ H) @ Sigma
    assert np.allclose(left, right, atol=1e-9 * max(1, np.abs(right).max()))


def test_gains_batch_broadcasting_consistency():
    rng = np.random.default_rng(1)
    Sigma = random_spd(rng, 3)
    R = random_spd(rng, 2)
    Hs = rng.standard_normal((4, 2, 3))
    K, Kt = compute_gains_batch(Sigma[None], Hs, R)
    for i in range(4):
        g = compute_gains(Sigma, Hs[i], R)
        assert np.allclose(K[i], g.K) and np.allclose(Kt[i], g.K_tilde)


# ---------------------------------------------------------------------------
# intersection update


def _demo_prior():
    mu = np.array([-2.5, 0.0])
    Sigma = np.array([[1.0, 0.5], [0.5, 1.0]])
    return covariance_cube(mu, Sigma), mu, Sigma


def test_cpf_linear_is_exact_intersection():
    (prior, _), mu, _ = _demo_prior()
    interval, _ = covariance_cube(np.zeros(1), np.array([[0.25]]))
    model = linear_measurement(np.array([[1.0, 0.0]]), UniformPolytopeNoise(interval))
    post = cpf_update(prior, model, np.array([0.0]), mu)
    rng = np.random.default_rng(0)
    X = rng.uniform(-6, 2, (2, 2000))
    manual = contains_batch(prior, X) & (np.abs(X[0]) <= np.sqrt(3) / 2 + 1e-9)
    assert np.array_equal(contains_batch(post, X), manual)


def test_cpf_shifts_measurement_polytope_by_observation():
    (prior, _), mu, _ = _demo_prior()
    interval, _ = covariance_cube(np.zeros(1), np.array([[0.25]]))
    model = linear_measurement(np.array([[1.0, 0.0]]), UniformPolytopeNoise(interval))
    post = cpf_update(prior, model, np.array([-2.0]), mu)
    assert contains(post, np.array([-2.0, 0.0]))
    assert not contains(post, np.array([-0.5, 0.0]))


def test_cpf_inconsistent_measurement_raises():
    (prior, _), mu, _ = _demo_prior()
    interval, _ = covariance_cube(np.zeros(1), np.array([[0.25]]))
    model = linear_measurement(np.array([[1.0, 0.0]]), UniformPolytopeNoise(interval))
    with pytest.raises(InconsistentMeasurementError):
        cpf_update(prior, model, np.array([50.0]), mu)


def test_cpf_requires_uniform_noise():
    (prior, _), mu, _ = _demo_prior()
    model = linear_measurement(np.array([[1.0, 0.0]]), GaussianNoise(np.eye(1)))
    with pytest.raises(PolyfiltError):
        cpf_update(prior, model, np.array([0.0]), mu)


def test_ecpf_nonlinear_linearizes_at_prior_mean():
    (prior, _), mu, _ = _demo_prior()
    doughnut, _ = covariance_cube(np.zeros(1), np.array([[1.0 / 16.0]]))
    model = range_measurement(UniformPolytopeNoise(doughnut))
    post = cpf_update(prior, model, np.array([1.0]), mu)
    # the linearized slab is a_y^T (H x - H mu + h(mu)) in [1 ± √3/4]
    H = mu / np.linalg.norm(mu)
    rng = np.random.default_rng(2)
    X = rng.uniform(-6, 2, (2, 2000))
    lin = H @ X - H @ mu + np.linalg.norm(mu)
    manual = contains_batch(prior, X) & (np.abs(lin - 1.0) <= np.sqrt(3) / 4 + 1e-9)
    assert np.array_equal(contains_batch(post, X), manual)


# ---------------------------------------------------------------------------
# Kalmanized update


def test_kcpf_moments_match_kalman_closed_form():
    (prior, prior_mom), mu, Sigma = _demo_prior()
    R = np.array([[0.25]])
    H = np.array([[1.0, 0.0]])
    model = linear_measurement(H, GaussianNoise(R))
    y = np.array([0.0])
    post, mom = kcpf_update(prior, prior_mom, model, y)
    S = H @ Sigma @ H.T + R
    K = Sigma @ H.T @ np.linalg.inv(S)
    mu_ref = mu + (K @ (y - H @ mu)).ravel()
    cov_ref = (np.eye(2) - K @ H) @ Sigma
    assert np.allclose(mom.mean, mu_ref, atol=1e-12)
    assert np.allclose(mom.cov, cov_ref, atol=1e-12)


def test_kcpf_polytope_is_affine_image_of_prior():
    (prior, prior_mom), mu, Sigma = _demo_prior()
    model = linear_measurement(np.array([[1.0, 0.0]]), GaussianNoise(np.array([[0.25]])))
    y = np.array([0.0])
    post, _ = kcpf_update(prior, prior_mom, model, y)
    g = compute_gains(Sigma, np.array([[1.0, 0.0]]), np.array([[0.25]]))
    C = np.eye(2) - g.K_tilde @ np.array([[1.0, 0.0]])
    d = (g.K_tilde @ np.array([[1.0, 0.0]]) @ mu) + g.K @ y - g.K @ np.array([mu[0]])
    rng = np.random.default_rng(3)
    U = rng.uniform(0, 1, (2, 500))
    from polyfilt.geometry import matrix_sqrt

    Cc = np.sqrt(12.0) * matrix_sqrt(Sigma)
    dd = mu - 0.5 * Cc @ np.ones(2)
    Xprior = Cc @ U + dd[:, None]  # uniform points of the prior cube
    Ximg = C @ Xprior + d[:, None]
    assert np.all(contains_batch(post, Ximg, 1e-8))


def test_kcpf_requires_gaussian_noise():
    (prior, prior_mom), mu, _ = _demo_prior()
    interval, _ = covariance_cube(np.zeros(1), np.array([[0.25]]))
    model = linear_measurement(np.array([[1.0, 0.0]]), UniformPolytopeNoise(interval))
    with pytest.raises(PolyfiltError):
        kcpf_update(prior, prior_mom, model, np.array([0.0]))


def test_ekcpf_reduces_variance_along_measured_direction():
    (prior, prior_mom), mu, Sigma = _demo_prior()
    model = range_measurement(GaussianNoise(np.array([[1.0 / 16.0]])))
    post, mom = kcpf_update(prior, prior_mom, model, np.array([1.0]))
    H = (mu / np.linalg.norm(mu))[None, :]
    assert (H @ mom.cov @ H.T)[0, 0] < (H @ Sigma @ H.T)[0, 0]
    assert isinstance(mom, Moments)
