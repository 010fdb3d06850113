"""Twin-experiment driver: truth/observation generation, filter loops,
Monte Carlo replication, RMSE, CSV/JSON emission, and the static demos."""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import baselines, filters_ensemble as fe, models
from .errors import PolyfiltError
from .filters_exact import (
    GaussianNoise,
    MeasurementModel,
    UniformPolytopeNoise,
    cpf_update,
    kcpf_update,
)
from .geometry import HPolytope, Moments, covariance_cube
from .sampling import HitAndRunConfig, RngStream, hit_and_run_batch

SCENARIOS = ("ikeda", "l96", "static_banana", "static_cpf", "static_kcpf")
FILTERS = (
    "enkf",
    "bpf",
    "engmf",
    "bcpf",
    "encpf",
    "enkcpf",
    "nofilter",
    "bayes_reference",
)

_CSV_ORDER = (
    ("engmf", "rmseEnGMF"),
    ("enkf", "rmseEnKF"),
    ("bcpf", "rmseBCPF"),
    ("encpf", "rmseEnCPF"),
    ("bpf", "rmseBPF"),
    ("enkcpf", "rmseEnKCPF"),
    ("nofilter", "rmseNoFilter"),
    ("bayes_reference", "rmseBayes"),
)


@dataclass
class ExperimentConfig:
    scenario: str
    filters: tuple[str, ...]
    ensemble_sizes: tuple[int, ...]
    steps: int
    discard: int
    mc_reps: int
    seed: int
    out: str | None = None
    inflation: float = 1.001
    loc_radius: float | None = None  # None = scenario default; 0 disables
    defensive: float = 1e-4
    hr_steps: int = 25
    bpf_noise_var: float = 1e-8
    bayes_N: int = 100_000
    encpf_budget: int = 10_000
    workers: int = 1

    def __post_init__(self):
        if self.scenario not in ("ikeda", "l96"):
            raise PolyfiltError(f"unknown scenario {self.scenario!r}")
        bad = [f for f in self.filters if f not in FILTERS]
        if bad:
            raise PolyfiltError(f"unknown filters {bad}")
        if not self.filters:
            raise PolyfiltError("need at least one filter")
        if self.discard >= self.steps:
            raise PolyfiltError("discard must be smaller than steps")
        if self.mc_reps < 1:
            raise PolyfiltError("mc_reps must be >= 1")
        if any(N < 2 for N in self.ensemble_sizes) or not self.ensemble_sizes:
            raise PolyfiltError("ensemble sizes must be >= 2")
        if self.workers < 1:
            raise PolyfiltError("workers must be >= 1")

    def localization(self) -> float | None:
        if self.loc_radius is None:
            return 3.0 if self.scenario == "l96" else None
        return None if self.loc_radius == 0 else self.loc_radius


@dataclass
class CellResult:
    rmse: float  # nan when every replicate diverged
    stderr: float
    reps: int
    diverged: int
    wall_time: float


@dataclass
class RunResult:
    cells: dict  # (filter, N) -> CellResult
    filters: tuple[str, ...]
    ensemble_sizes: tuple[int, ...]


# ---------------------------------------------------------------------------
# scenario definitions


def _scenario_model(cfg: ExperimentConfig) -> MeasurementModel:
    if cfg.scenario == "ikeda":
        return models.range_measurement(GaussianNoise(np.array([[1.0]])))
    return models.identity_measurement(40, GaussianNoise(np.eye(40)))


def _propagate(cfg: ExperimentConfig, X: np.ndarray) -> np.ndarray:
    if cfg.scenario == "ikeda":
        return models.ikeda_step(X)
    return models.rk4_step(lambda s: models.l96_tendency(s, 8.0), X, 0.05)


def generate_truth_and_obs(
    scenario: str, K_total: int, rng: RngStream, noise_scale: float = 1.0
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Initial state x0 (before the window), truth trajectory (n, K) under the
    exact dynamics, and noisy observations (m, K), one per step."""
    g = rng.gen
    if scenario == "ikeda":
        # The map is bistable: besides the chaotic attractor there is a stable
        # fixed point near (2.97, 4.15) whose basin captures roughly half of
        # the N(0, I) perturbations of (1.25, 0).  The benchmark regime is the
        # chaotic attractor, so captured starts are redrawn.
        fp = np.array([2.97, 4.15])
        for _ in range(1000):
            x0 = np.array([1.25, 0.0]) + g.standard_normal(2)
            x = x0
            truth = np.empty((2, K_total))
            for k in range(K_total):
                x = models.ikeda_step(x)
                truth[:, k] = x
            if np.linalg.norm(truth[:, -1] - fp) > 1.0:
                break
        else:  # pragma: no cover
            raise PolyfiltError("could not find a chaotic trajectory")
        obs = (
            np.linalg.norm(truth, axis=0)[None, :]
            + noise_scale * g.standard_normal((1, K_total))
        )
        return x0, truth, obs
    if scenario == "l96":
        n = 40
        x = 8.0 * np.ones(n) + 1e-2 * g.standard_normal(n)
        for _ in range(1000):  # spin-up onto the attractor
            x = models.rk4_step(lambda s: models.l96_tendency(s, 8.0), x, 0.05)
        x0 = x
        truth = np.empty((n, K_total))
        obs = np.empty((n, K_total))
        for k in range(K_total):
            x = models.rk4_step(lambda s: models.l96_tendency(s, 8.0), x, 0.05)
            truth[:, k] = x
            obs[:, k] = x + noise_scale * g.standard_normal(n)
        return x0, truth, obs
    raise PolyfiltError(f"unknown scenario {scenario!r}")


def spatio_temporal_rmse(
    truth: np.ndarray, estimates: np.ndarray, K_burn: int
) -> float:
    """sqrt of the mean squared error over retained steps and dimensions."""
    truth = np.atleast_2d(truth)
    estimates = np.atleast_2d(estimates)
    if truth.shape != estimates.shape:
        raise PolyfiltError("truth and estimate trajectories differ in shape")
    if K_burn >= truth.shape[1]:
        raise PolyfiltError("burn-in exceeds trajectory length")
    err = truth[:, K_burn:] - estimates[:, K_burn:]
    return float(np.sqrt(np.mean(err * err)))


# ---------------------------------------------------------------------------
# per-replicate filter loop


def _uniform_noise_from_cov(R: np.ndarray) -> UniformPolytopeNoise:
    """Uniform cube approximation of a Gaussian noise covariance."""
    R = np.atleast_2d(R)
    m = R.shape[0]
    poly, _ = covariance_cube(np.zeros(m), R)
    sign, logdet = np.linalg.slogdet(R)
    log_vol = 0.5 * m * np.log(12.0) + 0.5 * logdet
    return UniformPolytopeNoise(poly, log_volume=log_vol)


def _analysis_step(
    filter_name: str,
    ens: fe.Ensemble,
    model: MeasurementModel,
    y: np.ndarray,
    cfg: ExperimentConfig,
    bcfg: baselines.BaselineConfig,
    kde_cfg: fe.KdeConfig,
    hr_cfg: HitAndRunConfig,
    rng: RngStream,
    k: int,
) -> fe.Ensemble:
    step_rng = rng.child("step", k)
    if filter_name == "enkf":
        return baselines.enkf_step(ens, model, y, bcfg)
    if filter_name in ("bpf", "bayes_reference"):
        return baselines.bpf_step(ens, model, y, bcfg, step_rng)
    if filter_name == "engmf":
        return baselines.engmf_step(ens, model, y, bcfg, step_rng)
    if filter_name in ("bcpf", "encpf", "enkcpf"):
        prior = fe.cube_kde(ens, kde_cfg)
        if filter_name == "bcpf":
            post = fe.bcpf_update(prior, model, y)
        elif filter_name == "enkcpf":
            post = fe.enkcpf_update(prior, model, y)
        else:
            umodel = replace(model, noise=_uniform_noise_from_cov(model.noise.R))
            post = fe.encpf_update(
                prior, umodel, y, cfg.encpf_budget, hr_cfg, step_rng.child("mc")
            )
        w = fe.apply_defensive_factor(post.weights, cfg.defensive)
        post = post.with_weights(w)
        return fe.mixture_resample(post, ens.N, hr_cfg, step_rng.child("resample"))
    raise PolyfiltError(f"unknown filter {filter_name!r}")


def _replicate_task(cfg: ExperimentConfig, filter_name: str, N: int, rep: int):
    """Run one (filter, N, replicate) cell; returns (rmse | None, wall_time)."""
    t0 = time.perf_counter()
    root = RngStream(cfg.seed)
    x0, truth, obs = generate_truth_and_obs(
        cfg.scenario, cfg.steps, root.child("truth", rep)
    )
    n = truth.shape[0]
    N_eff = cfg.bayes_N if filter_name == "bayes_reference" else N
    init_rng = root.child("init", rep, N_eff)
    X = x0[:, None] + init_rng.gen.standard_normal((n, N_eff))

    model = _scenario_model(cfg)
    loc = cfg.localization()
    bcfg = baselines.BaselineConfig(
        inflation=cfg.inflation,
        localization_radius=loc,
        process_noise_cov=(
            cfg.bpf_noise_var * np.eye(n)
            if filter_name in ("bpf", "bayes_reference") and cfg.bpf_noise_var > 0
            else None
        ),
        d_f=cfg.defensive,
    )
    kde_cfg = fe.KdeConfig(localization_radius=loc)
    hr_cfg = HitAndRunConfig(steps=cfg.hr_steps)
    frng = root.child("filter", filter_name, N, rep)

    ens = fe.Ensemble(X)
    est = np.empty_like(truth)
    try:
        for k in range(cfg.steps):
            ens = fe.Ensemble(_propagate(cfg, ens.members))
            if filter_name != "nofilter":
                ens = _analysis_step(
                    filter_name, ens, model, obs[:, k], cfg, bcfg, kde_cfg, hr_cfg,
                    frng, k,
                )
            est[:, k] = ens.mean
        rmse = spatio_temporal_rmse(truth, est, cfg.discard)
        if not np.isfinite(rmse):
            return None, time.perf_counter() - t0
        return rmse, time.perf_counter() - t0
    except (PolyfiltError, FloatingPointError, np.linalg.LinAlgError):
        return None, time.perf_counter() - t0


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    """Run all (filter, N, replicate) cells; replicate reduction is ordered,
    so results are independent of the worker count."""
    tasks = [
        (f, N, rep)
        for f in cfg.filters
        for N in cfg.ensemble_sizes
        for rep in range(cfg.mc_reps)
    ]
    results: dict[tuple[str, int, int], tuple] = {}
    if cfg.workers == 1:
        for f, N, rep in tasks:
            results[(f, N, rep)] = _replicate_task(cfg, f, N, rep)
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futs = {
                (f, N, rep): pool.submit(_replicate_task, cfg, f, N, rep)
                for f, N, rep in tasks
            }
            for key, fut in futs.items():
                results[key] = fut.result()

    cells = {}
    for f in cfg.filters:
        for N in cfg.ensemble_sizes:
            vals, wall, diverged = [], 0.0, 0
            for rep in range(cfg.mc_reps):
                rmse, dt = results[(f, N, rep)]
                wall += dt
                if rmse is None:
                    diverged += 1
                else:
                    vals.append(rmse)
            if vals:
                mean = float(np.mean(vals))
                stderr = (
                    float(np.std(vals, ddof=1) / np.sqrt(len(vals)))
                    if len(vals) > 1
                    else 0.0
                )
            else:
                mean, stderr = float("nan"), float("nan")
            cells[(f, N)] = CellResult(mean, stderr, cfg.mc_reps, diverged, wall)
    return RunResult(cells, cfg.filters, cfg.ensemble_sizes)


# ---------------------------------------------------------------------------
# output


def _fmt(v: float) -> str:
    return "nan" if not np.isfinite(v) else f"{v:.6g}"


def write_csv(result: RunResult, path: str) -> None:
    cols = [(f, name) for f, name in _CSV_ORDER if f in result.filters]
    lines = ["N," + ",".join(name for _, name in cols)]
    for N in result.ensemble_sizes:
        row = [str(N)] + [_fmt(result.cells[(f, N)].rmse) for f, _ in cols]
        lines.append(",".join(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def parse_csv(path: str) -> dict:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        out = {}
        for line in fh:
            parts = line.strip().split(",")
            if not parts or parts == [""]:
                continue
            N = int(parts[0])
            out[N] = {h: float(v) for h, v in zip(header[1:], parts[1:])}
    return out


# ---------------------------------------------------------------------------
# static demos


_DEMO_MU = np.array([-2.5, 0.0])
_DEMO_SIGMA = np.array([[1.0, 0.5], [0.5, 1.0]])


def _poly_json(P: HPolytope) -> dict:
    return P.to_json()


def _mixture_json(mix: fe.PolytopeMixture) -> list[dict]:
    out = []
    for c in mix.components:
        entry = {"weight": c.weight, "polytope": _poly_json(c.polytope)}
        if c.moments is not None:
            entry["mean"] = c.moments.mean.tolist()
            entry["cov"] = c.moments.cov.tolist()
        out.append(entry)
    return out


def banana_demo_inputs(seed: int, N: int = 25):
    """Shared prior ensemble and measurement setup of the static example."""
    rng = RngStream(seed).child("banana")
    L = np.linalg.cholesky(_DEMO_SIGMA)
    samples = _DEMO_MU[:, None] + L @ rng.gen.standard_normal((2, N))
    model = models.range_measurement(GaussianNoise(np.array([[1.0 / 16.0]])))
    y = np.array([1.0])
    return fe.Ensemble(samples), model, y


def run_static_demo(which: str, out_path: str, seed: int = 0) -> dict:
    """Emit the prior/measurement/posterior dump of one static example."""
    rng = RngStream(seed).child("demo", which)
    if which in ("cpf", "kcpf"):
        H = np.array([[1.0, 0.0]])
        if which == "cpf":
            noise = _uniform_noise_from_cov(np.array([[0.25]]))
            model = models.linear_measurement(H, noise)
        else:
            model = models.linear_measurement(H, GaussianNoise(np.array([[0.25]])))
        y = np.array([0.0])
    elif which in ("ecpf", "ekcpf"):
        if which == "ecpf":
            noise = _uniform_noise_from_cov(np.array([[1.0 / 16.0]]))
            model = models.range_measurement(noise)
        else:
            model = models.range_measurement(GaussianNoise(np.array([[1.0 / 16.0]])))
        y = np.array([1.0])
    elif which == "banana":
        return _run_banana_demo(out_path, seed)
    else:
        raise PolyfiltError(f"unknown demo {which!r}")

    prior, prior_moments = covariance_cube(_DEMO_MU, _DEMO_SIGMA)
    doc = {
        "demo": which,
        "seed": seed,
        "prior": {
            "polytope": _poly_json(prior),
            "mean": _DEMO_MU.tolist(),
            "cov": _DEMO_SIGMA.tolist(),
        },
        "measurement": {"y": y.tolist()},
    }
    if which in ("cpf", "ecpf"):
        posterior = cpf_update(prior, model, y, _DEMO_MU)
        doc["posterior"] = {"polytope": _poly_json(posterior)}
        doc["measurement"]["noise_polytope"] = _poly_json(model.noise.polytope)
        # embedded membership spot checks: posterior samples lie in the prior
        # and satisfy the pulled-back measurement constraints
        B = 64
        from .geometry import chebyshev_center, contains

        z0 = np.tile(chebyshev_center(posterior).center, (B, 1))
        samples = hit_and_run_batch(
            posterior.A, np.tile(posterior.b, (B, 1)), z0, 200, rng
        )
        doc["spot_checks"] = [
            {
                "point": samples[i].tolist(),
                "in_prior": bool(contains(prior, samples[i])),
                "in_posterior": bool(contains(posterior, samples[i])),
            }
            for i in range(8)
        ]
    else:
        posterior, post_moments = kcpf_update(prior, prior_moments, model, y)
        doc["posterior"] = {
            "polytope": _poly_json(posterior),
            "mean": post_moments.mean.tolist(),
            "cov": post_moments.cov.tolist(),
        }
        doc["measurement"]["R"] = model.noise.R.tolist()
    with open(out_path, "w") as fh:
        json.dump(doc, fh, indent=1)
    return doc


def _run_banana_demo(out_path: str, seed: int) -> dict:
    ens, model, y = banana_demo_inputs(seed)
    N = ens.N
    kde_cfg = fe.KdeConfig()
    hr_cfg = HitAndRunConfig()
    rng = RngStream(seed).child("banana-run")
    prior_mix = fe.cube_kde(ens, kde_cfg)

    bcpf_post = fe.bcpf_update(prior_mix, model, y)
    enkcpf_post = fe.enkcpf_update(prior_mix, model, y)
    umodel = replace(model, noise=_uniform_noise_from_cov(model.noise.R))
    encpf_post = fe.encpf_update(
        prior_mix, umodel, y, max(1, 10**6 // N), hr_cfg, rng.child("encpf")
    )
    bcfg = baselines.BaselineConfig(d_f=1e-4)
    engmf_w, engmf_means, engmf_covs = baselines.engmf_posterior(ens, model, y, bcfg)

    doc = {
        "demo": "banana",
        "seed": seed,
        "prior": {
            "mean": _DEMO_MU.tolist(),
            "cov": _DEMO_SIGMA.tolist(),
            "samples": ens.members.tolist(),
        },
        "measurement": {"y": y.tolist(), "R": model.noise.R.tolist()},
        "prior_kde": _mixture_json(prior_mix),
        "posteriors": {
            "bcpf": _mixture_json(bcpf_post),
            "encpf": _mixture_json(encpf_post),
            "enkcpf": _mixture_json(enkcpf_post),
            "engmf": [
                {
                    "weight": float(engmf_w[i]),
                    "mean": engmf_means[:, i].tolist(),
                    "cov": (
                        engmf_covs[0] if engmf_covs.shape[0] == 1 else engmf_covs[i]
                    ).tolist(),
                }
                for i in range(N)
            ],
        },
    }
    with open(out_path, "w") as fh:
        json.dump(doc, fh, indent=1)
    return doc
