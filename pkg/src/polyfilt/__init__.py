"""Bayesian filtering with uniform distributions on convex H-polytopes."""

from .errors import (
    DegeneratePolytopeError,
    DegenerateWeightsError,
    DimensionMismatchError,
    EmptyPolytopeError,
    IllConditionedError,
    InconsistentMeasurementError,
    NotSPDError,
    PolyfiltError,
    UnboundedPolyhedronError,
)
from .geometry import (
    ChebyshevResult,
    HPolytope,
    Moments,
    OmegaPoints,
    affine_image,
    chebyshev_center,
    contains,
    contains_batch,
    covariance_cube,
    hyperplane_from_point_normal,
    intersect,
    matrix_sqrt,
    omega_expectation,
    omega_moments,
    omega_points,
    pullback_measurement_polyhedron,
    unit_cube,
)
from .sampling import (
    HitAndRunConfig,
    RngStream,
    categorical_resample,
    hit_and_run,
    hit_and_run_batch,
    hit_bounds,
    sphere_direction,
)
from .filters_exact import (
    Gains,
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
from .filters_ensemble import (
    Ensemble,
    KdeConfig,
    MixtureComponent,
    PolytopeMixture,
    apply_defensive_factor,
    bcpf_update,
    cube_kde,
    encpf_update,
    enkcpf_update,
    mixture_resample,
    silverman_uniform_bandwidth,
)
from .baselines import (
    BaselineConfig,
    bpf_step,
    engmf_step,
    enkf_step,
    localization_matrix,
)
from .models import (
    ikeda_step,
    identity_measurement,
    l96_tendency,
    linear_measurement,
    range_measurement,
    rk4_step,
)
from .harness import (
    ExperimentConfig,
    RunResult,
    generate_truth_and_obs,
    run_experiment,
    run_static_demo,
    spatio_temporal_rmse,
    write_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
