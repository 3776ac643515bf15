"""Monte Carlo and quadrature lab for occupation-time fluctuations of
site-dependent branching particle systems, with the Gaussian limit toolkit
(Riemann-Liouville, fractional and sub-fractional Brownian kernels)."""

from .branching import (
    HAVE_EXT,
    ModelParams,
    OccupationRecord,
    Particle,
    PopulationCapError,
    SigmaProfile,
    default_window,
    evolve,
    init_population,
    offspring_count,
)
from .gaussian_limits import (
    CovKernel,
    DependenceFit,
    KernelPSDError,
    LimitConstants,
    cov,
    cov_matrix,
    dependence_exponent_fit,
    increment_cov,
    limit_constants,
    rl_moving_average_paths,
    sample_paths,
)
from .moment_oracle import (
    QuadratureError,
    QuadratureSpec,
    cov_N,
    cov_matrix_XT,
    exact_cov_XT,
    functional_variance,
    mean_N,
)
from .occupation import (
    Ensemble,
    FluctuationPath,
    ScalingRegime,
    fluctuation_path,
    load_ensemble,
    rep_rng,
    run_ensemble,
    save_ensemble,
    spacetime_functional,
)
from .stable_motion import (
    DensityGrid,
    MassLeakError,
    StableDensity,
    StableParams,
    density,
    density_at_zero,
    density_table,
    sample_increment,
    semigroup_apply,
    semigroup_values,
    tail_radius,
)
from .testfuncs import GaussComponent, TestFunction

__version__ = "0.1.0"
