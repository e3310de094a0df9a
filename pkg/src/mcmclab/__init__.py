"""mcmclab: dimensional-scaling experiments for RWM and MALA product-target
samplers, measured in an exact truncated transport distance.

The public surface re-exported here is the stable API; module-level helpers
not listed are implementation detail.
"""

from mcmclab.diffusion import (
    ELL_STAR,
    DiffusionSpec,
    optimize_ell,
    rwm_asymptotic_acceptance,
    rwm_speed,
    simulate_diffusion,
)
from mcmclab.errors import NumericFailure, UnboundedTimeError, UsageError
from mcmclab.kernels import (
    ChainRun,
    ChainSpec,
    ensemble_run,
    mala_step,
    run_chain,
    rwm_step,
    speedup_factor,
    speedup_index,
)
from mcmclab.kr import (
    EmpiricalMeasure1D,
    TransportResult,
    kr_brute_force,
    kr_distance,
    kr_lower_bound_dual,
    kr_noise_floor,
    kr_upper_bound_sorted,
    resample_to,
    verify_certificate,
)
from mcmclab.lab import (
    BUDGETS,
    Budget,
    DistanceCurve,
    ScalingFit,
    SweepRow,
    SweepTable,
    WeakLimitRow,
    acceptance_sweep,
    convergence_time,
    distance_curve,
    fit_loglog_slope,
    mala_calibrate_ell,
    scaling_fit,
    weak_limit_comparison,
)
from mcmclab.streams import derive_stream, hash64
from mcmclab.targets import (
    ProductTarget,
    TargetModel1D,
    fisher_moment,
    get_target,
    grad_log_density,
    list_targets,
    log_density,
    sample_component,
    target_from_expression,
)

__version__ = "0.1.0"

__all__ = [
    "BUDGETS",
    "Budget",
    "ChainRun",
    "ChainSpec",
    "DiffusionSpec",
    "DistanceCurve",
    "ELL_STAR",
    "EmpiricalMeasure1D",
    "NumericFailure",
    "ProductTarget",
    "ScalingFit",
    "SweepRow",
    "SweepTable",
    "TargetModel1D",
    "TransportResult",
    "UnboundedTimeError",
    "UsageError",
    "WeakLimitRow",
    "acceptance_sweep",
    "convergence_time",
    "derive_stream",
    "distance_curve",
    "ensemble_run",
    "fisher_moment",
    "fit_loglog_slope",
    "get_target",
    "grad_log_density",
    "hash64",
    "kr_brute_force",
    "kr_distance",
    "kr_lower_bound_dual",
    "kr_noise_floor",
    "kr_upper_bound_sorted",
    "list_targets",
    "log_density",
    "mala_calibrate_ell",
    "mala_step",
    "optimize_ell",
    "resample_to",
    "run_chain",
    "rwm_asymptotic_acceptance",
    "rwm_speed",
    "rwm_step",
    "sample_component",
    "scaling_fit",
    "simulate_diffusion",
    "speedup_factor",
    "speedup_index",
    "target_from_expression",
    "verify_certificate",
    "weak_limit_comparison",
]
