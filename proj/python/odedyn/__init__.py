"""Online SGD and overlap ODEs for two-layer teacher-student networks."""

from ._odedyn import (
    DegenerateCovariance,
    IntegrationError,
    OverlapState,
    ScalingConfig,
    build_symmetric_teacher,
    classify_regime,
    closed_form,
    combination_overlaps,
    fit_power_law,
    integrate,
    mc_kernel_oracle,
    overlap_from_weights,
    population_risk,
    rhs,
    run_sgd,
    sample_combination,
    time_step,
    version,
)

__version__ = version()

__all__ = [
    "DegenerateCovariance",
    "IntegrationError",
    "OverlapState",
    "ScalingConfig",
    "build_symmetric_teacher",
    "classify_regime",
    "closed_form",
    "combination_overlaps",
    "fit_power_law",
    "integrate",
    "mc_kernel_oracle",
    "overlap_from_weights",
    "population_risk",
    "rhs",
    "run_sgd",
    "sample_combination",
    "time_step",
    "version",
]
