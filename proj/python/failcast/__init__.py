"""Failure discovery and risk prediction toolkit.

The heavy lifting lives in the C++ extension; this package re-exports the
bound operations.
"""

from ._core import (
    FlowModel,
    GprModel,
    bicycle_model_rollout,
    bicycle_true_rollout,
    disturbance_grid,
    gaussian_mass_radius,
    grid_samples,
    is_failure,
    project,
    range_coverage,
    run_pipeline,
    synthetic_risks,
    variance_coverage,
)

__all__ = [
    "FlowModel",
    "GprModel",
    "bicycle_model_rollout",
    "bicycle_true_rollout",
    "disturbance_grid",
    "gaussian_mass_radius",
    "grid_samples",
    "is_failure",
    "project",
    "range_coverage",
    "run_pipeline",
    "synthetic_risks",
    "variance_coverage",
]
