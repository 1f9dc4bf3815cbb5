"""Tamed-truncated exponential Euler workbench for the stochastic Burgers equation.

Coefficient vectors are plain numpy arrays whose last axis indexes the sine
modes e_n(x) = sqrt(2) sin(n pi x), n = 1..N.  Leading axes are batch axes
(independent sample paths), so every routine here is vectorized over paths.
"""

from .spectral_core import (
    SpectralOperator,
    TimeMesh,
    eigenvalue,
    floor_time,
    fractional_norm,
    mesh_max_gap,
    project,
    semigroup_apply,
    spectral_gap_norm,
)
from .burgers_drift import (
    DriftConfig,
    drift,
    drift_exact,
    drift_pseudospectral,
    local_lipschitz_bound,
)
from .noise_model import (
    BrownianPath,
    DiagonalNoise,
    IncrementPair,
    NoiseNotTraceClassError,
    coarsen,
    hs_norm,
    sample_increment_pair,
    tame,
    validate_noise,
)
from .schemes import (
    BlowUpError,
    SchemeConfig,
    Trajectory,
    run_path,
    step_tamed_truncated,
    step_untamed,
    truncation_indicator,
)

__version__ = "0.1.0"

__all__ = [
    "BlowUpError",
    "BrownianPath",
    "DiagonalNoise",
    "DriftConfig",
    "IncrementPair",
    "NoiseNotTraceClassError",
    "SchemeConfig",
    "SpectralOperator",
    "TimeMesh",
    "Trajectory",
    "coarsen",
    "drift",
    "drift_exact",
    "drift_pseudospectral",
    "eigenvalue",
    "floor_time",
    "fractional_norm",
    "hs_norm",
    "local_lipschitz_bound",
    "mesh_max_gap",
    "project",
    "run_path",
    "sample_increment_pair",
    "semigroup_apply",
    "spectral_gap_norm",
    "step_tamed_truncated",
    "step_untamed",
    "tame",
    "truncation_indicator",
    "validate_noise",
]
