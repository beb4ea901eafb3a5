"""Robin heat kernels and first eigenvalues of radial balls, with comparison verdicts."""

from .compare import (
    ComparisonReport,
    ComparisonScenario,
    Direction,
    Mode,
    ScenarioHypothesis,
    TransplantScenario,
    barta_bound,
    eigen_compare,
    kernel_compare,
    sub_supersolution_residual,
    transplant_check,
)
from .geometry import (
    Family,
    GeometryError,
    Hypothesis,
    RadialGeometry,
    Substitution,
    WarpingFunction,
    hypothesis_check,
    sn_eval,
    substitution_for,
)
from .heat import HeatKernelField, TimeGrid, kernel_spectral, kernel_timestep, substituted_diagnostics
from .sturm import Grid, SpectralData, assemble, eigensolve, first_mode_diagnostics, rayleigh, solve

__version__ = "0.1.0"

__all__ = [
    "ComparisonReport",
    "ComparisonScenario",
    "Direction",
    "Family",
    "GeometryError",
    "Grid",
    "HeatKernelField",
    "Hypothesis",
    "Mode",
    "RadialGeometry",
    "ScenarioHypothesis",
    "SpectralData",
    "Substitution",
    "TimeGrid",
    "TransplantScenario",
    "WarpingFunction",
    "assemble",
    "barta_bound",
    "eigen_compare",
    "eigensolve",
    "first_mode_diagnostics",
    "hypothesis_check",
    "kernel_compare",
    "kernel_spectral",
    "kernel_timestep",
    "rayleigh",
    "sn_eval",
    "solve",
    "sub_supersolution_residual",
    "substitution_for",
    "substituted_diagnostics",
    "transplant_check",
]
