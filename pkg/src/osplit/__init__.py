"""Lie and Strang splitting for reaction-diffusion problems with
boundary-corrected reaction terms."""

from .boundary import (
    BoundaryFace,
    DegenerateFaceError,
    DiscreteOperator,
    ProblemSpec,
    assemble_operator,
    boundary_residual,
    validate_boundary_spec,
)
from .correction import (
    AnalyticPolynomial,
    CorrectionTargets,
    CustomCorrection,
    HarmonicSolve,
    InterpolateAndSmooth,
    boundary_targets,
    build_correction,
    default_strategy,
    harmonic_extension,
    interpolate_boundary,
    parse_strategy,
    weighted_jacobi_smooth,
)
from .flows import LinearFlow, ReactionBlowUpError, ReactionFlow, diffusion_substep, reaction_substep
from .grid import Field, Grid, eval_on_grid, make_uniform_grid, norm
from .lab import (
    ConvergenceReport,
    check_expectations,
    emit,
    observed_order,
    run_convergence_study,
    run_smoothness_study,
)
from .presets import PRESETS, Preset, get_preset
from .steppers import IntegrationError, IntegrationResult, Scheme, Splitting, StepperConfig, integrate

__version__ = "0.1.0"
