"""flock1d: a numerical laboratory for 1-d alignment dynamics.

Agents on the line align velocities through the singular communication
weight psi(r) = |r|^(-beta), beta in (0, 1).  The package provides the
second-order particle system and its exact first-order reformulation in the
conserved natural velocities, singularity-aware integrators, exact transport
distances, a pseudo-inverse (quantile-level) solver for the limiting
continuity equation, and a seeded experiment harness that measures the
stability, flocking, mean-field, and contraction behavior of the dynamics
against their quantitative bounds.
"""

from .errors import (
    BadRange,
    CollisionError,
    DegenerateSupport,
    DimensionMismatch,
    Flock1dError,
    GridMismatch,
    MonotonicityViolation,
    NonPositiveValues,
    NotNormalized,
    NumericalBlowup,
    ParseError,
    SizeCapExceeded,
    ValidationError,
)
from .experiments import (
    ResultTable,
    contraction_experiment,
    fit_exponential_rate,
    meanfield_sweep,
    sample_times,
    stability_experiment,
)
from .kernels import CommunicationKernel
from .kinetic import (
    EnergyReport,
    PseudoInverseField,
    discretize_initial,
    energy_report,
    evolve_kinetic,
    field_from_ensemble,
    gamma_pushforward,
    kinetic_states_at,
    pseudoinverse_rhs,
    reconstruct_density,
)
from .metrics import (
    DiscreteMeasure1D,
    PhasePoints,
    mean_power_norm,
    modified_wasserstein,
    modulated_lp_distance,
    natural_velocity_mismatch,
    wasserstein_1d,
    wasserstein_phase,
)
from .model import (
    FirstOrderEnsemble,
    SecondOrderEnsemble,
    first_order_rhs,
    mean_interaction,
    natural_velocities,
    second_order_rhs,
    to_first_order,
    to_second_order,
    velocities_from_natural,
)
from .sampling import InitSpec, sample_initial
from .simulate import (
    EnsembleDiagnostics,
    IntegratorSpec,
    Trajectory,
    detect_equilibrium,
    diagnostics,
    first_order_positions_at,
    integrate_first_order,
    integrate_second_order_direct,
    integrate_via_reformulation,
    lp_fluctuation,
    write_events_csv,
    write_trajectory_csv,
)

__version__ = "0.1.0"

__all__ = [
    "BadRange",
    "CollisionError",
    "CommunicationKernel",
    "DegenerateSupport",
    "DimensionMismatch",
    "DiscreteMeasure1D",
    "EnergyReport",
    "EnsembleDiagnostics",
    "FirstOrderEnsemble",
    "Flock1dError",
    "GridMismatch",
    "InitSpec",
    "IntegratorSpec",
    "MonotonicityViolation",
    "NonPositiveValues",
    "NotNormalized",
    "NumericalBlowup",
    "ParseError",
    "PhasePoints",
    "PseudoInverseField",
    "ResultTable",
    "SecondOrderEnsemble",
    "SizeCapExceeded",
    "Trajectory",
    "ValidationError",
    "contraction_experiment",
    "detect_equilibrium",
    "diagnostics",
    "discretize_initial",
    "energy_report",
    "evolve_kinetic",
    "field_from_ensemble",
    "first_order_positions_at",
    "first_order_rhs",
    "fit_exponential_rate",
    "gamma_pushforward",
    "integrate_first_order",
    "integrate_second_order_direct",
    "integrate_via_reformulation",
    "kinetic_states_at",
    "lp_fluctuation",
    "mean_interaction",
    "mean_power_norm",
    "meanfield_sweep",
    "modified_wasserstein",
    "modulated_lp_distance",
    "natural_velocities",
    "natural_velocity_mismatch",
    "pseudoinverse_rhs",
    "reconstruct_density",
    "sample_initial",
    "sample_times",
    "second_order_rhs",
    "stability_experiment",
    "to_first_order",
    "to_second_order",
    "velocities_from_natural",
    "wasserstein_1d",
    "wasserstein_phase",
    "write_events_csv",
    "write_trajectory_csv",
]
