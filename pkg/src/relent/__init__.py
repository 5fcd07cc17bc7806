"""Relevant ensembles by maximum (relative) entropy, and the organised drift
of a double-well Lennard-Jones gas estimated by reweighting."""

__version__ = "0.1.0"

from .ensemble import (
    DiscreteSystem,
    Distribution,
    EntropyConfig,
    ShellDecomposition,
    entropy_decomposition_residual,
    equilibrium_from_invariants,
    gibbs_jaynes_entropy,
    kl_divergence,
    relative_entropy,
    shell_marginal,
)
from .maxent import (
    ConstraintSet,
    MultiplierVector,
    RelevantDistribution,
    SolverConfig,
    dual_value_and_gradient,
    entropy_at_solution,
    solve_gibbs_jaynes,
    solve_jaynes_invariant_constrained,
    solve_relative,
    solve_relative_shellwise,
)
from .md import PhaseState, SimConfig, Trajectory, liouville_F, rk4_step, run
from .drift import (
    DriftCurve,
    ReweightConfig,
    SampleSet,
    crossing_flux,
    drift_curve,
    estimate_drift,
    solve_lambda,
)
from .transport import TransportConfig, TransportResult, compare_to_trajectory, integrate_f
from .estimators import OrganisedDriftEstimator, RelevantEnsemble
from .exceptions import ContractError, NumericalError, RelentError

__all__ = [
    "ConstraintSet", "ContractError", "DiscreteSystem", "Distribution", "DriftCurve",
    "EntropyConfig", "MultiplierVector", "NumericalError", "OrganisedDriftEstimator",
    "PhaseState", "RelentError", "RelevantDistribution", "RelevantEnsemble",
    "ReweightConfig", "SampleSet", "ShellDecomposition", "SimConfig", "SolverConfig",
    "TransportConfig", "TransportResult", "Trajectory", "compare_to_trajectory",
    "crossing_flux", "drift_curve", "dual_value_and_gradient", "entropy_at_solution",
    "entropy_decomposition_residual", "equilibrium_from_invariants", "estimate_drift",
    "gibbs_jaynes_entropy", "integrate_f", "kl_divergence", "liouville_F",
    "relative_entropy", "rk4_step", "run", "shell_marginal", "solve_gibbs_jaynes",
    "solve_jaynes_invariant_constrained", "solve_lambda", "solve_relative",
    "solve_relative_shellwise", "__version__",
]
