"""Exception hierarchy.

Errors split into two families so the CLI can map them to exit codes:
contract violations (bad input, infeasible request) and numerical failures
(non-convergence, integration blow-up).
"""


class RelentError(Exception):
    """Base class for all package errors."""


class ContractError(RelentError, ValueError):
    """Input violates a documented precondition."""


class NumericalError(RelentError, ArithmeticError):
    """A computation failed numerically."""


class DimensionMismatchError(ContractError):
    pass


class AbsoluteContinuityError(ContractError):
    """``rho`` puts mass where the reference distribution has none.

    The divergence is infinite in that case; we refuse to return ``inf``.
    """


class InfeasibleConstraintError(ContractError):
    def __init__(self, message, name=None):
        super().__init__(message)
        self.name = name


class DivergentMultiplierError(NumericalError):
    """The dual has no finite minimiser (target on the boundary, or no convergence)."""

    def __init__(self, message, name=None):
        super().__init__(message)
        self.name = name


class ParseError(ContractError):
    def __init__(self, message, path=None, lineno=None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {message}" if where else message)
        self.path = path
        self.lineno = lineno


class IntegrationBlowupError(NumericalError):
    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class EnergyDriftError(NumericalError):
    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class InitializationError(ContractError):
    pass


class DegenerateWeightsError(NumericalError):
    pass


class BracketError(NumericalError):
    pass


class DriftTargetError(RelentError):
    """Wraps a per-target failure inside a drift-curve computation."""

    def __init__(self, index, target, cause):
        super().__init__(f"target #{index} (N_R={target}): {cause}")
        self.index = index
        self.target = target
        self.cause = cause


class RangeError(ContractError):
    """Interpolation requested outside the tabulated range."""
