"""Input validation helpers shared by the public functions and estimators."""
import numbers

import numpy as np

from .exceptions import ContractError, DimensionMismatchError

PROB_ATOL = 1e-12


def check_probability_vector(p, n=None, name="probabilities"):
    """Return ``p`` as a float array after checking it is a distribution.

    Nothing is renormalised: the sum must already be 1 within 1e-12.
    """
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise ContractError(f"{name} must be one-dimensional")
    if n is not None and p.size != n:
        raise DimensionMismatchError(f"{name} has {p.size} entries, expected {n}")
    if not np.all(np.isfinite(p)):
        raise ContractError(f"{name} contains non-finite values")
    if np.any(p < 0):
        raise ContractError(f"{name} contains negative entries")
    total = p.sum()
    if abs(total - 1.0) > PROB_ATOL:
        raise ContractError(f"{name} sum to {total!r}, not 1 within {PROB_ATOL}")
    return p


def check_positive_vector(x, n=None, name="values"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ContractError(f"{name} must be one-dimensional")
    if n is not None and x.size != n:
        raise DimensionMismatchError(f"{name} has {x.size} entries, expected {n}")
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise ContractError(f"{name} must be strictly positive and finite")
    return x


def check_positive_scalar(x, name):
    if not isinstance(x, numbers.Real) or not np.isfinite(x) or x <= 0:
        raise ContractError(f"{name} must be a positive finite number, got {x!r}")
    return float(x)


def frozen(a):
    """Read-only copy of ``a``."""
    a = np.array(a)
    a.flags.writeable = False
    return a
