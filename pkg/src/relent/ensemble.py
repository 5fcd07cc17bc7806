"""Distributions on enumerable state spaces and their entropy functionals.

A :class:`DiscreteSystem` carries the reference measure ``m(z)``, named
observables and the invariant label of every state (e.g. its energy and
particle number). States sharing a label form an invariant *shell*.

Conventions: ``0 ln 0 = 0``; ``k_B = 1`` unless an :class:`EntropyConfig`
says otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

import numpy as np

from ._validation import (
    PROB_ATOL,
    check_positive_scalar,
    check_positive_vector,
    check_probability_vector,
    frozen,
)
from .exceptions import AbsoluteContinuityError, ContractError, DimensionMismatchError


class DiscreteSystem:
    """Enumerable state space with measure, observables and invariant labels.

    Parameters
    ----------
    states : sequence
        Opaque state identifiers.
    measure : array_like, optional
        Positive weight ``m(z)`` per state. Defaults to 1.
    observables : mapping of str to array_like, optional
        Real-valued phase functions, one value per state.
    invariant_labels : sequence of hashable, optional
        Value of the dynamical invariants for every state. Defaults to a
        single shell containing every state.
    """

    def __init__(self, states: Sequence, measure=None,
                 observables: Mapping[str, Sequence[float]] | None = None,
                 invariant_labels: Sequence[Hashable] | None = None):
        self.states = tuple(states)
        n = len(self.states)
        if n == 0:
            raise ContractError("a system needs at least one state")
        if len(set(self.states)) != n:
            raise ContractError("state identifiers must be unique")
        if measure is None:
            measure = np.ones(n)
        self.measure = frozen(check_positive_vector(measure, n, "measure"))
        obs = {}
        for name, values in (observables or {}).items():
            values = np.asarray(values, dtype=float)
            if values.shape != (n,):
                raise DimensionMismatchError(
                    f"observable {name!r} has shape {values.shape}, expected ({n},)")
            if not np.all(np.isfinite(values)):
                raise ContractError(f"observable {name!r} has non-finite values")
            obs[name] = frozen(values)
        self.observables = obs
        if invariant_labels is None:
            invariant_labels = [()] * n
        labels = list(invariant_labels)
        if len(labels) != n:
            raise DimensionMismatchError(
                f"{len(labels)} invariant labels for {n} states")
        order = {}
        index = np.empty(n, dtype=np.intp)
        for k, lab in enumerate(labels):
            index[k] = order.setdefault(lab, len(order))
        self.invariant_labels = tuple(labels)
        self.shell_labels = tuple(order)
        self.shell_index = frozen(index)

    def __len__(self):
        return len(self.states)

    @property
    def n_shells(self):
        return len(self.shell_labels)

    def observable(self, name) -> np.ndarray:
        try:
            return self.observables[name]
        except KeyError:
            raise ContractError(f"unknown observable {name!r}") from None

    def shell_members(self, k):
        return np.flatnonzero(self.shell_index == k)

    def __repr__(self):
        return (f"DiscreteSystem(n_states={len(self)}, n_shells={self.n_shells}, "
                f"observables={list(self.observables)})")


class Distribution:
    """Probability vector indexed like the states of a :class:`DiscreteSystem`."""

    __slots__ = ("probabilities",)

    def __init__(self, probabilities):
        object.__setattr__(self, "probabilities",
                           frozen(check_probability_vector(probabilities)))

    def __setattr__(self, name, value):
        raise AttributeError("Distribution is immutable")

    def __len__(self):
        return self.probabilities.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.probabilities, dtype=dtype)

    def __repr__(self):
        return f"Distribution({np.array2string(self.probabilities, precision=6)})"

    @classmethod
    def uniform(cls, sys: DiscreteSystem) -> "Distribution":
        """The distribution proportional to the measure."""
        return cls(sys.measure / sys.measure.sum())

    @classmethod
    def from_weights(cls, weights) -> "Distribution":
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
            raise ContractError("weights must be finite, non-negative and not all zero")
        return cls(w / w.sum())


@dataclass(frozen=True)
class ShellDecomposition:
    """Invariant shells of a system: members, measure ``Omega`` and probability ``P``.

    ``labels[k]`` names shell ``k``; ``indices[k]`` are its states.
    """

    labels: tuple
    indices: tuple
    omega: np.ndarray
    prob: np.ndarray

    def __post_init__(self):
        if not (len(self.labels) == len(self.indices) == len(self.omega) == len(self.prob)):
            raise DimensionMismatchError("shell fields have inconsistent lengths")
        object.__setattr__(self, "omega", frozen(np.asarray(self.omega, dtype=float)))
        object.__setattr__(self, "prob", frozen(np.asarray(self.prob, dtype=float)))
        if np.any(self.omega <= 0):
            raise ContractError("every shell must have positive measure")
        if np.any(self.prob < 0):
            raise ContractError("shell probabilities must be non-negative")

    @property
    def phi(self):
        """Equilibrium density value on each shell, ``P / Omega``."""
        return self.prob / self.omega

    def as_dict(self):
        return dict(zip(self.labels, self.prob))

    @classmethod
    def from_probabilities(cls, sys: DiscreteSystem, P: Mapping[Hashable, float]):
        """Shells of ``sys`` with externally supplied probabilities ``P(i)``.

        Labels missing from ``P`` get probability 0. A label in ``P`` with
        positive probability but no states is an error.
        """
        known = set(sys.shell_labels)
        for lab, val in P.items():
            if lab not in known and val > 0:
                raise ContractError(f"empty shell {lab!r} has nonzero probability {val}")
        prob = np.array([float(P.get(lab, 0.0)) for lab in sys.shell_labels])
        if abs(prob.sum() - 1.0) > PROB_ATOL:
            raise ContractError(f"shell probabilities sum to {prob.sum()!r}")
        return cls._build(sys, prob)

    @classmethod
    def _build(cls, sys, prob):
        indices = tuple(frozen(sys.shell_members(k)) for k in range(sys.n_shells))
        omega = np.bincount(sys.shell_index, weights=sys.measure, minlength=sys.n_shells)
        return cls(sys.shell_labels, indices, omega, prob)


@dataclass(frozen=True)
class EntropyConfig:
    k_B: float = 1.0

    def __post_init__(self):
        check_positive_scalar(self.k_B, "k_B")


DEFAULT_ENTROPY = EntropyConfig()


def _probs(rho, n=None, name="rho"):
    p = rho.probabilities if isinstance(rho, Distribution) else check_probability_vector(rho, name=name)
    if n is not None and p.size != n:
        raise DimensionMismatchError(f"{name} has {p.size} entries, system has {n} states")
    return p


def _xlogy_ratio(p, q):
    """Sum of ``p ln(p/q)`` with ``0 ln 0 = 0``; caller guarantees ``q > 0`` where ``p > 0``."""
    mask = p > 0
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


def gibbs_jaynes_entropy(rho, sys: DiscreteSystem, cfg: EntropyConfig = DEFAULT_ENTROPY) -> float:
    """``S = -k_B sum rho ln(rho/m)``."""
    p = _probs(rho, len(sys))
    return -cfg.k_B * _xlogy_ratio(p, sys.measure)


def kl_divergence(rho, rho_ref) -> float:
    """Kullback-Leibler divergence ``D(rho || rho_ref)``.

    Raises
    ------
    AbsoluteContinuityError
        If ``rho > 0`` somewhere ``rho_ref == 0``.
    """
    p = _probs(rho)
    q = _probs(rho_ref, p.size, "rho_ref")
    bad = np.flatnonzero((p > 0) & (q == 0))
    if bad.size:
        raise AbsoluteContinuityError(
            f"rho is not absolutely continuous w.r.t. rho_ref (states {bad[:5].tolist()}); "
            "the divergence is infinite")
    # The difference form can dip below zero by rounding; D >= 0 exactly.
    return max(_xlogy_ratio(p, q), 0.0)


def relative_entropy(rho, rho_eq, cfg: EntropyConfig = DEFAULT_ENTROPY) -> float:
    """``Delta S = -k_B D(rho || rho_eq)``; zero at equilibrium, negative elsewhere."""
    return -cfg.k_B * kl_divergence(rho, rho_eq)


def shell_marginal(rho, sys: DiscreteSystem) -> ShellDecomposition:
    p = _probs(rho, len(sys))
    prob = np.bincount(sys.shell_index, weights=p, minlength=sys.n_shells)
    return ShellDecomposition._build(sys, prob)


def _check_shells(shells: ShellDecomposition, sys: DiscreteSystem):
    if tuple(shells.labels) != sys.shell_labels:
        known = set(sys.shell_labels)
        for lab, pr in zip(shells.labels, shells.prob):
            if lab not in known and pr > 0:
                raise ContractError(f"empty shell {lab!r} has nonzero probability {pr}")
        lookup = dict(zip(shells.labels, shells.prob))
        shells = ShellDecomposition.from_probabilities(sys, lookup)
    return shells


def equilibrium_from_invariants(shells: ShellDecomposition, sys: DiscreteSystem) -> Distribution:
    """Distribution that depends on the state only through its invariants.

    ``rho_eq(z) = m(z) P(I(z)) / Omega(I(z))``.
    """
    shells = _check_shells(shells, sys)
    if abs(shells.prob.sum() - 1.0) > PROB_ATOL:
        raise ContractError("shell probabilities do not sum to 1")
    # Recompute Omega from the system so stale decompositions cannot leak in.
    omega = np.bincount(sys.shell_index, weights=sys.measure, minlength=sys.n_shells)
    rho = sys.measure * (shells.prob / omega)[sys.shell_index]
    return Distribution(rho / rho.sum())


def entropy_decomposition_residual(rho, rho_eq_shells: ShellDecomposition, sys: DiscreteSystem,
                                   cfg: EntropyConfig = DEFAULT_ENTROPY) -> float:
    """``Delta S - S - k_B sum_i P_rho(i) ln(P(i)/Omega(i))``.

    The identity holds for any ``rho`` absolutely continuous w.r.t. the
    equilibrium built from ``rho_eq_shells``, so the result should be zero
    up to rounding.
    """
    shells = _check_shells(rho_eq_shells, sys)
    rho_eq = equilibrium_from_invariants(shells, sys)
    d_s = relative_entropy(rho, rho_eq, cfg)
    s = gibbs_jaynes_entropy(rho, sys, cfg)
    marg = shell_marginal(rho, sys).prob
    used = marg > 0
    last = cfg.k_B * np.sum(marg[used] * np.log(shells.prob[used] / shells.omega[used]))
    return float(d_s - s - last)
