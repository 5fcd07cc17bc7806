"""scikit-learn style wrappers over the functional solvers and estimators."""
from __future__ import annotations

from typing import Mapping

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import drift, maxent
from .ensemble import DiscreteSystem, EntropyConfig, ShellDecomposition, shell_marginal
from .exceptions import ContractError

ROUTES = ("gibbs-jaynes", "relative", "relative-shellwise", "jaynes-invariant")


class RelevantEnsemble(BaseEstimator):
    """Maximum-entropy distribution of a discrete system under mean constraints.

    ``fit(system, targets)`` solves for the multipliers; ``predict_proba``
    returns the fitted probabilities and ``expectation`` reads off means.

    Parameters
    ----------
    route : str
        One of ``gibbs-jaynes``, ``relative``, ``relative-shellwise`` or
        ``jaynes-invariant``. The relative routes need ``base`` at fit time,
        ``jaynes-invariant`` needs ``shells`` or ``base``.
    tol : float
        Constraint residual tolerance.
    max_iter : int
        Newton iteration cap.
    energy_name : str
        Observable whose multiplier is exposed as ``beta_``.
    k_B : float
        Boltzmann constant used for ``entropy_``.
    """

    def __init__(self, route="gibbs-jaynes", tol=1e-10, max_iter=200, energy_name="H", k_B=1.0):
        self.route = route
        self.tol = tol
        self.max_iter = max_iter
        self.energy_name = energy_name
        self.k_B = k_B

    def fit(self, X: DiscreteSystem, y, base=None, shells: ShellDecomposition | None = None):
        if not isinstance(X, DiscreteSystem):
            raise ContractError("X must be a DiscreteSystem")
        if self.route not in ROUTES:
            raise ContractError(f"unknown route {self.route!r}; expected one of {ROUTES}")
        cons = y if isinstance(y, maxent.ConstraintSet) else maxent.ConstraintSet.from_mapping(dict(y))
        cfg = maxent.SolverConfig(tolerance=self.tol, gradient_tolerance=self.tol,
                                  max_iter=self.max_iter, energy_name=self.energy_name)
        if self.route == "gibbs-jaynes":
            rel = maxent.solve_gibbs_jaynes(X, cons, cfg)
        elif self.route == "jaynes-invariant":
            if shells is None:
                if base is None:
                    raise ContractError("jaynes-invariant needs shells or a base distribution")
                shells = shell_marginal(base, X)
            rel = maxent.solve_jaynes_invariant_constrained(X, shells, cons, cfg)
        else:
            if base is None:
                raise ContractError(f"route {self.route!r} needs a base distribution")
            solve = maxent.solve_relative if self.route == "relative" else maxent.solve_relative_shellwise
            rel = solve(base, X, cons, cfg)
        self.system_ = X
        self.relevant_ = rel
        self.multipliers_ = rel.multipliers.as_dict()
        self.beta_ = rel.multipliers.beta
        self.n_iter_ = rel.dual_iterations
        self.entropy_ = maxent.entropy_at_solution(rel, X, EntropyConfig(self.k_B))
        return self

    def predict_proba(self, X=None):
        check_is_fitted(self, "relevant_")
        return self.relevant_.probabilities.copy()

    def expectation(self, name):
        check_is_fitted(self, "relevant_")
        return float(self.system_.observable(name) @ self.relevant_.probabilities)


class OrganisedDriftEstimator(RegressorMixin, BaseEstimator):
    """Reweighted drift ``v(N_R)`` learned from one equilibrium trajectory.

    ``fit`` takes a :class:`~relent.md.Trajectory` (or a
    :class:`~relent.drift.SampleSet`); ``predict`` maps an array of target
    means ``N_R`` to drift values. ``predict_curve`` also returns the
    multipliers, bootstrap errors and effective sample sizes.
    """

    def __init__(self, kernel_width=None, lambda_tolerance=1e-8, bootstrap_resamples=200,
                 block_length=100, random_state=0):
        self.kernel_width = kernel_width
        self.lambda_tolerance = lambda_tolerance
        self.bootstrap_resamples = bootstrap_resamples
        self.block_length = block_length
        self.random_state = random_state

    def _config(self):
        return drift.ReweightConfig(kernel_width=self.kernel_width,
                                    lambda_tolerance=self.lambda_tolerance,
                                    bootstrap_resamples=self.bootstrap_resamples,
                                    block_length=self.block_length,
                                    seed=int(self.random_state))

    def fit(self, X, y=None):
        samples = drift._samples(X)
        drift._check_length(len(samples), self._config())
        self.samples_ = samples
        F = samples.F
        self.range_ = (int(F.min()), int(F.max()))
        self.n_samples_ = len(samples)
        return self

    def predict_curve(self, targets) -> drift.DriftCurve:
        check_is_fitted(self, "samples_")
        t = check_array(np.asarray(targets, dtype=float).reshape(-1, 1), ensure_min_samples=1).ravel()
        return drift.drift_curve(self.samples_, t, self._config())

    def predict(self, X):
        return self.predict_curve(X).v

    def score(self, X, y, sample_weight=None):
        return super().score(np.asarray(X).reshape(-1, 1), y, sample_weight)

    def lambda_for(self, target):
        check_is_fitted(self, "samples_")
        return drift.solve_lambda(self.samples_, target, self._config())


def fit_relevant(system, targets: Mapping[str, float], **params):
    """One-shot convenience: ``RelevantEnsemble(**params).fit(system, targets)``."""
    return RelevantEnsemble(**params).fit(system, targets)
