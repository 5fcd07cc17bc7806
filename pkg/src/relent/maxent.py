"""Maximum-entropy solvers for relevant distributions on discrete systems.

Every route produces an exponential tilt ``base(z) exp(-lambda . F(z))``
normalised either globally or separately on each invariant shell. The
multipliers minimise the convex dual

    g(lambda) = sum_i P(i) ln Zcal(i) + lambda . f

whose gradient is ``f - <F>_lambda`` and whose Hessian is the (within-shell)
covariance of the constrained observables. The exponent sign is ``-``
everywhere; compare distributions, not raw multiplier signs, against
formulas written with ``+``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .ensemble import (
    DEFAULT_ENTROPY,
    DiscreteSystem,
    Distribution,
    EntropyConfig,
    ShellDecomposition,
    _check_shells,
    _probs,
    shell_marginal,
)
from .exceptions import (
    ContractError,
    DivergentMultiplierError,
    InfeasibleConstraintError,
)


@dataclass(frozen=True)
class ConstraintSet:
    """Expectation constraints ``<F_name> = target``."""

    observable_names: tuple = ()
    targets: tuple = ()

    def __post_init__(self):
        names = tuple(self.observable_names)
        targets = tuple(float(t) for t in self.targets)
        if len(names) != len(targets):
            raise ContractError("one target per observable name is required")
        if len(set(names)) != len(names):
            raise ContractError("constraint observable names must be unique")
        if not all(np.isfinite(targets)):
            raise ContractError("constraint targets must be finite")
        object.__setattr__(self, "observable_names", names)
        object.__setattr__(self, "targets", targets)

    @classmethod
    def from_mapping(cls, targets: Mapping[str, float]) -> "ConstraintSet":
        return cls(tuple(targets), tuple(targets.values()))

    def __len__(self):
        return len(self.observable_names)

    def matrix(self, sys: DiscreteSystem) -> np.ndarray:
        """Observable values as a ``(k, n_states)`` array."""
        if not self.observable_names:
            return np.zeros((0, len(sys)))
        return np.vstack([sys.observable(name) for name in self.observable_names])

    @property
    def target_array(self):
        return np.array(self.targets, dtype=float)


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-10
    gradient_tolerance: float = 1e-10
    max_iter: int = 200
    energy_name: str = "H"


@dataclass(frozen=True)
class MultiplierVector:
    """Lagrange multipliers of one solve.

    ``mu_log_z`` is ``ln Z`` for a global normalisation, or a mapping from
    shell label to ``ln Zcal(i)`` for shell-wise normalisation.
    """

    names: tuple
    lam: np.ndarray
    mu_log_z: float | dict
    energy_name: str = "H"

    def __post_init__(self):
        if not np.all(np.isfinite(self.lam)):
            raise DivergentMultiplierError("non-finite multipliers")

    @property
    def beta(self):
        """Multiplier of the energy observable, if energy was constrained."""
        if self.energy_name in self.names:
            return float(self.lam[self.names.index(self.energy_name)])
        return None

    def as_dict(self):
        return dict(zip(self.names, map(float, self.lam)))


@dataclass(frozen=True)
class RelevantDistribution:
    """Outcome of a solve.

    The result has the form ``q(z) exp(-lambda . F(z)) / Zcal(I(z))`` with
    ``q = exp(log_reference)``; ``shell_prob`` holds the per-shell
    probabilities used in the normalisation (a single 1 for global routes).
    """

    base: Distribution
    multipliers: MultiplierVector
    result: Distribution
    dual_iterations: int
    residual_norm: float
    route: str
    constraints: ConstraintSet
    log_reference: np.ndarray = field(repr=False)
    shell_prob: np.ndarray = field(repr=False)
    shell_log_z: np.ndarray = field(repr=False)

    @property
    def probabilities(self):
        return self.result.probabilities


# --------------------------------------------------------------------------
# family evaluators: return (dual value, gradient, hessian, rho, log Zcal per shell)

def _tilt_eval(lam, log_q, Fm, f, groups, P):
    """Shell-normalised tilt of ``q``: ``rho = q e^{-lam F} P(i) / sum_{i} q e^{-lam F}``.

    A single group with ``P = [1]`` gives the global normalisation.
    """
    s = log_q - lam @ Fm
    rho = np.zeros_like(s)
    log_z = np.empty(len(groups))
    grad = f.copy()
    hess = np.zeros((f.size, f.size))
    value = float(lam @ f)
    for k, idx in enumerate(groups):
        lz = logsumexp(s[idx])
        within = np.exp(s[idx] - lz)
        rho[idx] = P[k] * within
        log_z[k] = lz - np.log(P[k])
        value += P[k] * log_z[k]
        Fi = Fm[:, idx]
        mean = Fi @ within
        grad -= P[k] * mean
        centred = Fi - mean[:, None]
        hess += P[k] * (centred * within) @ centred.T
    return value, grad, hess, rho, log_z


def _jaynes_shell_eval(lam, log_m, Fm, f, groups, P):
    """Invariant-constrained maximiser of ``S``, written directly in its closed form.

    ``rho(z) = P(I(z)) m(z) e^{-lam F(z)} / W(I(z))``, ``W(i) = sum_{z in i} m e^{-lam F}``.
    Kept separate from :func:`_tilt_eval` so the two routes check each other.
    """
    k = f.size
    rho = np.zeros(log_m.size)
    log_w = np.empty(len(groups))
    for g, idx in enumerate(groups):
        expo = log_m[idx] - Fm[:, idx].T @ lam
        shift = expo.max()
        w = np.exp(expo - shift)
        total = w.sum()
        log_w[g] = shift + np.log(total)
        rho[idx] = P[g] * (w / total)
    mean = Fm @ rho
    grad = f - mean
    hess = np.zeros((k, k))
    for g, idx in enumerate(groups):
        if P[g] == 0:
            continue
        cond = rho[idx] / P[g]
        d = Fm[:, idx] - (Fm[:, idx] @ cond)[:, None]
        hess += P[g] * np.einsum("az,bz,z->ab", d, d, cond)
    value = float(np.sum(P * (log_w - np.log(P))) + lam @ f)
    return value, grad, hess, rho, log_w - np.log(P)


def _newton(evaluate, k, cfg: SolverConfig, names):
    """Damped Newton with backtracking on a convex dual.

    Falls back to a gradient step when the Newton direction is not a
    descent direction (singular or indefinite Hessian by rounding).
    """
    lam = np.zeros(k)
    value, grad, hess, rho, log_z = evaluate(lam)
    it = 0
    while True:
        gnorm = float(np.linalg.norm(grad))
        if np.max(np.abs(grad), initial=0.0) <= cfg.tolerance and gnorm <= cfg.gradient_tolerance:
            return lam, it, gnorm, rho, log_z
        if it >= cfg.max_iter:
            raise DivergentMultiplierError(
                f"dual did not converge in {cfg.max_iter} iterations "
                f"(|grad|={gnorm:.3g}); targets may be jointly infeasible or on "
                "the boundary of the feasible set", name=names)
        it += 1
        step = np.linalg.lstsq(hess, -grad, rcond=None)[0]
        slope = float(grad @ step)
        if not np.all(np.isfinite(step)) or slope >= 0:
            step = -grad
            slope = -gnorm ** 2
        # below this the dual value cannot tell steps apart
        resolution = 64.0 * np.finfo(float).eps * max(1.0, abs(value))
        t = 1.0
        accepted = False
        while -t * slope > resolution:
            trial = lam + t * step
            tv, tg, th, trho, tlz = evaluate(trial)
            if np.isfinite(tv) and tv <= value + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # near the optimum decide on the residual of the full step
            trial = lam + step
            tv, tg, th, trho, tlz = evaluate(trial)
            if not np.linalg.norm(tg) < gnorm:
                raise DivergentMultiplierError(
                    f"line search failed at |grad|={gnorm:.3g}", name=names)
        lam, value, grad, hess, rho, log_z = trial, tv, tg, th, trho, tlz


# --------------------------------------------------------------------------

def _support_ranges(Fm, groups, P, support):
    """Reachable interval of each ``<F_a>`` inside the (shell-preserving) family."""
    lo = np.zeros(Fm.shape[0])
    hi = np.zeros(Fm.shape[0])
    for g, idx in enumerate(groups):
        idx = idx[support[idx]]
        if idx.size == 0:
            continue
        lo += P[g] * Fm[:, idx].min(axis=1)
        hi += P[g] * Fm[:, idx].max(axis=1)
    return lo, hi


def _prepare(constraints, sys, groups, P, support, cfg):
    """Feasibility pre-pass. Returns the indices of constraints that need a multiplier."""
    Fm = constraints.matrix(sys)
    f = constraints.target_array
    lo, hi = _support_ranges(Fm, groups, P, support)
    active = []
    for a, name in enumerate(constraints.observable_names):
        scale = max(1.0, abs(lo[a]), abs(hi[a]))
        atol = cfg.tolerance * scale
        if hi[a] - lo[a] <= atol:
            if abs(f[a] - lo[a]) <= atol:
                continue  # constant on the support: satisfied by every member
            raise InfeasibleConstraintError(
                f"constraint {name!r}: target {float(f[a])!r} but the observable is "
                f"constant {float(lo[a])!r} on the support", name=name)
        if f[a] < lo[a] - atol or f[a] > hi[a] + atol:
            raise InfeasibleConstraintError(
                f"constraint {name!r}: target {float(f[a])!r} outside reachable range "
                f"[{float(lo[a])!r}, {float(hi[a])!r}]", name=name)
        if f[a] <= lo[a] + atol or f[a] >= hi[a] - atol:
            raise DivergentMultiplierError(
                f"constraint {name!r}: target {float(f[a])!r} sits on the boundary of the "
                f"reachable range [{float(lo[a])!r}, {float(hi[a])!r}]; the multiplier diverges",
                name=name)
        active.append(a)
    return Fm, f, active


def _solve(evaluate_family, log_q, base, sys, constraints, groups, P, support, cfg, route,
           shell_labels):
    Fm, f, active = _prepare(constraints, sys, groups, P, support, cfg)
    Fa, fa = Fm[active], f[active]
    sub = support
    ev = lambda lam: evaluate_family(lam, log_q[sub], Fa[:, sub], fa,
                                     _restrict(groups, sub), P)
    lam_a, iters, gnorm, rho_sub, log_z = _newton(ev, len(active), cfg,
                                                  constraints.observable_names)
    lam = np.zeros(len(constraints))
    lam[active] = lam_a
    rho = np.zeros(len(sys))
    rho[sub] = rho_sub
    if base is not None and not np.any(lam):
        result = base
    else:
        result = Distribution(rho / rho.sum())
    residual = float(np.linalg.norm(Fm @ result.probabilities - f)) if len(f) else 0.0
    if len(shell_labels) == 1 and route in ("gibbs-jaynes", "relative"):
        mu = float(log_z[0])
    else:
        mu = dict(zip(shell_labels, map(float, log_z)))
    mult = MultiplierVector(constraints.observable_names, lam, mu, cfg.energy_name)
    return RelevantDistribution(
        base=base if base is not None else Distribution.uniform(sys),
        multipliers=mult, result=result, dual_iterations=iters,
        residual_norm=residual, route=route, constraints=constraints,
        log_reference=np.where(sub, log_q, -np.inf), shell_prob=np.asarray(P, dtype=float),
        shell_log_z=np.asarray(log_z))


def _restrict(groups, support):
    """Re-index shell member lists onto the compressed support."""
    pos = np.cumsum(support) - 1
    return [pos[idx[support[idx]]] for idx in groups]


def _log_or_neg_inf(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def _base_array(base, sys):
    return _probs(base, len(sys), "base")


def solve_gibbs_jaynes(sys: DiscreteSystem, constraints: ConstraintSet,
                       cfg: SolverConfig = SolverConfig()) -> RelevantDistribution:
    """Maximise ``S[rho]`` subject to ``<F_a> = f_a`` and normalisation.

    The result is ``m(z) exp(-lambda . F(z)) / Z`` and ``mu_log_z = ln Z``.
    Energy is handled as an ordinary observable; its multiplier is reported
    as ``multipliers.beta`` when named ``cfg.energy_name``.
    """
    n = len(sys)
    support = np.ones(n, dtype=bool)
    rel = _solve(_tilt_eval, np.log(sys.measure), None, sys, constraints,
                 [np.arange(n)], np.ones(1), support, cfg, "gibbs-jaynes", ((),))
    return rel


def solve_relative(base, sys: DiscreteSystem, constraints: ConstraintSet,
                   cfg: SolverConfig = SolverConfig()) -> RelevantDistribution:
    """Maximise the relative entropy from ``base`` under the constraints.

    ``rho = base exp(-lambda . F) / Z`` with one global ``Z``. With no
    constraints, or when every multiplier is zero, ``base`` itself is returned.
    """
    base = base if isinstance(base, Distribution) else Distribution(base)
    q = _base_array(base, sys)
    support = q > 0
    if len(constraints) == 0:
        return _trivial(base, sys, constraints, cfg, "relative")
    return _solve(_tilt_eval, _log_or_neg_inf(q), base, sys, constraints,
                  [np.arange(len(sys))], np.ones(1), support, cfg, "relative", ((),))


def solve_relative_shellwise(base, sys: DiscreteSystem, constraints: ConstraintSet,
                             cfg: SolverConfig = SolverConfig()) -> RelevantDistribution:
    """Relative-entropy maximiser that also preserves the shell probabilities of ``base``.

    ``rho(z) = base(z) exp(-lambda . F(z)) / Zcal(I(z))`` with ``Zcal(i)``
    fixed by ``sum_{z in i} rho = sum_{z in i} base``.
    """
    base = base if isinstance(base, Distribution) else Distribution(base)
    q = _base_array(base, sys)
    P = shell_marginal(base, sys).prob
    if np.any(P <= 0):
        empty = [sys.shell_labels[k] for k in np.flatnonzero(P <= 0)]
        raise ContractError(f"base has zero probability on shells {empty}; "
                            "their normaliser is undefined")
    groups = [sys.shell_members(k) for k in range(sys.n_shells)]
    if len(constraints) == 0:
        return _trivial(base, sys, constraints, cfg, "relative-shellwise", P)
    return _solve(_tilt_eval, _log_or_neg_inf(q), base, sys, constraints, groups, P,
                  q > 0, cfg, "relative-shellwise", sys.shell_labels)


def solve_jaynes_invariant_constrained(sys: DiscreteSystem, shells: ShellDecomposition,
                                       constraints: ConstraintSet,
                                       cfg: SolverConfig = SolverConfig()) -> RelevantDistribution:
    """Maximise ``S`` with the shell probabilities pinned to ``shells.prob``.

    Shells with ``P(i) = 0`` carry no probability and are excluded.
    """
    shells = _check_shells(shells, sys)
    P_all = shells.prob
    if abs(P_all.sum() - 1.0) > 1e-12:
        raise ContractError("shell probabilities do not sum to 1")
    keep = np.flatnonzero(P_all > 0)
    groups = [sys.shell_members(k) for k in keep]
    support = np.zeros(len(sys), dtype=bool)
    for idx in groups:
        support[idx] = True
    P = P_all[keep]
    labels = tuple(sys.shell_labels[k] for k in keep)
    rel = _solve(_jaynes_shell_eval, np.log(sys.measure), None, sys, constraints, groups,
                 P, support, cfg, "jaynes-invariant", labels)
    return rel


def _trivial(base, sys, constraints, cfg, route, P=None):
    q = base.probabilities
    if P is None:
        P = np.ones(1)
        labels = ((),)
    else:
        labels = sys.shell_labels
    mult = MultiplierVector((), np.zeros(0), 0.0 if len(labels) == 1 and route == "relative"
                            else {lab: 0.0 for lab in labels}, cfg.energy_name)
    return RelevantDistribution(base, mult, base, 0, 0.0, route, constraints,
                                _log_or_neg_inf(q), np.asarray(P, dtype=float),
                                np.zeros(len(P)))


# --------------------------------------------------------------------------

def dual_value_and_gradient(lam, base, constraints: ConstraintSet, sys: DiscreteSystem,
                            shells: ShellDecomposition | None = None, hessian=False):
    """Dual objective and its gradient ``f - <F>_lambda`` at ``lam``.

    With ``shells`` the family is renormalised per shell to the probabilities
    ``shells.prob``; otherwise a single global normaliser is used. Pass
    ``hessian=True`` to also get the covariance matrix.
    """
    lam = np.asarray(lam.lam if isinstance(lam, MultiplierVector) else lam, dtype=float)
    if not np.all(np.isfinite(lam)):
        raise ContractError("multipliers must be finite")
    q = _base_array(base, sys)
    support = q > 0
    Fm = constraints.matrix(sys)
    if lam.shape != (len(constraints),):
        raise ContractError(f"expected {len(constraints)} multipliers, got {lam.shape}")
    if shells is None:
        groups, P = [np.arange(len(sys))], np.ones(1)
    else:
        shells = _check_shells(shells, sys)
        keep = np.flatnonzero(shells.prob > 0)
        groups = [sys.shell_members(k) for k in keep]
        P = shells.prob[keep]
        mask = np.zeros(len(sys), dtype=bool)
        for idx in groups:
            mask[idx] = True
        support &= mask
    value, grad, hess, _, _ = _tilt_eval(lam, _log_or_neg_inf(q)[support], Fm[:, support],
                                         constraints.target_array,
                                         _restrict(groups, support), P)
    if hessian:
        return value, grad, hess
    return value, grad


def entropy_at_solution(rel: RelevantDistribution, sys: DiscreteSystem,
                        cfg: EntropyConfig = DEFAULT_ENTROPY) -> float:
    """Entropy of the solved distribution from its multipliers and normalisers.

    ``S = k_B (sum_i P(i) ln Zcal(i) + lambda . f - <ln(q/m)>)``. For the
    Gibbs-Jaynes route ``q = m`` and this is ``k_B (ln Z + lambda . f)``,
    with ``beta E`` inside ``lambda . f`` when energy is constrained.
    """
    lam = rel.multipliers.lam
    f = rel.constraints.target_array
    rho = rel.result.probabilities
    used = rho > 0
    correction = np.sum(rho[used] * (rel.log_reference[used] - np.log(sys.measure[used])))
    return cfg.k_B * float(np.sum(rel.shell_prob * rel.shell_log_z) + lam @ f - correction)
