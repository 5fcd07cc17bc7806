"""Organised drift of the right-hand particle count, estimated by reweighting.

The reference ensemble is represented only by the sampled states of a run.
For a target mean ``N_R`` the samples are tilted by ``exp(-lambda F)`` with
``lambda`` chosen so the reweighted mean of ``F`` equals ``N_R``; the drift
is the self-normalised reweighted mean of the kernel-regularised flux
``sum_i delta(q_i) p_i / m``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .exceptions import (
    BracketError,
    ContractError,
    DegenerateWeightsError,
    DriftTargetError,
    InfeasibleConstraintError,
    RelentError,
)
from .md import Trajectory, liouville_F

MIN_ESS = 5.0


@dataclass(frozen=True)
class ReweightConfig:
    """Settings of the reweighted drift estimator.

    ``kernel_width=None`` means ``0.05 * q0`` of the run that produced the
    samples.
    """

    kernel_width: float | None = None
    lambda_tolerance: float = 1e-8
    lambda_bracket: tuple = (-50.0, 50.0)
    bootstrap_resamples: int = 200
    block_length: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.kernel_width is not None and not self.kernel_width > 0:
            raise ContractError("kernel width must be positive")
        lo, hi = self.lambda_bracket
        if not lo < 0 < hi:
            raise ContractError("lambda bracket must contain 0 in its interior")
        if self.block_length < 1 or self.bootstrap_resamples < 2:
            raise ContractError("need block_length >= 1 and at least 2 resamples")


@dataclass(frozen=True)
class SampleSet:
    """Sampled phase points; ``q`` and ``p`` have shape ``(n_samples, N)``."""

    q: np.ndarray
    p: np.ndarray
    mass: float = 1.0
    default_kernel_width: float | None = None

    def __post_init__(self):
        q = np.atleast_2d(np.asarray(self.q, dtype=float))
        p = np.atleast_2d(np.asarray(self.p, dtype=float))
        if q.shape != p.shape:
            raise ContractError("q and p sample arrays differ in shape")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @classmethod
    def from_trajectory(cls, traj: Trajectory) -> "SampleSet":
        cfg = traj.config
        return cls(traj.q, traj.p, cfg.mass, 0.05 * cfg.well_minimum_position)

    def __len__(self):
        return self.q.shape[0]

    @property
    def F(self):
        return np.count_nonzero(self.q > 0.0, axis=1)

    def momentum_symmetrized(self) -> "SampleSet":
        """Every sample followed by its ``p -> -p`` mirror."""
        n, N = self.q.shape
        q = np.repeat(self.q, 2, axis=0)
        p = np.empty((2 * n, N))
        p[0::2] = self.p
        p[1::2] = -self.p
        return SampleSet(q, p, self.mass, self.default_kernel_width)


class DriftEstimate(NamedTuple):
    v: float
    stderr: float
    ess: float


class DriftPoint(NamedTuple):
    target: float
    lam: float
    v: float
    v_stderr: float
    effective_sample_size: float


@dataclass(frozen=True)
class DriftCurve:
    points: tuple

    def __post_init__(self):
        pts = tuple(DriftPoint(*map(float, pt)) for pt in self.points)
        t = [pt.target for pt in pts]
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ContractError("drift-curve targets must be strictly increasing")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def _col(self, k):
        return np.array([pt[k] for pt in self.points])

    targets = property(lambda self: self._col(0))
    lambdas = property(lambda self: self._col(1))
    v = property(lambda self: self._col(2))
    v_stderr = property(lambda self: self._col(3))
    ess = property(lambda self: self._col(4))

    @classmethod
    def from_arrays(cls, targets, v, lambdas=None, v_stderr=None, ess=None):
        n = len(targets)
        zeros = np.zeros(n)
        cols = [targets, zeros if lambdas is None else lambdas, v,
                zeros if v_stderr is None else v_stderr,
                np.ones(n) if ess is None else ess]
        return cls(tuple(zip(*cols)))


def _samples(traj) -> SampleSet:
    if isinstance(traj, SampleSet):
        return traj
    if isinstance(traj, Trajectory):
        return SampleSet.from_trajectory(traj)
    raise ContractError(f"expected a Trajectory or SampleSet, got {type(traj).__name__}")


def _kernel_width(samples: SampleSet, cfg: ReweightConfig):
    eps = cfg.kernel_width if cfg.kernel_width is not None else samples.default_kernel_width
    if eps is None:
        raise ContractError("no kernel width given and the samples carry no default")
    return float(eps)


def reweighted_mean(values, log_weights):
    """Self-normalised weighted mean, stabilised by the largest log-weight."""
    log_weights = np.asarray(log_weights, dtype=float)
    w = np.exp(log_weights - log_weights.max())
    return float(np.dot(w, values) / w.sum())


def effective_sample_size(log_weights):
    w = np.exp(np.asarray(log_weights, dtype=float) - np.max(log_weights))
    return float(w.sum() ** 2 / np.dot(w, w))


def _tilted_moments(levels, counts, lam):
    """Mean and variance of F under ``exp(-lam F)`` from its histogram."""
    s = -lam * levels
    w = counts * np.exp(s - s.max())
    w /= w.sum()
    mean = float(w @ levels)
    return mean, float(w @ (levels - mean) ** 2)


def solve_lambda(traj, target, cfg: ReweightConfig = ReweightConfig()) -> float:
    """Multiplier whose ``exp(-lambda F)`` tilt of the samples has mean ``target``.

    The tilted mean decreases strictly in ``lambda``; the root is found by
    Newton's method safeguarded with bisection inside a bracket that grows
    from ``[-1, 1]`` up to ``cfg.lambda_bracket``.
    """
    F = traj if isinstance(traj, np.ndarray) else _samples(traj).F
    levels, counts = np.unique(np.asarray(F, dtype=float), return_counts=True)
    counts = counts.astype(float)
    target = float(target)
    if not levels[0] < target < levels[-1]:
        raise InfeasibleConstraintError(
            f"target {target} outside the sampled range ({levels[0]}, {levels[-1]})")
    tol = cfg.lambda_tolerance

    def resid(lam):
        mean, var = _tilted_moments(levels, counts, lam)
        return mean - target, var

    lo_lim, hi_lim = cfg.lambda_bracket
    a, b = max(-1.0, lo_lim), min(1.0, hi_lim)
    while resid(a)[0] < 0:
        if a <= lo_lim:
            raise BracketError(f"no root for target {target} in lambda >= {lo_lim}")
        a = max(2.0 * a, lo_lim)
    while resid(b)[0] > 0:
        if b >= hi_lim:
            raise BracketError(f"no root for target {target} in lambda <= {hi_lim}")
        b = min(2.0 * b, hi_lim)

    lam = 0.0
    for _ in range(500):
        r, var = resid(lam)
        if abs(r) <= tol:
            return lam
        if r > 0:
            a = lam
        else:
            b = lam
        step = lam + r / var if var > 0 else np.nan
        lam = step if a < step < b else 0.5 * (a + b)
    raise BracketError(f"lambda iteration stalled for target {target}")


def _flux(samples: SampleSet, eps):
    return liouville_F((samples.q, samples.p), eps, samples.mass)


def _block_indices(n, block, n_resamples, rng):
    """Moving-block bootstrap index matrix of shape ``(n_resamples, n)``."""
    block = min(block, n)
    n_blocks = -(-n // block)
    starts = rng.integers(0, n - block + 1, size=(n_resamples, n_blocks))
    idx = (starts[:, :, None] + np.arange(block)).reshape(n_resamples, -1)
    return idx[:, :n]


def block_bootstrap_stderr(x, block_length=100, n_resamples=200, seed=0):
    """Moving-block bootstrap standard error of the mean of a series."""
    x = np.asarray(x, dtype=float)
    if x.size < 2 * block_length:
        raise ContractError("series too short for the block bootstrap")
    idx = _block_indices(x.size, block_length, n_resamples, np.random.default_rng(seed))
    return float(x[idx].mean(axis=1).std(ddof=1))


def _ratio_with_error(num, den, cfg, rng):
    """``sum(num)/sum(den)`` and its moving-block bootstrap standard error."""
    value = float(num.sum() / den.sum())
    idx = _block_indices(num.size, cfg.block_length, cfg.bootstrap_resamples, rng)
    boot = num[idx].sum(axis=1) / den[idx].sum(axis=1)
    return value, float(np.std(boot, ddof=1))


def _estimate(F, flux, lam, cfg, rng):
    logw = -lam * F.astype(float)
    w = np.exp(logw - logw.max())
    ess = float(w.sum() ** 2 / np.dot(w, w))
    if ess < MIN_ESS:
        raise DegenerateWeightsError(
            f"effective sample size {ess:.3g} < {MIN_ESS} at lambda={lam:.6g}")
    v, se = _ratio_with_error(w * flux, w, cfg, rng)
    return DriftEstimate(v, se, ess)


def _check_length(n, cfg):
    if n < 2 * cfg.block_length:
        raise ContractError(
            f"{n} samples is fewer than two bootstrap blocks of {cfg.block_length}")


def estimate_drift(traj, lam, cfg: ReweightConfig = ReweightConfig()) -> DriftEstimate:
    """Reweighted mean of the regularised flux under ``exp(-lam F)``.

    Returns the estimate, its block-bootstrap standard error and the
    effective sample size ``(sum w)^2 / sum w^2``.
    """
    samples = _samples(traj)
    _check_length(len(samples), cfg)
    flux = _flux(samples, _kernel_width(samples, cfg))
    rng = np.random.default_rng(cfg.seed)
    return _estimate(samples.F, flux, float(lam), cfg, rng)


def drift_curve(traj, targets: Sequence[float], cfg: ReweightConfig = ReweightConfig()) -> DriftCurve:
    """Solve for ``lambda`` and estimate the drift at every target, in order.

    Bootstrap streams for the targets are spawned from ``cfg.seed``.
    """
    samples = _samples(traj)
    _check_length(len(samples), cfg)
    targets = [float(t) for t in targets]
    if any(b <= a for a, b in zip(targets, targets[1:])):
        raise ContractError("targets must be strictly increasing")
    F = samples.F
    flux = _flux(samples, _kernel_width(samples, cfg))
    streams = np.random.SeedSequence(cfg.seed).spawn(len(targets))
    points = []
    for k, (target, ss) in enumerate(zip(targets, streams)):
        try:
            lam = solve_lambda(F, target, cfg)
            est = _estimate(F, flux, lam, cfg, np.random.default_rng(ss))
        except RelentError as exc:
            raise DriftTargetError(k, target, exc) from exc
        points.append(DriftPoint(target, lam, est.v, est.stderr, est.ess))
    return DriftCurve(tuple(points))


def _crossing_terms(traj: Trajectory, lam):
    """Per-interval net crossings, interval lengths and trapezoidal weights."""
    right = traj.q > 0.0
    crossings = (right[1:].astype(np.int64) - right[:-1]).sum(axis=1).astype(float)
    dt = np.diff(traj.t)
    logw = -lam * traj.F.astype(float)
    w = np.exp(logw - logw.max())
    wbar = 0.5 * (w[1:] + w[:-1])
    return crossings, dt, wbar


def crossing_flux(traj: Trajectory, lam) -> float:
    """Reweighted net rate of signed crossings of ``q = 0``.

    Each sampling interval contributes its net number of left-to-right
    crossings (counted per particle from sign changes) with the mean of the
    tilt weights at its two end samples; the denominator is the equally
    weighted elapsed time.
    """
    if len(traj) < 2:
        raise ContractError("need at least two samples")
    c, dt, wbar = _crossing_terms(traj, float(lam))
    return float(np.dot(wbar, c) / np.dot(wbar, dt))


def crossing_flux_with_error(traj: Trajectory, lam,
                             cfg: ReweightConfig = ReweightConfig()) -> DriftEstimate:
    """:func:`crossing_flux` with a block-bootstrap standard error."""
    _check_length(len(traj) - 1, cfg)
    c, dt, wbar = _crossing_terms(traj, float(lam))
    rng = np.random.default_rng(cfg.seed)
    v, se = _ratio_with_error(wbar * c, wbar * dt, cfg, rng)
    ess = float(wbar.sum() ** 2 / np.dot(wbar, wbar))
    return DriftEstimate(v, se, ess)
