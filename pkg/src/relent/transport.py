"""Memoryless transport equation ``df/dt = sign * v(f)`` on a tabulated drift."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .drift import DriftCurve
from .exceptions import ContractError, RangeError
from .md import Trajectory


@dataclass(frozen=True)
class TransportConfig:
    f0: float
    t_end: float
    dt_ode: float = 1e-3
    drift_sign: int = 1

    def __post_init__(self):
        if not self.dt_ode > 0:
            raise ContractError("dt_ode must be positive")
        if not self.t_end >= 0:
            raise ContractError("t_end must be non-negative")
        if self.drift_sign not in (1, -1):
            raise ContractError("drift_sign must be +1 or -1")


@dataclass(frozen=True)
class TransportResult:
    t: np.ndarray
    f: np.ndarray
    left_range: bool = False
    comparison: tuple | None = None

    @property
    def series(self):
        return list(zip(self.t.tolist(), self.f.tolist()))


def interpolate_drift(curve: DriftCurve, f) -> float:
    """Piecewise-linear drift at ``f``; no extrapolation."""
    x = curve.targets
    f = float(f)
    if not x[0] <= f <= x[-1]:
        raise RangeError(f"f={f} outside the drift curve range [{x[0]}, {x[-1]}]")
    return float(np.interp(f, x, curve.v))


def integrate_f(curve: DriftCurve, cfg: TransportConfig) -> TransportResult:
    """Classic RK4 for ``df/dt = drift_sign * v(f)`` from ``f0`` to ``t_end``.

    If a stage leaves the tabulated range the integration stops and the
    partial series is returned with ``left_range=True``.
    """
    x, v = curve.targets, curve.v
    if len(x) < 2:
        raise ContractError("need at least two drift points to interpolate")
    lo, hi = x[0], x[-1]
    if not lo <= cfg.f0 <= hi:
        raise RangeError(f"f0={cfg.f0} outside the drift curve range [{lo}, {hi}]")
    n = int(np.ceil(cfg.t_end / cfg.dt_ode - 1e-9)) if cfg.t_end > 0 else 0
    h = cfg.t_end / n if n else 0.0
    sign = float(cfg.drift_sign)

    def rhs(f):
        if not lo <= f <= hi:
            raise RangeError(f)
        return sign * np.interp(f, x, v)

    ts = np.empty(n + 1)
    fs = np.empty(n + 1)
    ts[0], fs[0] = 0.0, cfg.f0
    f = cfg.f0
    for k in range(n):
        try:
            k1 = rhs(f)
            k2 = rhs(f + 0.5 * h * k1)
            k3 = rhs(f + 0.5 * h * k2)
            k4 = rhs(f + h * k3)
        except RangeError:
            return TransportResult(ts[:k + 1].copy(), fs[:k + 1].copy(), left_range=True)
        f = f + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        ts[k + 1] = (k + 1) * h
        fs[k + 1] = f
    return TransportResult(ts, fs)


def _tail_mean(t, y, start):
    return float(np.mean(y[t >= start]))


def compare_to_trajectory(result: TransportResult, traj: Trajectory):
    """RMSE against the sampled ``F(t)`` and the difference of final-10% means.

    Both series are restricted to their common time window; each ``f`` value
    is matched to the nearest trajectory sample.
    """
    ts, fs = result.t, result.f
    tt, F = traj.t, traj.F.astype(float)
    start, end = max(ts[0], tt[0]), min(ts[-1], tt[-1])
    if start > end:
        raise ContractError("transport result and trajectory do not overlap in time")
    sel = (ts >= start) & (ts <= end)
    tsel, fsel = ts[sel], fs[sel]
    j = np.clip(np.searchsorted(tt, tsel), 1, len(tt) - 1) if len(tt) > 1 else np.zeros(len(tsel), int)
    if len(tt) > 1:
        j = np.where(np.abs(tt[j - 1] - tsel) <= np.abs(tt[j] - tsel), j - 1, j)
    rmse = float(np.sqrt(np.mean((fsel - F[j]) ** 2)))
    tail = end - 0.1 * (end - start)
    tsel_traj = (tt >= start) & (tt <= end)
    plateau = abs(_tail_mean(tsel, fsel, tail) - _tail_mean(tt[tsel_traj], F[tsel_traj], tail))
    return rmse, plateau
