"""One-dimensional Lennard-Jones particles in a quartic double well.

The system is isolated: Hamilton's equations are integrated with the
classic fourth-order Runge-Kutta scheme, and the relevant variable is the
number of particles on the right of the barrier (``q > 0``).

All quantities are in reduced units (``k_B = 1``).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numba
import numpy as np

from .exceptions import (
    ContractError,
    EnergyDriftError,
    InitializationError,
    IntegrationBlowupError,
)

RNG_ALGORITHM = "numpy.random.PCG64"
LJ_MIN = 2.0 ** (1.0 / 6.0)
OVERLAP_FRACTION = 1e-6
MAX_RELATIVE_DRIFT = 1e-4


@dataclass(frozen=True)
class SimConfig:
    """Complete, seedable description of one MD experiment.

    Lengths are in the same units as ``lj_sigma`` except ``lj_cutoff``,
    which is a multiple of ``lj_sigma``.
    """

    n_particles: int = 20
    mass: float = 1.0
    lj_epsilon: float = 0.25
    lj_sigma: float = 0.3
    lj_cutoff: float = 2.5
    well_barrier_height: float = 1.0
    well_minimum_position: float = 6.0
    dt: float = 1e-4
    n_steps: int = 1_000_000
    sample_stride: int = 100
    seed: int = 0
    target_energy_per_particle: float = 0.8
    init_side: str = "left"

    def __post_init__(self):
        if not self.dt > 0:
            raise ContractError("dt must be positive")
        if self.n_particles < 1:
            raise ContractError("n_particles must be >= 1")
        if not self.well_barrier_height > 0:
            raise ContractError("well_barrier_height must be positive")
        if not self.well_minimum_position > 0:
            raise ContractError("well_minimum_position must be positive")
        if self.lj_cutoff < LJ_MIN:
            raise ContractError("lj_cutoff must be at least 2^(1/6) (units of sigma)")
        if not (self.mass > 0 and self.lj_sigma > 0 and self.lj_epsilon >= 0):
            raise ContractError("mass and lj_sigma must be positive, lj_epsilon >= 0")
        if self.n_steps < 0 or self.sample_stride < 1:
            raise ContractError("n_steps must be >= 0 and sample_stride >= 1")
        if self.init_side not in ("left", "right"):
            raise ContractError("init_side must be 'left' or 'right'")

    @classmethod
    def field_names(cls):
        return [f.name for f in dataclasses.fields(cls)]

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    @property
    def _params(self):
        return (
            float(self.mass),
            float(self.lj_epsilon),
            float(self.lj_sigma),
            float(self.lj_cutoff * self.lj_sigma),
            float(self.well_barrier_height),
            float(self.well_minimum_position),
        )


@dataclass(frozen=True)
class PhaseState:
    q: np.ndarray
    p: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        p = np.array(self.p, dtype=float)
        if q.ndim != 1 or q.shape != p.shape:
            raise ContractError("q and p must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ContractError("phase state has non-finite entries")
        q.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "t", float(self.t))

    @property
    def n_particles(self):
        return self.q.size

    def mirrored(self) -> "PhaseState":
        """Apply ``q -> -q, p -> -p``."""
        return PhaseState(-self.q, -self.p, self.t)


@dataclass(frozen=True)
class Trajectory:
    """Sampled history of one run, stored column-wise.

    ``q`` and ``p`` have shape ``(n_samples, n_particles)``.
    """

    t: np.ndarray
    F: np.ndarray
    E_total: np.ndarray
    E_kinetic: np.ndarray
    q: np.ndarray
    p: np.ndarray
    config: SimConfig
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        n = t.size
        if n > 1 and not np.all(np.diff(t) > 0):
            raise ContractError("sample times must be strictly increasing")
        F = np.asarray(self.F)
        q = np.asarray(self.q, dtype=float).reshape(n, -1)
        p = np.asarray(self.p, dtype=float).reshape(n, -1)
        if F.shape != (n,) or q.shape != p.shape:
            raise ContractError("trajectory columns have inconsistent lengths")
        if np.any(F != np.round(F)) or np.any(F < 0) or np.any(F > q.shape[1]):
            raise ContractError("F must be integer-valued in [0, N]")
        for name, arr in (("t", t), ("F", F.astype(np.int64)), ("q", q), ("p", p),
                          ("E_total", np.asarray(self.E_total, dtype=float)),
                          ("E_kinetic", np.asarray(self.E_kinetic, dtype=float))):
            arr = np.array(arr)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self):
        return self.t.size

    @property
    def n_particles(self):
        return self.q.shape[1]

    def state(self, j) -> PhaseState:
        return PhaseState(self.q[j], self.p[j], self.t[j])

    @property
    def samples(self):
        """Iterate ``(t, state, F, E_total, E_kinetic)`` tuples."""
        for j in range(len(self)):
            yield (self.t[j], self.state(j), int(self.F[j]),
                   self.E_total[j], self.E_kinetic[j])

    def select(self, index) -> "Trajectory":
        """Sub-trajectory of the samples picked by ``index`` (slice or mask)."""
        return dataclasses.replace(
            self, t=self.t[index], F=self.F[index], E_total=self.E_total[index],
            E_kinetic=self.E_kinetic[index], q=self.q[index], p=self.p[index])

    def max_relative_drift(self):
        e0 = self.E_total[0]
        return float(np.max(np.abs(self.E_total - e0)) / abs(e0))


# --------------------------------------------------------------------------
# Numba kernels. Pair loops run in fixed order so reductions are deterministic.

@numba.njit(cache=True)
def _well(q, B, q0):
    x = q / q0
    s = x * x - 1.0
    return B * s * s, -4.0 * B * s * x / q0


@numba.njit(cache=True)
def _lj_pair(r2, eps, sig2, rc2, vshift):
    # returns (energy, f/r) for the truncated-and-shifted potential
    if r2 >= rc2:
        return 0.0, 0.0
    s6 = (sig2 / r2) ** 3
    s12 = s6 * s6
    return 4.0 * eps * (s12 - s6) - vshift, 24.0 * eps * (2.0 * s12 - s6) / r2


@numba.njit(cache=True)
def _lj_forces(q, eps, sig, rc, out):
    n = q.size
    sig2 = sig * sig
    rc2 = rc * rc
    sr6 = (sig2 / rc2) ** 3
    vshift = 4.0 * eps * (sr6 * sr6 - sr6)
    min2 = (OVERLAP_FRACTION * sig) ** 2
    energy = 0.0
    for i in range(n):
        out[i] = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            dr = q[i] - q[j]
            r2 = dr * dr
            if r2 < min2:
                return energy, i, j
            e, fr = _lj_pair(r2, eps, sig2, rc2, vshift)
            energy += e
            out[i] += fr * dr
            out[j] -= fr * dr
    return energy, -1, -1


@numba.njit(cache=True)
def _total_forces(q, eps, sig, rc, B, q0, out):
    e_lj, bi, bj = _lj_forces(q, eps, sig, rc, out)
    e_w = 0.0
    for i in range(q.size):
        v, f = _well(q[i], B, q0)
        e_w += v
        out[i] += f
    return e_lj + e_w, bi, bj


@numba.njit(cache=True)
def _rk4_steps(q, p, nsteps, dt, m, eps, sig, rc, B, q0):
    """Advance (q, p) in place by ``nsteps`` RK4 steps.

    Returns ``(status, i, j)``: 0 ok, 1 overlap between i and j, 2 non-finite.
    """
    n = q.size
    f1 = np.empty(n)
    f2 = np.empty(n)
    f3 = np.empty(n)
    f4 = np.empty(n)
    qs = np.empty(n)
    inv_m = 1.0 / m
    h2 = 0.5 * dt
    h6 = dt / 6.0
    for _ in range(nsteps):
        _, bi, bj = _total_forces(q, eps, sig, rc, B, q0, f1)
        if bi >= 0:
            return 1, bi, bj
        for i in range(n):
            qs[i] = q[i] + h2 * p[i] * inv_m
        _, bi, bj = _total_forces(qs, eps, sig, rc, B, q0, f2)
        if bi >= 0:
            return 1, bi, bj
        for i in range(n):
            qs[i] = q[i] + h2 * (p[i] + h2 * f1[i]) * inv_m
        _, bi, bj = _total_forces(qs, eps, sig, rc, B, q0, f3)
        if bi >= 0:
            return 1, bi, bj
        for i in range(n):
            qs[i] = q[i] + dt * (p[i] + h2 * f2[i]) * inv_m
        _, bi, bj = _total_forces(qs, eps, sig, rc, B, q0, f4)
        if bi >= 0:
            return 1, bi, bj
        # stage momenta: k_p = p + c*f_prev, so the q-update sums the p-stages
        for i in range(n):
            dq = h6 * inv_m * (
                p[i] + 2.0 * (p[i] + h2 * f1[i]) + 2.0 * (p[i] + h2 * f2[i])
                + (p[i] + dt * f3[i])
            )
            q[i] += dq
            p[i] += h6 * (f1[i] + 2.0 * f2[i] + 2.0 * f3[i] + f4[i])
        for i in range(n):
            if not (np.isfinite(q[i]) and np.isfinite(p[i])):
                return 2, i, i
    return 0, -1, -1


# --------------------------------------------------------------------------

def double_well_potential(q, B, q0):
    """Quartic double well ``B((q/q0)^2 - 1)^2`` and its force ``-dV/dq``.

    Works on scalars and arrays.
    """
    q = np.asarray(q, dtype=float)
    x = q / q0
    s = x * x - 1.0
    energy = B * s * s
    force = -4.0 * B * s * x / q0
    if energy.ndim == 0:
        return float(energy), float(force)
    return energy, force


def lj_force_energy(q, cfg: SimConfig):
    """Truncated-and-shifted pair Lennard-Jones energy and forces.

    Raises
    ------
    IntegrationBlowupError
        If two particles are closer than ``1e-6 * sigma``.
    """
    q = np.ascontiguousarray(q, dtype=float)
    out = np.empty_like(q)
    _, eps, sig, rc, _, _ = cfg._params
    energy, bi, bj = _lj_forces(q, eps, sig, rc, out)
    if bi >= 0:
        raise IntegrationBlowupError(
            f"particles {bi} and {bj} overlap (|dq| < {OVERLAP_FRACTION} sigma)",
            pair=(int(bi), int(bj)))
    return float(energy), out


def kinetic_energy(p, mass):
    p = np.asarray(p, dtype=float)
    return float(np.sum(p * p) / (2.0 * mass))


def total_energy(state: PhaseState, cfg: SimConfig) -> float:
    e_lj, _ = lj_force_energy(state.q, cfg)
    e_w, _ = double_well_potential(state.q, cfg.well_barrier_height,
                                   cfg.well_minimum_position)
    return kinetic_energy(state.p, cfg.mass) + e_lj + float(np.sum(e_w))


def _advance(q, p, nsteps, cfg):
    status, i, j = _rk4_steps(q, p, nsteps, float(cfg.dt), *cfg._params)
    if status == 1:
        raise IntegrationBlowupError(
            f"particles {i} and {j} overlap (|dq| < {OVERLAP_FRACTION} sigma)",
            pair=(int(i), int(j)))
    if status == 2:
        raise IntegrationBlowupError(f"non-finite coordinate for particle {i}")


def rk4_step(state: PhaseState, cfg: SimConfig) -> PhaseState:
    """One classic RK4 step of ``dq/dt = p/m``, ``dp/dt = F(q)``."""
    q = np.array(state.q)
    p = np.array(state.p)
    _advance(q, p, 1, cfg)
    return PhaseState(q, p, state.t + cfg.dt)


def count_right(state) -> int:
    """Number of particles with ``q > 0`` (a particle exactly at 0 counts as left)."""
    q = state.q if isinstance(state, PhaseState) else np.asarray(state)
    return int(np.count_nonzero(q > 0.0))


def initial_positions(cfg: SimConfig):
    n = cfg.n_particles
    q0 = cfg.well_minimum_position
    spacing = LJ_MIN * cfg.lj_sigma
    q = -q0 + spacing * (np.arange(n) - 0.5 * (n - 1))
    if cfg.init_side == "right":
        q = -q[::-1]
    if cfg.init_side == "left" and q[-1] >= 0.0 or cfg.init_side == "right" and q[0] <= 0.0:
        raise InitializationError(
            f"cannot fit {n} particles at spacing {spacing:.4g} inside the "
            f"{cfg.init_side} well (q0={q0})")
    return q


def initialize(cfg: SimConfig) -> PhaseState:
    """Place the particles in one well and draw momenta with the target energy.

    Positions are evenly spaced at the Lennard-Jones minimum distance and
    centred on the well minimum. Momenta are Gaussian, then rescaled so the
    total energy equals ``n_particles * target_energy_per_particle``.
    """
    q = initial_positions(cfg)
    potential = total_energy(PhaseState(q, np.zeros_like(q)), cfg)
    kinetic = cfg.n_particles * cfg.target_energy_per_particle - potential
    if kinetic < 0:
        raise InitializationError(
            f"target energy {cfg.target_energy_per_particle} per particle is below "
            f"the potential energy of the initial placement ({potential / cfg.n_particles:.6g})")
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    p = rng.standard_normal(cfg.n_particles)
    ke = kinetic_energy(p, cfg.mass)
    if kinetic == 0.0:
        p[:] = 0.0
    else:
        p *= np.sqrt(kinetic / ke)
    return PhaseState(q, p, 0.0)


def run(cfg: SimConfig, state: PhaseState | None = None) -> Trajectory:
    """Integrate ``cfg.n_steps`` RK4 steps, sampling every ``sample_stride`` steps.

    The run is aborted with :class:`EnergyDriftError` as soon as a sample's
    relative energy error exceeds 1e-4; the partial trajectory is attached.
    """
    if state is None:
        state = initialize(cfg)
    q = np.array(state.q)
    p = np.array(state.p)
    n_samples = cfg.n_steps // cfg.sample_stride + 1
    tail = cfg.n_steps % cfg.sample_stride
    if tail:
        n_samples += 1
    ts = np.empty(n_samples)
    Qs = np.empty((n_samples, q.size))
    Ps = np.empty((n_samples, q.size))
    Es = np.empty(n_samples)
    Ks = np.empty(n_samples)
    steps = 0

    def record(j):
        ts[j] = state.t + steps * cfg.dt
        Qs[j] = q
        Ps[j] = p
        Ks[j] = kinetic_energy(p, cfg.mass)
        Es[j] = total_energy(PhaseState(q, p), cfg)

    def build(n):
        return Trajectory(ts[:n], np.count_nonzero(Qs[:n] > 0.0, axis=1), Es[:n],
                          Ks[:n], Qs[:n], Ps[:n], cfg, {"generator": RNG_ALGORITHM})

    record(0)
    e0 = Es[0]
    for j in range(1, n_samples):
        chunk = min(cfg.sample_stride, cfg.n_steps - steps)
        _advance(q, p, chunk, cfg)
        steps += chunk
        record(j)
        drift = abs(Es[j] - e0) / abs(e0) if e0 != 0.0 else abs(Es[j])
        if drift > MAX_RELATIVE_DRIFT:
            raise EnergyDriftError(
                f"relative energy drift {drift:.3g} exceeds {MAX_RELATIVE_DRIFT} "
                f"at t={ts[j]:.6g}", trajectory=build(j + 1))
    return build(n_samples)


def kinetic_temperature(traj: Trajectory, side_filter="all"):
    """Time mean and standard deviation of the 1-D kinetic temperature.

    Per sample, ``T = (1/n) sum p^2/m`` over the selected particles. Samples in
    which the filter selects nobody are skipped.
    """
    if len(traj) < 2:
        raise ContractError("need at least two samples")
    p2 = traj.p ** 2 / traj.config.mass
    if side_filter == "all":
        mask = np.ones_like(p2, dtype=bool)
    elif side_filter == "right":
        mask = traj.q > 0.0
    elif side_filter == "left":
        mask = traj.q <= 0.0
    else:
        raise ContractError(f"unknown side_filter {side_filter!r}")
    counts = mask.sum(axis=1)
    keep = counts > 0
    if not np.any(keep):
        raise ContractError(f"no particles selected by side_filter={side_filter!r}")
    temps = (p2 * mask).sum(axis=1)[keep] / counts[keep]
    return float(temps.mean()), float(temps.std())


def liouville_F(state, eps, mass=1.0):
    """Kernel-regularised ``{H, F} = sum_i delta(q_i) p_i / m``.

    ``state`` may be a :class:`PhaseState`, or a pair of ``(q, p)`` arrays
    whose last axis runs over particles (one value per row is returned).
    """
    if eps <= 0:
        raise ContractError("kernel width must be positive")
    if isinstance(state, PhaseState):
        q, p = state.q, state.p
    else:
        q, p = (np.asarray(a, dtype=float) for a in state)
    g = np.exp(-0.5 * (q / eps) ** 2) / (eps * np.sqrt(2.0 * np.pi))
    out = np.sum(g * p, axis=-1) / mass
    return float(out) if np.ndim(out) == 0 else out
