"""Independent oracles, randomised fixtures and the ``verify`` check suite."""
from __future__ import annotations

import time
from importlib import resources
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp, softmax

from . import ensemble as ens
from . import maxent
from .ensemble import DiscreteSystem, Distribution, ShellDecomposition
from .exceptions import RelentError
from .maxent import ConstraintSet, SolverConfig


# -- random instances -------------------------------------------------------

def random_system(rng, n_states=None, n_shells=None, n_obs=3, max_states=64, max_shells=4):
    """Random system with every shell holding at least two states."""
    n_shells = n_shells or int(rng.integers(1, max_shells + 1))
    n_states = n_states or int(rng.integers(2 * n_shells, max_states + 1))
    labels = np.concatenate([np.tile(np.arange(n_shells), 2),
                             rng.integers(0, n_shells, n_states - 2 * n_shells)])
    rng.shuffle(labels)
    obs = {f"F{a}": rng.normal(size=n_states) for a in range(n_obs)}
    return DiscreteSystem(range(n_states), rng.uniform(0.5, 2.0, n_states), obs,
                          [int(x) for x in labels])


def random_shell_probs(rng, sys):
    P = rng.dirichlet(np.full(sys.n_shells, 2.0))
    P = P / P.sum()
    return ShellDecomposition.from_probabilities(sys, dict(zip(sys.shell_labels, P)))


def tilted_targets(sys, names, lam, shells=None, base=None):
    """Constraint values of a known tilt, so feasibility is guaranteed."""
    F = np.vstack([sys.observable(n) for n in names])
    q = sys.measure if base is None else np.asarray(base, dtype=float)
    s = np.log(q) - lam @ F
    rho = np.zeros(len(sys))
    if shells is None:
        rho = np.exp(s - logsumexp(s))
    else:
        for k in range(sys.n_shells):
            idx = sys.shell_members(k)
            rho[idx] = shells.prob[k] * np.exp(s[idx] - logsumexp(s[idx]))
    return ConstraintSet(tuple(names), tuple(F @ rho))


def random_distribution(rng, n, alpha=1.0):
    return Distribution(rng.dirichlet(np.full(n, alpha)))


# -- penalty-method oracle --------------------------------------------------

def penalty_maximizer(sys: DiscreteSystem, constraints: ConstraintSet,
                      weights=(1.0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8)):
    """Maximise ``S`` directly over the simplex.

    Softmax parameterisation, quadratic penalty with the weight schedule
    ``weights``, each stage warm-started and its multiplier estimate carried
    forward. Starting the schedule at 1 matters: a stiff first stage drives
    BFGS into the flat, saturated region of the softmax. Shares no code with
    the dual solvers.
    """
    F = constraints.matrix(sys)
    f = constraints.target_array
    log_m = np.log(sys.measure)
    theta = log_m.copy()
    nu = np.zeros(len(f))

    def objective(theta, w, nu):
        log_rho = theta - logsumexp(theta)
        rho = np.exp(log_rho)
        g = F @ rho - f
        neg_s = float(rho @ (log_rho - log_m))
        val = neg_s + nu @ g + 0.5 * w * g @ g
        d_rho = (log_rho - log_m + 1.0) + F.T @ (nu + w * g)
        return val, rho * (d_rho - rho @ d_rho)

    for w in weights:
        res = minimize(objective, theta, args=(w, nu), jac=True, method="BFGS",
                       options={"gtol": 1e-11, "maxiter": 20000})
        theta = res.x
        nu = nu + w * (F @ softmax(theta) - f)
    return Distribution(softmax(theta) / softmax(theta).sum())


# -- composite system x reservoir ------------------------------------------

class CompositeFixture(NamedTuple):
    system: DiscreteSystem
    reservoir: DiscreteSystem
    composite: DiscreteSystem
    constraints: ConstraintSet


def composite_fixture(seed=7, n_system=8, n_reservoir=32, lam=0.6, beta=0.8):
    """System with ``H_S`` and ``F`` coupled to a reservoir with ``H_R`` only.

    Targets come from the generalised canonical tilt at ``(lam, beta)``.
    """
    rng = np.random.default_rng(seed)
    hs = np.sort(rng.uniform(0.0, 3.0, n_system))
    fs = rng.normal(size=n_system)
    hr = np.sort(rng.uniform(0.0, 3.0, n_reservoir))
    ms = rng.uniform(0.5, 2.0, n_system)
    mr = rng.uniform(0.5, 2.0, n_reservoir)
    system = DiscreteSystem([f"s{i}" for i in range(n_system)], ms, {"F": fs, "H": hs})
    reservoir = DiscreteSystem([f"r{j}" for j in range(n_reservoir)], mr, {"H": hr})
    ids = [f"s{i}r{j}" for i in range(n_system) for j in range(n_reservoir)]
    composite = DiscreteSystem(
        ids, np.outer(ms, mr).ravel(),
        {"F": np.repeat(fs, n_reservoir), "H": np.add.outer(hs, hr).ravel(),
         "H_S": np.repeat(hs, n_reservoir), "H_R": np.tile(hr, n_system)})
    cons = tilted_targets(composite, ("F", "H"), np.array([lam, beta]))
    return CompositeFixture(system, reservoir, composite, cons)


def generalized_canonical(system: DiscreteSystem, lam, beta):
    """``m e^{-lam F - beta H_S} / Tr[...]`` evaluated directly."""
    s = np.log(system.measure) - lam * system.observable("F") - beta * system.observable("H")
    return np.exp(s - logsumexp(s))


def composite_report(fx: CompositeFixture, cfg=SolverConfig()):
    """Compare the composite solve with the reservoir-free constructions.

    Returns a dict of the error measures checked by the acceptance suite.
    """
    nS, nR = len(fx.system), len(fx.reservoir)
    total = maxent.solve_gibbs_jaynes(fx.composite, fx.constraints, cfg)
    lam, beta = total.multipliers.lam
    joint = total.probabilities.reshape(nS, nR)
    marg_s = joint.sum(axis=1)
    marg_r = joint.sum(axis=0)
    gcd = generalized_canonical(fx.system, lam, beta)

    canonical = Distribution.from_weights(fx.system.measure * np.exp(-beta * fx.system.observable("H")))
    via_relative = maxent.solve_relative(
        canonical, fx.system, ConstraintSet(("F",), (fx.constraints.targets[0],)), cfg)

    E_S = float(fx.system.observable("H") @ marg_s)
    E_R = float(fx.reservoir.observable("H") @ marg_r)
    sys_alone = maxent.solve_gibbs_jaynes(
        fx.system, ConstraintSet(("F", "H"), (fx.constraints.targets[0], E_S)), cfg)
    res_alone = maxent.solve_gibbs_jaynes(fx.reservoir, ConstraintSet(("H",), (E_R,)), cfg)
    S_total = maxent.entropy_at_solution(total, fx.composite)
    S_S = maxent.entropy_at_solution(sys_alone, fx.system)
    S_R = maxent.entropy_at_solution(res_alone, fx.reservoir)
    return {
        "gcd_marginal_error": float(np.max(np.abs(marg_s - gcd))),
        "relative_route_error": float(np.max(np.abs(via_relative.probabilities - gcd))),
        "factorization_error": float(np.max(np.abs(joint - np.outer(marg_s, marg_r)))),
        "entropy_split_error": abs(S_total - (S_S + S_R)),
        "entropy_formula_error": abs(S_total - ens.gibbs_jaynes_entropy(total.result, fx.composite)),
        "beta_system_error": abs(sys_alone.multipliers.beta - beta),
        "beta_reservoir_error": abs(res_alone.multipliers.beta - beta),
        "S_total": S_total, "S_S": S_S, "S_R": S_R, "beta": beta,
    }


# -- perturbations preserving constraints ----------------------------------

def constraint_preserving_perturbations(rho, F, rng, count):
    """Random distributions with the same normalisation and ``F``-means as ``rho``.

    Directions are drawn from the null space of ``[1; F]`` restricted to the
    support of ``rho``, scaled to stay inside the simplex.
    """
    rho = np.asarray(rho, dtype=float)
    A = np.vstack([np.ones_like(rho), np.atleast_2d(F)])
    _, s, vt = np.linalg.svd(A)
    rank = int(np.sum(s > 1e-12 * s[0]))
    null = vt[rank:]
    out = []
    for _ in range(count):
        d = rng.normal(size=null.shape[0]) @ null
        neg = d < 0
        t_max = np.min(rho[neg] / -d[neg]) if np.any(neg) else 1.0
        t = rng.uniform(0.05, 0.95) * t_max
        out.append(np.clip(rho + t * d, 0.0, None))
    return out


# -- check suite ------------------------------------------------------------

class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str
    seconds: float


def fixtures_dir():
    return Path(str(resources.files("relent") / "data"))


def _check_two_state(fdir):
    from .io import read_constraints, read_system
    sys = read_system(fdir / "two_state.sys")
    rel = maxent.solve_gibbs_jaynes(sys, read_constraints(fdir / "two_state.constraints"))
    err = max(abs(rel.multipliers.lam[0] - np.log(3.0)),
              float(np.max(np.abs(rel.probabilities - [0.75, 0.25]))))
    return err < 1e-10, f"max error {err:.2e}"


def _check_fixture_routes(fdir):
    from .io import read_constraints, read_distribution, read_system
    sys = read_system(fdir / "fixture12.sys")
    cons = read_constraints(fdir / "fixture12.constraints")
    base = read_distribution(fdir / "fixture12.base.csv", sys)
    shells = ens.shell_marginal(base, sys)
    a = maxent.solve_relative_shellwise(ens.equilibrium_from_invariants(shells, sys), sys, cons)
    b = maxent.solve_jaynes_invariant_constrained(sys, shells, cons)
    err = float(np.max(np.abs(a.probabilities - b.probabilities)))
    return err < 1e-10, f"sup-norm difference {err:.2e}"


def _check_identity(fdir, n=100):
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(n):
        sys = random_system(rng, n_obs=1)
        shells = random_shell_probs(rng, sys)
        rho = random_distribution(rng, len(sys))
        worst = max(worst, abs(ens.entropy_decomposition_residual(rho, shells, sys)))
    return worst < 1e-10, f"max residual {worst:.2e} over {n} pairs"


def _check_kl(fdir, n=1000):
    rng = np.random.default_rng(5)
    worst = min(ens.kl_divergence(random_distribution(rng, 6), random_distribution(rng, 6))
                for _ in range(n))
    return worst >= 0.0, f"min divergence {worst:.3e}"


def _check_lambda_zero(fdir):
    rng = np.random.default_rng(2)
    sys = random_system(rng, n_states=10, n_shells=2, n_obs=2)
    base = random_distribution(rng, 10)
    cons = ConstraintSet(("F0",), (float(sys.observable("F0") @ base.probabilities),))
    rel = maxent.solve_relative(base, sys, cons)
    empty = maxent.solve_relative(base, sys, ConstraintSet())
    ok = empty.result is base and np.array_equal(rel.probabilities, base.probabilities)
    return ok, "relevant distribution is the base" if ok else "base not reproduced"


def _check_dual_gradient(fdir, n=20):
    rng = np.random.default_rng(3)
    worst = 0.0
    min_eig = np.inf
    for _ in range(n):
        sys = random_system(rng, n_states=10, n_shells=2, n_obs=3)
        base = random_distribution(rng, 10)
        cons = ConstraintSet(("F0", "F1", "F2"), tuple(rng.normal(scale=0.3, size=3)))
        lam = rng.normal(size=3)
        _, grad, hess = maxent.dual_value_and_gradient(lam, base, cons, sys, hessian=True)
        fd = np.empty(3)
        for a in range(3):
            e = np.zeros(3)
            e[a] = 1e-6
            fd[a] = (maxent.dual_value_and_gradient(lam + e, base, cons, sys)[0]
                     - maxent.dual_value_and_gradient(lam - e, base, cons, sys)[0]) / 2e-6
        worst = max(worst, np.linalg.norm(fd - grad) / np.linalg.norm(grad))
        min_eig = min(min_eig, np.linalg.eigvalsh(hess).min())
    ok = worst < 1e-6 and min_eig > -1e-12
    return ok, f"max relative FD error {worst:.2e}, min Hessian eigenvalue {min_eig:.2e}"


def _check_drift_null(fdir):
    from .drift import ReweightConfig, SampleSet, estimate_drift
    rng = np.random.default_rng(4)
    q = rng.normal(scale=1.0, size=(400, 5))
    p = rng.normal(size=(400, 5))
    sym = SampleSet(q, p, 1.0, 0.3).momentum_symmetrized()
    worst = max(abs(estimate_drift(sym, lam, ReweightConfig(bootstrap_resamples=20)).v)
                for lam in np.linspace(-1.0, 1.0, 9))
    return worst < 1e-12, f"max |v| {worst:.2e}"


def _check_transport_linear(fdir):
    from .drift import DriftCurve
    from .transport import TransportConfig, integrate_f
    x = np.linspace(0.0, 2.0, 2001)
    curve = DriftCurve.from_arrays(x, -(x - 1.0))
    res = integrate_f(curve, TransportConfig(f0=0.0, t_end=3.0, dt_ode=1e-3))
    err = float(np.max(np.abs(res.f - (1.0 - np.exp(-res.t)))))
    return err < 1e-6, f"max error vs closed form {err:.2e}"


def _check_penalty_oracle(fdir, n=20):
    rng = np.random.default_rng(21)
    worst = 0.0
    for _ in range(n):
        n_states = int(rng.integers(3, 17))
        k = int(rng.integers(1, 3))
        sys = random_system(rng, n_states=n_states, n_shells=1, n_obs=k)
        names = tuple(sys.observables)
        cons = tilted_targets(sys, names, rng.normal(scale=0.7, size=k))
        rel = maxent.solve_gibbs_jaynes(sys, cons)
        oracle = penalty_maximizer(sys, cons)
        worst = max(worst, float(np.max(np.abs(rel.probabilities - oracle.probabilities))))
    return worst < 1e-4, f"max sup-norm difference {worst:.2e} over {n} instances"


def _check_route_equivalence(fdir, n=50):
    rng = np.random.default_rng(13)
    worst = 0.0
    for _ in range(n):
        sys = random_system(rng)
        shells = random_shell_probs(rng, sys)
        k = int(rng.integers(1, 4))
        names = tuple(sorted(sys.observables))[:k]
        cons = tilted_targets(sys, names, rng.normal(scale=0.7, size=k), shells)
        a = maxent.solve_relative_shellwise(ens.equilibrium_from_invariants(shells, sys), sys, cons)
        b = maxent.solve_jaynes_invariant_constrained(sys, shells, cons)
        worst = max(worst, float(np.max(np.abs(a.probabilities - b.probabilities))))
    return worst < 1e-9, f"max sup-norm difference {worst:.2e} over {n} systems"


def _check_composite(fdir):
    rep = composite_report(composite_fixture())
    worst = max(rep["gcd_marginal_error"], rep["relative_route_error"], rep["entropy_split_error"])
    return worst < 1e-8, f"max error {worst:.2e} (factorization {rep['factorization_error']:.1e})"


def _check_md_forces(fdir):
    from .md import SimConfig, double_well_potential, lj_force_energy
    cfg = SimConfig(n_particles=5)
    rng = np.random.default_rng(8)
    q = np.sort(rng.uniform(-3, 3, 5)) + np.arange(5) * 0.5
    _, force = lj_force_energy(q, cfg)
    h = 1e-6
    fd = np.empty(5)
    for i in range(5):
        e = np.zeros(5)
        e[i] = h
        fd[i] = -(lj_force_energy(q + e, cfg)[0] - lj_force_energy(q - e, cfg)[0]) / (2 * h)
    err_lj = float(np.max(np.abs(fd - force)) / max(np.max(np.abs(force)), 1e-300))
    x = rng.uniform(-6, 6, 100)
    _, fw = double_well_potential(x, 2.0, 3.0)
    fdw = -(double_well_potential(x + h, 2.0, 3.0)[0] - double_well_potential(x - h, 2.0, 3.0)[0]) / (2 * h)
    err_w = float(np.max(np.abs(fdw - fw) / np.maximum(np.abs(fw), 1.0)))
    return err_lj < 1e-6 and err_w < 1e-8, f"LJ FD error {err_lj:.1e}, well FD error {err_w:.1e}"


def _check_md_conservation(fdir):
    from .md import SimConfig, run
    cfg = SimConfig(n_steps=10_000, sample_stride=100)
    traj = run(cfg)
    drift = traj.max_relative_drift()
    return drift < 1e-6, f"relative energy drift {drift:.2e} over 1e4 steps"


def rk4_local_error_ratio(dt=0.1, n_ref=2000):
    """One-step phase-space error at ``dt`` over that at ``dt/2``.

    A single particle oscillates with small amplitude about the left
    minimum; the reference is the same step split into ``n_ref`` substeps.
    Fourth-order integration gives about 32.
    """
    from .md import PhaseState, SimConfig, rk4_step
    base = SimConfig(n_particles=1)
    q0 = base.well_minimum_position
    st = PhaseState([-q0 + 0.01], [0.02])

    def advance(h, n):
        cur, cfg = st, base.replace(dt=h / n)
        for _ in range(n):
            cur = rk4_step(cur, cfg)
        return cur

    errs = []
    for h in (dt, dt / 2):
        ref, one = advance(h, n_ref), advance(h, 1)
        errs.append(float(np.hypot(one.q - ref.q, one.p - ref.p)[0]))
    return errs[0] / errs[1]


def _check_rk4_order(fdir):
    ratio = rk4_local_error_ratio()
    return abs(ratio / 32.0 - 1.0) < 0.2, f"local error ratio under halving {ratio:.1f} (expected 32)"


CHECKS: list[tuple[str, str, Callable]] = [
    ("two_state_closed_form", "quick", _check_two_state),
    ("fixture12_route_equivalence", "quick", _check_fixture_routes),
    ("entropy_identity", "quick", _check_identity),
    ("kl_nonnegative", "quick", _check_kl),
    ("lambda_zero_identity", "quick", _check_lambda_zero),
    ("drift_odd_parity_null", "quick", _check_drift_null),
    ("transport_linear_relaxation", "quick", _check_transport_linear),
    ("dual_gradient_and_convexity", "full", _check_dual_gradient),
    ("penalty_oracle", "full", _check_penalty_oracle),
    ("route_equivalence_random", "full", _check_route_equivalence),
    ("generalized_canonical", "full", _check_composite),
    ("md_force_finite_differences", "full", _check_md_forces),
    ("rk4_step_halving", "full", _check_rk4_order),
    ("md_energy_conservation", "full", _check_md_conservation),
]


def run_checks(level="quick", fixtures=None):
    """Run the checks of ``level`` (``full`` includes ``quick``).

    Exceptions inside a check are reported as a failure of that check.
    """
    fdir = Path(fixtures) if fixtures is not None else fixtures_dir()
    levels = {"quick": ("quick",), "full": ("quick", "full")}[level]
    results = []
    for name, lvl, fn in CHECKS:
        if lvl not in levels:
            continue
        t0 = time.perf_counter()
        try:
            ok, detail = fn(fdir)
        except (RelentError, OSError, ValueError, ArithmeticError) as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t0))
    return results
