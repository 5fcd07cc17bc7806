import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relent.drift import (
    DriftCurve,
    ReweightConfig,
    SampleSet,
    block_bootstrap_stderr,
    crossing_flux,
    drift_curve,
    effective_sample_size,
    estimate_drift,
    reweighted_mean,
    solve_lambda,
)
from relent.exceptions import (
    ContractError,
    DegenerateWeightsError,
    DriftTargetError,
    InfeasibleConstraintError,
)
from relent.md import SimConfig, Trajectory, liouville_F

CFG = SimConfig(n_particles=2)


def _traj(t, q, p=None):
    q = np.asarray(q, dtype=float)
    p = np.zeros_like(q) if p is None else np.asarray(p, dtype=float)
    n = len(t)
    return Trajectory(t, np.count_nonzero(q > 0, axis=1), np.ones(n), np.ones(n), q, p,
                      SimConfig(n_particles=q.shape[1]))


def _bisect_lambda(F, target, lo=-50.0, hi=50.0):
    """Plain bisection on the decreasing map lambda -> tilted mean of F."""
    F = np.asarray(F, dtype=float)

    def mean(lam):
        w = np.exp(-lam * (F - F.min()))
        return np.sum(w * F) / np.sum(w)

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mean(mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), mean(0.5 * (lo + hi))


# -- self-normalised weights --------------------------------------------------

def test_reweighted_mean_is_scale_invariant():
    rng = np.random.default_rng(0)
    x = rng.normal(size=50)
    logw = rng.integers(-5, 5, 50).astype(float)
    assert reweighted_mean(x, logw) == reweighted_mean(x, logw + 3.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(-30, 30))
def test_reweighted_mean_invariant_to_constant_shift(c):
    rng = np.random.default_rng(1)
    x = rng.normal(size=30)
    logw = rng.normal(size=30)
    assert reweighted_mean(x, logw + c) == pytest.approx(reweighted_mean(x, logw), rel=1e-12)


def test_effective_sample_size_bounds():
    assert effective_sample_size(np.zeros(40)) == pytest.approx(40.0)
    assert effective_sample_size([0.0, -800.0, -800.0]) == pytest.approx(1.0)


# -- lambda solve ---------------------------------------------------------------

def test_target_at_sample_mean_gives_zero_lambda():
    F = np.array([0, 1, 1, 2, 3, 2, 1, 0, 4, 2])
    assert abs(solve_lambda(F, F.mean())) < 1e-8


def test_two_point_closed_form():
    F = np.array([0] * 75 + [1] * 25)
    assert solve_lambda(F, 0.5) == pytest.approx(-math.log(3.0), abs=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_lambda_matches_bisection_oracle(seed):
    rng = np.random.default_rng(seed)
    F = rng.binomial(12, rng.uniform(0.2, 0.8), size=500)
    target = rng.uniform(F.min() + 0.3, F.max() - 0.3)
    lam = solve_lambda(F, target)
    ref_lam, _ = _bisect_lambda(F, target)
    w = np.exp(-lam * (F - F.min()))
    assert abs(np.sum(w * F) / np.sum(w) - target) < 1e-8
    assert lam == pytest.approx(ref_lam, abs=1e-6)


def test_target_outside_sampled_range_is_infeasible():
    F = np.array([1, 2, 3, 2])
    for target in (0.5, 1.0, 3.0, 4.0):
        with pytest.raises(InfeasibleConstraintError):
            solve_lambda(F, target)


# -- drift estimate -------------------------------------------------------------

def _random_samples(rng, n=600, N=6, width=0.5):
    return SampleSet(rng.normal(scale=1.5, size=(n, N)), rng.normal(size=(n, N)), 1.0, width)


def test_zero_lambda_is_plain_mean_of_flux():
    rng = np.random.default_rng(2)
    s = _random_samples(rng)
    est = estimate_drift(s, 0.0)
    assert est.v == pytest.approx(np.mean(liouville_F((s.q, s.p), 0.5)), rel=1e-12)
    assert est.ess == pytest.approx(len(s))


def test_symmetrised_samples_have_zero_drift():
    rng = np.random.default_rng(3)
    sym = _random_samples(rng).momentum_symmetrized()
    for lam in np.linspace(-1, 1, 9):
        assert abs(estimate_drift(sym, lam, ReweightConfig(bootstrap_resamples=10)).v) < 1e-12


def test_degenerate_weights_are_rejected():
    F_heavy = np.zeros((300, 3))
    F_heavy[0] = 1.0
    s = SampleSet(F_heavy, np.ones((300, 3)), 1.0, 0.3)
    with pytest.raises(DegenerateWeightsError):
        estimate_drift(s, -60.0)


def test_too_few_samples_for_bootstrap():
    s = SampleSet(np.zeros((150, 2)), np.zeros((150, 2)), 1.0, 0.3)
    with pytest.raises(ContractError):
        estimate_drift(s, 0.0)


def test_kernel_width_required():
    s = SampleSet(np.zeros((300, 2)), np.zeros((300, 2)))
    with pytest.raises(ContractError):
        estimate_drift(s, 0.0)


# -- drift curve -----------------------------------------------------------------

def test_single_target_at_mean(desk_trajectory):
    target = float(np.mean(desk_trajectory.F))
    curve = drift_curve(desk_trajectory, [target])
    assert len(curve) == 1
    assert abs(curve.lambdas[0]) < 1e-8


def test_curve_target_outside_range_names_target(desk_trajectory):
    with pytest.raises(DriftTargetError) as err:
        drift_curve(desk_trajectory, [1.0, float(desk_trajectory.F.max()) + 1.0])
    assert err.value.index == 1
    assert isinstance(err.value.cause, InfeasibleConstraintError)


def test_curve_is_reproducible(desk_trajectory, desk_curve, desk_targets):
    again = drift_curve(desk_trajectory, desk_targets)
    assert again.points == desk_curve.points


def test_curve_multipliers_decrease(desk_curve):
    assert np.all(np.diff(desk_curve.lambdas) < 0)


def test_curve_targets_must_increase():
    with pytest.raises(ContractError):
        DriftCurve.from_arrays([1.0, 1.0], [0.0, 0.0])


# -- crossing flux ---------------------------------------------------------------

def test_no_crossings_gives_zero():
    t = np.arange(5.0)
    q = np.full((5, 2), -1.0)
    assert crossing_flux(_traj(t, q), 0.0) == 0.0


def test_single_crossing_rate_is_one_over_T():
    t = np.linspace(0.0, 8.0, 9)
    q = np.full((9, 2), -1.0)
    q[5:, 0] = 1.0
    assert crossing_flux(_traj(t, q), 0.0) == pytest.approx(1.0 / 8.0, rel=1e-15)


def test_back_and_forth_crossings_cancel():
    t = np.linspace(0.0, 4.0, 5)
    q = np.full((5, 1), -1.0)
    q[2, 0] = 1.0
    assert crossing_flux(_traj(t, q), 0.7) == 0.0


def test_crossing_flux_agrees_with_kernel(desk_trajectory, desk_curve):
    from relent.drift import crossing_flux_with_error
    pt = desk_curve.points[len(desk_curve) // 2]
    cf = crossing_flux_with_error(desk_trajectory, pt.lam)
    assert abs(cf.v - pt.v) < 3 * math.hypot(cf.stderr, pt.v_stderr)


# -- block bootstrap -----------------------------------------------------------------

def test_block_bootstrap_of_iid_series_near_textbook_error():
    x = np.random.default_rng(5).normal(size=20_000)
    se = block_bootstrap_stderr(x, block_length=50, n_resamples=400, seed=1)
    assert se == pytest.approx(1.0 / math.sqrt(x.size), rel=0.2)


def test_block_bootstrap_sees_correlation():
    rng = np.random.default_rng(6)
    x = np.repeat(rng.normal(size=400), 50)
    naive = x.std() / math.sqrt(x.size)
    assert block_bootstrap_stderr(x, block_length=200, seed=2) > 3 * naive
