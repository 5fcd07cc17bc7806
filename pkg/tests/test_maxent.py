import math

import numpy as np
import pytest

from relent import maxent
from relent.ensemble import (
    DiscreteSystem,
    Distribution,
    ShellDecomposition,
    equilibrium_from_invariants,
    gibbs_jaynes_entropy,
    shell_marginal,
)
from relent.exceptions import DivergentMultiplierError, InfeasibleConstraintError
from relent.maxent import ConstraintSet
from relent.verification import penalty_maximizer, random_system, tilted_targets


@pytest.fixture
def two_state():
    return DiscreteSystem(["up", "down"], observables={"F": [0.0, 1.0]})


@pytest.fixture
def fixture12():
    labels = ["a"] * 4 + ["b"] * 4 + ["c"] * 4
    H = [0.0, 0.5, 1.0, 1.5, 1.0, 1.5, 2.0, 2.5, 2.0, 2.5, 3.0, 3.5]
    F = [0, 1, 1, 2, 0, 1, 2, 3, 1, 1, 2, 2]
    m = [1, 1, 2, 1, 1, 2, 1, 1, 1, 1, 1, 2]
    sys = DiscreteSystem([f"z{i}" for i in range(12)], m, {"H": H, "F": F}, labels)
    shells = ShellDecomposition.from_probabilities(sys, {"a": 0.5, "b": 0.3, "c": 0.2})
    return sys, shells


# -- Gibbs-Jaynes -------------------------------------------------------------

def test_no_constraints_gives_uniform_in_measure():
    sys = DiscreteSystem(range(4), [1.0, 2.0, 3.0, 2.0])
    rel = maxent.solve_gibbs_jaynes(sys, ConstraintSet())
    np.testing.assert_allclose(rel.probabilities, [0.125, 0.25, 0.375, 0.25], rtol=1e-15)


def test_two_state_closed_form(two_state):
    rel = maxent.solve_gibbs_jaynes(two_state, ConstraintSet(("F",), (0.25,)))
    np.testing.assert_allclose(rel.probabilities, [0.75, 0.25], atol=1e-12)
    assert rel.multipliers.lam[0] == pytest.approx(math.log(3.0), abs=1e-10)
    assert rel.multipliers.mu_log_z == pytest.approx(math.log(4.0 / 3.0), abs=1e-10)


def test_eight_states_two_constraints_match_penalty_oracle():
    rng = np.random.default_rng(8)
    sys = random_system(rng, n_states=8, n_shells=1, n_obs=2)
    cons = tilted_targets(sys, ("F0", "F1"), np.array([0.5, -0.8]))
    rel = maxent.solve_gibbs_jaynes(sys, cons)
    oracle = penalty_maximizer(sys, cons)
    assert np.max(np.abs(rel.probabilities - oracle.probabilities)) < 1e-4
    np.testing.assert_allclose(rel.multipliers.lam, [0.5, -0.8], atol=1e-8)


def test_energy_multiplier_reported_as_beta():
    sys = DiscreteSystem(range(3), observables={"H": [0.0, 1.0, 2.0]})
    rel = maxent.solve_gibbs_jaynes(sys, ConstraintSet(("H",), (0.8,)))
    assert rel.multipliers.beta == rel.multipliers.lam[0]
    assert rel.multipliers.beta > 0


def test_target_outside_range_names_the_constraint(two_state):
    with pytest.raises(InfeasibleConstraintError) as err:
        maxent.solve_gibbs_jaynes(two_state, ConstraintSet(("F",), (1.5,)))
    assert err.value.name == "F"


def test_boundary_target_reports_divergent_multiplier(two_state):
    with pytest.raises(DivergentMultiplierError):
        maxent.solve_gibbs_jaynes(two_state, ConstraintSet(("F",), (1.0,)))


def test_constant_observable_with_matching_target_is_dropped():
    sys = DiscreteSystem(range(3), observables={"N": [2.0, 2.0, 2.0], "F": [0.0, 1.0, 2.0]})
    rel = maxent.solve_gibbs_jaynes(sys, ConstraintSet(("N", "F"), (2.0, 0.7)))
    assert rel.multipliers.lam[0] == 0.0
    assert sys.observable("F") @ rel.probabilities == pytest.approx(0.7, abs=1e-10)


def test_jointly_infeasible_targets_fail():
    # F1 = 1 - F0 on every state, so the two means must add to 1
    sys = DiscreteSystem(range(3), observables={"F0": [0.0, 0.5, 1.0], "F1": [1.0, 0.5, 0.0]})
    with pytest.raises(DivergentMultiplierError):
        maxent.solve_gibbs_jaynes(sys, ConstraintSet(("F0", "F1"), (0.3, 0.3)))


# -- relative routes ---------------------------------------------------------

def test_empty_constraints_return_base_object():
    base = Distribution([0.1, 0.6, 0.3])
    sys = DiscreteSystem(range(3))
    rel = maxent.solve_relative(base, sys, ConstraintSet())
    assert rel.result is base


def test_uniform_base_matches_gibbs_jaynes():
    rng = np.random.default_rng(4)
    sys = random_system(rng, n_states=10, n_shells=1, n_obs=2)
    cons = tilted_targets(sys, ("F0", "F1"), np.array([0.3, 0.2]))
    a = maxent.solve_relative(Distribution.uniform(sys), sys, cons)
    b = maxent.solve_gibbs_jaynes(sys, cons)
    assert np.max(np.abs(a.probabilities - b.probabilities)) < 1e-10


def test_relative_from_canonical_gives_generalized_canonical():
    rng = np.random.default_rng(6)
    H, F = rng.uniform(0, 3, 8), rng.normal(size=8)
    sys = DiscreteSystem(range(8), observables={"H": H, "F": F})
    canonical = Distribution.from_weights(np.exp(-0.7 * H))
    cons = tilted_targets(sys, ("F",), np.array([0.9]), base=canonical.probabilities)
    rel = maxent.solve_relative(canonical, sys, cons)
    direct = np.exp(-0.7 * H - 0.9 * F)
    np.testing.assert_allclose(rel.probabilities, direct / direct.sum(), atol=1e-12)


def test_shellwise_with_zero_multiplier_keeps_base(fixture12):
    sys, shells = fixture12
    base = equilibrium_from_invariants(shells, sys)
    target = float(sys.observable("F") @ base.probabilities)
    rel = maxent.solve_relative_shellwise(base, sys, ConstraintSet(("F",), (target,)))
    assert rel.result is base
    np.testing.assert_allclose(list(rel.multipliers.mu_log_z.values()), 0.0, atol=1e-15)


def test_shellwise_single_shell_equals_relative():
    rng = np.random.default_rng(9)
    sys = random_system(rng, n_states=7, n_shells=1, n_obs=1)
    base = Distribution(rng.dirichlet(np.ones(7)))
    cons = tilted_targets(sys, ("F0",), np.array([0.4]), base=base.probabilities)
    a = maxent.solve_relative_shellwise(base, sys, cons)
    b = maxent.solve_relative(base, sys, cons)
    assert np.max(np.abs(a.probabilities - b.probabilities)) < 1e-12


def test_shellwise_preserves_shell_probabilities(fixture12):
    sys, shells = fixture12
    base = equilibrium_from_invariants(shells, sys)
    rel = maxent.solve_relative_shellwise(base, sys, ConstraintSet(("F",), (0.9,)))
    np.testing.assert_allclose(shell_marginal(rel.result, sys).prob, shells.prob, atol=1e-15)


def test_fixture12_shellwise_equals_invariant_constrained(fixture12):
    sys, shells = fixture12
    cons = ConstraintSet(("F",), (0.883136,))
    a = maxent.solve_relative_shellwise(equilibrium_from_invariants(shells, sys), sys, cons)
    b = maxent.solve_jaynes_invariant_constrained(sys, shells, cons)
    assert np.max(np.abs(a.probabilities - b.probabilities)) < 1e-10


def test_invariant_constrained_without_constraints_is_equilibrium(fixture12):
    sys, shells = fixture12
    rel = maxent.solve_jaynes_invariant_constrained(sys, shells, ConstraintSet())
    np.testing.assert_allclose(rel.probabilities,
                               equilibrium_from_invariants(shells, sys).probabilities, atol=1e-16)


def test_symmetric_observable_within_shells_gives_zero_multiplier():
    sys = DiscreteSystem(range(6), observables={"F": [-1.0, 1.0, -2.0, 0.0, 2.0, 0.0]},
                         invariant_labels=[0, 0, 1, 1, 1, 1])
    shells = ShellDecomposition.from_probabilities(sys, {0: 0.4, 1: 0.6})
    rel = maxent.solve_jaynes_invariant_constrained(sys, shells, ConstraintSet(("F",), (0.0,)))
    assert rel.multipliers.lam[0] == 0.0
    np.testing.assert_allclose(rel.probabilities,
                               equilibrium_from_invariants(shells, sys).probabilities, atol=1e-16)


def test_zero_probability_shell_is_excluded():
    sys = DiscreteSystem(range(5), observables={"F": [0.0, 1.0, 0.0, 1.0, 2.0]},
                         invariant_labels=["a", "a", "b", "b", "b"])
    shells = ShellDecomposition.from_probabilities(sys, {"a": 1.0, "b": 0.0})
    rel = maxent.solve_jaynes_invariant_constrained(sys, shells, ConstraintSet(("F",), (0.25,)))
    np.testing.assert_allclose(rel.probabilities, [0.75, 0.25, 0, 0, 0], atol=1e-12)


# -- dual ----------------------------------------------------------------------

def test_dual_gradient_zero_when_base_meets_targets():
    rng = np.random.default_rng(10)
    sys = random_system(rng, n_states=10, n_shells=1, n_obs=2)
    base = Distribution(rng.dirichlet(np.ones(10)))
    F = np.vstack([sys.observable("F0"), sys.observable("F1")])
    cons = ConstraintSet(("F0", "F1"), tuple(F @ base.probabilities))
    _, grad = maxent.dual_value_and_gradient(np.zeros(2), base, cons, sys)
    assert np.max(np.abs(grad)) < 1e-15


@pytest.mark.parametrize("seed", range(5))
def test_dual_gradient_finite_differences(seed):
    rng = np.random.default_rng(seed)
    sys = random_system(rng, n_states=10, n_shells=3, n_obs=2)
    base = Distribution(rng.dirichlet(np.ones(10)))
    shells = shell_marginal(base, sys)
    cons = ConstraintSet(("F0", "F1"), tuple(rng.normal(scale=0.2, size=2)))
    lam = rng.normal(size=2)
    _, grad, hess = maxent.dual_value_and_gradient(lam, base, cons, sys, shells, hessian=True)
    h = 1e-6
    fd = [(maxent.dual_value_and_gradient(lam + e, base, cons, sys, shells)[0]
           - maxent.dual_value_and_gradient(lam - e, base, cons, sys, shells)[0]) / (2 * h)
          for e in np.eye(2) * h]
    assert np.linalg.norm(fd - grad) / np.linalg.norm(grad) < 1e-6
    assert np.linalg.eigvalsh(hess).min() >= -1e-12


# -- entropy at the solution -------------------------------------------------

def test_entropy_of_unconstrained_uniform_is_log_n():
    sys = DiscreteSystem(range(7))
    rel = maxent.solve_gibbs_jaynes(sys, ConstraintSet())
    assert maxent.entropy_at_solution(rel, sys) == pytest.approx(math.log(7), abs=1e-14)


def test_two_state_entropy_both_closed_forms(two_state):
    rel = maxent.solve_gibbs_jaynes(two_state, ConstraintSet(("F",), (0.25,)))
    direct = -(0.75 * math.log(0.75) + 0.25 * math.log(0.25))
    assert maxent.entropy_at_solution(rel, two_state) == pytest.approx(direct, abs=1e-12)
    assert gibbs_jaynes_entropy(rel.result, two_state) == pytest.approx(direct, abs=1e-12)


def test_entropy_at_solution_on_relative_route(fixture12):
    sys, shells = fixture12
    base = equilibrium_from_invariants(shells, sys)
    rel = maxent.solve_relative_shellwise(base, sys, ConstraintSet(("F",), (1.1,)))
    assert maxent.entropy_at_solution(rel, sys) == pytest.approx(
        gibbs_jaynes_entropy(rel.result, sys), abs=1e-12)
