import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from relent.ensemble import DiscreteSystem, Distribution, ShellDecomposition
from relent.estimators import OrganisedDriftEstimator, RelevantEnsemble
from relent.exceptions import ContractError


@pytest.fixture
def two_state():
    return DiscreteSystem(["up", "down"], observables={"F": [0.0, 1.0]})


def test_params_round_trip():
    est = RelevantEnsemble(route="relative", tol=1e-9)
    assert est.get_params()["route"] == "relative"
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    est.set_params(max_iter=5)
    assert est.max_iter == 5


def test_fit_two_state(two_state):
    est = RelevantEnsemble().fit(two_state, {"F": 0.25})
    np.testing.assert_allclose(est.predict_proba(), [0.75, 0.25], atol=1e-12)
    assert est.multipliers_["F"] == pytest.approx(math.log(3.0), abs=1e-10)
    assert est.expectation("F") == pytest.approx(0.25, abs=1e-12)
    assert est.beta_ is None


def test_unfitted_raises():
    with pytest.raises(NotFittedError):
        RelevantEnsemble().predict_proba()


def test_routes_need_inputs(two_state):
    with pytest.raises(ContractError):
        RelevantEnsemble(route="relative").fit(two_state, {"F": 0.3})
    with pytest.raises(ContractError):
        RelevantEnsemble(route="sideways").fit(two_state, {"F": 0.3})


def test_invariant_route_via_shells():
    sys_ = DiscreteSystem(range(4), observables={"F": [0.0, 1.0, 0.0, 2.0]},
                          invariant_labels=["a", "a", "b", "b"])
    shells = ShellDecomposition.from_probabilities(sys_, {"a": 0.6, "b": 0.4})
    est = RelevantEnsemble(route="jaynes-invariant").fit(sys_, {"F": 0.9}, shells=shells)
    p = est.predict_proba()
    assert p[:2].sum() == pytest.approx(0.6, abs=1e-15)
    assert est.expectation("F") == pytest.approx(0.9, abs=1e-10)


def test_relative_route_from_base(two_state):
    base = Distribution([0.5, 0.5])
    est = RelevantEnsemble(route="relative").fit(two_state, {"F": 0.25}, base=base)
    np.testing.assert_allclose(est.predict_proba(), [0.75, 0.25], atol=1e-12)


def test_drift_estimator_matches_functional_api(desk_trajectory, desk_curve, desk_targets):
    est = OrganisedDriftEstimator().fit(desk_trajectory)
    np.testing.assert_array_equal(est.predict(desk_targets), desk_curve.v)
    assert est.range_ == (int(desk_trajectory.F.min()), int(desk_trajectory.F.max()))
    assert est.lambda_for(desk_targets[0]) == desk_curve.lambdas[0]


def test_drift_estimator_unfitted():
    with pytest.raises(NotFittedError):
        OrganisedDriftEstimator().predict([1.0])


def test_drift_estimator_params():
    est = OrganisedDriftEstimator(block_length=50, random_state=3)
    assert clone(est).get_params()["block_length"] == 50
