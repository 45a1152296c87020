import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from bidpacer.auction import generate_bid_log
from bidpacer.cost import parse_cost
from bidpacer.engine import CampaignConfig, PacingState, pace_step, run_campaign
from bidpacer.errors import ContractError
from bidpacer.estimator import BudgetPacer


def test_get_params_and_clone():
    est = BudgetPacer(budget=500.0, periods=20, schedule="scaled:" + ",".join(["1"] * 20))
    params = est.get_params()
    assert params["budget"] == 500.0 and params["periods"] == 20
    twin = clone(est)
    assert twin.get_params() == params


def test_fit_matches_run_campaign():
    est = BudgetPacer(budget=50000, periods=1000, initial_bid=50.0).fit("min(1*b^0.5,100)")
    traj = run_campaign(CampaignConfig(50000, 1000, initial_bid=50.0), parse_cost("min(1*b^0.5,100)"))
    assert est.trajectory_.records == traj.records
    assert est.converged_at_ == traj.converged_at
    assert est.score() == pytest.approx(0.999, abs=0.002)
    check_is_fitted(est)


def test_fit_bid_log_clamps_by_default():
    est = BudgetPacer(budget=20000, periods=96).fit(generate_bid_log(1))
    assert est.config_.clamp_enabled is True
    assert len(est.trajectory_.outcomes) == est.n_periods_
    assert 0.9 < est.spend_fraction_ <= 1.0


def test_fit_bid_log_clamp_can_be_disabled():
    est = BudgetPacer(budget=20000, periods=96, clamp_enabled=False).fit(generate_bid_log(1))
    assert est.config_.clamp_enabled is False


def test_predict_replays_rule():
    est = BudgetPacer(budget=100, periods=10, initial_bid=1.0)
    bids = est.predict([2.0, 9.8])
    assert bids == pytest.approx([1.0, 4.9, 4.9], rel=1e-15)


def test_partial_fit_matches_pace_step():
    est = BudgetPacer(budget=100, periods=10, initial_bid=1.0)
    config = CampaignConfig(100, 10, initial_bid=1.0)
    state = PacingState.initial(config)
    for cost in (2.0, 9.8, 9.0):
        expected = pace_step(config, state, cost)
        state.record(cost)
        state.t += 1
        state.bid = expected
        assert est.partial_fit(cost) == expected
    assert est.bid_ == state.bid


def test_partial_fit_stops_after_exhaustion():
    est = BudgetPacer(budget=10, periods=5, initial_bid=1.0)
    assert est.partial_fit(10.0) == 0.0
    with pytest.raises(ContractError):
        est.partial_fit(1.0)


def test_not_fitted():
    est = BudgetPacer()
    with pytest.raises(NotFittedError):
        est.score()
    with pytest.raises(NotFittedError):
        est.bid_


def test_validation():
    with pytest.raises(ContractError):
        BudgetPacer(budget=-1).fit("b^1")
    with pytest.raises(ContractError):
        BudgetPacer(periods=1).fit("b^1")
    with pytest.raises(ContractError):
        BudgetPacer().fit(42)
    with pytest.raises(ContractError):
        BudgetPacer(periods=10, schedule="scaled:1,1").fit("b^1")
    with pytest.raises(ContractError):
        BudgetPacer(periods=3).predict(np.ones(4))
