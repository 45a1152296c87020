"""scikit-learn style wrapper around the pacing loop."""

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .auction import BidLog, replay_campaign
from .engine import CampaignConfig, PacingState, _ratio_step, run_campaign
from .errors import ContractError
from .report import spend_report
from .validation import check_cost, check_periods, check_positive, check_schedule

__all__ = ["BudgetPacer"]


class BudgetPacer(BaseEstimator):
    """Budget pacer with ``fit``/``predict``.

    ``fit(X)`` runs a full campaign where ``X`` is a cost expression, a cost
    object or a :class:`BidLog`.  ``predict(costs)`` replays the online rule
    on a sequence of observed costs and returns the bid for every period
    (the first one is the initial bid).  ``partial_fit(cost)`` advances a
    live campaign by one period.

    ``clamp_enabled=None`` clamps bid ratios for bid-log replays only.
    """

    def __init__(self, budget=1000.0, periods=100, initial_bid=None, tolerance=1e-6,
                 impressions_per_period=None, clamp=(0.1, 10.0), clamp_enabled=None,
                 schedule="uniform", tie_rule="we-win"):
        self.budget = budget
        self.periods = periods
        self.initial_bid = initial_bid
        self.tolerance = tolerance
        self.impressions_per_period = impressions_per_period
        self.clamp = clamp
        self.clamp_enabled = clamp_enabled
        self.schedule = schedule
        self.tie_rule = tie_rule

    def _config(self):
        return CampaignConfig(
            check_positive(self.budget, "budget"),
            check_periods(self.periods),
            initial_bid=self.initial_bid,
            tolerance=self.tolerance,
            impressions_per_period=self.impressions_per_period,
            clamp=tuple(self.clamp),
            clamp_enabled=bool(self.clamp_enabled),
        )

    def fit(self, X, y=None):
        config = self._config()
        schedule = check_schedule(self.schedule, config.periods)
        if isinstance(X, BidLog):
            if self.clamp_enabled is None:
                config = replace(config, clamp_enabled=True)
            traj, report = replay_campaign(config, X, schedule, self.tie_rule, config.clamp_enabled)
        else:
            traj = run_campaign(config, check_cost(X), schedule)
            report = spend_report(traj, config, schedule)
        self.config_ = config
        self.schedule_ = schedule
        self.trajectory_ = traj
        self.spend_report_ = report
        self.bids_ = traj.bids
        self.converged_at_ = traj.converged_at
        self.n_periods_ = len(traj)
        return self

    def partial_fit(self, cost):
        """Record one observed cost and return the bid for the next period."""
        if not hasattr(self, "state_"):
            self.config_ = self._config()
            self.schedule_ = check_schedule(self.schedule, self.config_.periods)
            self.state_ = PacingState.initial(self.config_)
        state = self.state_
        if state.exited or state.t >= self.config_.periods:
            raise ContractError("campaign is over; create a new estimator to start again")
        budget, _ = self.schedule_.budget_at(self.config_.budget, state.t)
        nxt, _ = _ratio_step(self.config_, state.t, state.bid, state.partials, float(cost), budget)
        state.record(float(cost))
        state.t += 1
        if nxt == 0 or state.t >= self.config_.periods:
            state.exited = True
        state.bid = nxt
        return nxt

    def predict(self, costs):
        """Bids ``b_0 .. b_n`` implied by observing ``costs`` in order."""
        costs = np.asarray(costs, dtype=float).ravel()
        config = self._config()
        schedule = check_schedule(self.schedule, config.periods)
        if len(costs) > config.periods:
            raise ContractError(f"{len(costs)} costs for a {config.periods}-period campaign")
        state = PacingState.initial(config)
        bids = [config.b0]
        for t, c in enumerate(costs):
            budget, _ = schedule.budget_at(config.budget, t)
            nxt, _ = _ratio_step(config, t, bids[-1], state.partials, float(c), budget)
            state.record(float(c))
            bids.append(nxt)
            if nxt == 0:
                break
        return np.array(bids)

    def score(self, X=None, y=None):
        """Fraction of the budget spent (1 is perfect exhaustion)."""
        if X is not None:
            self.fit(X)
        if not hasattr(self, "spend_report_"):
            raise NotFittedError("call fit before score")
        return 1.0 - self.spend_report_.leftover_fraction

    @property
    def bid_(self):
        if hasattr(self, "state_"):
            return self.state_.bid
        if hasattr(self, "trajectory_"):
            return self.trajectory_.next_bid
        raise NotFittedError("estimator has not been fitted")

    @property
    def spend_fraction_(self):
        return 1.0 - self.spend_report_.leftover_fraction

    def __sklearn_is_fitted__(self):
        return hasattr(self, "trajectory_") or hasattr(self, "state_")

