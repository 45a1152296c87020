"""Spend accounting for finished campaigns."""

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .engine import Scaled
from .errors import ContractError

__all__ = ["SpendReport", "spend_report", "target_spend", "cumulative_target"]


def cumulative_target(budget, periods, schedule=None):
    """Cumulative spend fraction a perfectly paced campaign reaches after each period.

    Uniform pacing gives ``(t + 1) / T``.  Under a scaled schedule each period
    takes an even share of whatever part of ``kappa[t] * B`` is still unspent,
    which is exactly what the update rule steers towards.
    """
    if not isinstance(schedule, Scaled):
        return np.arange(1, periods + 1) / periods
    spent = 0.0
    out = np.empty(periods)
    for t in range(periods):
        spent += max(0.0, schedule.kappa[t] * budget - spent) / (periods - t)
        out[t] = spent / budget
    return out


def target_spend(budget, periods, schedule=None):
    """Per-period spend target (B/T, or the kappa-implied share)."""
    cum = cumulative_target(budget, periods, schedule) * budget
    return np.diff(cum, prepend=0.0)


@dataclass
class SpendReport:
    budget: float
    leftover: float
    leftover_fraction: float
    deviations: List[float]
    max_deviation: float
    spend_curve: List[float]
    target_curve: List[float]
    max_curve_deviation: float
    converged_at: Optional[int] = None
    cycle_period: Optional[int] = None
    eps: Optional[float] = None
    eps_violation_fraction: Optional[float] = None
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        d = {
            "budget": self.budget,
            "leftover": self.leftover,
            "leftover_fraction": self.leftover_fraction,
            "max_deviation": self.max_deviation,
            "max_curve_deviation": self.max_curve_deviation,
            "converged_at": self.converged_at,
            "cycle_period": self.cycle_period,
            "eps": self.eps,
            "eps_violation_fraction": self.eps_violation_fraction,
            "deviations": list(self.deviations),
            "spend_curve": list(self.spend_curve),
            "target_curve": list(self.target_curve),
        }
        d.update(self.extras)
        return d

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    def curve_rows(self):
        """``(t, spend_fraction, target_fraction)`` rows for plotting."""
        return [(t, s, g) for t, (s, g) in enumerate(zip(self.spend_curve, self.target_curve))]


def spend_report(trajectory, config, schedule=None, eps=None, cycle_window=None):
    """Leftover, per-period deviation from target and the cumulative spend curve.

    The spend curve covers the full horizon; after an early exit it stays flat.
    ``eps`` is only reported against: the result lists the fraction of
    periods whose deviation exceeds it.
    """
    from .analysis import detect_cycle

    if len(trajectory) == 0:
        raise ContractError("spend report needs at least one period")
    B, T = config.budget, config.periods
    costs = [r.cost for r in trajectory.records]
    costs += [0.0] * (T - len(costs))

    partial = []
    running = []
    for c in costs:
        running.append(c)
        partial.append(math.fsum(running))
    curve = np.maximum.accumulate(np.array(partial) / B)
    target_curve = cumulative_target(B, T, schedule)
    targets = target_spend(B, T, schedule)
    dev = np.abs(targets - np.array(costs))

    leftover = B - partial[-1]
    report = SpendReport(
        budget=B,
        leftover=leftover,
        leftover_fraction=1.0 - float(curve[-1]),
        deviations=dev.tolist(),
        max_deviation=float(dev.max()),
        spend_curve=curve.tolist(),
        target_curve=target_curve.tolist(),
        max_curve_deviation=float(np.max(np.abs(curve - target_curve))),
        converged_at=trajectory.converged_at,
    )
    active = [r.bid for r in trajectory.records if r.status == "active"]
    window = cycle_window or min(20, len(active) // 4)
    if window >= 2:
        report.cycle_period = detect_cycle(active, window) or None
    if eps is not None:
        if not eps > 0:
            raise ContractError(f"eps must be positive, got {eps!r}")
        report.eps = eps
        report.eps_violation_fraction = float(np.mean(dev > eps))
    return report
