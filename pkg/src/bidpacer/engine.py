"""Per-period bid updates and full-campaign execution.

The update rule: after observing cost ``c_t`` for bid ``b_t`` the next bid is
``b_t * (remaining / (T - t)) / c_t`` where ``remaining`` already includes
``c_t``.  Scaled and subthreshold schedules only change which budget the
remainder is measured against.
"""

import csv
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from .errors import ContractError, DomainError, PacingError

__all__ = [
    "CampaignConfig",
    "Uniform",
    "Scaled",
    "Subthreshold",
    "PacingState",
    "PeriodRecord",
    "Trajectory",
    "pace_step",
    "scaled_pace_step",
    "subthreshold_pace_step",
    "run_campaign",
    "convergence_period",
    "write_trajectory_csv",
    "read_trajectory_csv",
]

TRAJECTORY_HEADER = ("t", "bid", "cost", "alpha", "remaining", "multiplier", "status")


@dataclass(frozen=True)
class CampaignConfig:
    budget: float
    periods: int
    initial_bid: Optional[float] = None
    tolerance: float = 1e-6
    impressions_per_period: Optional[int] = None
    clamp: Tuple[float, float] = (0.1, 10.0)
    clamp_enabled: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.budget) and self.budget > 0):
            raise ContractError(f"budget must be positive, got {self.budget!r}")
        if int(self.periods) != self.periods or self.periods < 2:
            raise ContractError(f"periods must be an integer >= 2, got {self.periods!r}")
        object.__setattr__(self, "periods", int(self.periods))
        if self.initial_bid is not None and not (
            math.isfinite(self.initial_bid) and self.initial_bid > 0
        ):
            raise ContractError(f"initial bid must be positive, got {self.initial_bid!r}")
        if not self.tolerance > 0:
            raise ContractError(f"tolerance must be positive, got {self.tolerance!r}")
        n = self.impressions_per_period
        if n is not None and (int(n) != n or n < 1):
            raise ContractError(f"impressions per period must be a positive integer, got {n!r}")
        lo, hi = (float(a) for a in self.clamp)
        object.__setattr__(self, "clamp", (lo, hi))
        if self.clamp_enabled and not (0 < lo < 1 < hi):
            raise ContractError(f"clamp needs 0 < min < 1 < max, got {self.clamp!r}")

    @property
    def b0(self):
        """Initial bid; defaults to the per-impression (or per-period) average."""
        if self.initial_bid is not None:
            return float(self.initial_bid)
        n = self.impressions_per_period or 1
        return self.budget / (n * self.periods)


# -- schedules ----------------------------------------------------------------


@dataclass(frozen=True)
class Uniform:
    def budget_at(self, budget, t):
        return budget, 1.0

    def describe(self):
        return "uniform"


@dataclass(frozen=True)
class Scaled:
    """Per-period budget multipliers ``kappa[t]`` in (0, 1]."""

    kappa: Tuple[float, ...]

    def __post_init__(self):
        kappa = tuple(float(x) for x in self.kappa)
        if not kappa:
            raise ContractError("scaled schedule needs at least one multiplier")
        bad = [x for x in kappa if not 0 < x <= 1]
        if bad:
            raise ContractError(f"multipliers must lie in (0, 1], got {bad[:3]}")
        object.__setattr__(self, "kappa", kappa)

    def budget_at(self, budget, t):
        if t >= len(self.kappa):
            raise ContractError(f"scaled schedule has {len(self.kappa)} entries, period {t} requested")
        return self.kappa[t] * budget, self.kappa[t]

    def describe(self):
        return "scaled:" + ",".join(repr(x) for x in self.kappa)


@dataclass(frozen=True)
class Subthreshold:
    """Budgets below ``threshold`` are paced against ``sigma * B``."""

    threshold: float
    sigma: float

    def __post_init__(self):
        if not self.threshold > 0:
            raise ContractError(f"threshold must be positive, got {self.threshold!r}")
        if not self.sigma > 1:
            raise ContractError(f"sigma must exceed 1, got {self.sigma!r}")

    def budget_at(self, budget, t):
        if budget < self.threshold:
            return self.sigma * budget, self.sigma
        return budget, 1.0

    def describe(self):
        return f"subthreshold:{self.threshold!r},{self.sigma!r}"


# -- state and records --------------------------------------------------------


def _grow(partials, x):
    """Add ``x`` to a list of non-overlapping partial sums in place (exact)."""
    i = 0
    for y in partials:
        if abs(x) < abs(y):
            x, y = y, x
        hi = x + y
        lo = y - (hi - x)
        if lo:
            partials[i] = lo
            i += 1
        x = hi
    partials[i:] = [x]


@dataclass
class PacingState:
    t: int
    bid: float
    costs: List[float] = field(default_factory=list)
    exited: bool = False
    last_active_bid: Optional[float] = None
    partials: List[float] = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        self.partials = []
        for c in self.costs:
            _grow(self.partials, c)

    @classmethod
    def initial(cls, config):
        return cls(t=0, bid=config.b0, last_active_bid=config.b0)

    def record(self, cost):
        self.costs.append(cost)
        _grow(self.partials, cost)

    @property
    def cumulative_spend(self):
        return math.fsum(self.partials)

    def remaining(self, budget):
        return budget - math.fsum(self.partials)


class PeriodRecord(NamedTuple):
    t: int
    bid: float
    cost: float
    alpha: float
    remaining: float
    multiplier: float
    status: str


@dataclass
class Trajectory:
    records: List[PeriodRecord]
    status: str
    exit_period: Optional[int] = None
    converged_at: Optional[int] = None
    next_bid: Optional[float] = None
    outcomes: Optional[list] = field(default=None, repr=False)

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def bids(self):
        return self.column("bid")

    @property
    def costs(self):
        return self.column("cost")

    @property
    def alphas(self):
        return self.column("alpha")

    @property
    def remaining(self):
        return self.column("remaining")

    @property
    def total_spend(self):
        return math.fsum(r.cost for r in self.records)


# -- the update rule ----------------------------------------------------------


def _ratio_step(config, t, bid, partials, cost, budget):
    """Return ``(next_bid, alpha)``; ``next_bid == 0`` means the remainder is gone.

    ``partials`` is the exact running sum of earlier costs (see :func:`_grow`).
    """
    if not 0 <= t < config.periods:
        raise ContractError(f"period {t} outside [0, {config.periods})")
    if not (math.isfinite(cost) and cost >= 0):
        raise ContractError(f"observed cost must be finite and non-negative, got {cost!r}")
    remainder = budget - math.fsum([*partials, cost])
    if remainder <= 0:
        return 0.0, 0.0
    if cost == 0:
        if not config.clamp_enabled:
            raise DomainError(f"zero cost at period {t} with clamping disabled")
        alpha = config.clamp[1]
    else:
        alpha = (remainder / (config.periods - t)) / cost
        if config.clamp_enabled:
            alpha = min(max(alpha, config.clamp[0]), config.clamp[1])
    nxt = alpha * bid
    if not math.isfinite(nxt):
        raise DomainError(f"bid diverged at period {t} (alpha={alpha!r}, bid={bid!r})")
    return nxt, alpha


def pace_step(config, state, cost):
    """Next bid after observing ``cost`` for ``state.bid`` in period ``state.t``."""
    if not state.bid > 0:
        raise ContractError(f"current bid must be positive, got {state.bid!r}")
    nxt, _ = _ratio_step(config, state.t, state.bid, state.partials, cost, config.budget)
    return nxt


def scaled_pace_step(config, state, cost, kappa):
    """As :func:`pace_step` with the budget scaled by ``kappa`` in (0, 1]."""
    if not 0 < kappa <= 1:
        raise ContractError(f"multiplier must lie in (0, 1], got {kappa!r}")
    if not state.bid > 0:
        raise ContractError(f"current bid must be positive, got {state.bid!r}")
    nxt, _ = _ratio_step(config, state.t, state.bid, state.partials, cost, kappa * config.budget)
    return nxt


def subthreshold_pace_step(config, state, cost, schedule):
    """As :func:`pace_step`, pacing against ``sigma * B`` when ``B < threshold``."""
    if not state.bid > 0:
        raise ContractError(f"current bid must be positive, got {state.bid!r}")
    budget, _ = schedule.budget_at(config.budget, state.t)
    nxt, _ = _ratio_step(config, state.t, state.bid, state.partials, cost, budget)
    return nxt


def _cap_to_budget(requested, budget, partials):
    """Largest cost <= requested that keeps the exact spend total within budget."""
    cost = min(requested, max(budget - math.fsum(partials), 0.0))
    while cost > 0 and math.fsum([*partials, cost]) > budget:
        cost = math.nextafter(cost, 0.0)
    return cost


def convergence_period(bids, tol, run=3):
    """First index from which every successive bid change stays below ``tol``.

    At least ``run`` consecutive small changes are required; returns None when
    the tail never settles.
    """
    bids = np.asarray(bids, dtype=float)
    if len(bids) < run + 1:
        return None
    small = np.abs(np.diff(bids)) < tol
    if not small[-1]:
        return None
    bad = np.flatnonzero(~small)
    start = 0 if len(bad) == 0 else int(bad[-1]) + 1
    if len(small) - start < run:
        return None
    return start


def run_campaign(config, fn, schedule=None):
    """Iterate observe-cost / update-bid over the campaign horizon."""
    schedule = schedule or Uniform()
    B, T = config.budget, config.periods
    if isinstance(schedule, Scaled) and len(schedule.kappa) < T:
        raise ContractError(f"scaled schedule covers {len(schedule.kappa)} of {T} periods")

    state = PacingState.initial(config)
    records = []
    status, exit_period = "completed", None
    for t in range(T):
        state.t = t
        bid = state.bid
        try:
            if bid > 0:
                requested = fn.observe(t, bid, state.remaining(B))
            else:
                requested = 0.0
            before = list(state.partials)
            cost = _cap_to_budget(requested, B, before)
            budget, mult = schedule.budget_at(B, t)
            state.record(cost)
            remaining = state.remaining(B)

            if cost < requested or remaining <= 0:
                records.append(PeriodRecord(t, bid, cost, 0.0, remaining, mult, "exhausted"))
                state.exited = True
                status = "early-exit" if t < T - 1 else "completed"
                exit_period = t
                state.bid = 0.0
                break

            if bid == 0:
                # suppressed period: resume at the last active bid once the
                # virtual remainder is positive again
                if budget - state.cumulative_spend > 0:
                    nxt, alpha = state.last_active_bid, math.nan
                else:
                    nxt, alpha = 0.0, 0.0
                row_status = "suppressed"
            elif t == T - 1 and cost == 0:
                nxt, alpha, row_status = bid, math.nan, "active"
            else:
                nxt, alpha = _ratio_step(config, t, bid, before, cost, budget)
                row_status = "active"
                state.last_active_bid = bid
        except PacingError as exc:
            raise type(exc)(f"period {t}: {exc}") from exc
        records.append(PeriodRecord(t, bid, cost, alpha, remaining, mult, row_status))
        state.bid = nxt

    active = [r.bid for r in records if r.status == "active"]
    converged = convergence_period(active, config.tolerance)
    return Trajectory(records, status, exit_period, converged, state.bid)


# -- CSV export ---------------------------------------------------------------


def write_trajectory_csv(trajectory, fp):
    writer = csv.writer(fp, lineterminator="\n")
    writer.writerow(TRAJECTORY_HEADER)
    for r in trajectory.records:
        writer.writerow([r.t, repr(r.bid), repr(r.cost), repr(r.alpha), repr(r.remaining),
                         repr(r.multiplier), r.status])


def read_trajectory_csv(fp, periods=None):
    reader = csv.reader(fp)
    header = tuple(next(reader))
    if header != TRAJECTORY_HEADER:
        raise ContractError(f"unexpected trajectory header {header}")
    records = [
        PeriodRecord(int(row[0]), *(float(x) for x in row[1:6]), row[6]) for row in reader
    ]
    exit_period, status = None, "completed"
    if records and records[-1].status == "exhausted":
        exit_period = records[-1].t
        if periods is None or exit_period < periods - 1:
            status = "early-exit"
    return Trajectory(records, status, exit_period)
