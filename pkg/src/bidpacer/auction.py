"""First-price auction replay against logged or synthetic competitor bids.

Bid-log CSV schema (header required)::

    period,impression,bid

one row per competitor bid; ``period`` is a 0-based integer, ``impression``
an id unique within the period, ``bid`` a positive decimal.  An impression
with no competitor bids is written as a single row with an empty ``bid``.
"""

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .cost import EmpiricalCost
from .engine import Uniform, run_campaign
from .errors import ContractError

__all__ = [
    "Impression",
    "Period",
    "BidLog",
    "AuctionOutcome",
    "LogProfile",
    "run_period_auction",
    "AuctionSource",
    "replay_campaign",
    "generate_bid_log",
    "diurnal_intensity",
    "ingest_bid_log",
    "write_bid_log",
]

BIDLOG_HEADER = ("period", "impression", "bid")


class Impression(NamedTuple):
    id: int
    bids: Tuple[float, ...]


class Period(NamedTuple):
    index: int
    impressions: Tuple[Impression, ...]

    def maxima(self):
        """Highest competitor bid per impression (0 when uncontested)."""
        return np.array([max(imp.bids) if imp.bids else 0.0 for imp in self.impressions])


@dataclass(frozen=True)
class BidLog:
    periods: Tuple[Period, ...]
    duration: str = "15min"
    source: str = field(default="file", compare=False)
    rejects: Tuple[Tuple[int, str], ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not self.periods:
            raise ContractError("bid log needs at least one period")
        idx = [p.index for p in self.periods]
        if any(a >= b for a, b in zip(idx, idx[1:])):
            raise ContractError("bid-log periods must be strictly increasing")
        for p in self.periods:
            for imp in p.impressions:
                if any(not (b > 0 and math.isfinite(b)) for b in imp.bids):
                    raise ContractError(
                        f"non-positive competitor bid in period {p.index}, impression {imp.id}"
                    )

    def __len__(self):
        return len(self.periods)

    @property
    def impressions_per_period(self):
        return np.array([len(p.impressions) for p in self.periods])


class AuctionOutcome(NamedTuple):
    period: int
    impressions_contested: int
    wins: int
    cost: float
    win_rate: float


def run_period_auction(our_bid, period, tie_rule="we-win", budget=None):
    """Run one first-price auction per impression at a single bid.

    ``period`` is a :class:`Period` or an array of per-impression maximum
    competitor bids.  With ``budget`` set, wins are counted in arrival order
    only while the accumulated cost stays within it.
    """
    if not (our_bid >= 0 and math.isfinite(our_bid)):
        raise ContractError(f"our bid must be finite and non-negative, got {our_bid!r}")
    if tie_rule not in ("we-win", "we-lose"):
        raise ContractError(f"tie rule must be 'we-win' or 'we-lose', got {tie_rule!r}")
    index = period.index if isinstance(period, Period) else -1
    maxima = period.maxima() if isinstance(period, Period) else np.asarray(period, dtype=float)
    if np.any(maxima < 0):
        raise ContractError("negative competitor bid reached the auction")
    n = len(maxima)
    if our_bid == 0 or n == 0:
        return AuctionOutcome(index, n, 0, 0.0, 0.0)
    won = maxima <= our_bid if tie_rule == "we-win" else maxima < our_bid
    wins = int(np.count_nonzero(won))
    if budget is not None:
        affordable = int(max(budget, 0.0) // our_bid)
        while affordable > 0 and affordable * our_bid > budget:
            affordable -= 1
        wins = min(wins, affordable)
    return AuctionOutcome(index, n, wins, our_bid * wins, wins / n)


class AuctionSource:
    """Cost source for :class:`EmpiricalCost` backed by a bid log."""

    def __init__(self, log, tie_rule="we-win", value_multiplier=1.0):
        self.log = log
        self.tie_rule = tie_rule
        self.value_multiplier = value_multiplier
        self.outcomes: List[AuctionOutcome] = []
        self._maxima = [p.maxima() for p in log.periods]

    def __call__(self, t, bid, remaining=None):
        out = run_period_auction(bid * self.value_multiplier, self._maxima[t], self.tie_rule, remaining)
        out = out._replace(period=self.log.periods[t].index)
        self.outcomes.append(out)
        return out.cost


def replay_campaign(config, log, schedule=None, tie_rule="we-win", clamp_enabled=True,
                    value_multiplier=1.0):
    """Pace a campaign against a bid log; returns ``(trajectory, spend_report)``.

    Clamping is switched on unless ``clamp_enabled=False`` so that periods with
    no wins grow the bid instead of failing.  Without an initial bid or an
    impression count in ``config``, the count is the log's mean over the
    campaign periods, giving a starting bid of ``B / (n T)``.
    """
    from .report import spend_report

    if len(log) < config.periods:
        raise ContractError(f"bid log has {len(log)} periods, campaign needs {config.periods}")
    if clamp_enabled and not config.clamp_enabled:
        config = replace(config, clamp_enabled=True)
    if config.initial_bid is None and config.impressions_per_period is None:
        n = log.impressions_per_period[: config.periods].mean()
        config = replace(config, impressions_per_period=max(1, int(round(n))))
    schedule = schedule or Uniform()
    source = AuctionSource(log, tie_rule, value_multiplier)
    traj = run_campaign(config, EmpiricalCost(source, "auction replay"), schedule)
    traj.outcomes = source.outcomes
    return traj, spend_report(traj, config, schedule)


# -- synthetic logs -----------------------------------------------------------


@dataclass(frozen=True)
class LogProfile:
    periods: int = 96
    impressions_mean: float = 400.0
    competitors_mean: float = 2.0
    bid_distribution: str = "lognormal"
    bid_params: Tuple[float, float] = (0.0, 1.0)
    intensity_amplitude: float = 0.5
    peak_hour: float = 20.0
    intensity: Optional[Sequence[float]] = None
    duration: str = "15min"

    def __post_init__(self):
        if self.periods < 1:
            raise ContractError("profile needs at least one period")
        if self.impressions_mean <= 0:
            raise ContractError("mean impressions per period must be positive")
        if self.competitors_mean < 0:
            raise ContractError("mean competitor count must be non-negative")
        a, b = self.bid_params
        if self.bid_distribution == "lognormal":
            if b < 0:
                raise ContractError("lognormal sigma must be non-negative")
        elif self.bid_distribution == "uniform":
            if not 0 < a <= b:
                raise ContractError("uniform bid support must satisfy 0 < low <= high")
        else:
            raise ContractError(f"unknown bid distribution {self.bid_distribution!r}")
        if not 0 <= self.intensity_amplitude <= 1:
            raise ContractError("intensity amplitude must lie in [0, 1]")
        if self.intensity is not None:
            if len(self.intensity) != self.periods or min(self.intensity) < 0:
                raise ContractError("explicit intensity needs one non-negative value per period")


def diurnal_intensity(periods, amplitude=0.5, peak_hour=20.0):
    """Cosine day curve with mean 1 peaking at ``peak_hour``."""
    t = (np.arange(periods) + 0.5) / periods
    return 1.0 + amplitude * np.cos(2 * np.pi * (t - peak_hour / 24.0))


def generate_bid_log(seed, profile=None):
    """Deterministic synthetic log; volume per period follows the intensity curve."""
    profile = profile or LogProfile()
    rng = np.random.default_rng(seed)
    if profile.intensity is not None:
        intensity = np.asarray(profile.intensity, dtype=float)
    else:
        intensity = diurnal_intensity(profile.periods, profile.intensity_amplitude, profile.peak_hour)
    a, b = profile.bid_params
    periods = []
    for t in range(profile.periods):
        n = int(rng.poisson(profile.impressions_mean * intensity[t]))
        counts = rng.poisson(profile.competitors_mean, size=n)
        if profile.bid_distribution == "lognormal":
            flat = rng.lognormal(a, b, size=int(counts.sum()))
        else:
            flat = rng.uniform(a, b, size=int(counts.sum()))
        splits = np.split(flat, np.cumsum(counts)[:-1]) if n else []
        imps = tuple(Impression(i, tuple(float(x) for x in s)) for i, s in enumerate(splits))
        periods.append(Period(t, imps))
    return BidLog(tuple(periods), profile.duration, f"synthetic seed={seed}")


# -- CSV ----------------------------------------------------------------------


def write_bid_log(log, fp):
    writer = csv.writer(fp, lineterminator="\n")
    writer.writerow(BIDLOG_HEADER)
    for p in log.periods:
        for imp in p.impressions:
            if not imp.bids:
                writer.writerow([p.index, imp.id, ""])
            for b in imp.bids:
                writer.writerow([p.index, imp.id, repr(b)])


def ingest_bid_log(source, fail_fast=False, delimiter=",", duration="15min"):
    """Read a bid-log CSV from a path or text stream.

    Malformed rows are skipped and listed in ``log.rejects`` as
    ``(line_number, message)``; with ``fail_fast`` the first one raises.
    Periods run from 0 to the largest index seen; missing ones are empty.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, newline="", encoding="utf-8") as fp:
            return ingest_bid_log(fp, fail_fast, delimiter, duration)

    reader = csv.reader(source, delimiter=delimiter)
    try:
        header = tuple(h.strip() for h in next(reader))
    except StopIteration:
        raise ContractError("empty bid-log file") from None
    if header != BIDLOG_HEADER:
        raise ContractError(f"bid-log header must be {','.join(BIDLOG_HEADER)}, got {','.join(header)}")

    rejects = []

    def reject(line, msg):
        if fail_fast:
            raise ContractError(f"line {line}: {msg}")
        rejects.append((line, msg))

    grouped = {}
    order = []
    last_period = None
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            reject(line, f"expected 3 fields, got {len(row)}")
            continue
        try:
            period, imp = int(row[0]), int(row[1])
        except ValueError:
            reject(line, f"non-integer period/impression {row[0]!r},{row[1]!r}")
            continue
        if period < 0:
            reject(line, f"negative period {period}")
            continue
        if last_period is not None and period < last_period:
            reject(line, f"period {period} out of order after period {last_period}")
            continue
        text = row[2].strip()
        if text:
            try:
                bid = float(text)
            except ValueError:
                reject(line, f"unparsable bid {text!r}")
                continue
            if not (bid > 0 and math.isfinite(bid)):
                reject(line, f"bid must be positive, got {text}")
                continue
        last_period = period
        if period not in grouped:
            grouped[period] = {}
            order.append(period)
        bids = grouped[period].setdefault(imp, [])
        if text:
            bids.append(bid)

    if not order:
        raise ContractError("bid log contains no valid rows")
    # a period index with no rows is a time bucket without traffic
    periods = tuple(
        Period(p, tuple(Impression(i, tuple(b)) for i, b in grouped.get(p, {}).items()))
        for p in range(order[-1] + 1)
    )
    name = getattr(source, "name", "stream")
    return BidLog(periods, duration, f"file {name}", tuple(rejects))


def bid_log_to_string(log):
    buf = io.StringIO()
    write_bid_log(log, buf)
    return buf.getvalue()
