"""Closed-form and numerical analysis of the pacing map.

Closed forms assume a monomial cost ``C * b**k`` (optionally capped at M).
Numerical helpers (iterate maps, cycle detection, level clustering) work on
any cost function or bid sequence.
"""

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from .cost import GuardedCost, MonomialCost, PolynomialCost, evaluate, monomial_envelope
from .errors import ContractError, DomainError, PacingError, RegimeError

__all__ = [
    "AnalysisReport",
    "CyclePair",
    "fixed_point",
    "solve_fixed_point",
    "running_fixed_points",
    "stability_multiplier",
    "is_stable",
    "convergence_time_bound",
    "distance_bound",
    "max_initial_distance",
    "two_cycle_points",
    "classify_regime",
    "pacing_map",
    "iterate_map",
    "count_crossings",
    "detect_cycle",
    "bid_levels",
    "settling_period",
    "bracketed_convergence_bound",
    "analyze",
    "sweep_exponents",
]

REGIMES = (
    "unstable",
    "stable-sublinear",
    "one-iteration",
    "stable-superlinear",
    "guard-rails-required",
)


def _contracting(k):
    return 0 < k < 2 and k != 1


def _require_contracting(k, what):
    if not _contracting(k):
        raise RegimeError(f"{what} is only defined for 0 < k < 2, k != 1 (got k={k!r})")


# -- fixed points and stability -----------------------------------------------


def fixed_point(B, T, C, k, t=0, cost_history=()):
    """Bid the update rule maps to itself in period ``t`` given earlier costs."""
    if k == 0:
        raise RegimeError("fixed point undefined for k = 0")
    if not 0 <= t < T:
        raise ContractError(f"period {t} outside [0, {T})")
    if len(cost_history) != t:
        raise ContractError(f"need {t} historical costs, got {len(cost_history)}")
    numerator = B - math.fsum(cost_history)
    if numerator <= 0:
        raise DomainError(f"budget already exhausted before period {t}")
    return (numerator / (C * (T - t + 1))) ** (1.0 / k)


def solve_fixed_point(fn, remaining, periods_left, lo=1e-12, hi=1.0):
    """Numerical fixed point for an increasing cost: ``fn(b) == remaining / periods_left``."""
    target = remaining / periods_left
    if target <= 0:
        raise DomainError("no positive fixed point once the budget is exhausted")
    g = lambda b: evaluate(fn, b) - target
    while g(hi) < 0:
        hi *= 2.0
        if hi > 1e300:
            raise DomainError(f"cost never reaches the per-period target {target!r}")
    while g(lo) > 0:
        lo /= 2.0
        if lo < 1e-300:
            raise DomainError(f"cost exceeds the per-period target {target!r} near zero")
    return brentq(g, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def running_fixed_points(fn, B, T, costs):
    """Period-wise fixed point ``b*_t`` implied by the costs actually observed."""
    if isinstance(fn, MonomialCost):
        from .engine import _grow

        partials, spent = [], np.empty(len(costs))
        for t, c in enumerate(costs):
            spent[t] = math.fsum(partials)
            _grow(partials, float(c))
        left = T - np.arange(len(costs)) + 1
        return ((B - spent) / (fn.C * left)) ** (1.0 / fn.k)
    out = np.empty(len(costs))
    spent = []
    for t in range(len(costs)):
        out[t] = solve_fixed_point(fn, B - math.fsum(spent), T - t + 1)
        spent.append(costs[t])
    return out


def stability_multiplier(k, T, t=0):
    """Derivative of the update map at its fixed point: ``1 - k (T-t+1)/(T-t)``."""
    if not 0 <= t < T:
        raise ContractError(f"stability multiplier needs 0 <= t < T (t={t}, T={T})")
    return 1.0 - k * (T - t + 1) / (T - t)


def is_stable(multiplier):
    return abs(multiplier) < 1.0


def classify_regime(k):
    if k <= 0:
        return "unstable"
    if k < 1:
        return "stable-sublinear"
    if k == 1:
        return "one-iteration"
    if k < 2:
        return "stable-superlinear"
    return "guard-rails-required"


# -- convergence bounds -------------------------------------------------------


def convergence_time_bound(eps, B, T, C, k):
    """Upper bound on periods until ``|b_t - b*| <= eps`` (real valued; round up)."""
    if k == 1:
        return 1.0
    _require_contracting(k, "convergence time bound")
    if not eps > 0:
        raise ContractError(f"eps must be positive, got {eps!r}")
    gamma = C * T / B
    L = abs(1.0 - k)
    return (k - 1) / k + math.log(abs(eps * gamma ** (1 / k) * (1 - L))) / math.log(L)


def distance_bound(t, B, T, C, k):
    """Upper bound on ``|b_t - b*|`` from the contraction estimate."""
    _require_contracting(k, "distance bound")
    if t < 1:
        raise ContractError(f"distance bound needs t >= 1, got {t}")
    gamma = C * T / B
    L = abs(1.0 - k)
    return gamma ** (-1 / k) * L ** (t - 1 + 1 / k) / (1 - L)


def max_initial_distance(B, T, C, k):
    """``(b0, d)``: starting bid maximising the first step and the step-size bound.

    ``d`` is ``|(T - L) / (L (T - 1))| * b0`` with ``L = |1 - k|``; it bounds
    ``|b1 - b0|`` for starting bids below the fixed point.
    """
    _require_contracting(k, "maximal initial distance")
    if T < 2:
        raise ContractError("need T >= 2")
    L = abs(1.0 - k)
    b0 = (B * L / (C * T)) ** (1 / k)
    return b0, abs((T - L) / (L * (T - 1)) * b0)


# -- period-two orbit ---------------------------------------------------------


@dataclass(frozen=True)
class CyclePair:
    b_minus: float
    b_plus: float
    case_consistent: Tuple[bool, bool]
    case2_real: bool = False

    def to_dict(self):
        return {
            "b_minus": self.b_minus,
            "b_plus": self.b_plus,
            "case_consistent": list(self.case_consistent),
        }


def two_cycle_points(B, T, C, k, M):
    """Closed-form period-two bids for the capped cost ``min(C b^k, M)``.

    ``case_consistent`` reports, for b_minus and b_plus, whether the branch of
    the cap assumed by the derivation (capped at b_minus, uncapped at b_plus)
    actually holds.
    """
    if not k > 2:
        raise RegimeError(f"the two-cycle exists only past the bifurcation (k > 2), got k={k!r}")
    if not B / (C * T) < M < B:
        raise ContractError(f"need B/(C T) < M < B, got M={M!r} with B={B!r}, C={C!r}, T={T!r}")
    denom = C * (B - M - M * T + M * T * T)
    b_minus = ((B - M) ** 2 / denom) ** (1 / k)
    if C * b_minus**k <= M:
        b_plus = M * T / (B - M) * b_minus
    else:
        b_plus = (B - M) / (M * T) * b_minus
    flags = (bool(C * b_minus**k >= M), bool(C * b_plus**k <= M))
    return CyclePair(b_minus, b_plus, flags, case2_real=bool(M > B))


# -- iterate maps -------------------------------------------------------------


def pacing_map(fn, B, T, t=0, spent=0.0):
    """Update map for period ``t`` with ``spent`` already gone, unclamped."""

    def G(b):
        c = evaluate(fn, b)
        if c == 0:
            raise DomainError(f"zero cost at bid {b!r}")
        return b * (B - spent - c) / (c * (T - t))

    return G


def _cost_of(B, T, C, k, M):
    inner = MonomialCost(C, k)
    return inner if M is None else GuardedCost(inner, M, "min")


def iterate_map(B, T, C, k, M=None, order=1, grid=None):
    """Sample the first or second iterate of the update map from a fresh budget.

    Returns ``(grid, values, errors)``; grid points whose evaluation leaves the
    domain get NaN and an entry in ``errors``.
    """
    if order not in (1, 2):
        raise ContractError(f"order must be 1 or 2, got {order!r}")
    fn = _cost_of(B, T, C, k, M)
    if grid is None:
        bstar = fixed_point(B, T, C, k)
        grid = np.logspace(math.log10(bstar) - 3, math.log10(bstar) + 3, 10_000)
    grid = np.asarray(grid, dtype=float)
    if np.any(grid <= 0):
        raise ContractError("iterate-map grid must be positive")
    G0 = pacing_map(fn, B, T, 0)
    values = np.full(grid.shape, np.nan)
    errors = []
    for i, b in enumerate(grid):
        try:
            b1 = G0(b)
            if order == 1:
                values[i] = b1
            else:
                G1 = pacing_map(fn, B, T, 1, spent=evaluate(fn, b))
                values[i] = G1(b1)
        except PacingError as exc:
            errors.append((float(b), str(exc)))
    return grid, values, errors


def count_crossings(grid, values):
    """Number of sign changes of ``values - grid`` between adjacent finite samples."""
    d = np.asarray(values) - np.asarray(grid)
    ok = np.isfinite(d)
    s = np.sign(d)
    pairs = ok[:-1] & ok[1:]
    changes = pairs & (s[:-1] != s[1:]) & (s[:-1] != 0)
    exact_hits = int(np.sum(ok & (s == 0)))
    return int(np.sum(changes)) + exact_hits


# -- trajectory diagnostics ---------------------------------------------------


def bid_levels(bids, gap=0.25):
    """Group bids into levels separated by relative gaps larger than ``gap``."""
    v = np.sort(np.asarray(bids, dtype=float))
    if len(v) == 0:
        return []
    breaks = np.flatnonzero(v[1:] > v[:-1] * (1 + gap)) + 1
    return np.split(v, breaks)


def detect_cycle(bids, window, transient=0, rtol=1e-6, gap=None):
    """Period of the bid tail: 1 converged, p >= 2 a p-cycle, 0 aperiodic.

    With ``gap=None`` the test is exact recurrence ``b[t+p] ~ b[t]`` at
    relative tolerance ``rtol``.  With a ``gap`` the tail is first reduced to
    the sequence of level labels from :func:`bid_levels`, which tolerates slow
    drift of the levels themselves.
    """
    if window < 2:
        raise ContractError(f"window must be at least 2, got {window}")
    bids = np.asarray(bids, dtype=float)
    if len(bids) - transient < 2 * window:
        raise ContractError(
            f"need {2 * window} records after a transient of {transient}, have {len(bids) - transient}"
        )
    tail = bids[len(bids) - 2 * window:]
    if gap is not None:
        levels = bid_levels(tail, gap)
        edges = [lv[0] for lv in levels[1:]]
        tail = np.searchsorted(edges, tail, side="right").astype(float)
        same = lambda a, b: a == b
    else:
        same = lambda a, b: np.abs(a - b) <= rtol * np.abs(b)
    for p in range(1, window + 1):
        if np.all(same(tail[p:], tail[:-p])):
            return p
    return 0


def settling_period(bids, targets, eps):
    """First index from which ``|bids - targets| < eps`` holds to the end."""
    d = np.abs(np.asarray(bids, dtype=float) - np.asarray(targets, dtype=float)) < eps
    if len(d) == 0 or not d[-1]:
        return None
    bad = np.flatnonzero(~d)
    return 0 if len(bad) == 0 else int(bad[-1]) + 1


def bracketed_convergence_bound(poly, B, T, eps, regime="auto"):
    """Convergence-time bounds of the lower and upper envelope monomials.

    Returns ``(tau_lower, tau_upper)`` evaluated at the lower and upper
    envelope respectively.  ``regime="auto"`` picks the side of 1 on which the
    polynomial's fixed point lies.
    """
    if isinstance(poly, MonomialCost):
        poly = PolynomialCost(poly.terms)
    if regime == "auto":
        bstar = solve_fixed_point(poly, B, T + 1)
        regime = "high" if bstar >= 1 else "low"
    lower, upper = monomial_envelope(poly, regime)
    for m in (lower, upper):
        if not 0 < m.k < 2:
            raise RegimeError(f"envelope exponent {m.k!r} outside (0, 2)")
    return (
        convergence_time_bound(eps, B, T, lower.C, lower.k),
        convergence_time_bound(eps, B, T, upper.C, upper.k),
    )


# -- report -------------------------------------------------------------------


@dataclass
class AnalysisReport:
    fixed_point: Optional[float]
    lambda_: Optional[float]
    lipschitz: Optional[float]
    gamma: Optional[float]
    convergence_bound: Optional[float]
    max_initial_distance: Optional[float]
    regime: str
    cycle: Optional[CyclePair] = None
    extras: dict = field(default_factory=dict, repr=False)

    def to_dict(self):
        return {
            "fixed_point": self.fixed_point,
            "lambda": self.lambda_,
            "lipschitz": self.lipschitz,
            "gamma": self.gamma,
            "convergence_bound": self.convergence_bound,
            "max_initial_distance": self.max_initial_distance,
            "regime": self.regime,
            "cycle": None if self.cycle is None else self.cycle.to_dict(),
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        cyc = d.get("cycle")
        if cyc is not None:
            cyc = CyclePair(cyc["b_minus"], cyc["b_plus"], tuple(cyc["case_consistent"]))
        return cls(
            d["fixed_point"], d["lambda"], d["lipschitz"], d["gamma"],
            d["convergence_bound"], d["max_initial_distance"], d["regime"], cyc,
        )


def _monomial_parts(fn):
    if isinstance(fn, MonomialCost):
        return fn.C, fn.k, None
    if isinstance(fn, GuardedCost) and isinstance(fn.inner, MonomialCost):
        return fn.inner.C, fn.inner.k, (fn.cap if fn.mode == "min" else None)
    return None


def analyze(fn, B, T, eps=1e-6):
    """Assemble every closed-form quantity that exists for ``fn``."""
    parts = _monomial_parts(fn)
    if parts is None:
        if not isinstance(fn, (PolynomialCost, GuardedCost)):
            raise ContractError(f"cannot analyse {fn!r}")
        lead_k = (fn.inner if isinstance(fn, GuardedCost) else fn).terms[0][1]
        try:
            bstar = solve_fixed_point(fn, B, T + 1)
        except PacingError:
            bstar = None
        return AnalysisReport(bstar, None, None, None, None, None, classify_regime(lead_k))

    C, k, M = parts
    regime = classify_regime(k)
    bstar = fixed_point(B, T, C, k) if k != 0 else None
    lam = stability_multiplier(k, T, 0)
    contracting = _contracting(k)
    report = AnalysisReport(
        fixed_point=bstar,
        lambda_=lam,
        lipschitz=abs(1 - k) if 0 < k < 2 else None,
        gamma=C * T / B,
        convergence_bound=convergence_time_bound(eps, B, T, C, k) if contracting or k == 1 else None,
        max_initial_distance=max_initial_distance(B, T, C, k)[1] if contracting else None,
        regime=regime,
    )
    if M is not None and k > 2 and B / (C * T) < M < B:
        report.cycle = two_cycle_points(B, T, C, k, M)
    return report


# -- exponent sweep -----------------------------------------------------------


def _sweep_point(args):
    from .engine import CampaignConfig, run_campaign

    k, B, T, C, M, b0, tail, gap = args
    fn = _cost_of(B, T, C, k, M)
    cfg = CampaignConfig(B, T, initial_bid=b0)
    try:
        traj = run_campaign(cfg, fn)
    except PacingError as exc:
        return {"k": k, "regime": classify_regime(k), "error": str(exc)}
    bids = traj.bids
    lo, hi = int(tail[0] * T), int(tail[1] * T)
    window = bids[lo:hi]
    levels = bid_levels(window, gap) if len(window) else []
    period = detect_cycle(window, len(window) // 2, gap=gap) if len(window) >= 4 else 0
    return {
        "k": k,
        "regime": classify_regime(k),
        "levels": len(levels),
        "cycle_period": period,
        "converged_at": traj.converged_at,
        "tail_low": float(np.mean(levels[0])) if levels else math.nan,
        "tail_high": float(np.mean(levels[-1])) if levels else math.nan,
        "spend_fraction": traj.total_spend / B,
        "periods_run": len(traj),
    }


def sweep_exponents(ks, B, T, C=1.0, M=100.0, b0=None, tail=(0.4, 0.5), gap=0.25, jobs=1):
    """Run one campaign per exponent and summarise the tail bid levels.

    ``tail`` is the window, as fractions of T, whose bids are clustered into
    levels with relative ``gap``.  Rows come back in the order of ``ks``.
    """
    tasks = [(float(k), B, T, C, M, b0, tail, gap) for k in ks]
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_point, tasks))
    return [_sweep_point(a) for a in tasks]
