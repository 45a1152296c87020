"""Budget pacing for repeated first-price ad auctions."""

from .analysis import (
    AnalysisReport,
    CyclePair,
    analyze,
    bracketed_convergence_bound,
    classify_regime,
    convergence_time_bound,
    count_crossings,
    detect_cycle,
    distance_bound,
    fixed_point,
    is_stable,
    iterate_map,
    max_initial_distance,
    pacing_map,
    solve_fixed_point,
    stability_multiplier,
    sweep_exponents,
    two_cycle_points,
)
from .auction import (
    AuctionOutcome,
    BidLog,
    LogProfile,
    generate_bid_log,
    ingest_bid_log,
    replay_campaign,
    run_period_auction,
    write_bid_log,
)
from .cost import (
    EmpiricalCost,
    GuardedCost,
    MonomialCost,
    PolynomialCost,
    evaluate,
    format_cost,
    monomial_envelope,
    parse_cost,
)
from .engine import (
    CampaignConfig,
    PacingState,
    Scaled,
    Subthreshold,
    Trajectory,
    Uniform,
    pace_step,
    run_campaign,
    scaled_pace_step,
    subthreshold_pace_step,
)
from .errors import ContractError, DomainError, PacingError, ParseError, RegimeError
from .estimator import BudgetPacer
from .report import SpendReport, spend_report

__version__ = "0.1.0"
