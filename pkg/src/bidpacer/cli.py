"""Command-line front end.

Exit codes: 0 success, 2 bad input or undefined arithmetic, 3 a quantity
requested outside the regime where it exists.
"""

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile

from .analysis import (
    analyze,
    convergence_time_bound,
    fixed_point,
    max_initial_distance,
    sweep_exponents,
    two_cycle_points,
)
from .auction import LogProfile, generate_bid_log, ingest_bid_log, replay_campaign, write_bid_log
from .cost import GuardedCost, MonomialCost
from .engine import CampaignConfig, run_campaign, write_trajectory_csv
from .errors import ContractError, DomainError, PacingError, RegimeError
from .report import spend_report
from .validation import (
    check_cost,
    check_schedule,
    load_config,
    parse_clamp,
    parse_range,
    parse_schedule,
)

EXIT_INPUT = 2
EXIT_REGIME = 3


# -- output helpers -----------------------------------------------------------


def atomic_write(path, text):
    """Write ``text`` to ``path`` via a temp file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fp:
            fp.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_default(obj):
    if hasattr(obj, "item"):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _clean(obj):
    # strict JSON has no NaN/inf
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def dumps(obj):
    return json.dumps(_clean(obj), indent=2, default=_json_default, allow_nan=False) + "\n"


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _trajectory_text(traj, fmt):
    if fmt == "json":
        rows = [r._asdict() for r in traj.records]
        return dumps({"status": traj.status, "exit_period": traj.exit_period,
                      "converged_at": traj.converged_at, "records": rows})
    buf = io.StringIO()
    write_trajectory_csv(traj, buf)
    return buf.getvalue()


def _out(args, name):
    return os.path.join(args.out, name)


# -- argument handling --------------------------------------------------------


def _campaign_flags(p, cost=True):
    p.add_argument("--config", help="JSON file with CampaignConfig / schedule fields")
    p.add_argument("--budget", type=float)
    p.add_argument("--periods", type=int)
    if cost:
        p.add_argument("--cost", help='cost expression, e.g. "min(1*b^0.5,100)"')
    p.add_argument("--b0", type=float, help="initial bid")
    p.add_argument("--tol", type=float, help="convergence tolerance")
    p.add_argument("--schedule", help="uniform | scaled:<k1,k2,...> | subthreshold:<tau>,<sigma>")
    p.add_argument("--clamp", help="amin,amax or off")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def _resolve(args, clamp_default=False):
    """Merge the config file with flags (flags win)."""
    kwargs, schedule, extra = ({}, None, {})
    if args.config:
        kwargs, schedule, extra = load_config(args.config)
    if args.budget is not None:
        kwargs["budget"] = args.budget
    if args.periods is not None:
        kwargs["periods"] = args.periods
    if args.b0 is not None:
        kwargs["initial_bid"] = args.b0
    if args.tol is not None:
        kwargs["tolerance"] = args.tol
    kwargs.setdefault("clamp_enabled", clamp_default)
    if args.clamp is not None:
        bounds, on = parse_clamp(args.clamp)
        kwargs["clamp_enabled"] = on
        if bounds:
            kwargs["clamp"] = bounds
    if args.schedule is not None:
        schedule = parse_schedule(args.schedule)
    for key in ("budget", "periods"):
        if key not in kwargs:
            raise ContractError(f"--{key} is required (flag or config file)")
    try:
        config = CampaignConfig(**kwargs)
    except TypeError as exc:
        raise ContractError(str(exc)) from None
    schedule = check_schedule(schedule, config.periods)
    cost = getattr(args, "cost", None) or extra.get("cost")
    return config, schedule, cost, extra


# -- subcommands --------------------------------------------------------------


def cmd_simulate(args):
    config, schedule, cost, _ = _resolve(args)
    if cost is None:
        raise ContractError("--cost is required")
    fn = check_cost(cost)
    traj = run_campaign(config, fn, schedule)
    report = spend_report(traj, config, schedule, eps=args.eps)
    ext = "json" if args.format == "json" else "csv"
    atomic_write(_out(args, f"trajectory.{ext}"), _trajectory_text(traj, args.format))
    atomic_write(_out(args, "spend_report.json"), dumps(report.to_dict()))
    summary = {"status": traj.status, "periods_run": len(traj), "converged_at": traj.converged_at,
               "spend_fraction": 1.0 - report.leftover_fraction}
    try:
        analysis = analyze(fn, config.budget, config.periods, config.tolerance)
        atomic_write(_out(args, "analysis.json"), dumps(analysis.to_dict()))
        summary["convergence_bound"] = analysis.convergence_bound
    except PacingError as exc:
        summary["analysis_error"] = str(exc)
    print(dumps(summary), end="")


def _monomial(fn):
    if isinstance(fn, MonomialCost):
        return fn.C, fn.k, None
    if isinstance(fn, GuardedCost) and isinstance(fn.inner, MonomialCost) and fn.mode == "min":
        return fn.inner.C, fn.inner.k, fn.cap
    raise ContractError("this quantity needs a monomial cost, optionally capped with min(...)")


def cmd_analyze(args):
    if args.budget is None or args.periods is None or args.cost is None:
        raise ContractError("analyze needs --budget, --periods and --cost")
    fn = check_cost(args.cost)
    B, T, eps = args.budget, args.periods, args.tol if args.tol is not None else 1e-6
    if args.only == "all":
        result = analyze(fn, B, T, eps).to_dict()
    else:
        C, k, M = _monomial(fn)
        if args.only == "convergence-bound":
            result = {"convergence_bound": convergence_time_bound(eps, B, T, C, k)}
        elif args.only == "fixed-point":
            result = {"fixed_point": fixed_point(B, T, C, k)}
        elif args.only == "max-initial-distance":
            b0, d = max_initial_distance(B, T, C, k)
            result = {"b0": b0, "max_initial_distance": d}
        else:
            if M is None:
                raise ContractError("two-cycle needs a capped cost, e.g. min(1*b^2.3,100)")
            result = two_cycle_points(B, T, C, k, M).to_dict()
    text = dumps(result)
    if args.out:
        atomic_write(_out(args, "analysis.json"), text)
    print(text, end="")


SWEEP_FIELDS = ("k", "regime", "levels", "cycle_period", "converged_at", "tail_low",
                "tail_high", "spend_fraction", "periods_run")


def cmd_sweep(args):
    ks = parse_range(args.k)
    tail = tuple(float(x) for x in args.tail.split(","))
    if len(tail) != 2 or not 0 <= tail[0] < tail[1] <= 1:
        raise ContractError(f"--tail must be lo,hi fractions with lo < hi, got {args.tail!r}")
    rows = sweep_exponents(ks, args.budget, args.periods, args.C, args.cap, args.b0,
                           tail, args.gap, args.jobs)
    for r in rows:
        if "error" in r:
            raise DomainError(f"k={r['k']}: {r['error']}")
    if args.format == "json":
        atomic_write(_out(args, "sweep.json"), dumps(rows))
    else:
        atomic_write(_out(args, "sweep.csv"),
                     _csv_text(SWEEP_FIELDS, [[_fmt(r[f]) for f in SWEEP_FIELDS] for r in rows]))
    for r in rows:
        print(f"k={r['k']:.4g} levels={r['levels']} period={r['cycle_period']}")


def _fmt(v):
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def cmd_replay(args):
    config, schedule, _, extra = _resolve(args, clamp_default=True)
    if args.log:
        log = ingest_bid_log(args.log, fail_fast=args.fail_fast)
        for line, msg in log.rejects:
            print(f"{args.log}:{line}: rejected: {msg}", file=sys.stderr)
    else:
        seed = args.seed if args.seed is not None else extra.get("seed")
        if seed is None:
            raise ContractError("replay needs --log or --seed")
        log = generate_bid_log(seed, LogProfile(periods=config.periods))
    traj, report = replay_campaign(config, log, schedule, args.tie_rule, config.clamp_enabled,
                                   args.value_multiplier)
    if args.eps is not None:
        report = spend_report(traj, config, schedule, eps=args.eps)
    ext = "json" if args.format == "json" else "csv"
    atomic_write(_out(args, f"trajectory.{ext}"), _trajectory_text(traj, args.format))
    atomic_write(_out(args, "spend_report.json"), dumps(report.to_dict()))
    atomic_write(_out(args, "spend_curve.csv"),
                 _csv_text(("t", "spend_fraction", "target_fraction"),
                           [(t, repr(s), repr(g)) for t, s, g in report.curve_rows()]))
    print(dumps({"status": traj.status, "leftover_fraction": report.leftover_fraction,
                 "max_curve_deviation": report.max_curve_deviation}), end="")


def cmd_gen_log(args):
    dist, _, params = args.bids.partition(":")
    try:
        bid_params = tuple(float(x) for x in params.split(","))
    except ValueError:
        raise ContractError(f"--bids must be lognormal:mu,sigma or uniform:lo,hi, got {args.bids!r}") from None
    if len(bid_params) != 2:
        raise ContractError(f"--bids needs two parameters, got {args.bids!r}")
    profile = LogProfile(
        periods=args.periods,
        impressions_mean=args.impressions,
        competitors_mean=args.competitors,
        bid_distribution=dist,
        bid_params=bid_params,
        intensity_amplitude=args.amplitude,
        peak_hour=args.peak_hour,
    )
    log = generate_bid_log(args.seed, profile)
    buf = io.StringIO()
    write_bid_log(log, buf)
    path = _out(args, args.name)
    atomic_write(path, buf.getvalue())
    print(path)


def build_parser():
    parser = argparse.ArgumentParser(prog="bidpacer", description="Budget pacing simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one campaign against a cost expression")
    _campaign_flags(p)
    p.add_argument("--eps", type=float, help="report periods whose spend misses target by more")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="closed-form quantities for a cost expression")
    p.add_argument("--budget", type=float)
    p.add_argument("--periods", type=int)
    p.add_argument("--cost")
    p.add_argument("--tol", type=float, help="eps for the convergence bound")
    p.add_argument("--only", default="all",
                   choices=("all", "convergence-bound", "fixed-point", "max-initial-distance", "two-cycle"))
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="tail bid levels across cost exponents")
    p.add_argument("--k", required=True, help="start:stop:step")
    p.add_argument("--budget", type=float, default=50000.0)
    p.add_argument("--periods", type=int, default=1000)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--cap", type=float, default=100.0, help="guard-rail cap M")
    p.add_argument("--b0", type=float, default=50.0)
    p.add_argument("--tail", default="0.4,0.5", help="window as fractions of T")
    p.add_argument("--gap", type=float, default=0.25, help="relative gap separating levels")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=".")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("replay", help="pace against a bid log")
    _campaign_flags(p, cost=False)
    p.add_argument("--log", help="bid-log CSV (period,impression,bid)")
    p.add_argument("--seed", type=int, help="generate a synthetic log instead")
    p.add_argument("--tie-rule", choices=("we-win", "we-lose"), default="we-win")
    p.add_argument("--value-multiplier", type=float, default=1.0)
    p.add_argument("--fail-fast", action="store_true")
    p.add_argument("--eps", type=float)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("gen-log", help="write a synthetic bid log")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--periods", type=int, default=96)
    p.add_argument("--impressions", type=float, default=400.0)
    p.add_argument("--competitors", type=float, default=2.0)
    p.add_argument("--bids", default="lognormal:0,1")
    p.add_argument("--amplitude", type=float, default=0.5)
    p.add_argument("--peak-hour", type=float, default=20.0)
    p.add_argument("--out", default=".")
    p.add_argument("--name", default="bidlog.csv")
    p.set_defaults(func=cmd_gen_log)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except RegimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except (ContractError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return 0


if __name__ == "__main__":
    sys.exit(main())
