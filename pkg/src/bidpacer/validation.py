"""Input checks and converters shared by the estimator and the CLI."""

import json
import math

from .cost import EmpiricalCost, GuardedCost, MonomialCost, PolynomialCost, parse_cost
from .engine import CampaignConfig, Scaled, Subthreshold, Uniform
from .errors import ContractError

__all__ = [
    "check_positive",
    "check_periods",
    "check_cost",
    "parse_schedule",
    "parse_clamp",
    "parse_range",
    "check_schedule",
    "load_config",
]

_COSTS = (MonomialCost, PolynomialCost, GuardedCost, EmpiricalCost)


def check_positive(value, name):
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ContractError(f"{name} must be a number, got {value!r}") from None
    if not (math.isfinite(value) and value > 0):
        raise ContractError(f"{name} must be positive and finite, got {value!r}")
    return value


def check_periods(value):
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    if not isinstance(value, int) or isinstance(value, bool) or value < 2:
        raise ContractError(f"periods must be an integer >= 2, got {value!r}")
    return value


def check_cost(fn):
    """Accept a cost object or an expression string."""
    if isinstance(fn, str):
        return parse_cost(fn)
    if isinstance(fn, _COSTS):
        return fn
    raise ContractError(f"expected a cost expression or cost object, got {type(fn).__name__}")


def parse_schedule(text):
    """``uniform``, ``scaled:<k1>,<k2>,...`` or ``subthreshold:<tau>,<sigma>``."""
    text = text.strip()
    name, _, args = text.partition(":")
    try:
        values = [float(x) for x in args.split(",")] if args.strip() else []
    except ValueError:
        raise ContractError(f"bad schedule arguments in {text!r}") from None
    if name == "uniform" and not values:
        return Uniform()
    if name == "scaled" and values:
        return Scaled(tuple(values))
    if name == "subthreshold" and len(values) == 2:
        return Subthreshold(*values)
    raise ContractError(
        f"schedule must be uniform, scaled:<csv> or subthreshold:<tau>,<sigma>; got {text!r}"
    )


def check_schedule(schedule, periods=None):
    if schedule is None:
        return Uniform()
    if isinstance(schedule, str):
        schedule = parse_schedule(schedule)
    if isinstance(schedule, dict):
        schedule = _schedule_from_dict(schedule)
    if not isinstance(schedule, (Uniform, Scaled, Subthreshold)):
        raise ContractError(f"unknown schedule {schedule!r}")
    if isinstance(schedule, Scaled) and periods is not None and len(schedule.kappa) < periods:
        raise ContractError(f"scaled schedule covers {len(schedule.kappa)} of {periods} periods")
    return schedule


def _schedule_from_dict(d):
    kind = d.get("kind", "uniform")
    if kind == "uniform":
        return Uniform()
    if kind == "scaled":
        return Scaled(tuple(d["kappa"]))
    if kind == "subthreshold":
        return Subthreshold(d["threshold"], d["sigma"])
    raise ContractError(f"unknown schedule kind {kind!r}")


def parse_clamp(text):
    """``"amin,amax"`` -> ``((amin, amax), True)``; ``"off"`` -> ``(None, False)``."""
    if text.strip().lower() == "off":
        return None, False
    try:
        lo, hi = (float(x) for x in text.split(","))
    except ValueError:
        raise ContractError(f"clamp must be 'amin,amax' or 'off', got {text!r}") from None
    if not 0 < lo < 1 < hi:
        raise ContractError(f"clamp needs 0 < amin < 1 < amax, got {text!r}")
    return (lo, hi), True


def parse_range(text):
    """``start:stop:step`` with ``stop`` included (up to rounding)."""
    try:
        start, stop, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise ContractError(f"range must be start:stop:step, got {text!r}") from None
    if step <= 0 or stop < start:
        raise ContractError(f"range needs step > 0 and stop >= start, got {text!r}")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(n)]


def load_config(path):
    """Read a JSON config whose keys mirror CampaignConfig and the schedule.

    Returns ``(config_kwargs, schedule_or_None, extra)`` where ``extra`` holds
    any remaining keys (``cost``, ``seed``...).
    """
    try:
        with open(path, encoding="utf-8") as fp:
            data = json.load(fp)
    except (OSError, json.JSONDecodeError) as exc:
        raise ContractError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ContractError("config file must hold a JSON object")
    fields = set(CampaignConfig.__dataclass_fields__)
    kwargs = {k: data.pop(k) for k in list(data) if k in fields}
    if "clamp" in kwargs:
        kwargs["clamp"] = tuple(kwargs["clamp"])
    schedule = data.pop("schedule", None)
    if schedule is not None:
        schedule = check_schedule(schedule)
    return kwargs, schedule, data
