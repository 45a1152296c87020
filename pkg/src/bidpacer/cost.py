"""Latent cost functions mapping a period bid to the amount spent.

All formula costs are frozen dataclasses and callable: ``fn(bid)`` is
``evaluate(fn, bid)``.  :class:`EmpiricalCost` wraps an external, stateful
source (an auction replay) that also needs the period index.
"""

import math
import re
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

from .errors import ContractError, DomainError, ParseError

__all__ = [
    "MonomialCost",
    "PolynomialCost",
    "GuardedCost",
    "EmpiricalCost",
    "evaluate",
    "monomial_envelope",
    "parse_cost",
    "format_cost",
]


def _power(coef, bid, exp, label):
    if bid == 0.0 and exp <= 0:
        raise DomainError(f"term {label} is singular at bid=0 (exponent {exp:g} <= 0)")
    try:
        value = coef * bid**exp
    except OverflowError:
        raise DomainError(f"term {label} overflows at bid={bid!r}") from None
    if not math.isfinite(value):
        raise DomainError(f"term {label} is not finite at bid={bid!r}")
    return value


def _check_bid(bid):
    bid = float(bid)
    if not bid >= 0.0 or math.isinf(bid):
        raise ContractError(f"bid must be a finite non-negative number, got {bid!r}")
    return bid


@dataclass(frozen=True)
class MonomialCost:
    """``C * b**k``."""

    C: float
    k: float

    def __post_init__(self):
        if not (math.isfinite(self.C) and self.C > 0):
            raise ContractError(f"monomial coefficient must be positive and finite, got {self.C!r}")
        if not math.isfinite(self.k):
            raise ContractError(f"monomial exponent must be finite, got {self.k!r}")

    def __call__(self, bid):
        return evaluate(self, bid)

    def observe(self, t, bid, remaining=None):
        return evaluate(self, bid)

    @property
    def terms(self):
        return ((float(self.C), float(self.k)),)


@dataclass(frozen=True)
class PolynomialCost:
    """Sum of power terms ``c_i * b**k_i`` with strictly decreasing exponents."""

    terms: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        terms = tuple((float(c), float(k)) for c, k in self.terms)
        if not terms:
            raise ContractError("polynomial cost needs at least one term")
        for c, k in terms:
            if not (math.isfinite(c) and math.isfinite(k)):
                raise ContractError(f"non-finite polynomial term ({c!r}, {k!r})")
        exps = [k for _, k in terms]
        if any(a <= b for a, b in zip(exps, exps[1:])):
            raise ContractError(f"polynomial exponents must be strictly decreasing, got {exps}")
        object.__setattr__(self, "terms", terms)

    def __call__(self, bid):
        return evaluate(self, bid)

    def observe(self, t, bid, remaining=None):
        return evaluate(self, bid)

    @property
    def leading(self):
        return self.terms[0]


@dataclass(frozen=True)
class GuardedCost:
    """Inner cost capped above (``mode="min"``) or floored below (``mode="max"``) at M."""

    inner: object
    cap: float
    mode: str = "min"

    def __post_init__(self):
        if not isinstance(self.inner, (MonomialCost, PolynomialCost)):
            raise ContractError("guarded cost wraps a monomial or polynomial cost")
        if not (math.isfinite(self.cap) and self.cap > 0):
            raise ContractError(f"guard-rail cap must be positive, got {self.cap!r}")
        if self.mode not in ("min", "max"):
            raise ContractError(f"guard mode must be 'min' or 'max', got {self.mode!r}")

    def __call__(self, bid):
        return evaluate(self, bid)

    def observe(self, t, bid, remaining=None):
        return evaluate(self, bid)


class EmpiricalCost:
    """Cost observed from an external source rather than a formula.

    ``source(t, bid, remaining)`` returns the amount spent in period ``t``.
    Sources may be stateful, so an instance belongs to a single campaign loop.
    """

    def __init__(self, source: Callable, name: str = "empirical"):
        self.source = source
        self.name = name

    def observe(self, t, bid, remaining=None):
        cost = float(self.source(t, bid, remaining))
        if not (math.isfinite(cost) and cost >= 0.0):
            raise DomainError(f"{self.name} source returned invalid cost {cost!r} at period {t}")
        return cost

    def __repr__(self):
        return f"EmpiricalCost({self.name!r})"


def evaluate(fn, bid, t: Optional[int] = None):
    """Cost incurred by submitting ``bid`` under ``fn``.

    ``t`` is only consulted for :class:`EmpiricalCost`.
    """
    if isinstance(fn, EmpiricalCost):
        if t is None:
            raise ContractError("empirical costs need a period index")
        return fn.observe(t, bid)
    bid = _check_bid(bid)
    if isinstance(fn, MonomialCost):
        return _power(fn.C, bid, fn.k, f"{fn.C:g}*b^{fn.k:g}")
    if isinstance(fn, PolynomialCost):
        value = math.fsum(_power(c, bid, k, f"{c:g}*b^{k:g}") for c, k in fn.terms)
        if value < 0:
            raise DomainError(f"polynomial cost is negative ({value!r}) at bid={bid!r}")
        return value
    if isinstance(fn, GuardedCost):
        inner = evaluate(fn.inner, bid)
        return min(inner, fn.cap) if fn.mode == "min" else max(inner, fn.cap)
    raise ContractError(f"not a cost function: {fn!r}")


def monomial_envelope(poly, regime):
    """Bracket a positive polynomial between two monomials sharing one exponent.

    For ``regime="high"`` (bids >= 1) the shared exponent is the largest one;
    for ``regime="low"`` (bids < 1) it is the smallest.  The upper coefficient
    is the sum of absolute coefficients.  The lower coefficient is the leading
    one for bids >= 1, and ``min(c_first, c_last)`` below 1 so the bound stays
    valid when the leading coefficient dominates.
    """
    if isinstance(poly, MonomialCost):
        poly = PolynomialCost(poly.terms)
    if not isinstance(poly, PolynomialCost):
        raise ContractError("monomial_envelope expects a polynomial cost")
    if any(c <= 0 for c, _ in poly.terms):
        raise ContractError("monomial envelope is only established for positive coefficients")
    total = math.fsum(abs(c) for c, _ in poly.terms)
    c_first, k_first = poly.terms[0]
    c_last, k_last = poly.terms[-1]
    if regime in ("high", "bid>=1", ">=1"):
        return MonomialCost(c_first, k_first), MonomialCost(total, k_first)
    if regime in ("low", "bid<1", "<1"):
        return MonomialCost(min(c_first, c_last), k_last), MonomialCost(total, k_last)
    raise ContractError(f"regime must be 'low' or 'high', got {regime!r}")


# -- expression grammar -------------------------------------------------------
#
#   poly    := term ("+" term)*
#   term    := [COEF "*"] "b^" EXP
#   guarded := ("min" | "max") "(" poly "," NUMBER ")"

_NUMBER = r"-?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?"
_TOKEN = re.compile(rf"\s*(?:(?P<num>{_NUMBER})|(?P<name>min|max|b)|(?P<op>[()*^+,]))")


def _tokenize(text):
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            while text[pos].isspace():
                pos += 1
            raise ParseError("unexpected character", text, pos)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind, value=None):
        tok = self.tokens[self.i]
        if tok[0] != kind or (value is not None and tok[1] != value):
            want = repr(value) if value is not None else kind
            got = repr(tok[1]) if tok[1] else "end of input"
            raise ParseError(f"expected {want}, got {got}", self.text, tok[2])
        self.i += 1
        return tok

    def expr(self):
        kind, value, _ = self.peek()
        if kind == "name" and value in ("min", "max"):
            self.i += 1
            self.take("op", "(")
            inner = self.poly()
            self.take("op", ",")
            cap = float(self.take("num")[1])
            self.take("op", ")")
            out = GuardedCost(inner, cap, value)
        else:
            out = self.poly()
        self.take("end")
        return out

    def poly(self):
        start = self.peek()[2]
        terms = [self.term()]
        while self.peek()[:2] == ("op", "+"):
            self.i += 1
            terms.append(self.term())
        if len(terms) == 1:
            return MonomialCost(*terms[0])
        terms.sort(key=lambda ck: -ck[1])
        if len({k for _, k in terms}) != len(terms):
            raise ParseError("repeated exponent in polynomial", self.text, start)
        return PolynomialCost(tuple(terms))

    def term(self):
        coef = 1.0
        if self.peek()[0] == "num":
            coef = float(self.take("num")[1])
            self.take("op", "*")
        self.take("name", "b")
        self.take("op", "^")
        return coef, float(self.take("num")[1])


def parse_cost(text):
    """Parse a cost expression such as ``"min(1*b^2.3,100)"`` or ``"2*b^2+3*b^1"``."""
    if not isinstance(text, str) or not text.strip():
        raise ParseError("empty cost expression")
    try:
        return _Parser(text).expr()
    except ParseError:
        raise
    except ContractError as exc:
        raise ParseError(str(exc), text, 0) from None


def format_cost(fn):
    """Inverse of :func:`parse_cost` (up to float formatting)."""
    if isinstance(fn, (MonomialCost, PolynomialCost)):
        return "+".join(f"{c!r}*b^{k!r}" for c, k in fn.terms)
    if isinstance(fn, GuardedCost):
        return f"{fn.mode}({format_cost(fn.inner)},{fn.cap!r})"
    return repr(fn)
