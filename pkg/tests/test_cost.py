import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bidpacer.cost import (
    EmpiricalCost,
    GuardedCost,
    MonomialCost,
    PolynomialCost,
    evaluate,
    format_cost,
    monomial_envelope,
    parse_cost,
)
from bidpacer.errors import ContractError, DomainError, ParseError


def test_linear_identity():
    assert evaluate(MonomialCost(1, 1), 49.95) == 49.95


def test_guard_slack():
    assert evaluate(GuardedCost(MonomialCost(1, 0.5), 100), 4) == 2.0


def test_guard_binds():
    assert 10**2.3 > 100
    assert evaluate(GuardedCost(MonomialCost(1, 2.3), 100), 10) == 100


def test_polynomial_sum():
    p = PolynomialCost(((2, 2), (3, 1)))
    assert evaluate(p, 2.0) == 14.0


def test_guarded_zero_bid_allowed():
    assert evaluate(GuardedCost(MonomialCost(1, 2), 5.0, "max"), 0.0) == 5.0


def test_singular_at_zero():
    with pytest.raises(DomainError, match="singular"):
        evaluate(MonomialCost(1, -0.5), 0.0)


def test_overflow_names_term():
    with pytest.raises(DomainError, match=r"1\*b\^400"):
        evaluate(PolynomialCost(((1, 400), (1, 1))), 1e10)


@pytest.mark.parametrize("bid", [-1.0, math.nan, math.inf])
def test_bad_bid(bid):
    with pytest.raises(ContractError):
        evaluate(MonomialCost(1, 1), bid)


@pytest.mark.parametrize(
    "kwargs",
    [dict(C=0, k=1), dict(C=-1, k=1), dict(C=1, k=math.inf)],
)
def test_monomial_invariants(kwargs):
    with pytest.raises(ContractError):
        MonomialCost(**kwargs)


def test_polynomial_invariants():
    with pytest.raises(ContractError):
        PolynomialCost(())
    with pytest.raises(ContractError):
        PolynomialCost(((1, 1), (1, 2)))
    with pytest.raises(ContractError):
        GuardedCost(MonomialCost(1, 1), 0)
    with pytest.raises(ContractError):
        GuardedCost(MonomialCost(1, 1), 5, "clip")


def test_empirical_cost_validates():
    fn = EmpiricalCost(lambda t, b, r: -1.0, "broken")
    with pytest.raises(DomainError, match="broken"):
        fn.observe(0, 1.0)
    with pytest.raises(ContractError):
        evaluate(fn, 1.0)
    assert evaluate(EmpiricalCost(lambda t, b, r: b * t), 2.0, t=3) == 6.0


# -- envelopes ----------------------------------------------------------------


def test_envelope_high():
    lower, upper = monomial_envelope(PolynomialCost(((2, 2), (3, 1))), "high")
    assert (lower.C, lower.k, upper.C, upper.k) == (2, 2, 5, 2)
    p = PolynomialCost(((2, 2), (3, 1)))
    # at b=1 every power is 1, so the upper envelope touches the polynomial
    assert lower(1) < p(1) == upper(1)
    for b in (2, 5, 10):
        assert lower(b) < p(b) < upper(b)


def test_envelope_low():
    p = PolynomialCost(((2, 2), (3, 1)))
    lower, upper = monomial_envelope(p, "low")
    assert (lower.C, lower.k, upper.C, upper.k) == (2, 1, 5, 1)
    for b in (0.1, 0.5, 0.9):
        assert lower(b) < p(b) < upper(b)


@pytest.mark.parametrize("regime", ["low", "high"])
def test_envelope_of_monomial_is_itself(regime):
    lower, upper = monomial_envelope(MonomialCost(4, 1.5), regime)
    assert lower == upper == MonomialCost(4, 1.5)


def test_envelope_rejects_nonpositive():
    with pytest.raises(ContractError):
        monomial_envelope(PolynomialCost(((2, 2), (-3, 1))), "high")
    with pytest.raises(ContractError):
        monomial_envelope(PolynomialCost(((2, 2), (3, 1))), "middle")


def test_low_envelope_when_leading_coefficient_dominates():
    # leading coefficient larger than the trailing one
    p = PolynomialCost(((5, 1.5), (0.5, 0.3)))
    lower, upper = monomial_envelope(p, "low")
    for b in np.linspace(0.01, 0.99, 50):
        assert lower(b) <= p(b) <= upper(b)


@st.composite
def polynomials(draw):
    m = draw(st.integers(1, 4))
    exps = sorted(draw(st.lists(st.floats(0.05, 3.0), min_size=m, max_size=m, unique=True)), reverse=True)
    if any(a - b < 1e-3 for a, b in zip(exps, exps[1:])):
        exps = [3.0 - 0.7 * i for i in range(m)]
    coefs = draw(st.lists(st.floats(0.01, 10.0), min_size=m, max_size=m))
    return PolynomialCost(tuple(zip(coefs, exps)))


@settings(max_examples=200, deadline=None)
@given(polynomials())
def test_envelope_brackets(poly):
    strict = len(poly.terms) >= 2
    for regime, grid in (("high", np.linspace(1.0, 50.0, 100)), ("low", np.linspace(0.01, 0.99, 100))):
        lower, upper = monomial_envelope(poly, regime)
        for b in grid:
            lo, v, hi = lower(b), poly(b), upper(b)
            assert lo <= v <= hi
            if strict and b != 1.0:
                assert lo < v < hi


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-6, 1e6), st.floats(0.1, 3.0), st.floats(0.1, 1000.0))
def test_guard_bounds(bid, k, M):
    inner = MonomialCost(1.0, k)
    assert GuardedCost(inner, M, "min")(bid) <= M
    assert GuardedCost(inner, M, "max")(bid) >= M


@given(st.floats(0.0, 1e3), st.floats(0.1, 3.0))
def test_evaluate_pure(bid, k):
    fn = PolynomialCost(((1.5, k), (0.5, k / 2)))
    assert evaluate(fn, bid) == evaluate(fn, bid)


# -- grammar ------------------------------------------------------------------


@pytest.mark.parametrize(
    "text, expected",
    [
        ("1*b^0.5", MonomialCost(1, 0.5)),
        ("b^2", MonomialCost(1, 2)),
        ("min(1*b^2.3,100)", GuardedCost(MonomialCost(1, 2.3), 100, "min")),
        ("max( b^1 , 7 )", GuardedCost(MonomialCost(1, 1), 7, "max")),
        ("2*b^2+3*b^1", PolynomialCost(((2, 2), (3, 1)))),
        ("3*b^1 + 2*b^2", PolynomialCost(((2, 2), (3, 1)))),
        ("1e-1*b^-0.5", MonomialCost(0.1, -0.5)),
    ],
)
def test_parse(text, expected):
    assert parse_cost(text) == expected


@pytest.mark.parametrize(
    "text, pos",
    [("b^^2", 2), ("2b^2", 1), ("min(b^2)", 7), ("b^2+", 4), ("b^2 x", 4), ("b^2+b^2", 0)],
)
def test_parse_errors_point_at_position(text, pos):
    with pytest.raises(ParseError) as info:
        parse_cost(text)
    assert info.value.pos == pos
    assert "^" in str(info.value).splitlines()[-1]


def test_parse_rejects_empty_and_bad_coefficient():
    with pytest.raises(ParseError):
        parse_cost("  ")
    with pytest.raises(ParseError):
        parse_cost("-1*b^2")


@given(polynomials())
def test_format_roundtrip(poly):
    assert parse_cost(format_cost(poly)).terms == poly.terms
    g = parse_cost(format_cost(GuardedCost(poly, 12.5, "min")))
    assert (g.inner.terms, g.cap, g.mode) == (poly.terms, 12.5, "min")
