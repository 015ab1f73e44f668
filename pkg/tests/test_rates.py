import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fcount.errors import AmbiguityError, DomainError, UnreachableMassError
from fcount.rates import (
    Constant,
    Makeham,
    Table,
    Weibull,
    cum_mass,
    invert_cum_mass,
    load_table_csv,
    parse_rate,
    rate_at,
)


def test_rate_at_examples():
    assert rate_at(Weibull(1, 1), 3.7) == pytest.approx(1.0)
    assert rate_at(Weibull(2, 2), 2.0) == pytest.approx(1.0)
    assert rate_at(Makeham(b=1, c=1, mu=0.5), 0.0) == pytest.approx(1.5)


def test_weibull_small_shape_infinite_at_zero():
    r = Weibull(1.0, 0.5)
    assert rate_at(r, 0.0) == math.inf
    assert cum_mass(r, 0.0, 4.0) == pytest.approx(2.0)


def test_cum_mass_examples():
    assert cum_mass(Weibull(1, 2), 1.5, 1.5) == 0.0
    assert cum_mass(Weibull(1, 2), 1.0, 2.0) == pytest.approx(3.0)
    assert cum_mass(Makeham(b=1, c=1, mu=0), 0.0, 1.0) == pytest.approx(math.e - 1, rel=1e-14)


def test_cum_mass_domain():
    with pytest.raises(DomainError):
        cum_mass(Constant(1.0), 2.0, 1.0)
    with pytest.raises(DomainError):
        rate_at(Constant(1.0), -0.1)


def test_invert_examples():
    assert invert_cum_mass(Weibull(2, 2), 0.0) == 0.0
    assert invert_cum_mass(Weibull(2, 2), 1.0) == pytest.approx(2.0)
    assert invert_cum_mass(Constant(2.0), 3.0) == pytest.approx(1.5)


RATES = [
    Constant(0.7),
    Weibull(2.0, 2.0),
    Weibull(1.3, 0.6),
    Makeham(b=0.8, c=0.5, mu=0.3),
    Makeham(b=2.0, c=1.0, mu=0.0),
    Table([0.0, 1.0, 2.5], [1.0, 0.2, 3.0]),
]


@pytest.mark.parametrize("r", RATES, ids=lambda r: r.describe())
@given(st.floats(0, 50), st.floats(0, 50), st.floats(0, 50))
@settings(max_examples=30, deadline=None)
def test_cum_mass_additive(r, a, b, c):
    a, b, c = sorted((a, b, c))
    lhs = cum_mass(r, a, b) + cum_mass(r, b, c)
    assert lhs == pytest.approx(cum_mass(r, a, c), abs=1e-12 * max(1.0, cum_mass(r, 0, c)))


@pytest.mark.parametrize("r", RATES, ids=lambda r: r.describe())
def test_cum_mass_nondecreasing(r):
    t = np.linspace(0, 10, 500)
    assert np.all(np.diff(cum_mass(r, np.zeros_like(t), t)) >= 0)


@pytest.mark.parametrize("r", RATES, ids=lambda r: r.describe())
@given(st.floats(0, 200))
@settings(max_examples=40, deadline=None)
def test_invert_is_right_inverse(r, y):
    t = invert_cum_mass(r, y)
    assert abs(cum_mass(r, 0.0, t) - y) <= 1e-10 * (1 + y)


def test_invert_vectorized():
    y = np.array([0.0, 0.5, 5.0])
    out = invert_cum_mass(Makeham(b=1, c=1, mu=0.2), y)
    assert out.shape == (3,)
    np.testing.assert_allclose(cum_mass(Makeham(b=1, c=1, mu=0.2), np.zeros(3), out), y, atol=1e-10)


def test_weibull_c1_matches_constant():
    t = np.linspace(0, 7, 40)
    np.testing.assert_allclose(rate_at(Weibull(2.5, 1.0), t), rate_at(Constant(0.4), t))
    np.testing.assert_allclose(cum_mass(Weibull(2.5, 1.0), 0 * t, t), cum_mass(Constant(0.4), 0 * t, t))


def test_invalid_parameters():
    with pytest.raises(DomainError):
        Weibull(0.0, 1.0)
    with pytest.raises(DomainError):
        Weibull(1.0, 0.0)
    with pytest.raises(DomainError):
        Makeham(b=0.0, c=1.0)
    with pytest.raises(DomainError):
        Constant(-1.0)
    with pytest.raises(DomainError):
        Table([0.5, 1.0], [1.0, 1.0])
    with pytest.raises(DomainError):
        Table([0.0, 1.0, 1.0], [1.0, 1.0, 1.0])
    with pytest.raises(DomainError):
        invert_cum_mass(Constant(1.0), -1.0)


def test_table_exact_piecewise():
    r = Table([0.0, 1.0, 3.0], [2.0, 0.5, 1.0])
    assert cum_mass(r, 0.0, 1.0) == 2.0
    assert cum_mass(r, 0.0, 3.0) == 3.0
    assert cum_mass(r, 0.5, 4.0) == pytest.approx(3.0)
    assert invert_cum_mass(r, 2.5) == pytest.approx(2.0)
    assert rate_at(r, 1.0) == 0.5


def test_table_flat_and_unreachable():
    r = Table([0.0, 1.0, 2.0], [1.0, 0.0, 1.0])
    with pytest.raises(AmbiguityError):
        invert_cum_mass(r, 1.0)
    assert invert_cum_mass(r, 1.5) == pytest.approx(2.5)
    assert invert_cum_mass(r, 0.5) == pytest.approx(0.5)
    dead = Table([0.0, 1.0], [1.0, 0.0])
    with pytest.raises(UnreachableMassError):
        invert_cum_mass(dead, 2.0)
    with pytest.raises(UnreachableMassError):
        invert_cum_mass(Constant(0.0), 1.0)


def test_load_table_csv(tmp_path):
    p = tmp_path / "rate.csv"
    p.write_text("time,rate\n0,1.5\n2,0.5\n")
    r = load_table_csv(p)
    assert cum_mass(r, 0, 4) == pytest.approx(4.0)
    q = tmp_path / "noheader.csv"
    q.write_text("0,1.5\n2,0.5\n")
    assert load_table_csv(q) == r
    bad = tmp_path / "bad.csv"
    bad.write_text("0,1\n0,2\n")
    with pytest.raises(DomainError):
        load_table_csv(bad)


def test_parse_rate(tmp_path):
    assert parse_rate("constant:2") == Constant(2.0)
    assert parse_rate("weibull:b=2,c=3") == Weibull(2.0, 3.0)
    assert parse_rate("makeham:b=1,c=2,mu=0.5") == Makeham(1.0, 2.0, 0.5)
    p = tmp_path / "r.csv"
    p.write_text("0,1\n")
    assert isinstance(parse_rate(f"table:{p}"), Table)
    for bad in ("gompertz:b=1", "weibull:b=1", "weibull:b"):
        with pytest.raises(DomainError):
            parse_rate(bad)
