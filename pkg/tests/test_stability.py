import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tdd_dynamics.errors import DegenerateInput, ZeroSeparation
from tdd_dynamics.stability import (
    COUPLED,
    FOLD,
    NEUTRAL,
    STRETCH,
    UNCOUPLED,
    predicted_sigma,
    sigma_distance,
    stability_metric,
    twin_divergence,
    twin_lyapunov,
)


def test_sigma_examples():
    assert stability_metric({1, 2}, {1, 2}) == 0
    assert stability_metric({1, 2}, {3}) == 1
    assert stability_metric(set("ABC"), set("ABCD")) == Fraction(1, 4)
    with pytest.raises(DegenerateInput):
        stability_metric(set(), set())


keysets = st.frozensets(st.integers(0, 15), max_size=10)


@given(keysets, keysets)
def test_sigma_symmetric_and_bounded(a, b):
    if not (a or b):
        return
    s = stability_metric(a, b)
    assert s == stability_metric(b, a)
    assert 0 <= s <= 1
    assert (s == 0) == (a == b)
    assert (s == 1) == (not a & b)


@given(keysets, keysets, keysets)
def test_sigma_triangle(a, b, c):
    if a and b and c:
        assert stability_metric(a, c) <= stability_metric(a, b) + stability_metric(b, c)


def test_sigma_distance():
    assert sigma_distance(Fraction(1, 4), Fraction(3, 4)) == Fraction(1, 2)


def test_predicted_sigma_examples():
    assert predicted_sigma(UNCOUPLED, 10, 2) == pytest.approx(1 / 257)
    assert predicted_sigma(UNCOUPLED, 5, 5) == 0.5
    assert predicted_sigma(COUPLED, 1, 4) == 0.9375
    with pytest.raises(ValueError):
        predicted_sigma("other", 1, 1)
    with pytest.raises(ValueError):
        predicted_sigma(COUPLED, 1, 0)


@given(st.integers(1, 40), st.integers(1, 40))
def test_predicted_sigma_monotone(b, k):
    assert predicted_sigma(UNCOUPLED, b + 1, k) < predicted_sigma(UNCOUPLED, b, k)
    assert predicted_sigma(UNCOUPLED, b, k + 1) > predicted_sigma(UNCOUPLED, b, k)
    if k < 40:
        assert predicted_sigma(COUPLED, b, k + 1) > predicted_sigma(COUPLED, b, k)
    assert predicted_sigma(COUPLED, b, k) < 1


def test_twin_divergence_examples():
    a = [Fraction(1, 2), Fraction(1, 2)]
    b = [Fraction(1, 4), Fraction(1, 2)]
    s = twin_divergence(a, b, 0)
    assert (s.delta, s.lambda_, s.kind) == (0.0, -math.inf, FOLD)

    a = [0.50, 0.50, 0.50]
    b = [0.51, 0.54, 0.51]
    s = twin_divergence(a, b, 0)
    assert s.delta == pytest.approx(4)
    assert s.lambda_ == pytest.approx(math.log(4))
    assert s.kind == STRETCH
    s = twin_divergence(a, b, 1)
    assert s.delta == pytest.approx(0.25)
    assert s.lambda_ == pytest.approx(-math.log(4))
    assert s.kind == FOLD

    with pytest.raises(ZeroSeparation):
        twin_divergence([0.3, 0.4], [0.3, 0.5], 0)


@given(
    st.lists(st.fractions(0, 1), min_size=2, max_size=2),
    st.lists(st.fractions(0, 1), min_size=2, max_size=2),
)
def test_twin_kinds_partition(a, b):
    try:
        s = twin_divergence(a, b, 0)
    except ZeroSeparation:
        assert a[0] == b[0]
        return
    kinds = [s.delta > 1, s.delta < 1, s.delta == 1]
    assert sum(kinds) == 1
    assert s.kind == [STRETCH, FOLD, NEUTRAL][kinds.index(True)]


def test_twin_lyapunov_median_and_skips():
    a = [Fraction(1, 2)] * 5
    b = [Fraction(1, 2), Fraction(1, 4), Fraction(1, 8), Fraction(1, 16), Fraction(1, 2)]
    est = twin_lyapunov(a, b)
    assert est.method == "direct_twin"
    # separations 0, 1/4, 3/8, 7/16, 0: step 0 is skipped, ratios 3/2, 7/6, 0
    assert [i for i, _ in est.fit_points] == [1, 2, 3]
    assert est.fit_points[2][1] == -math.inf
    assert est.lambda_ == pytest.approx(math.log(7 / 6))
    assert est.notes == ("1 zero-separation steps skipped",)

    same = twin_lyapunov([0.2, 0.3], [0.2, 0.3])
    assert math.isnan(same.lambda_)
