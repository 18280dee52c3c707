import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mirtlab.errors import LikelihoodDomainError
from mirtlab.irt_core import (
    MISSING,
    ItemKind,
    Response,
    UnivariateItem,
    irf,
    irf_derivative,
    log_bernoulli,
    log_irf_pair,
)

discriminations = st.floats(0.2, 3.0)
difficulties = st.floats(-3.0, 3.0)
asymptotes = st.floats(0.0, 0.5)
abilities = st.floats(-6.0, 6.0)


@st.composite
def items(draw):
    return UnivariateItem.three_pl(draw(discriminations), draw(difficulties), draw(asymptotes))


class TestUnivariateItem:
    def test_constructors_tag_kind(self):
        assert UnivariateItem.rasch(0.3).kind is ItemKind.RASCH
        assert UnivariateItem.two_pl(1.2, 0.3).kind is ItemKind.TWO_PL
        assert UnivariateItem.three_pl(1.2, 0.3, 0.2).kind is ItemKind.THREE_PL

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(kind=ItemKind.TWO_PL, a=0.0),
            dict(kind=ItemKind.TWO_PL, a=-1.0),
            dict(kind=ItemKind.THREE_PL, a=1.0, c=1.0),
            dict(kind=ItemKind.THREE_PL, a=1.0, c=-0.1),
            dict(kind=ItemKind.RASCH, a=2.0),
            dict(kind=ItemKind.RASCH, c=0.1),
            dict(kind=ItemKind.TWO_PL, a=1.0, c=0.2),
        ],
    )
    def test_invariants_rejected(self, kwargs):
        with pytest.raises(ValueError):
            UnivariateItem(**kwargs)

    def test_frozen(self):
        item = UnivariateItem.rasch(0.0)
        with pytest.raises(AttributeError):
            item.b = 1.0


class TestIrf:
    def test_at_difficulty_with_guessing(self):
        assert irf(1.3, UnivariateItem.three_pl(2.0, 1.3, 0.2)) == pytest.approx(0.6, abs=1e-15)

    def test_symmetric_point(self):
        assert irf(0.0, UnivariateItem.two_pl(1.0, 0.0)) == 0.5

    def test_log_three(self):
        assert irf(math.log(3.0), UnivariateItem.two_pl(1.0, 0.0)) == pytest.approx(0.75, abs=1e-15)

    def test_no_scaling_constant(self):
        assert irf(1.0, UnivariateItem.two_pl(1.0, 0.0)) == pytest.approx(1 / (1 + math.exp(-1.0)), rel=1e-15)

    def test_vectorized(self):
        theta = np.linspace(-2, 2, 5)
        item = UnivariateItem.two_pl(1.5, 0.2)
        np.testing.assert_allclose(irf(theta, item), [irf(float(t), item) for t in theta], rtol=1e-15)

    @given(items(), abilities, abilities)
    def test_strictly_increasing(self, item, t1, t2):
        if t1 == t2:
            return
        lo, hi = sorted((t1, t2))
        if irf(lo, item) == irf(hi, item):  # floating saturation far in the tails
            return
        assert irf(lo, item) < irf(hi, item)

    @given(st.floats(0.5, 3.0), difficulties, asymptotes)
    def test_range_and_asymptotes(self, a, b, c):
        item = UnivariateItem.three_pl(a, b, c)
        assert abs(irf(-50.0, item) - item.c) < 1e-9
        assert abs(irf(50.0, item) - 1.0) < 1e-9
        p = irf(0.0, item)
        assert item.c < p < 1.0


class TestIrfDerivative:
    def test_logistic_slope_at_origin(self):
        assert irf_derivative(0.0, UnivariateItem.two_pl(1.0, 0.0)) == pytest.approx(0.25, rel=1e-15)

    def test_scaled_slope(self):
        assert irf_derivative(0.7, UnivariateItem.two_pl(2.0, 0.7)) == pytest.approx(0.5, rel=1e-15)

    @given(items(), abilities)
    def test_matches_central_difference(self, item, theta):
        h = 1e-6
        fd = (irf(theta + h, item) - irf(theta - h, item)) / (2 * h)
        exact = irf_derivative(theta, item)
        assert exact > 0
        if exact > 1e-3:  # rounding in the difference quotient is ~1e-10 absolute
            assert abs(exact - fd) <= 1e-6 * abs(exact)

    @given(items(), abilities)
    def test_closed_form(self, item, theta):
        if abs(item.a * (theta - item.b)) > 10:  # p - c cancels in the oracle
            return
        p = irf(theta, item)
        expected = item.a * (p - item.c) * (1 - p) / (1 - item.c)
        assert irf_derivative(theta, item) == pytest.approx(expected, rel=1e-9, abs=1e-300)


class TestLogIrfPair:
    @given(items(), st.floats(-40, 40))
    def test_consistent_with_irf(self, item, theta):
        log_p, log_q = log_irf_pair(theta, item)
        p = irf(theta, item)
        assert math.exp(log_p) == pytest.approx(p, rel=1e-12)
        assert -math.expm1(log_q) == pytest.approx(p, rel=1e-12, abs=1e-15)

    def test_extreme_logit_stays_finite(self):
        log_p, log_q = log_irf_pair(-800.0, UnivariateItem.two_pl(1.0, 0.0))
        assert log_p == pytest.approx(-800.0)
        assert log_q == 0.0
        log_p, log_q = log_irf_pair(800.0, UnivariateItem.two_pl(1.0, 0.0))
        assert log_q == pytest.approx(-800.0)


class TestLogBernoulli:
    def test_correct(self):
        assert log_bernoulli(0.5, Response.CORRECT) == pytest.approx(-0.693147, abs=1e-6)

    def test_incorrect(self):
        assert log_bernoulli(0.9, 0) == pytest.approx(math.log(0.1), rel=1e-14)

    @pytest.mark.parametrize("p", [0.0, 0.3, 1.0])
    def test_not_administered_contributes_nothing(self, p):
        assert log_bernoulli(p, Response.NOT_ADMINISTERED) == 0.0
        assert log_bernoulli(p, MISSING) == 0.0

    def test_no_cancellation_near_zero(self):
        assert log_bernoulli(1e-20, 0) == pytest.approx(-1e-20, rel=1e-12)

    @pytest.mark.parametrize("p, x", [(0.0, 1), (1.0, 0)])
    def test_domain_error_instead_of_minus_infinity(self, p, x):
        with pytest.raises(LikelihoodDomainError):
            log_bernoulli(p, x)

    @pytest.mark.parametrize("p, x", [(0.0, 0), (1.0, 1)])
    def test_certain_outcomes_are_fine(self, p, x):
        assert log_bernoulli(p, x) == 0.0

    def test_invalid_response(self):
        with pytest.raises(ValueError):
            log_bernoulli(0.5, 2)

    @given(st.floats(1e-12, 1 - 1e-12))
    def test_pair_identity(self, p):
        total = log_bernoulli(p, 1) + log_bernoulli(p, 0)
        assert total == pytest.approx(math.log(p * (1 - p)), rel=1e-12, abs=1e-12)
