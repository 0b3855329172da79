import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize

from honestmjp.rate_models import (
    ChannelPair,
    RateParams,
    cumulative_hazard,
    forward_hazard_time,
    intensity_at,
    inverse_remaining_hazard,
    log_intensity_at,
    scalar_callables,
    scalar_inverse,
)

shapes = st.floats(0.3, 3.0)
rates = st.floats(1e-3, 2.0)
families = st.sampled_from(["constant", "weibull", "gompertz"])


@st.composite
def rate_params(draw):
    fam = draw(families)
    if fam == "constant":
        return RateParams.constant(draw(rates))
    if fam == "gompertz":
        return RateParams.gompertz(draw(st.floats(1e-3, 0.3)), draw(rates))
    return RateParams.weibull(draw(shapes), draw(rates))


@st.composite
def windows(draw):
    t = draw(st.floats(0.05, 30.0))
    r = draw(st.floats(0.0, 1.0)) * t
    return r, t


class TestRateParams:
    def test_constant_pins_shape(self):
        with pytest.raises(ValueError):
            RateParams("constant", 2.0, 0.1)

    @pytest.mark.parametrize("shape,rate", [(0.0, 1.0), (-1.0, 1.0), (1.0, -0.1), (np.nan, 1.0)])
    def test_rejects_bad_values(self, shape, rate):
        with pytest.raises(ValueError):
            RateParams("weibull", shape, rate)

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            RateParams("lognormal", 1.0, 1.0)

    def test_generator_rows_sum_to_zero(self):
        ch = ChannelPair(RateParams.weibull(1.2, 0.006), RateParams.weibull(0.8, 0.023))
        Q = ch.generator(3.0)
        np.testing.assert_allclose(Q.sum(axis=1), 0.0, atol=1e-15)
        assert Q[0, 1] > 0 and Q[1, 0] > 0

    def test_swapped(self):
        a, b = RateParams.constant(0.1), RateParams.constant(0.2)
        assert ChannelPair(a, b).swapped() == ChannelPair(b, a)


class TestIntensity:
    def test_unit_shape_weibull_is_constant(self):
        assert intensity_at(RateParams.weibull(1.0, 0.5), 7.0) == 0.5

    def test_weibull_truth_value(self):
        p = RateParams.weibull(1.2, 0.006)
        expected = 0.006 * 1.2 * 100**0.2
        assert intensity_at(p, 100.0) == pytest.approx(expected, rel=1e-14)
        # central difference of the cumulative hazard
        h = 1e-4
        fd = (cumulative_hazard(p, 0.0, 100.0 + h) - cumulative_hazard(p, 0.0, 100.0 - h)) / (2 * h)
        assert fd == pytest.approx(expected, rel=1e-8)

    def test_weibull_shape_above_one_vanishes_at_zero(self):
        assert intensity_at(RateParams.weibull(2.0, 1.0), 0.0) == 0.0

    def test_weibull_shape_below_one_diverges_at_zero(self):
        with pytest.raises(ValueError):
            intensity_at(RateParams.weibull(0.8, 0.023), 0.0)
        with pytest.raises(ValueError):
            log_intensity_at(RateParams.weibull(0.8, 0.023), 0.0)

    def test_gompertz(self):
        p = RateParams.gompertz(0.05, 0.01)
        assert intensity_at(p, 10.0) == pytest.approx(0.01 * math.exp(0.5), rel=1e-14)

    def test_negative_time(self):
        with pytest.raises(ValueError):
            intensity_at(RateParams.constant(1.0), -1.0)

    @given(rate_params(), st.floats(0.01, 50.0))
    def test_log_intensity_consistent(self, p, t):
        assert log_intensity_at(p, t) == pytest.approx(math.log(intensity_at(p, t)), rel=1e-12, abs=1e-12)


class TestCumulativeHazard:
    def test_weibull_from_origin(self):
        p = RateParams.weibull(1.2, 0.006)
        val = cumulative_hazard(p, 0.0, 100.0)
        assert val == pytest.approx(1.50713, abs=5e-6)
        quad, _ = integrate.quad(lambda s: intensity_at(p, s), 0.0, 100.0, epsabs=0, epsrel=1e-13)
        assert abs(val - quad) <= 1e-10 * val

    def test_constant_window(self):
        p = RateParams.constant(0.047)
        val = cumulative_hazard(p, 10.0, 20.0)
        quad, _ = integrate.quad(lambda s: intensity_at(p, s), 10.0, 20.0, epsrel=1e-13)
        assert val == pytest.approx(0.47, rel=1e-14)
        assert abs(val - quad) <= 1e-12

    @pytest.mark.parametrize("p", [RateParams.constant(0.3), RateParams.weibull(0.8, 0.023),
                                   RateParams.gompertz(0.1, 0.2)])
    def test_empty_window(self, p):
        assert cumulative_hazard(p, 4.2, 4.2) == 0.0

    def test_argument_errors(self):
        p = RateParams.constant(1.0)
        with pytest.raises(ValueError):
            cumulative_hazard(p, 2.0, 1.0)
        with pytest.raises(ValueError):
            cumulative_hazard(p, -1.0, 1.0)

    def test_gompertz_no_overflow(self):
        p = RateParams.gompertz(5.0, 1e-3)
        v = cumulative_hazard(p, 0.0, 150.0)
        assert np.isinf(v) or v > 1e300
        assert np.isfinite(cumulative_hazard(p, 100.0, 100.0 + 1e-300))

    def test_short_window_precision(self):
        p = RateParams.weibull(0.8, 0.023)
        t, h = 50.0, 1e-9
        approx = float(intensity_at(p, t)) * h
        assert cumulative_hazard(p, t - h, t) == pytest.approx(approx, rel=1e-6)

    @settings(max_examples=100, deadline=None)
    @given(rate_params(), windows())
    def test_matches_quadrature(self, p, w):
        r, t = w
        val = float(cumulative_hazard(p, r, t))
        # substitute s = t u^2 near the origin so quad never evaluates the weibull singularity
        f = (lambda u: float(intensity_at(p, r + (t - r) * u * u)) * 2 * u * (t - r))
        quad, _ = integrate.quad(f, 0.0, 1.0, epsabs=0, epsrel=1e-13, limit=200)
        assert val == pytest.approx(quad, rel=1e-10, abs=1e-300)

    @given(rate_params(), windows(), st.floats(0.0, 1.0))
    def test_monotone_in_left_end(self, p, w, frac):
        r1, t = w
        r2 = r1 + frac * (t - r1)
        assert cumulative_hazard(p, r1, t) >= cumulative_hazard(p, r2, t)

    @given(st.floats(1e-3, 5.0), windows())
    def test_unit_shape_weibull_matches_constant(self, lam, w):
        r, t = w
        wb, c = RateParams.weibull(1.0, lam), RateParams.constant(lam)
        assert cumulative_hazard(wb, r, t) == cumulative_hazard(c, r, t)
        assert inverse_remaining_hazard(wb, r, t, 0.3) == inverse_remaining_hazard(c, r, t, 0.3)
        assert intensity_at(wb, t) == intensity_at(c, t)

    @given(rate_params(), windows())
    def test_scalar_closures_agree(self, p, w):
        r, t = w
        _, haz = scalar_callables(p)
        assert haz(r, t) == pytest.approx(float(cumulative_hazard(p, r, t)), rel=1e-12, abs=1e-300)


class TestInverse:
    def test_constant(self):
        assert inverse_remaining_hazard(RateParams.constant(0.5), 0.0, 10.0, 2.0) == 6.0

    @pytest.mark.parametrize("shape", [0.5, 1.2, 2.0])
    def test_zero_mass_returns_right_end(self, shape):
        assert inverse_remaining_hazard(RateParams.weibull(shape, 0.3), 1.0, 10.0, 0.0) == 10.0

    def test_clamped_to_lower(self):
        p = RateParams.weibull(1.2, 0.006)
        assert inverse_remaining_hazard(p, 0.0, 100.0, 5.0) == 0.0
        # bisection: the hazard on (0, 100] never reaches 5, so no root exists
        assert cumulative_hazard(p, 0.0, 100.0) < 5.0
        # below the total the bisection root agrees with the closed form
        root = optimize.brentq(lambda r: cumulative_hazard(p, r, 100.0) - 1.0, 0.0, 100.0, xtol=1e-13)
        assert inverse_remaining_hazard(p, 0.0, 100.0, 1.0) == pytest.approx(root, abs=1e-9)

    def test_zero_rate_truncates(self):
        assert inverse_remaining_hazard(RateParams.constant(0.0), 2.0, 5.0, 0.1) == 2.0

    def test_precondition(self):
        with pytest.raises(ValueError):
            inverse_remaining_hazard(RateParams.constant(1.0), 3.0, 2.0, 0.1)
        with pytest.raises(ValueError):
            inverse_remaining_hazard(RateParams.constant(1.0), 0.0, 2.0, -0.1)

    @settings(max_examples=200)
    @given(rate_params(), windows(), st.floats(1e-6, 1.0 - 1e-6))
    def test_round_trip(self, p, w, frac):
        lower, t = w
        total = float(cumulative_hazard(p, lower, t))
        y = frac * total
        if not y > 0:
            return
        r = float(inverse_remaining_hazard(p, lower, t, y))
        assert lower <= r <= t
        # r is a double: one ulp near t moves the hazard by about eps * t * lambda(t)
        ulp_shift = 4 * np.finfo(float).eps * t * float(intensity_at(p, t))
        assert float(cumulative_hazard(p, r, t)) == pytest.approx(y, rel=1e-10, abs=ulp_shift)

    @given(rate_params(), windows(), st.floats(0.0, 50.0))
    def test_always_in_window(self, p, w, y):
        lower, t = w
        r = inverse_remaining_hazard(p, lower, t, y)
        assert lower <= r <= t

    @given(rate_params(), st.floats(0.0, 20.0), st.floats(1e-4, 5.0))
    def test_forward_inverse(self, p, start, y):
        r = float(forward_hazard_time(p, start, y))
        assert r >= start
        if np.isfinite(r) and r < 1e6:
            assert float(cumulative_hazard(p, start, r)) == pytest.approx(y, rel=1e-9)

    @given(rate_params(), windows(), st.floats(0.0, 50.0))
    def test_scalar_inverse_agrees(self, p, w, y):
        lower, t = w
        assert scalar_inverse(p)(lower, t, y) == pytest.approx(
            float(inverse_remaining_hazard(p, lower, t, y)), rel=1e-12, abs=1e-12)
