import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ivrepr import BsQuote, CallSpec, ImpliedVolDomainError, bs_gamma, bs_price, bs_vega, implied_vol
from ivrepr.bs import bs_theta_identity_residual

ATM = (100.0, 1.0, 0.2, 100.0)

spots = st.floats(1.0, 1000.0)
taus = st.floats(0.01, 5.0)
vols = st.floats(0.01, 2.0)
log_moneyness = st.floats(-1.5, 1.5)


def test_price_atm_closed_form():
    assert bs_price(*ATM) == pytest.approx(7.96557, abs=1e-5)


def test_price_zero_vol_is_intrinsic():
    assert bs_price(100.0, 0.5, 0.0, 80.0) == 20.0


def test_price_large_vol_approaches_spot():
    p = bs_price(100.0, 1.0, 10.0, 100.0)
    assert 0 < 100.0 - p < 1e-4


def test_price_at_expiry_is_intrinsic():
    assert bs_price(120.0, 0.0, 0.3, 100.0) == 20.0
    assert bs_price(90.0, 0.0, 0.3, 100.0) == 0.0


def test_price_rejects_nonfinite():
    with pytest.raises(ValueError):
        bs_price(math.nan, 1.0, 0.2, 100.0)
    with pytest.raises(ValueError):
        bs_price(100.0, 1.0, math.inf, 100.0)


def test_price_vectorizes():
    k = np.array([80.0, 100.0, 120.0])
    p = bs_price(100.0, 1.0, 0.2, k)
    assert p.shape == (3,)
    assert p[1] == pytest.approx(bs_price(*ATM), rel=0, abs=0)


def test_gamma_atm_closed_form():
    # d1 = 0.1, phi(0.1) = 0.3969525
    assert bs_gamma(*ATM) == pytest.approx(0.3969525 / 20.0, abs=1e-6)
    assert bs_gamma(*ATM) == pytest.approx(0.019848, abs=1e-6)


def test_gamma_deep_itm_vanishes():
    assert bs_gamma(100.0, 1.0, 0.2, 1e-6) < 1e-12


@given(spots, taus, vols, log_moneyness, st.floats(0.1, 10.0))
def test_gamma_homogeneity(s, t, v, lm, lam):
    k = s * math.exp(lm)
    assert lam * bs_gamma(lam * s, t, v, lam * k) == pytest.approx(bs_gamma(s, t, v, k), rel=1e-9)


def test_gamma_and_vega_reject_degenerate_inputs():
    for f in (bs_gamma, bs_vega, bs_theta_identity_residual):
        with pytest.raises(ValueError):
            f(100.0, 0.0, 0.2, 100.0)
        with pytest.raises(ValueError):
            f(100.0, 1.0, 0.0, 100.0)


def test_vega_atm_closed_form():
    assert bs_vega(*ATM) == pytest.approx(39.6953, abs=1e-3)


def test_vega_vanishes_at_expiry():
    assert bs_vega(100.0, 1e-8, 0.2, 100.0) < 1e-2


@given(spots, taus, vols, log_moneyness)
def test_gamma_vega_identity(s, t, v, lm):
    k = s * math.exp(lm)
    vega = bs_vega(s, t, v, k)
    assert abs(vega - v * s * s * t * bs_gamma(s, t, v, k)) <= 1e-12 * max(1.0, vega)


@pytest.mark.parametrize("s,t,v,k", [(100, 1, 0.2, 100), (80, 0.3, 0.5, 120), (100, 2, 0.05, 100)])
def test_valuation_identity_examples(s, t, v, k):
    assert abs(bs_theta_identity_residual(s, t, v, k)) <= 1e-10


@given(spots, taus, vols, log_moneyness)
def test_valuation_identity_sweep(s, t, v, lm):
    assert abs(bs_theta_identity_residual(s, t, v, s * math.exp(lm))) <= 1e-10 * s


@given(spots, taus, log_moneyness, vols, vols)
def test_price_strictly_increasing_in_vol(s, t, lm, v1, v2):
    k = s * math.exp(lm)
    lo, hi = sorted((v1, v2))
    if hi - lo < 1e-3:
        return
    p_lo, p_hi = bs_price(s, t, lo, k), bs_price(s, t, hi, k)
    # strict increase is only visible above the rounding floor of the price
    if p_hi - max(s - k, 0.0) > 1e-10 * s:
        assert p_lo < p_hi


@given(spots, taus, vols, log_moneyness)
def test_price_bounds(s, t, v, lm):
    k = s * math.exp(lm)
    p = bs_price(s, t, v, k)
    assert max(s - k, 0.0) <= p <= s


@pytest.mark.parametrize("s,t,v,k", [(100, 1, 0.2, 100), (80, 0.3, 0.5, 120), (150, 2, 0.3, 100),
                                     (100, 0.1, 0.8, 95)])
def test_greeks_match_finite_differences(s, t, v, k):
    ds = 1e-4 * s
    fd_gamma = (bs_price(s + ds, t, v, k) - 2 * bs_price(s, t, v, k) + bs_price(s - ds, t, v, k)) / ds**2
    assert fd_gamma == pytest.approx(bs_gamma(s, t, v, k), rel=1e-6)
    dv = 1e-4 * v
    fd_vega = (bs_price(s, t, v + dv, k) - bs_price(s, t, v - dv, k)) / (2 * dv)
    assert fd_vega == pytest.approx(bs_vega(s, t, v, k), rel=1e-6)


def test_implied_vol_inverts_example():
    assert implied_vol(7.96557, 100.0, 1.0, CallSpec(100.0, 1.0)) == pytest.approx(0.2, abs=1e-6)


@pytest.mark.parametrize("sigma", [0.05, 0.2, 0.8])
@pytest.mark.parametrize("k", [95.0, 100.0, 105.0])
def test_implied_vol_round_trip(sigma, k):
    p = bs_price(100.0, 1.0, sigma, k)
    assert implied_vol(p, 100.0, 1.0, k) == pytest.approx(sigma, abs=1e-8)


def test_implied_vol_domain_errors_name_the_bound():
    with pytest.raises(ImpliedVolDomainError) as lo:
        implied_vol(20.0, 120.0, 1.0, 100.0)
    assert lo.value.bound == "lower"
    with pytest.raises(ImpliedVolDomainError) as hi:
        implied_vol(100.0, 100.0, 1.0, 100.0)
    assert hi.value.bound == "upper"


def test_quote_wrapper_agrees_with_functions():
    q, c = BsQuote(100.0, 1.0, 0.2), CallSpec(100.0, 1.0)
    assert q.price(c) == bs_price(*ATM)
    assert q.gamma(c) == bs_gamma(*ATM)
    assert q.vega(c) == bs_vega(*ATM)


@pytest.mark.parametrize("bad", [(0.0, 1.0), (-1.0, 1.0), (100.0, 0.0), (math.nan, 1.0)])
def test_callspec_validation(bad):
    with pytest.raises(ValueError):
        CallSpec(*bad)


@settings(max_examples=50)
@given(spots, taus, vols, log_moneyness)
def test_implied_vol_round_trip_property(s, t, v, lm):
    k = s * math.exp(lm)
    p = bs_price(s, t, v, k)
    # skip prices that sit on the rounding floor of either bound
    if p - max(s - k, 0.0) < 1e-6 * s or s - p < 1e-6 * s:
        return
    assert bs_price(s, t, implied_vol(p, s, t, k), k) == pytest.approx(p, abs=1e-9 * s)
