"""Black-Scholes call analytics with zero rates and no dividends.

All pricing functions broadcast over numpy arrays. Arguments follow the
order ``(spot, tau, sigma, strike)`` where ``tau = T - t`` is the remaining
time to expiry.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy.special import ndtr

from .errors import ConvergenceError, ImpliedVolDomainError

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class CallSpec:
    """European call with strike ``strike`` expiring at ``maturity`` (years)."""

    strike: float
    maturity: float

    def __post_init__(self):
        if not (math.isfinite(self.strike) and self.strike > 0):
            raise ValueError(f"strike must be positive and finite, got {self.strike!r}")
        if not (math.isfinite(self.maturity) and self.maturity > 0):
            raise ValueError(f"maturity must be positive and finite, got {self.maturity!r}")


@dataclass(frozen=True)
class BsQuote:
    """Market state for a Black-Scholes evaluation."""

    spot: float
    tau: float
    sigma: float

    def __post_init__(self):
        _check_inputs(self.spot, self.tau, self.sigma, 1.0)

    def price(self, call: CallSpec) -> float:
        return float(bs_price(self.spot, self.tau, self.sigma, call.strike))

    def gamma(self, call: CallSpec) -> float:
        return float(bs_gamma(self.spot, self.tau, self.sigma, call.strike))

    def vega(self, call: CallSpec) -> float:
        return float(bs_vega(self.spot, self.tau, self.sigma, call.strike))


def _check_inputs(spot, tau, sigma, strike):
    arrays = [np.asarray(a, dtype=float) for a in (spot, tau, sigma, strike)]
    for name, a in zip(("spot", "tau", "sigma", "strike"), arrays):
        if not np.all(np.isfinite(a)):
            raise ValueError(f"{name} must be finite")
    s, t, v, k = arrays
    if np.any(s <= 0):
        raise ValueError("spot must be positive")
    if np.any(k <= 0):
        raise ValueError("strike must be positive")
    if np.any(t < 0):
        raise ValueError("tau must be non-negative")
    if np.any(v < 0):
        raise ValueError("sigma must be non-negative")
    return arrays


def _d1_d2(s, t, v, k):
    sd = v * np.sqrt(t)
    d1 = (np.log(s / k) + 0.5 * sd * sd) / sd
    return d1, d1 - sd, sd


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def bs_price(spot, tau, sigma, strike):
    """Call price ``S N(d1) - K N(d2)``; intrinsic value when ``sigma*sqrt(tau) == 0``."""
    s, t, v, k = _check_inputs(spot, tau, sigma, strike)
    shape = np.broadcast_shapes(s.shape, t.shape, v.shape, k.shape)
    s, t, v, k = (np.broadcast_to(a, shape).ravel() for a in (s, t, v, k))
    intrinsic = np.maximum(s - k, 0.0)
    live = v * np.sqrt(t) > 0
    out = intrinsic.astype(float, copy=True)
    if np.any(live):
        d1, d2, _ = _d1_d2(s[live], t[live], v[live], k[live])
        val = s[live] * ndtr(d1) - k[live] * ndtr(d2)
        # rounding can dip a hair outside the no-arbitrage band
        out[live] = np.clip(val, intrinsic[live], s[live])
    return _scalar_or_array(out.reshape(shape))


def _require_live(t, v):
    if np.any(t <= 0) or np.any(v <= 0):
        raise ValueError("gamma/vega need tau > 0 and sigma > 0 (Dirac limit otherwise)")


def bs_gamma(spot, tau, sigma, strike):
    """``phi(d1) / (S sigma sqrt(tau))``."""
    s, t, v, k = _check_inputs(spot, tau, sigma, strike)
    _require_live(t, v)
    d1, _, sd = _d1_d2(s, t, v, k)
    return _scalar_or_array(_INV_SQRT_2PI * np.exp(-0.5 * d1 * d1) / (s * sd))


def bs_vega(spot, tau, sigma, strike):
    """Vega in the strike form ``K phi(d2) sqrt(tau)``.

    Evaluated independently of :func:`bs_gamma` (which uses the spot form) so
    that ``vega == sigma * S**2 * tau * gamma`` is a genuine identity check.
    """
    s, t, v, k = _check_inputs(spot, tau, sigma, strike)
    _require_live(t, v)
    _, d2, _ = _d1_d2(s, t, v, k)
    return _scalar_or_array(k * _INV_SQRT_2PI * np.exp(-0.5 * d2 * d2) * np.sqrt(t))


def bs_theta_identity_residual(spot, tau, sigma, strike):
    """``dC/dt + 0.5 sigma^2 S^2 d2C/dS2`` from closed forms; zero up to rounding.

    Theta uses the strike form ``-K phi(d2) sigma / (2 sqrt(tau))``, gamma the
    spot form, so cancellation is not structural.
    """
    s, t, v, k = _check_inputs(spot, tau, sigma, strike)
    _require_live(t, v)
    d1, d2, sd = _d1_d2(s, t, v, k)
    theta = -k * _INV_SQRT_2PI * np.exp(-0.5 * d2 * d2) * v / (2.0 * np.sqrt(t))
    gamma = _INV_SQRT_2PI * np.exp(-0.5 * d1 * d1) / (s * sd)
    return _scalar_or_array(theta + 0.5 * v * v * s * s * gamma)


def implied_vol(price: float, spot: float, tau: float, call_or_strike,
                *, tol: float = 1e-10, max_iter: int = 100) -> float:
    """Invert :func:`bs_price` in ``sigma``.

    Safeguarded Newton on a maintained bracket: Newton steps use vega and fall
    back to bisection whenever they leave the bracket or vega underflows.
    Convergence is declared on the price residual.
    """
    strike = call_or_strike.strike if isinstance(call_or_strike, CallSpec) else float(call_or_strike)
    _check_inputs(spot, tau, 0.0, strike)
    if not math.isfinite(price):
        raise ValueError("price must be finite")
    if tau <= 0:
        raise ValueError("tau must be positive to invert a price")
    lower = max(spot - strike, 0.0)
    if price <= lower:
        raise ImpliedVolDomainError(price, "lower", lower)
    if price >= spot:
        raise ImpliedVolDomainError(price, "upper", spot)

    def f(sig):
        return bs_price(spot, tau, sig, strike) - price

    lo, hi = 0.0, 1.0
    while f(hi) < 0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e6:
            raise ConvergenceError("could not bracket implied volatility")
    # Brenner-Subrahmanyam seed, kept inside the bracket
    sig = min(max(math.sqrt(2.0 * math.pi / tau) * price / spot, lo), hi)
    if not lo < sig < hi:
        sig = 0.5 * (lo + hi)
    for _ in range(max_iter):
        r = f(sig)
        if abs(r) <= tol:
            return sig
        if r > 0:
            hi = sig
        else:
            lo = sig
        vega = bs_vega(spot, tau, sig, strike) if sig > 0 else 0.0
        step_ok = vega > 1e-300
        if step_ok:
            cand = sig - r / vega
            step_ok = lo < cand < hi
        sig = cand if step_ok else 0.5 * (lo + hi)
        if hi - lo <= 4.0 * np.finfo(float).eps * hi:
            return sig
    raise ConvergenceError(f"implied_vol did not converge in {max_iter} iterations")
