"""State-switching model: local vol up to ``tau``, Black-Scholes after.

Conditioning on ``F_tau`` prices the call in closed form on each path,

    E[(S~_T - K)^+] = E[C_BS(tau, S_tau, K, T; sigma_tau)],

so only the pre-switch leg is simulated (a Rao-Blackwellised estimator).
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy.optimize import brentq

from .bs import CallSpec, bs_price, bs_vega
from .errors import BracketError
from .montecarlo import McSample, mc_simulate, mean_and_stderr
from .surfaces import LocalVolSurface

DEFAULT_PATHS = 1_000_000
DEFAULT_STEPS = 500


@dataclass(frozen=True)
class SwitchSpec:
    """Switch at ``tau`` from ``surface`` to constant vol ``sigma_tau``."""

    tau: float
    sigma_tau: float
    surface: LocalVolSurface

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau >= 0):
            raise ValueError("tau must be non-negative")
        if not (math.isfinite(self.sigma_tau) and self.sigma_tau > 0):
            raise ValueError("sigma_tau must be positive")


def _check(spec: SwitchSpec, call: CallSpec):
    if spec.tau >= call.maturity:
        raise ValueError("switch time must be strictly before maturity")


def switch_sample(surface: LocalVolSurface, spot0: float, taus, paths: int = DEFAULT_PATHS,
                  steps: int = DEFAULT_STEPS, seed: int = 0, *, workers: int = 1) -> McSample:
    """Pre-switch spots at every ``tau`` from one simulation on ``[0, max(taus)]``."""
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    horizon = float(taus.max())
    if horizon <= 0:
        return McSample(int(seed), int(paths), int(steps), taus,
                        np.full((taus.size, 1), float(spot0)))
    return mc_simulate(surface, spot0, horizon, taus, paths, steps, seed, workers=workers)


def price_switched_call(spec: SwitchSpec, spot0: float, call: CallSpec,
                        paths: int = DEFAULT_PATHS, steps: int = DEFAULT_STEPS, seed: int = 0,
                        *, sample: McSample | None = None, workers: int = 1):
    """Conditional Monte Carlo price of the call under the switched dynamics.

    Returns ``(price, stderr)``. At ``tau = 0`` nothing is random and the
    result is the Black-Scholes price with zero standard error. ``sample``
    reuses pre-simulated spots (see :func:`switch_sample`).
    """
    _check(spec, call)
    remaining = call.maturity - spec.tau
    if spec.tau == 0:
        return float(bs_price(spot0, remaining, spec.sigma_tau, call.strike)), 0.0
    if sample is None:
        sample = mc_simulate(spec.surface, spot0, spec.tau, [spec.tau], paths, steps, seed,
                             workers=workers)
    s_tau = sample.at(spec.tau)
    return mean_and_stderr(bs_price(s_tau, remaining, spec.sigma_tau, call.strike))


@dataclass(frozen=True)
class ForwardVolEstimate:
    tau: float
    sigma: float
    stderr: float
    price_stderr: float

    @property
    def interval(self) -> tuple[float, float]:
        return self.sigma - 3.0 * self.stderr, self.sigma + 3.0 * self.stderr


def forward_implied_vol_mc(surface: LocalVolSurface, spot0: float, call: CallSpec, tau: float,
                           target: float, paths: int = DEFAULT_PATHS,
                           steps: int = DEFAULT_STEPS, seed: int = 0, *,
                           sample: McSample | None = None,
                           workers: int = 1) -> ForwardVolEstimate:
    """Monte Carlo estimate of the forward-starting implied vol at ``tau``.

    Solves ``mean(C_BS(tau, S_tau; sigma)) = target`` over sigma with the
    simulated ``S_tau`` held fixed, which keeps the objective smooth and
    strictly increasing. The standard error is the price standard error
    divided by the mean vega at the root.
    """
    _check(SwitchSpec(tau, 1.0, surface), call)
    remaining = call.maturity - tau
    if tau == 0:
        s_tau = np.array([float(spot0)])
    else:
        if sample is None:
            sample = mc_simulate(surface, spot0, tau, [tau], paths, steps, seed, workers=workers)
        s_tau = sample.at(tau)

    def f(sig):
        return float(np.mean(bs_price(s_tau, remaining, sig, call.strike))) - target

    lo_val = f(0.0)
    if lo_val >= 0:
        _, se = mean_and_stderr(np.maximum(s_tau - call.strike, 0.0))
        raise BracketError(
            f"tau={tau}: simulated E[(S_tau-K)^+] exceeds target by {lo_val:.3e} "
            f"(price stderr {se:.3e}, 3-sigma band [{lo_val - 3 * se:.3e}, {lo_val + 3 * se:.3e}])")
    hi = 1.0
    while f(hi) <= 0:
        hi *= 2.0
        if hi > 1024:
            se = mean_and_stderr(s_tau)[1]
            raise BracketError(f"tau={tau}: no upper bracket; simulated E[S_tau] "
                               f"{s_tau.mean():.6g} +/- {3 * se:.3g} below target")
    sig = brentq(f, 0.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    _, price_se = mean_and_stderr(bs_price(s_tau, remaining, sig, call.strike))
    vega = float(np.mean(bs_vega(s_tau, remaining, sig, call.strike)))
    return ForwardVolEstimate(float(tau), float(sig), price_se / vega, price_se)
