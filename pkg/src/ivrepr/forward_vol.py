"""Forward-starting implied volatility.

For each grid time ``t < T`` the constant vol ``sigma_bar(t)`` solves

    E[C_BS(t, S_t, K, T; sigma_bar)] = C(K, T).

The left side is continuous and strictly increasing in sigma, runs from
``E[(S_t - K)^+]`` at zero vol to ``E[S_t]`` as sigma grows, and the target
lies between those two values (calendar spreads are non-negative for a
martingale), so the root exists and is unique.
"""

from __future__ import annotations

from dataclasses import dataclass
import csv
import math

import numpy as np
from scipy.optimize import brentq

from .bs import CallSpec, bs_price
from .density import DensitySurface, call_price_from_density
from .errors import BracketError

#: Brent tolerances; convergence is then checked on the price residual
_XTOL = 1e-15
_RTOL = 4.0 * np.finfo(float).eps
#: hard cap while doubling the upper bracket
_SIGMA_HI_CAP = 1024.0


@dataclass(frozen=True, eq=False)
class ForwardVolCurve:
    """``sigma_bar`` on the grid times ``t_0 = 0, ..., t_{M-1} = T - dt``."""

    call: CallSpec
    spot0: float
    times: np.ndarray
    sigma_bar: np.ndarray
    target: float
    residuals: np.ndarray
    lower_brackets: np.ndarray
    upper_brackets: np.ndarray

    @property
    def total_variance(self) -> np.ndarray:
        """``sigma_bar(t)^2 (T - t)``."""
        return self.sigma_bar ** 2 * (self.call.maturity - self.times)

    def to_csv(self, path, header_lines=()):
        write_columns(path, {"t": self.times, "sigma_bar": self.sigma_bar,
                             "residual": self.residuals}, header_lines)


def write_columns(path, columns: dict, header_lines=()):
    """CSV with 17 significant digits; ``header_lines`` become ``#`` comments."""
    names = list(columns)
    cols = [np.asarray(columns[n], dtype=float) for n in names]
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([format(v, ".17g") for v in row])


def _check_time(density: DensitySurface, t: float, call: CallSpec) -> int:
    if not math.isclose(density.grid.maturity, call.maturity, rel_tol=1e-12):
        raise ValueError("density grid maturity differs from the call maturity")
    if t >= call.maturity:
        raise ValueError(f"t={t!r} must be strictly before maturity {call.maturity!r}")
    return density.grid.time_index(t)


def _expected_price(masses, spots, tau, strike, sigma):
    return float(masses @ bs_price(spots, tau, sigma, strike))


def expected_bs_price(density: DensitySurface, t: float, call: CallSpec, sigma: float) -> float:
    """``E[C_BS(t, S_t, K, T; sigma)]`` under the model density at time ``t``."""
    if not (sigma >= 0 and math.isfinite(sigma)):
        raise ValueError("sigma must be finite and non-negative")
    m = _check_time(density, t, call)
    return _expected_price(density.masses[m], density.spots, call.maturity - t,
                           call.strike, sigma)


def _bracket_values(masses, spots, strike):
    return float(masses @ np.maximum(spots - strike, 0.0)), float(masses @ spots)


def solve_sigma_bar(density: DensitySurface, t: float, call: CallSpec, target: float,
                    *, guess: float | None = None, slack: float = 1e-6,
                    price_tol: float = 1e-9) -> float:
    """Root of ``expected_bs_price(sigma) = target``.

    ``slack`` and ``price_tol`` are relative to ``S0``. Raises
    :class:`BracketError` naming the violated inequality when the target is
    outside ``[E[(S_t - K)^+], E[S_t]]`` by more than ``slack``.
    """
    return _solve(density, t, call, target, guess, slack, price_tol)[0]


def _solve(density, t, call, target, guess, slack, price_tol):
    m = _check_time(density, t, call)
    masses, spots = density.masses[m], density.spots
    tau, strike = call.maturity - t, call.strike
    scale = density.grid.spot0
    lower, upper = _bracket_values(masses, spots, strike)
    if lower > target + slack * scale:
        raise BracketError(
            f"t={t}: E[(S_t-K)^+]={lower!r} exceeds C(K,T)={target!r}; "
            "calendar-spread inequality fails (density truncation bias?)")
    if upper < target - slack * scale:
        raise BracketError(
            f"t={t}: E[S_t]={upper!r} is below C(K,T)={target!r}; "
            "upper bracket fails (mass leak?)")

    def f(sig):
        return _expected_price(masses, spots, tau, strike, sig) - target

    f0 = f(0.0)
    if f0 >= 0.0:
        # target sits on the zero-vol bound (within slack)
        return 0.0, f0, lower, upper
    a, b = 0.0, None
    if guess is not None and guess > 0:
        lo_g, hi_g = 0.95 * guess, 1.05 * guess
        if f(lo_g) < 0 < f(hi_g):
            a, b = lo_g, hi_g
    if b is None:
        b = 1.0
        while f(b) <= 0:
            a, b = b, 2.0 * b
            if b > _SIGMA_HI_CAP:
                raise BracketError(f"t={t}: no upper bracket below sigma={_SIGMA_HI_CAP}")
    root = brentq(f, a, b, xtol=_XTOL, rtol=_RTOL, maxiter=200)
    resid = f(root)
    if abs(resid) > price_tol * scale:
        raise BracketError(f"t={t}: price residual {resid!r} above tolerance")
    return root, resid, lower, upper


def build_curve(density: DensitySurface, call: CallSpec, *, slack: float = 1e-6,
                price_tol: float = 1e-9) -> ForwardVolCurve:
    """Solve for ``sigma_bar`` at every grid time in ``[0, T - dt]``.

    Node ``t = 0`` sees the exact point mass, so it reduces to inverting the
    Black-Scholes price. Any node failure fails the whole curve.
    """
    grid = density.grid
    target = call_price_from_density(density, call.maturity, call)
    times = grid.times[:-1]
    sig = np.empty(times.size)
    res = np.empty(times.size)
    lows = np.empty(times.size)
    ups = np.empty(times.size)
    guess = None
    failures = []
    for i, t in enumerate(times):
        try:
            sig[i], res[i], lows[i], ups[i] = _solve(density, float(t), call, target,
                                                     guess, slack, price_tol)
        except BracketError as exc:
            failures.append(str(exc))
            continue
        guess = sig[i]
    if failures:
        raise BracketError(f"{len(failures)} node(s) failed: " + "; ".join(failures[:3]))
    for arr in (times, sig, res, lows, ups):
        arr.setflags(write=False)
    return ForwardVolCurve(call, grid.spot0, times, sig, target, res, lows, ups)
