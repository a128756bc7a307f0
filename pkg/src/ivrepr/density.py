"""Marginal densities of ``dS/S = sigma(t, S) dW`` from the forward equation.

The diffusion is discretised in ``x = log S`` on a uniform grid as a
continuous-time Markov chain with nearest-neighbour jumps. Per node the up
and down rates ``u, d`` solve

    u + d = sigma^2 / h^2            (local variance of x)
    u (e^h - 1) + d (e^-h - 1) = 0   (S is a martingale)

so the chain reproduces the generator ``0.5 sigma^2 (d_xx - d_x)`` to
second order while conserving both total probability and ``E[S]`` exactly.
Edge nodes are absorbing: mass that reaches them stays put, which keeps both
conservation laws and makes leaked mass directly measurable.

Away from the two outermost nodes on each side the default operator adds
jumps of two nodes (``order=4``), which lifts the spatial error to fourth
order without giving up either conservation law.

Time stepping is Crank-Nicolson with a Rannacher-type start: the first step
is replaced by ``start_substeps`` implicit-Euler sub-steps, which damps the
point-mass initial condition. While the spike is narrower than a few cells
the sub-steps use the nearest-neighbour operator: it is an M-matrix, so they
stay non-negative, whereas the wide stencil's implicit solve on a near-Dirac
density produces negative tails. Implicit Euler's first-order error over that
step scales like ``dt^2 / start_substeps``; 512 sub-steps push it below the
Crank-Nicolson error of the remaining steps. Crank-Nicolson's own error near
the start scales with ``dt / t``, so early steps are split into sub-steps no
longer than ``EARLY_STEP_RATIO * t``. Rates are frozen at the midpoint of
each sub-step, which makes piecewise-constant-in-time vols with breakpoints
on grid nodes exact in time.

Expectations are sums of node probabilities against the integrand, which is
the trapezoid rule in ``x`` for the density ``p(t, S)``: node probabilities are
``p(t, S_n) * S_n * w_n`` with trapezoid weights ``w_n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy.linalg import solve_banded

from .bs import CallSpec
from .errors import GridTooNarrowError
from .surfaces import LocalVolSurface

#: the start switches to the wide stencil once sigma*sqrt(t) spans this many cells
START_SPREAD_CELLS = 3.0
#: early Crank-Nicolson sub-steps are at most this fraction of the elapsed time
EARLY_STEP_RATIO = 0.04
#: default tolerance on probability absorbed at the grid edges
DEFAULT_MAX_LEAK = 1e-5


class TruncationWarning(UserWarning):
    """Strike lies outside the spatial grid; the price carries truncation bias."""


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform grid in ``t`` on ``[0, T]`` and in ``x = log S`` around ``log S0``."""

    maturity: float
    spot0: float
    ref_vol: float
    time_steps: int = 200
    space_nodes: int = 800
    width: float = 6.0

    def __post_init__(self):
        if not (self.maturity > 0 and math.isfinite(self.maturity)):
            raise ValueError("maturity must be positive")
        if not (self.spot0 > 0 and math.isfinite(self.spot0)):
            raise ValueError("spot0 must be positive")
        if not (self.ref_vol > 0 and math.isfinite(self.ref_vol)):
            raise ValueError("ref_vol must be positive")
        if int(self.time_steps) != self.time_steps or self.time_steps < 2:
            raise ValueError("time_steps must be an integer >= 2")
        if int(self.space_nodes) != self.space_nodes or self.space_nodes < 4:
            raise ValueError("space_nodes must be an integer >= 4")
        if not (self.width > 0 and math.isfinite(self.width)):
            raise ValueError("width must be positive")

    @classmethod
    def for_surface(cls, surface: LocalVolSurface, spot0: float, maturity: float,
                    time_steps: int = 200, space_nodes: int = 800, width: float = 6.0):
        return cls(maturity, spot0, surface.reference_vol(spot0, maturity),
                   time_steps, space_nodes, width)

    @property
    def dt(self) -> float:
        return self.maturity / self.time_steps

    @property
    def half_width(self) -> float:
        return self.width * self.ref_vol * math.sqrt(self.maturity)

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.space_nodes

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.maturity, self.time_steps + 1)

    @property
    def x(self) -> np.ndarray:
        n = np.arange(self.space_nodes + 1)
        return math.log(self.spot0) + (n - 0.5 * self.space_nodes) * self.h

    @property
    def spots(self) -> np.ndarray:
        return np.exp(self.x)

    @property
    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.space_nodes + 1, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w

    def time_index(self, t: float) -> int:
        """Index of grid time ``t``; raises if ``t`` is not a node."""
        m = round(t / self.dt)
        if not 0 <= m <= self.time_steps or abs(m * self.dt - t) > 1e-9 * max(1.0, self.maturity):
            raise ValueError(f"t={t!r} is not a time node of the grid")
        return int(m)

    def refined(self, factor: int = 2) -> "SpaceTimeGrid":
        return SpaceTimeGrid(self.maturity, self.spot0, self.ref_vol,
                             self.time_steps * factor, self.space_nodes * factor, self.width)


@dataclass(frozen=True, eq=False)
class DensitySurface:
    """Node probabilities ``masses[m, n]`` of ``S_{t_m}`` on the grid.

    ``masses[0]`` is the exact point mass at ``S0`` (``initial_is_point_mass``).
    """

    grid: SpaceTimeGrid
    masses: np.ndarray
    clamped_mass: float
    leaked_mass: float
    initial_is_point_mass: bool = True
    surface: LocalVolSurface | None = field(default=None, repr=False)

    @property
    def spots(self) -> np.ndarray:
        return self.grid.spots

    @property
    def values(self) -> np.ndarray:
        """Density in spot units, ``p(t_m, S_n)``."""
        return self.masses / (self.grid.trapezoid_weights * self.grid.spots)

    def density_at(self, t: float) -> np.ndarray:
        return self.values[self.grid.time_index(t)]

    def masses_at(self, t: float) -> np.ndarray:
        return self.masses[self.grid.time_index(t)]

    def total_mass(self) -> np.ndarray:
        return self.masses.sum(axis=1)

    def first_moment(self) -> np.ndarray:
        return self.masses @ self.grid.spots


def _stencil_coefficients(h: float, order: int) -> dict:
    """Jump-rate coefficients per unit local variance, keyed by jump size in nodes.

    ``order=2`` is the nearest-neighbour chain. ``order=4`` adds jumps of two
    nodes and matches the second, third and fourth moment rates of the
    diffusion; its two-node rates are negative, so it is a fourth-order
    difference operator rather than a Markov chain, but columns still sum to
    zero and the martingale condition still holds row by row.
    """
    if order == 2:
        up = 1.0 / (h * h * (1.0 + math.exp(h)))
        return {1: up, -1: up * math.exp(h)}
    if order == 4:
        jumps = (1, -1, 2, -2)
        a = np.array([
            [math.expm1(j * h) for j in jumps],
            [(j * h) ** 2 for j in jumps],
            [(j * h) ** 3 for j in jumps],
            [(j * h) ** 4 for j in jumps],
        ])
        c = np.linalg.solve(a, np.array([0.0, 1.0, 0.0, 0.0]))
        return dict(zip(jumps, c))
    raise ValueError("order must be 2 or 4")


def _generator_bands(var: np.ndarray, h: float, order: int) -> dict:
    """Rates ``{jump: rate array}`` leaving each node; edges absorb."""
    n = var.size
    rates = {}
    inner = _stencil_coefficients(h, 2)
    outer = _stencil_coefficients(h, order)
    for j in outer:
        r = np.zeros(n)
        if abs(j) == 1:
            r[1:-1] = var[1:-1] * inner[j]
        rates[j] = r
    if order == 4:
        # nodes with two neighbours on each side get the wide stencil
        core = slice(2, n - 2)
        for j, c in outer.items():
            rates[j][core] = var[core] * c
    return rates


def _apply_forward(p, rates, coef):
    """``p + coef * Q^T p`` for the generator given by ``rates``."""
    out = p * (1.0 - coef * sum(rates.values()))
    for j, r in rates.items():
        if j > 0:
            out[j:] += coef * r[:-j] * p[:-j]
        else:
            out[:j] += coef * r[-j:] * p[-j:]
    return out


def _solve_backward(rhs, rates, coef):
    """Solve ``(I - coef * Q^T) p = rhs``."""
    n = rhs.size
    bw = max(abs(j) for j in rates)
    ab = np.zeros((2 * bw + 1, n))
    ab[bw] = 1.0 + coef * sum(rates.values())
    for j, r in rates.items():
        # Q^T[i, k] = rate of jump k -> i = k + j; banded row index bw + i - k
        if j > 0:
            ab[bw + j, :-j] = -coef * r[:-j]
        else:
            ab[bw + j, -j:] = -coef * r[-j:]
    return solve_banded((bw, bw), ab, rhs, check_finite=False)


def _theta_step(p, surface, spots, h, t0, t1, theta, order):
    dt = t1 - t0
    var = np.array(surface.variance(0.5 * (t0 + t1), spots), dtype=float)
    rates = _generator_bands(var, h, order)
    rhs = _apply_forward(p, rates, (1.0 - theta) * dt) if theta < 1.0 else p
    return _solve_backward(rhs, rates, theta * dt)


def initial_masses(grid: SpaceTimeGrid) -> np.ndarray:
    """Point mass at ``S0``, split between bracketing nodes so that ``E[S] = S0``."""
    x, s = grid.x, grid.spots
    p = np.zeros(x.size)
    j = int(np.searchsorted(x, math.log(grid.spot0)))
    if j < x.size and math.isclose(x[j], math.log(grid.spot0), rel_tol=0, abs_tol=1e-12):
        p[j] = 1.0
        return p
    lo, hi = j - 1, j
    wt = (s[hi] - grid.spot0) / (s[hi] - s[lo])
    p[lo], p[hi] = wt, 1.0 - wt
    return p


def solve_forward_density(surface: LocalVolSurface, spot0: float, grid: SpaceTimeGrid,
                          *, start_substeps: int = 512, order: int = 4,
                          max_leak: float = DEFAULT_MAX_LEAK) -> DensitySurface:
    """Propagate the point mass at ``spot0`` to every grid time.

    Raises :class:`GridTooNarrowError` when more than ``max_leak`` probability
    ends up on the absorbing edge nodes.
    """
    if not math.isclose(spot0, grid.spot0, rel_tol=1e-14):
        raise ValueError("grid is not centred at spot0")
    if start_substeps < 0:
        raise ValueError("start_substeps must be >= 0")
    times, spots, h = grid.times, grid.spots, grid.h
    masses = np.empty((times.size, spots.size))
    p = initial_masses(grid)
    masses[0] = p
    clamped = 0.0
    local_vol = float(surface.sigma(0.0, spot0))
    switch_time = (START_SPREAD_CELLS * h / local_vol) ** 2
    for m in range(grid.time_steps):
        t0, t1 = times[m], times[m + 1]
        if m == 0 and start_substeps > 0:
            sub = np.linspace(t0, t1, start_substeps + 1)
            for a, b in zip(sub[:-1], sub[1:]):
                # wide stencil only once the spike spans a few cells
                narrow = order == 4 and a < switch_time
                p = _theta_step(p, surface, spots, h, a, b, 1.0, 2 if narrow else order)
        else:
            n_sub = max(1, math.ceil((t1 - t0) / (EARLY_STEP_RATIO * t0) - 1e-9))
            sub = np.linspace(t0, t1, n_sub + 1)
            for a, b in zip(sub[:-1], sub[1:]):
                p = _theta_step(p, surface, spots, h, a, b, 0.5, order)
        neg = p < 0
        if np.any(neg):
            clamped += float(-p[neg].sum())
            p = np.where(neg, 0.0, p)
        masses[m + 1] = p
    masses.setflags(write=False)
    leaked = float(masses[-1, 0] + masses[-1, -1])
    if leaked > max_leak:
        raise GridTooNarrowError(leaked, max_leak)
    return DensitySurface(grid, masses, clamped, leaked, True, surface)


def partial_expectation(density: DensitySurface, t: float, integrand) -> float:
    """``E[g(S_t)]`` by trapezoid quadrature against ``p(t, .)``.

    ``integrand`` is either a callable on the spot grid or an array of its values.
    """
    g = integrand(density.spots) if callable(integrand) else integrand
    g = np.broadcast_to(np.asarray(g, dtype=float), density.spots.shape)
    if not np.all(np.isfinite(g)):
        raise ValueError("integrand must be finite on the grid")
    return float(density.masses_at(t) @ g)


def kink_correction(density: DensitySurface, m: int, strike: float) -> float:
    """Euler-Maclaurin correction for the payoff kink at ``log K``.

    The trapezoid rule applied to ``q(x) (e^x - K)^+`` misses
    ``-h^2/2 * B2(theta) * K q(log K)`` where ``q`` is the density of ``x``,
    ``theta`` the distance from the kink to the next node in units of ``h``
    and ``B2(u) = u^2 - u + 1/6``.
    """
    grid = density.grid
    x, h = grid.x, grid.h
    xk = math.log(strike)
    if not x[1] <= xk < x[-2]:
        return 0.0
    q = density.masses[m] / grid.trapezoid_weights
    j = int(np.searchsorted(x, xk, side="right")) - 1
    frac = (xk - x[j]) / h
    q_k = (1.0 - frac) * q[j] + frac * q[j + 1]
    theta = 1.0 - frac
    b2 = theta * theta - theta + 1.0 / 6.0
    return 0.5 * h * h * b2 * strike * q_k


def call_price_from_density(density: DensitySurface, maturity: float, call: CallSpec) -> float:
    """``C(K, T) = E[(S_T - K)^+]`` from the density at grid time ``maturity``.

    Plain node quadrature plus :func:`kink_correction`, which removes the
    O(h^2) bias the trapezoid rule incurs at the strike.
    """
    spots = density.spots
    m = density.grid.time_index(maturity)
    if not spots[0] < call.strike < spots[-1]:
        p = density.masses[m]
        bound = float(p[-1] * spots[-1] + p[0] * call.strike)
        warnings.warn(
            f"strike {call.strike} outside grid [{spots[0]:.4g}, {spots[-1]:.4g}]; "
            f"truncation bias up to {bound:.3e}",
            TruncationWarning, stacklevel=2)
    raw = float(density.masses[m] @ np.maximum(spots - call.strike, 0.0))
    if m == 0:
        return raw
    return raw + kink_correction(density, m, call.strike)
