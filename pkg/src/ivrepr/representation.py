"""Forward variance, the G_t reweighting, and the representation checks.

Two independent routes to the forward variance ``v(t)``:

* differentiation: ``v(t) = -d/dt [sigma_bar(t)^2 (T - t)]`` on the curve;
* reweighting: ``v(t) = E^{G_t}[sigma^2(t, S_t)]`` where ``G_t`` has density
  ``S^2 Gamma_BS(S, sigma_bar(t)) / E[S_t^2 Gamma_BS(S_t, sigma_bar(t))]``
  with respect to the model law of ``S_t``.

Implied variance is then ``sigma_bar(0)^2 = (1/T) int_0^T v(t) dt`` with
either route; :func:`verify_representation` measures all the residuals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .bs import CallSpec, bs_gamma, bs_price, implied_vol
from .density import (DensitySurface, SpaceTimeGrid, call_price_from_density,
                      solve_forward_density)
from .forward_vol import ForwardVolCurve, build_curve, write_columns
from .surfaces import LocalVolSurface


@dataclass(frozen=True, eq=False)
class ForwardVarianceCurve:
    """``v`` on the curve's time nodes plus the limit value at ``T``."""

    call: CallSpec
    times: np.ndarray
    values: np.ndarray
    stencils: tuple
    terminal_value: float

    def integral_from(self, m: int) -> float:
        """``int_{t_m}^T v du`` by the trapezoid rule."""
        return trapezoid_to_maturity(self.times, self.values, self.values,
                                     self.call.maturity, self.terminal_value, start=m)

    def time_average(self) -> float:
        return self.integral_from(0) / self.call.maturity


def trapezoid_to_maturity(times, right_limits, left_limits, maturity, terminal, start=0):
    """Trapezoid rule over ``[times[start], maturity]``.

    Each interval ``[t_i, t_{i+1}]`` uses the right limit at ``t_i`` and the
    left limit at ``t_{i+1}``, so integrands with jumps on nodes are handled
    exactly. ``terminal`` is the left limit at ``maturity``.
    """
    t = np.append(np.asarray(times, dtype=float), maturity)[start:]
    a = np.asarray(right_limits, dtype=float)[start:]
    b = np.append(np.asarray(left_limits, dtype=float)[start + 1:], terminal)
    return float(np.sum(0.5 * np.diff(t) * (a + b)))


def forward_variance(curve: ForwardVolCurve, *, last_value: float | None = None,
                     terminal_value: float | None = None) -> ForwardVarianceCurve:
    """Differentiate ``w(t) = sigma_bar(t)^2 (T - t)``.

    Central differences at interior nodes and a second-order one-sided
    stencil at ``t = 0``. The last node (one step before ``T``) takes
    ``last_value`` when given (the reweighting value) and a second-order
    backward stencil otherwise. ``terminal_value`` is ``v(T)`` for time
    integrals; it defaults to linear extrapolation.
    """
    times = np.asarray(curve.times)
    if times.size < 3:
        raise ValueError("forward_variance needs at least three curve nodes")
    w = curve.total_variance
    dt = float(times[1] - times[0])
    v = np.empty_like(w)
    v[1:-1] = -(w[2:] - w[:-2]) / (2.0 * dt)
    v[0] = -(-3.0 * w[0] + 4.0 * w[1] - w[2]) / (2.0 * dt)
    stencils = ["one-sided"] + ["central"] * (times.size - 2)
    if last_value is None:
        v[-1] = -(3.0 * w[-1] - 4.0 * w[-2] + w[-3]) / (2.0 * dt)
        stencils.append("backward")
    else:
        v[-1] = last_value
        stencils.append("reweighting")
    if terminal_value is None:
        terminal_value = float(2.0 * v[-1] - v[-2])
    v.setflags(write=False)
    return ForwardVarianceCurve(curve.call, times, v, tuple(stencils), float(terminal_value))


@dataclass(frozen=True, eq=False)
class GtWeight:
    """Density of ``G_t`` on the spot grid.

    ``masses`` are node probabilities (they sum to one); ``values`` is the
    same measure as a density in spot units, ``w(S)`` with ``int w dS = 1``.
    """

    time: float
    call: CallSpec
    spot0: float
    spots: np.ndarray
    masses: np.ndarray
    values: np.ndarray
    normalization: float

    @property
    def mass_error(self) -> float:
        return abs(float(self.masses.sum()) - 1.0)


def gt_weight(density: DensitySurface, curve: ForwardVolCurve, t: float) -> GtWeight:
    """Reweight the law of ``S_t`` by ``S^2 Gamma_BS(S, sigma_bar(t))``."""
    call = curve.call
    if t >= call.maturity:
        raise ValueError("G_t is undefined at maturity (Gamma degenerates)")
    m = density.grid.time_index(t)
    if m >= curve.times.size:
        raise ValueError(f"no sigma_bar at t={t!r}")
    sigma = float(curve.sigma_bar[m])
    if sigma <= 0:
        raise ValueError(f"sigma_bar({t}) = {sigma} is not positive")
    spots = density.spots
    raw = density.masses[m] * spots ** 2 * bs_gamma(spots, call.maturity - t, sigma, call.strike)
    z = float(raw.sum())
    if not z > 0:
        raise ValueError(f"G_t normalisation vanished at t={t!r}")
    masses = raw / z
    values = masses / (density.grid.trapezoid_weights * spots)
    for arr in (masses, values):
        arr.setflags(write=False)
    return GtWeight(float(t), call, density.grid.spot0, spots, masses, values, z)


def gt_expected_variance(weight: GtWeight, surface: LocalVolSurface, t: float | None = None,
                         side: str = "right") -> float:
    """``E^{G_t}[sigma^2(t, S_t)]``."""
    t = weight.time if t is None else t
    return float(weight.masses @ surface.variance(t, weight.spots, side))


def breakpoint_nodes(times: np.ndarray, breakpoints) -> np.ndarray:
    """Mask of nodes whose differentiation stencil straddles a breakpoint."""
    n = times.size
    idx = np.arange(n)
    lo = times[np.maximum(idx - 1, 0)]
    hi = times[np.minimum(idx + 1, n - 1)]
    hi[0] = times[min(2, n - 1)]
    mask = np.zeros(n, dtype=bool)
    for b in np.asarray(breakpoints, dtype=float):
        mask |= (lo < b) & (b < hi)
    return mask


@dataclass(frozen=True)
class Check:
    value: float
    tolerance: float
    passed: bool


#: default tolerances for :func:`verify_representation`
DEFAULT_TOLERANCES = {
    "density_mass": 1e-6,
    "density_martingale_rel": 1e-3,
    "clamped_mass": 1e-8,
    "bracket_violation_rel": 1e-6,
    "solver_residual_rel": 1e-9,
    "sigma_bar0_vs_implied_vol": 1e-8,
    "tail_reconstruction": 1e-3,
    "integral_recovery": 1e-4,
    "nodewise_identity_rel": 1e-2,
    "representation_rel": 1e-2,
    "gt_normalization": 1e-8,
    "v_nonnegative": 1e-4,
}


@dataclass(frozen=True, eq=False)
class RepresentationReport:
    call: CallSpec
    spot0: float
    call_price: float
    implied_vol: float
    sigma2_imp: float
    times: np.ndarray
    sigma_bar: np.ndarray
    v_fd: np.ndarray
    v_gt: np.ndarray
    gt_mass_err: np.ndarray
    excluded_nodes: np.ndarray
    summary: dict
    checks: dict
    density: DensitySurface = field(repr=False)
    curve: ForwardVolCurve = field(repr=False)
    variance: ForwardVarianceCurve = field(repr=False)
    weights: tuple = field(repr=False)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    @property
    def representation_residual(self) -> float:
        return self.summary["representation_abs"]

    def node_table(self) -> dict:
        return {"t": self.times, "sigma_bar": self.sigma_bar, "v_fd": self.v_fd,
                "v_gt": self.v_gt, "gt_mass_err": self.gt_mass_err}

    def to_dict(self) -> dict:
        cols = self.node_table()
        nodes = [dict(zip(cols, map(float, row))) for row in zip(*cols.values())]
        return {
            "strike": self.call.strike,
            "maturity": self.call.maturity,
            "spot": self.spot0,
            "call_price": self.call_price,
            "implied_vol": self.implied_vol,
            "sigma2_imp": self.sigma2_imp,
            "summary": dict(self.summary),
            "checks": {k: {"value": c.value, "tolerance": c.tolerance, "passed": c.passed}
                       for k, c in self.checks.items()},
            "passed": self.passed,
            "nodes": nodes,
        }

    def to_csv(self, path, header_lines=()):
        write_columns(path, self.node_table(), header_lines)


def verify_representation(surface: LocalVolSurface, spot0: float, call: CallSpec,
                          grid: SpaceTimeGrid | None = None, *,
                          density: DensitySurface | None = None,
                          tolerances: dict | None = None) -> RepresentationReport:
    """Run density, price, curve and both forward-variance routes; collect residuals."""
    tol = dict(DEFAULT_TOLERANCES)
    if tolerances:
        unknown = set(tolerances) - set(tol)
        if unknown:
            raise ValueError(f"unknown tolerance keys: {sorted(unknown)}")
        tol.update(tolerances)
    if density is None:
        if grid is None:
            grid = SpaceTimeGrid.for_surface(surface, spot0, call.maturity)
        density = solve_forward_density(surface, spot0, grid)
    grid = density.grid
    T = call.maturity

    curve = build_curve(density, call)
    price = curve.target
    iv = implied_vol(price, spot0, T, call.strike)
    sigma2_imp = float(curve.sigma_bar[0] ** 2)

    weights = tuple(gt_weight(density, curve, float(t)) for t in curve.times)
    v_gt = np.array([gt_expected_variance(w, surface, side="right") for w in weights])
    v_gt_left = np.array([gt_expected_variance(w, surface, side="left") for w in weights])
    # as t -> T the reweighting concentrates on the strike
    v_terminal = float(surface.variance(T, call.strike, side="left"))
    mass_err = np.array([w.mass_error for w in weights])

    fv = forward_variance(curve, last_value=float(v_gt[-1]), terminal_value=v_terminal)
    v_fd = fv.values

    times = curve.times
    n = times.size
    excluded = breakpoint_nodes(times, surface.breakpoints())
    interior = np.zeros(n, dtype=bool)
    interior[1:-1] = True
    compare = interior & ~excluded

    int_fd = fv.time_average()
    int_gt = trapezoid_to_maturity(times, v_gt, v_gt_left, T, v_terminal) / T
    rep_abs = abs(sigma2_imp - int_gt)
    recov = abs(int_fd - sigma2_imp)
    tail = max((abs(float(curve.total_variance[m]) - fv.integral_from(m))
               for m in range(1, n - 1)), default=0.0)
    rel_gap = np.abs(v_fd - v_gt) / np.abs(v_gt)
    nodewise = float(rel_gap[compare].max()) if compare.any() else 0.0

    mass = density.total_mass()
    mart = np.abs(density.first_moment() - spot0) / spot0
    brk = max(float(np.max(curve.lower_brackets - price)),
              float(np.max(price - curve.upper_brackets)), 0.0) / spot0

    summary = {
        "sigma2_imp": sigma2_imp,
        "time_average_v_fd": int_fd,
        "time_average_v_gt": int_gt,
        "representation_abs": rep_abs,
        "representation_rel": rep_abs / sigma2_imp,
        "integral_recovery": recov,
        "tail_reconstruction_max": tail,
        "nodewise_identity_rel_max": nodewise,
        "v_fd_min": float(v_fd.min()),
        "gt_mass_err_max": float(mass_err.max()),
        "sigma_bar0_vs_implied_vol": abs(math.sqrt(sigma2_imp) - iv),
        "bs_roundtrip_t0": abs(float(bs_price(spot0, T, curve.sigma_bar[0], call.strike)) - price),
        "solver_residual_max": float(np.abs(curve.residuals).max()),
        "density_mass_err_max": float(np.abs(mass - 1.0).max()),
        "density_martingale_rel_max": float(mart.max()),
        "clamped_mass": density.clamped_mass,
        "leaked_mass": density.leaked_mass,
        "bracket_violation_rel": brk,
        "excluded_nodes": int(excluded.sum()),
        "time_steps": grid.time_steps,
        "space_nodes": grid.space_nodes,
        "width": grid.width,
    }

    def check(value, key, scale=1.0):
        limit = tol[key] * scale
        return Check(float(value), float(limit), bool(value <= limit))

    checks = {
        "density_mass": check(summary["density_mass_err_max"], "density_mass"),
        "density_martingale": check(summary["density_martingale_rel_max"], "density_martingale_rel"),
        "clamped_mass": check(density.clamped_mass, "clamped_mass"),
        "bracketing": check(brk, "bracket_violation_rel"),
        "solver_residual": check(summary["solver_residual_max"] / spot0, "solver_residual_rel"),
        "sigma_bar0_vs_implied_vol": check(summary["sigma_bar0_vs_implied_vol"],
                                           "sigma_bar0_vs_implied_vol"),
        "tail_reconstruction": check(tail, "tail_reconstruction"),
        "integral_recovery": check(recov, "integral_recovery"),
        "nodewise_identity": check(nodewise, "nodewise_identity_rel"),
        "representation": check(summary["representation_rel"], "representation_rel"),
        "gt_normalization": check(summary["gt_mass_err_max"], "gt_normalization"),
        "v_nonnegative": check(max(-summary["v_fd_min"], 0.0), "v_nonnegative"),
    }
    for arr in (v_gt, mass_err, excluded):
        arr.setflags(write=False)
    return RepresentationReport(call, spot0, price, iv, sigma2_imp, times, curve.sigma_bar,
                                v_fd, v_gt, mass_err, excluded, summary, checks,
                                density, curve, fv, weights)
