"""Local volatility surfaces sigma(t, S).

Every family clamps its output to ``[sigma_min, sigma_max]`` so the
diffusion stays uniformly elliptic on any finite grid.

``side`` selects one-sided limits in time. Only :class:`TimeDependentVol`
has jumps in ``t``; for the other families the argument is ignored.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
import math
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

SIGMA_MIN = 1e-4
SIGMA_MAX = 5.0


class LocalVolSurface:
    """Base class. Subclasses implement :meth:`_raw_sigma`."""

    family: str = "abstract"
    sigma_min: float = SIGMA_MIN
    sigma_max: float = SIGMA_MAX
    #: True when sigma does not depend on the spot.
    state_independent: bool = False

    def _raw_sigma(self, t, spot, side):
        raise NotImplementedError

    def sigma(self, t, spot, side: str = "right"):
        if side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")
        t = np.asarray(t, dtype=float)
        spot = np.asarray(spot, dtype=float)
        raw = np.asarray(self._raw_sigma(t, spot, side), dtype=float)
        out = np.clip(np.broadcast_to(raw, np.broadcast_shapes(t.shape, spot.shape, raw.shape)),
                      self.sigma_min, self.sigma_max)
        return float(out) if out.ndim == 0 else out

    def variance(self, t, spot, side: str = "right"):
        s = self.sigma(t, spot, side)
        return s * s

    def breakpoints(self) -> np.ndarray:
        """Times at which sigma jumps."""
        return np.empty(0)

    def reference_vol(self, spot0: float, maturity: float) -> float:
        """Root-mean-square vol along ``S = spot0``; sizes the spatial grid."""
        ts = np.linspace(0.0, maturity, 201)
        return float(np.sqrt(np.mean(self.variance(ts, spot0))))

    def params(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantVol(LocalVolSurface):
    sigma0: float
    family = "constant"
    state_independent = True

    def __post_init__(self):
        if not (math.isfinite(self.sigma0) and self.sigma0 > 0):
            raise ValueError("sigma0 must be positive")

    def _raw_sigma(self, t, spot, side):
        return np.full(np.broadcast_shapes(t.shape, spot.shape), self.sigma0)

    def params(self):
        return {"family": self.family, "sigma": self.sigma0}


@dataclass(frozen=True)
class TimeDependentVol(LocalVolSurface):
    """Piecewise-constant sigma(t): ``sigmas[i]`` on ``[times[i], times[i+1])``.

    ``times[0]`` must be 0; the last value extends to infinity.
    """

    times: tuple
    sigmas: tuple
    family = "time_dependent"
    state_independent = True

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(x) for x in self.times))
        object.__setattr__(self, "sigmas", tuple(float(x) for x in self.sigmas))
        if len(self.times) != len(self.sigmas) or not self.times:
            raise ValueError("times and sigmas must be non-empty and of equal length")
        if self.times[0] != 0.0:
            raise ValueError("first piece must start at t=0")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("times must be strictly increasing")
        if any(not (math.isfinite(s) and s > 0) for s in self.sigmas):
            raise ValueError("sigmas must be positive")

    def _raw_sigma(self, t, spot, side):
        edges = np.asarray(self.times)
        # right-continuous pieces; the left limit at a breakpoint is the previous piece
        idx = np.searchsorted(edges, t, side="right" if side == "right" else "left") - 1
        idx = np.clip(idx, 0, len(edges) - 1)
        vals = np.asarray(self.sigmas)[idx]
        return np.broadcast_to(vals, np.broadcast_shapes(t.shape, spot.shape))

    def breakpoints(self):
        return np.asarray(self.times[1:])

    def integrated_variance(self, t0: float, t1: float) -> float:
        """Exact ``int_{t0}^{t1} sigma(u)^2 du`` of the (clamped) table."""
        edges = list(self.times) + [math.inf]
        total = 0.0
        for a, b, s in zip(edges[:-1], edges[1:], self.sigmas):
            lo, hi = max(a, t0), min(b, t1)
            if hi > lo:
                s = min(max(s, self.sigma_min), self.sigma_max)
                total += s * s * (hi - lo)
        return total

    def params(self):
        return {"family": self.family, "times": list(self.times), "sigmas": list(self.sigmas)}


@dataclass(frozen=True)
class CevVol(LocalVolSurface):
    """Constant-elasticity local vol ``alpha * S**(beta - 1)``."""

    alpha: float
    beta: float
    family = "cev"

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError("alpha must be positive")
        if not math.isfinite(self.beta):
            raise ValueError("beta must be finite")

    def _raw_sigma(self, t, spot, side):
        return np.broadcast_to(self.alpha * spot ** (self.beta - 1.0),
                               np.broadcast_shapes(t.shape, spot.shape))

    def params(self):
        return {"family": self.family, "alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True, eq=False)
class TabulatedVol(LocalVolSurface):
    """Bilinear interpolation on ``(t, log S)`` nodes, clamped outside the table."""

    times: np.ndarray
    log_spots: np.ndarray
    values: np.ndarray
    source: str | None = None
    _interp: RegularGridInterpolator = field(init=False, repr=False)
    family = "tabulated"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.log_spots, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or x.ndim != 1 or v.shape != (t.size, x.size):
            raise ValueError("values must have shape (len(times), len(log_spots))")
        if t.size < 1 or x.size < 2:
            raise ValueError("need at least one time and two log-spot nodes")
        if np.any(np.diff(t) <= 0) or np.any(np.diff(x) <= 0):
            raise ValueError("table nodes must be strictly increasing")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("tabulated sigma must be positive and finite")
        for name, arr in (("times", t), ("log_spots", x), ("values", v)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if t.size == 1:
            # degenerate time axis: duplicate so the interpolator has a cell
            t2, v2 = np.array([t[0], t[0] + 1.0]), np.vstack([v, v])
        else:
            t2, v2 = t, v
        object.__setattr__(self, "_interp", RegularGridInterpolator((t2, x), v2, method="linear"))

    def _raw_sigma(self, t, spot, side):
        shape = np.broadcast_shapes(t.shape, spot.shape)
        grid_t = self._interp.grid[0]
        tt = np.clip(np.broadcast_to(t, shape), grid_t[0], grid_t[-1])
        xx = np.clip(np.log(np.broadcast_to(spot, shape)), self.log_spots[0], self.log_spots[-1])
        pts = np.stack([tt.ravel(), xx.ravel()], axis=-1)
        return self._interp(pts).reshape(shape)

    @classmethod
    def from_csv(cls, path) -> "TabulatedVol":
        """Load a ``t,logS,sigma`` table (row-major: t outer, logS inner)."""
        path = Path(path)
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["t", "logS", "sigma"]:
                raise ValueError(f"{path}: header must be exactly 't,logS,sigma', got {header!r}")
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != 3:
                    raise ValueError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
                try:
                    rows.append([float(c) for c in row])
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: non-numeric field") from exc
        if not rows:
            raise ValueError(f"{path}: no data rows")
        data = np.asarray(rows)
        if not np.all(np.isfinite(data)):
            raise ValueError(f"{path}: non-finite values")
        times = np.unique(data[:, 0])
        logs = np.unique(data[:, 1])
        if data.shape[0] != times.size * logs.size:
            raise ValueError(f"{path}: table is not a full rectangular (t, logS) grid")
        expect_t = np.repeat(times, logs.size)
        expect_x = np.tile(logs, times.size)
        if not (np.array_equal(data[:, 0], expect_t) and np.array_equal(data[:, 1], expect_x)):
            raise ValueError(f"{path}: rows must be sorted row-major (t outer, logS inner)")
        return cls(times, logs, data[:, 2].reshape(times.size, logs.size), source=str(path))

    def params(self):
        return {"family": self.family, "csv": self.source}
