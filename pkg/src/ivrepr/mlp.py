"""Most-likely path: the ridge of the G_t weights and the approximation built on it.

The ridge at each time is the mode of ``G_t`` in log-spot, i.e. the argmax of
the node probabilities on the uniform ``log S`` grid, refined by a
three-point parabola. For constant vol the mode is exactly
``log S0 + (t/T) log(K/S0)``, a straight line from today's spot to the strike.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Sequence

import numpy as np

from .errors import DegenerateWeightError
from .forward_vol import write_columns
from .representation import GtWeight, trapezoid_to_maturity
from .surfaces import LocalVolSurface


@dataclass(frozen=True, eq=False)
class MostLikelyPath:
    """Ridge ``S_mlp`` on the weight times, with ``S_mlp(0) = S0`` and ``S_mlp(T) = K``."""

    times: np.ndarray
    spots: np.ndarray
    maturity: float
    strike: float
    raw_index: np.ndarray

    def with_terminal(self) -> tuple[np.ndarray, np.ndarray]:
        return np.append(self.times, self.maturity), np.append(self.spots, self.strike)

    def to_csv(self, path, header_lines=()):
        t, s = self.with_terminal()
        write_columns(path, {"t": t, "S_mlp": s}, header_lines)


def _ridge_index(masses: np.ndarray, prev_x: float, x: np.ndarray) -> int:
    inner = masses[1:-1]
    peak = inner.max()
    if not peak > 0 or np.all(inner == inner[0]):
        raise DegenerateWeightError("weight slice is flat; no ridge to extract")
    ties = np.flatnonzero(inner >= peak * (1.0 - 1e-12)) + 1
    if ties.size == 1:
        return int(ties[0])
    return int(ties[np.argmin(np.abs(x[ties] - prev_x))])


def _refine(masses: np.ndarray, j: int) -> float:
    """Vertex offset in cells of the parabola through ``j-1, j, j+1``."""
    if j <= 0 or j >= masses.size - 1:
        return 0.0
    a, b, c = masses[j - 1], masses[j], masses[j + 1]
    curv = a - 2.0 * b + c
    if curv >= 0:
        return 0.0
    return float(np.clip(0.5 * (a - c) / curv, -0.5, 0.5))


def extract_path(weights: Sequence[GtWeight]) -> MostLikelyPath:
    """Per-time mode of the ``G_t`` weights.

    Ties go to the candidate closest to the previous node's ridge point.
    """
    if len(weights) < 3:
        raise ValueError("need weights at three or more times")
    call = weights[0].call
    spot0 = weights[0].spot0
    x = np.log(weights[0].spots)
    h = float(x[1] - x[0])
    times = np.array([w.time for w in weights])
    path = np.empty(times.size)
    raw = np.empty(times.size, dtype=int)
    prev = math.log(spot0)
    for i, w in enumerate(weights):
        j = _ridge_index(np.asarray(w.masses), prev, x)
        raw[i] = j
        if w.time == 0.0:
            path[i] = spot0
        else:
            path[i] = math.exp(x[j] + _refine(np.asarray(w.masses), j) * h)
        prev = math.log(path[i])
    for arr in (times, path, raw):
        arr.setflags(write=False)
    return MostLikelyPath(times, path, call.maturity, call.strike, raw)


def mlp_implied_variance(path: MostLikelyPath, surface: LocalVolSurface) -> float:
    """``(1/T) int_0^T sigma^2(t, S_mlp(t)) dt`` by the trapezoid rule.

    One-sided limits in time at every node, so time-only vols with jumps on
    nodes integrate exactly.
    """
    right = surface.variance(path.times, path.spots, side="right")
    left = surface.variance(path.times, path.spots, side="left")
    terminal = float(surface.variance(path.maturity, path.strike, side="left"))
    return trapezoid_to_maturity(path.times, right, left, path.maturity, terminal) / path.maturity


@dataclass(frozen=True)
class MlpReport:
    sigma2_exact: float
    sigma2_mlp: float

    @property
    def rel_error(self) -> float:
        return (self.sigma2_mlp - self.sigma2_exact) / self.sigma2_exact

    def to_dict(self) -> dict:
        return {"sigma2_exact": self.sigma2_exact, "sigma2_mlp": self.sigma2_mlp,
                "rel_error": self.rel_error}
