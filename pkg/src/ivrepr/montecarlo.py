"""Log-Euler Monte Carlo for ``dS/S = sigma(t, S) dW``.

Paths are generated in fixed-size blocks. Block ``b`` draws from
``SeedSequence(seed, spawn_key=(b,))``, so a sample is reproducible from
``(seed, paths, steps)`` alone and does not depend on how blocks are spread
over worker threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import math

import numpy as np

from .surfaces import LocalVolSurface

BLOCK_SIZE = 1 << 16


@dataclass(frozen=True, eq=False)
class McSample:
    seed: int
    paths: int
    steps: int
    times: np.ndarray
    values: np.ndarray  # shape (len(times), paths)

    def at(self, t: float) -> np.ndarray:
        idx = np.flatnonzero(np.isclose(self.times, t, rtol=0, atol=1e-12))
        if idx.size == 0:
            raise KeyError(f"t={t!r} was not monitored")
        return self.values[idx[0]]


def time_grid(maturity: float, steps: int, monitor_times) -> np.ndarray:
    """Uniform grid on ``[0, maturity]`` with the monitoring times merged in."""
    base = np.linspace(0.0, maturity, steps + 1)
    merged = np.union1d(base, np.asarray(monitor_times, dtype=float))
    # drop near-duplicates created by rounding
    keep = np.concatenate([[True], np.diff(merged) > 1e-12 * max(1.0, maturity)])
    return merged[keep]


def _simulate_block(surface, spot0, grid, monitor_idx, n, seed, block):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block,))))
    x = np.full(n, math.log(spot0))
    out = np.empty((len(monitor_idx), n))
    slot = {k: i for i, k in enumerate(monitor_idx)}
    if 0 in slot:
        out[slot[0]] = spot0
    for k in range(grid.size - 1):
        dt = grid[k + 1] - grid[k]
        sig = surface.sigma(grid[k], np.exp(x))
        z = rng.standard_normal(n)
        x += sig * (math.sqrt(dt) * z - 0.5 * sig * dt)
        if k + 1 in slot:
            out[slot[k + 1]] = np.exp(x)
    return out


def mc_simulate(surface: LocalVolSurface, spot0: float, maturity: float, monitor_times,
                paths: int, steps: int, seed: int, *, workers: int = 1) -> McSample:
    """Simulate ``paths`` paths of ``steps`` log-Euler steps up to ``maturity``.

    Each step is ``x += -0.5 sigma^2 dt + sigma sqrt(dt) Z`` with sigma frozen
    at the start of the step, so ``E[S]`` is preserved step by step.
    """
    if paths < 1 or steps < 1:
        raise ValueError("paths and steps must be >= 1")
    if not (spot0 > 0 and maturity > 0):
        raise ValueError("spot0 and maturity must be positive")
    mon = np.atleast_1d(np.asarray(monitor_times, dtype=float))
    if np.any(mon < 0) or np.any(mon > maturity * (1 + 1e-12)):
        raise ValueError("monitoring times must lie in [0, maturity]")
    grid = time_grid(maturity, steps, mon)
    monitor_idx = [int(np.argmin(np.abs(grid - t))) for t in mon]
    uniq = sorted(set(monitor_idx))
    sizes = [min(BLOCK_SIZE, paths - start) for start in range(0, paths, BLOCK_SIZE)]

    def run(b):
        return _simulate_block(surface, spot0, grid, uniq, sizes[b], int(seed), b)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(run, range(len(sizes))))
    else:
        blocks = [run(b) for b in range(len(sizes))]
    stacked = np.concatenate(blocks, axis=1)
    values = stacked[[uniq.index(i) for i in monitor_idx]]
    values.setflags(write=False)
    return McSample(int(seed), int(paths), int(steps), grid[monitor_idx], values)


def mean_and_stderr(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))
