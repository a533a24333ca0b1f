"""Occupation-density (local time) estimation from sampled paths."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Optional

import numpy as np
from scipy.integrate import trapezoid

if TYPE_CHECKING:
    from .paths import PathSample


@dataclass(slots=True)
class OccupationAccumulator:
    """Streaming box-kernel occupation time at fixed levels.

    A step of duration h spent at y (left point) adds h to every level
    within the open window (y - bandwidth, y + bandwidth).
    """

    levels: np.ndarray
    bandwidth: float
    time: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.levels = np.sort(np.asarray(self.levels, dtype=float))
        if not self.bandwidth > 0.0:
            raise ValueError("bandwidth must be positive")
        self.time = np.zeros_like(self.levels)

    def add(self, ys: np.ndarray, hs: np.ndarray) -> None:
        ys = np.asarray(ys, dtype=float).ravel()
        hs = np.broadcast_to(np.asarray(hs, dtype=float), ys.shape).ravel()
        if ys.size == 0 or self.levels.size == 0:
            return
        lo = np.searchsorted(self.levels, ys - self.bandwidth, side="right")
        hi = np.searchsorted(self.levels, ys + self.bandwidth, side="left")
        counts = hi - lo
        hit = counts > 0
        if not np.any(hit):
            return
        counts = counts[hit]
        starts = np.repeat(lo[hit], counts)
        # offset of each expanded entry within its own run
        run_start = np.repeat(np.cumsum(counts) - counts, counts)
        offsets = np.arange(starts.size) - run_start
        np.add.at(self.time, starts + offsets, np.repeat(hs[hit], counts))

    def density(self) -> np.ndarray:
        return self.time / (2.0 * self.bandwidth)


@dataclass(slots=True)
class LocalTimeProfile:
    levels: np.ndarray
    density: np.ndarray
    bandwidth: float
    elapsed: float

    def occupation_integral(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """int f(x) L^x dx over the level grid (trapezoid in x)."""

        if self.levels.size < 2:
            return 0.0
        with np.errstate(all="ignore"):
            values = np.nan_to_num(np.asarray(f(self.levels), dtype=float) * self.density)
        return float(trapezoid(values, self.levels))

    def mass(self) -> float:
        if self.levels.size < 2:
            return 0.0
        return float(trapezoid(self.density, self.levels))


def local_time_profile(
    path: "PathSample",
    levels: np.ndarray,
    bandwidth: float,
    sigma: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> LocalTimeProfile:
    """Occupation density of a recorded path; with ``sigma`` the density is
    moved to the quadratic-variation clock (multiplied by sigma^2)."""

    accumulator = OccupationAccumulator(np.asarray(levels, dtype=float), bandwidth)
    times = np.asarray(path.times, dtype=float)
    values = np.asarray(path.values, dtype=float)
    if times.size >= 2:
        accumulator.add(values[:-1], np.diff(times))
    density = accumulator.density()
    if sigma is not None:
        with np.errstate(all="ignore"):
            s = np.asarray(sigma(accumulator.levels), dtype=float)
        density = density * s * s
    return LocalTimeProfile(
        levels=accumulator.levels,
        density=density,
        bandwidth=float(bandwidth),
        elapsed=float(times[-1] - times[0]) if times.size else 0.0,
    )


__all__ = ["LocalTimeProfile", "OccupationAccumulator", "local_time_profile"]
