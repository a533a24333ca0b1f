"""Partial-integral trajectories and the convergence/divergence trend rule."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .paths import PathSample

logger = logging.getLogger(__name__)

Trend = Literal["Converging", "Diverging", "Undecided"]

# a trend slope at or below this is read as geometric decay
CONVERGING_SLOPE = -0.03
DIVERGING_SLOPE = -0.01
NEGLIGIBLE_INCREMENT = 1e-12


@dataclass(slots=True)
class DichotomyDiagnostic:
    checkpoints: List[Tuple[float, float]] = field(default_factory=list)
    trend: Trend = "Undecided"
    slope: float = math.nan
    window_sums: Tuple[float, float] = (math.nan, math.nan)


def classify_trend(increments: Sequence[float]) -> Tuple[Trend, float, Tuple[float, float]]:
    """Compare the two windows of the last half of the increments.

    The slope is ln(S2 / S1) / (K / 4), where S1 and S2 are the summed
    magnitudes of the earlier and later window and K the increment count.
    """

    values = np.abs(np.asarray(increments, dtype=float))
    if values.size < 4 or not np.all(np.isfinite(values)):
        if values.size and not np.all(np.isfinite(values)):
            return "Diverging", math.inf, (math.nan, math.inf)
        return "Undecided", math.nan, (math.nan, math.nan)
    k = values.size
    tail = values[k // 2 :]
    half = tail.size // 2
    s1 = float(np.sum(tail[:half]))
    s2 = float(np.sum(tail[half:]))
    if s2 <= NEGLIGIBLE_INCREMENT:
        return "Converging", -math.inf, (s1, s2)
    if s1 <= 0.0:
        return "Diverging", math.inf, (s1, s2)
    slope = math.log(s2 / s1) / (k / 4.0)
    if slope <= CONVERGING_SLOPE:
        return "Converging", slope, (s1, s2)
    if slope >= DIVERGING_SLOPE:
        return "Diverging", slope, (s1, s2)
    return "Undecided", slope, (s1, s2)


def checkpoint_times(path: PathSample, dyadic_count: int) -> np.ndarray:
    """zeta (1 - 2^-k) for exited paths, T 2^(k-K) otherwise, k = 1..K."""

    k = np.arange(1, dyadic_count + 1, dtype=float)
    if path.exited:
        return path.exit.time * (1.0 - 2.0**-k)
    return path.terminal_time * 2.0 ** (k - dyadic_count)


def functional_trajectory(
    path: PathSample,
    f: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    dyadic_count: int = 16,
) -> DichotomyDiagnostic:
    """Partial integrals at the dyadic checkpoints and the trend of their increments."""

    if dyadic_count < 4:
        raise ValueError("dyadic_count must be at least 4")
    times = checkpoint_times(path, dyadic_count)
    if f is not None:
        with np.errstate(all="ignore"):
            values = np.asarray(f(path.values), dtype=float)
        running = np.concatenate([[0.0], cumulative_trapezoid(values, path.times)])
        partial = np.interp(times, path.times, running)
    else:
        partial = path.integral_at(times)
    increments = np.diff(np.concatenate([[0.0], partial]))
    trend, slope, sums = classify_trend(increments)
    return DichotomyDiagnostic(
        checkpoints=[(float(t), float(i)) for t, i in zip(times, partial)],
        trend=trend,
        slope=slope,
        window_sums=sums,
    )


__all__ = [
    "CONVERGING_SLOPE",
    "DIVERGING_SLOPE",
    "DichotomyDiagnostic",
    "Trend",
    "checkpoint_times",
    "classify_trend",
    "functional_trajectory",
]
