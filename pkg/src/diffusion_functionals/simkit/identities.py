"""Monte Carlo checks of the Brownian local-time and path-reversal identities."""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.stats import ks_2samp, norm

from ..coeffspec import Expr, evaluator
from ..config import AppSettings, get_settings
from ..quad import Tolerances, integrate_compact
from .agreement import MCSummary, binomial_summary
from .local_time import OccupationAccumulator
from .paths import (
    SimulationError,
    horizon_too_short,
    last_exit,
    simulate_bessel3,
    simulate_bm_to_hit,
    simulate_squared_bessel2,
)
from .seeding import (
    STREAM_BESSEL,
    STREAM_BRIDGE,
    STREAM_BROWNIAN,
    STREAM_FUBINI,
    STREAM_LOCAL_TIME,
    STREAM_SCALING,
    STREAM_SQUARED_BESSEL,
    path_seed,
    run_blocks,
)
from .trajectory import classify_trend

logger = logging.getLogger(__name__)

REFINEMENT_FLIP_LIMIT = 0.05
OCCUPATION_TOLERANCE = 0.05
POSITIVITY_FLOOR = 0.99


@dataclass(slots=True)
class TwoSampleResult:
    statistic: float
    p_value: float
    n_left: int
    n_right: int
    passed: bool
    flags: List[str] = field(default_factory=list)
    details: Dict[str, Any] = field(default_factory=dict)


def ks_critical_value(n_left: int, n_right: int, significance: float) -> float:
    """Asymptotic two-sample KS critical value at the given level."""

    scale = math.sqrt((n_left + n_right) / (n_left * n_right))
    return math.sqrt(-0.5 * math.log(significance / 2.0)) * scale


def reflection_median(gap: float) -> float:
    """Median of the first hitting time of level gap by Brownian motion from 0."""

    return (gap / float(norm.ppf(0.75))) ** 2


def _mean_and_se(sample: np.ndarray) -> tuple:
    if sample.size == 0:
        return math.nan, math.nan
    if sample.size == 1:
        return float(sample[0]), math.nan
    return float(np.mean(sample)), float(np.std(sample, ddof=1) / math.sqrt(sample.size))


def _underpowered(flags: List[str], n: int, settings: AppSettings) -> None:
    if n < settings.underpowered_paths:
        flags.append("underpowered")


def _default_max_time(gap: float) -> float:
    return 1e4 * gap * gap


# ---------------------------------------------------------------------------
# Local time at tau_r versus the squared Bessel(2) process
# ---------------------------------------------------------------------------


def ray_knight_check(
    r: float,
    x0: float,
    u: float,
    n_paths: int,
    dt: float,
    bandwidth: Optional[float],
    seed: int,
    *,
    significance: float = 0.01,
    max_time: Optional[float] = None,
    threads: int = 1,
    block_size: int = 256,
    settings: Optional[AppSettings] = None,
) -> TwoSampleResult:
    """KS test of the local time of Brownian motion at level r - u, taken at
    the first hit of r, against eta_u of a squared Bessel(2) process."""

    gap = r - x0
    if not 0.0 < u <= gap:
        raise ValueError(f"ray_knight_check needs 0 < u <= r - x0, got u={u}")
    settings = settings or get_settings()
    h = bandwidth if bandwidth is not None else 2.0 * math.sqrt(dt)
    max_time = max_time if max_time is not None else _default_max_time(gap)
    level = np.array([r - u])

    def task(block: Sequence[int]) -> List[tuple]:
        out = []
        for i in block:
            coarse = OccupationAccumulator(level, h)
            fine = OccupationAccumulator(level, 0.5 * h)
            path = simulate_bm_to_hit(
                x0,
                r,
                dt,
                path_seed(seed, i, STREAM_BROWNIAN),
                max_time,
                occupation=(coarse, fine),
                record=False,
                index=i,
            )
            eta = simulate_squared_bessel2([u], path_seed(seed, i, STREAM_SQUARED_BESSEL))[0]
            out.append((path.exited, coarse.density()[0], fine.density()[0], eta))
        return out

    rows = run_blocks(task, n_paths, block_size, threads)
    exited = np.array([row[0] for row in rows], dtype=bool)
    local = np.array([row[1] for row in rows])[exited]
    local_fine = np.array([row[2] for row in rows])[exited]
    eta = np.array([row[3] for row in rows])
    truncated = 1.0 - float(np.mean(exited)) if rows else 0.0

    flags: List[str] = []
    if local.size == 0 or eta.size == 0:
        raise SimulationError("ray_knight_check produced an empty sample")
    test = ks_2samp(local, eta)
    test_fine = ks_2samp(local_fine, eta)
    critical = ks_critical_value(local.size, eta.size, significance)
    shift = abs(float(test.statistic) - float(test_fine.statistic))
    if shift > critical:
        flags.append("bandwidth_sensitive")
    _underpowered(flags, min(local.size, eta.size), settings)
    mean_left, se_left = _mean_and_se(local)
    mean_right, se_right = _mean_and_se(eta)
    result = TwoSampleResult(
        statistic=float(test.statistic),
        p_value=float(test.pvalue),
        n_left=int(local.size),
        n_right=int(eta.size),
        passed=bool(test.pvalue > significance),
        flags=flags,
        details={
            "level": float(level[0]),
            "bandwidth": h,
            "half_bandwidth_statistic": float(test_fine.statistic),
            "critical_value": critical,
            "mean_local_time": mean_left,
            "se_local_time": se_left,
            "mean_eta": mean_right,
            "se_eta": se_right,
            "expected_mean": 2.0 * u,
            "truncated_fraction": truncated,
        },
    )
    logger.info(
        "ray_knight_check n=%s statistic=%.4f p_value=%.4f flags=%s",
        n_paths,
        result.statistic,
        result.p_value,
        flags,
    )
    return result


# ---------------------------------------------------------------------------
# Hitting time versus Bessel(3) last exit
# ---------------------------------------------------------------------------


def _hitting_times(
    x0: float,
    r: float,
    n_paths: int,
    dt: float,
    seed: int,
    stream: int,
    max_time: float,
    threads: int,
    block_size: int,
) -> np.ndarray:
    """First hitting times of r, censored at max_time."""

    def task(block: Sequence[int]) -> List[float]:
        out = []
        for i in block:
            path = simulate_bm_to_hit(
                x0, r, dt, path_seed(seed, i, stream), max_time, record=False, index=i
            )
            out.append(path.exit.time if path.exited else max_time)
        return out

    return np.minimum(np.asarray(run_blocks(task, n_paths, block_size, threads)), max_time)


def williams_check(
    r: float,
    x0: float,
    n_paths: int,
    dt: float,
    seed: int,
    *,
    significance: float = 0.01,
    max_time: Optional[float] = None,
    threads: int = 1,
    block_size: int = 256,
    settings: Optional[AppSettings] = None,
) -> TwoSampleResult:
    """KS test of tau_r for Brownian motion from x0 against the last exit of
    Bessel(3) from level r - x0, plus the Brownian-scaling check of tau."""

    gap = r - x0
    if not gap > 0.0:
        raise ValueError("williams_check needs x0 < r")
    settings = settings or get_settings()
    max_time = max_time if max_time is not None else _default_max_time(gap)

    taus = _hitting_times(x0, r, n_paths, dt, seed, STREAM_BROWNIAN, max_time, threads, block_size)

    def bessel_task(block: Sequence[int]) -> List[tuple]:
        out = []
        for i in block:
            path = simulate_bessel3(dt, max_time, path_seed(seed, i, STREAM_BESSEL), gap, index=i)
            xi = last_exit(path, gap)
            short = horizon_too_short(path, gap)
            out.append((max_time if math.isnan(xi) or short else min(xi, max_time), short))
        return out

    rows = run_blocks(bessel_task, n_paths, block_size, threads)
    xis = np.array([row[0] for row in rows])
    short = np.array([row[1] for row in rows], dtype=bool)

    test = ks_2samp(taus, xis)
    flags: List[str] = []
    _underpowered(flags, min(taus.size, xis.size), settings)

    # tau for twice the gap is four times tau for the gap, in law
    n_scaled = max(n_paths // 4, 1)
    scaled = (
        _hitting_times(
            x0,
            x0 + 2.0 * gap,
            n_scaled,
            dt,
            seed,
            STREAM_SCALING,
            4.0 * max_time,
            threads,
            block_size,
        )
        / 4.0
    )
    scaling = ks_2samp(scaled, taus)
    if n_scaled < settings.underpowered_paths:
        flags.append("scaling_underpowered")

    result = TwoSampleResult(
        statistic=float(test.statistic),
        p_value=float(test.pvalue),
        n_left=int(taus.size),
        n_right=int(xis.size),
        passed=bool(test.pvalue > significance and scaling.pvalue > significance),
        flags=flags,
        details={
            "median_hitting_time": float(np.median(taus)),
            "median_last_exit": float(np.median(xis)),
            "reference_median": reflection_median(gap),
            "truncated_fraction_hitting": float(np.mean(taus >= max_time)),
            "truncated_fraction_last_exit": float(np.mean(xis >= max_time)),
            "horizon_too_short": int(np.sum(short)),
            "max_time": max_time,
            "scaling_statistic": float(scaling.statistic),
            "scaling_p_value": float(scaling.pvalue),
            "scaling_paths": n_scaled,
        },
    )
    logger.info(
        "williams_check n=%s statistic=%.4f p_value=%.4f scaling_p=%.4f",
        n_paths,
        result.statistic,
        result.p_value,
        float(scaling.pvalue),
    )
    return result


# ---------------------------------------------------------------------------
# Integrals of Bessel(3) near the origin
# ---------------------------------------------------------------------------


def _geometric_grid(eps: float, octaves: int, per_octave: int) -> np.ndarray:
    return eps * 2.0 ** (np.arange(-octaves * per_octave, 1, dtype=float) / per_octave)


def _octave_increments(
    times: np.ndarray, radii: np.ndarray, exponent: float, octaves: int
) -> np.ndarray:
    """Integral of radius^-p over each octave, ordered from eps toward 0."""

    with np.errstate(all="ignore"):
        values = radii**-exponent
    pieces = 0.5 * (values[:-1] + values[1:]) * np.diff(times)
    per_octave = pieces.size // octaves
    return pieces.reshape(octaves, per_octave).sum(axis=1)[::-1]


def _bridge_refine(
    times: np.ndarray, coords: np.ndarray, rng: np.random.Generator
) -> tuple:
    """Insert a conditional Brownian-bridge midpoint (geometric in time)
    between consecutive grid points."""

    ta, tb = times[:-1], times[1:]
    tm = np.sqrt(ta * tb)
    weight = ((tm - ta) / (tb - ta))[:, None]
    std = np.sqrt((tm - ta) * (tb - tm) / (tb - ta))[:, None]
    mid = coords[:-1] + weight * (coords[1:] - coords[:-1]) + std * rng.standard_normal(
        (tm.size, 3)
    )
    refined_t = np.empty(2 * times.size - 1)
    refined_t[0::2] = times
    refined_t[1::2] = tm
    refined_c = np.empty((2 * times.size - 1, 3))
    refined_c[0::2] = coords
    refined_c[1::2] = mid
    return refined_t, refined_c


def cherny_dichotomy_check(
    p_exponent: float,
    eps: float,
    n_paths: int,
    dt: float,
    seed: int,
    *,
    dyadic_count: int = 32,
    threshold: float = 0.9,
    threads: int = 1,
    block_size: int = 256,
    settings: Optional[AppSettings] = None,
) -> MCSummary:
    """Trend of int_0^eps rho_u^-p du over Bessel(3) paths: Converging iff p < 2."""

    if p_exponent == 2.0:
        raise ValueError("p = 2 sits on the dichotomy boundary and is not checked")
    if not eps > 0.0 or not dt > 0.0:
        raise ValueError("eps and dt must be positive")
    settings = settings or get_settings()
    expected = "Converging" if p_exponent < 2.0 else "Diverging"
    per_octave = max(1, math.ceil(1.0 / math.sqrt(dt)))
    times = _geometric_grid(eps, dyadic_count, per_octave)
    first = np.concatenate([[0.0], times])

    def task(block: Sequence[int]) -> List[tuple]:
        out = []
        for i in block:
            rng = np.random.default_rng(path_seed(seed, i, STREAM_BESSEL))
            steps = rng.standard_normal((times.size, 3)) * np.sqrt(np.diff(first))[:, None]
            coords = np.cumsum(steps, axis=0)
            radii = np.linalg.norm(coords, axis=1)
            increments = _octave_increments(times, radii, p_exponent, dyadic_count)
            trend, slope, _ = classify_trend(increments)

            bridge_rng = np.random.default_rng(path_seed(seed, i, STREAM_BRIDGE))
            fine_t, fine_c = _bridge_refine(times, coords, bridge_rng)
            fine = _octave_increments(
                fine_t, np.linalg.norm(fine_c, axis=1), p_exponent, dyadic_count
            )
            fine_trend, _, _ = classify_trend(fine)
            out.append((trend, slope, fine_trend, float(np.sum(increments))))
        return out

    rows = run_blocks(task, n_paths, block_size, threads)
    trends = Counter(row[0] for row in rows)
    flips = sum(row[0] != row[2] for row in rows)
    flip_fraction = flips / n_paths if n_paths else 0.0
    flags: List[str] = []
    if flip_fraction > REFINEMENT_FLIP_LIMIT:
        flags.append("dt_refinement")
    _underpowered(flags, n_paths, settings)
    estimate, std_error = binomial_summary(trends[expected], n_paths)
    logger.info(
        "cherny_dichotomy_check p=%s n=%s estimate=%s flips=%s",
        p_exponent,
        n_paths,
        estimate,
        flips,
    )
    return MCSummary(
        n_paths=n_paths,
        estimate=estimate,
        std_error=std_error,
        per_path=[row[1] for row in rows],
        flags=flags,
        details={
            "exponent": p_exponent,
            "expected": expected,
            "converging": trends["Converging"],
            "diverging": trends["Diverging"],
            "undecided": trends["Undecided"],
            "refinement_flip_fraction": flip_fraction,
            "points_per_octave": per_octave,
            "octaves": dyadic_count,
            "median_integral": float(np.median([row[3] for row in rows])) if rows else math.nan,
            "threshold": threshold,
            "passed": bool(estimate >= threshold and "dt_refinement" not in flags),
        },
    )


# ---------------------------------------------------------------------------
# Mean of a weighted squared-Brownian integral
# ---------------------------------------------------------------------------


def fubini_mean_check(
    f: Expr,
    r: float,
    x0: float,
    n_paths: int,
    dt: float,
    seed: int,
    *,
    significance: float = 0.01,
    threads: int = 1,
    block_size: int = 256,
    settings: Optional[AppSettings] = None,
) -> MCSummary:
    """MC mean of int_0^{r-x0} f(r-u) W_u^2 du against the quadrature of
    int_0^{r-x0} f(r-u) u du."""

    gap = r - x0
    if not gap > 0.0:
        raise ValueError("fubini_mean_check needs x0 < r")
    settings = settings or get_settings()
    f_eval = evaluator(f)
    n_steps = max(1, math.ceil(gap / dt - 1e-9))
    grid = np.linspace(0.0, gap, n_steps + 1)
    with np.errstate(all="ignore"):
        weights = np.asarray(f_eval(r - grid), dtype=float)
    if not np.all(np.isfinite(weights)):
        raise ValueError("f must be finite on [x0, r] for the mean to exist")
    steps = np.sqrt(np.diff(grid))

    def task(block: Sequence[int]) -> List[float]:
        out = []
        for i in block:
            rng = np.random.default_rng(path_seed(seed, i, STREAM_FUBINI))
            w = np.concatenate([[0.0], np.cumsum(steps * rng.standard_normal(n_steps))])
            out.append(float(trapezoid(weights * w * w, grid)))
        return out

    sample = np.asarray(run_blocks(task, n_paths, block_size, threads))
    target = integrate_compact(
        lambda u: np.asarray(f_eval(r - u), dtype=float) * u, 0.0, gap, Tolerances()
    ).value
    mean, se = _mean_and_se(sample)
    if se > 0.0:
        z = (mean - target) / se
    else:
        z = 0.0 if math.isclose(mean, target, rel_tol=1e-12, abs_tol=1e-15) else math.inf
    p_value = float(2.0 * norm.sf(abs(z)))
    flags: List[str] = []
    _underpowered(flags, n_paths, settings)
    logger.info("fubini_mean_check n=%s mean=%s target=%s z=%s", n_paths, mean, target, z)
    return MCSummary(
        n_paths=n_paths,
        estimate=mean,
        std_error=se,
        flags=flags,
        details={
            "target": target,
            "z_score": z,
            "p_value": p_value,
            "significance": significance,
            "passed": bool(p_value > significance),
        },
    )


# ---------------------------------------------------------------------------
# Time integral versus occupation integral
# ---------------------------------------------------------------------------


def occupation_check(
    f: Expr,
    r: float,
    x0: float,
    n_paths: int,
    dt: float,
    bandwidth: Optional[float],
    seed: int,
    *,
    lower: float = -8.0,
    tolerance: float = OCCUPATION_TOLERANCE,
    max_time: Optional[float] = None,
    threads: int = 1,
    block_size: int = 256,
    settings: Optional[AppSettings] = None,
) -> MCSummary:
    """Per-path relative error between int_0^tau f(B) du and int f(x) L^x dx
    up to the first hit of r; the median is compared with ``tolerance``.

    Occupation is tracked on [lower, r + bandwidth]; f is expected to be
    negligible below ``lower``.
    """

    gap = r - x0
    if not gap > 0.0:
        raise ValueError("occupation_check needs x0 < r")
    settings = settings or get_settings()
    h = bandwidth if bandwidth is not None else 2.0 * math.sqrt(dt)
    max_time = max_time if max_time is not None else _default_max_time(gap)
    f_eval = evaluator(f)
    lo = min(lower, x0 - h)
    levels = np.arange(lo, r + h + 0.5 * h, h)

    def task(block: Sequence[int]) -> List[tuple]:
        out = []
        for i in block:
            accumulator = OccupationAccumulator(levels, h)
            path = simulate_bm_to_hit(
                x0,
                r,
                dt,
                path_seed(seed, i, STREAM_BROWNIAN),
                max_time,
                integrand=f_eval,
                occupation=(accumulator,),
                record=False,
                index=i,
            )
            with np.errstate(all="ignore"):
                occupied = float(
                    trapezoid(np.asarray(f_eval(levels), dtype=float) * accumulator.density(), levels)
                )
            timed = float(path.integral[-1]) if path.integral is not None else 0.0
            error = abs(timed - occupied) / max(abs(timed), 1e-300)
            out.append((error, path.exited))
        return out

    rows = run_blocks(task, n_paths, block_size, threads)
    errors = np.array([row[0] for row in rows])
    exited = np.array([row[1] for row in rows], dtype=bool)
    median = float(np.median(errors)) if errors.size else math.nan
    std_error = (
        1.2533 * float(np.std(errors, ddof=1)) / math.sqrt(errors.size)
        if errors.size > 1
        else math.nan
    )
    flags: List[str] = []
    _underpowered(flags, n_paths, settings)
    logger.info("occupation_check n=%s median_error=%s", n_paths, median)
    return MCSummary(
        n_paths=n_paths,
        estimate=median,
        std_error=std_error,
        per_path=errors.tolist(),
        flags=flags,
        details={
            "bandwidth": h,
            "tolerance": tolerance,
            "passed": bool(median < tolerance),
            "truncated_fraction": float(1.0 - np.mean(exited)) if exited.size else 0.0,
        },
    )


# ---------------------------------------------------------------------------
# Positivity of local time after the first hit
# ---------------------------------------------------------------------------


def expected_local_time(level: float, x0: float, horizon: float) -> float:
    """E L^level_horizon for Brownian motion from x0, from Tanaka's formula:
    E|B_t - a| - |x0 - a|."""

    m = x0 - level
    s = math.sqrt(horizon)
    folded = s * math.sqrt(2.0 / math.pi) * math.exp(-0.5 * (m / s) ** 2) + m * (
        1.0 - 2.0 * float(norm.cdf(-m / s))
    )
    return folded - abs(m)


def local_time_positivity_check(
    level: float,
    x0: float,
    horizon: float,
    n_paths: int,
    dt: float,
    bandwidth: Optional[float],
    seed: int,
    *,
    significance: float = 0.01,
    threads: int = 1,
    block_size: int = 256,
    settings: Optional[AppSettings] = None,
) -> MCSummary:
    """Local time of Brownian motion at ``level`` up to ``horizon``.

    Paths that reach the level in the first half of the horizon must carry
    positive one-sided occupation densities on both sides of it; paths that
    stay farther than the bandwidth from it carry none. The mean two-sided
    density is compared with :func:`expected_local_time`.
    """

    if not horizon > 0.0 or not dt > 0.0:
        raise ValueError("horizon and dt must be positive")
    settings = settings or get_settings()
    h = bandwidth if bandwidth is not None else 2.0 * math.sqrt(dt)
    n_steps = max(1, math.ceil(horizon / dt - 1e-9))
    step = horizon / n_steps
    start_side = float(np.sign(x0 - level))

    def task(block: Sequence[int]) -> List[tuple]:
        out = []
        for i in block:
            rng = np.random.default_rng(path_seed(seed, i, STREAM_LOCAL_TIME))
            noise = math.sqrt(step) * rng.standard_normal(n_steps)
            values = x0 + np.concatenate([[0.0], np.cumsum(noise)])
            offset = values[:-1] - level
            above = step * np.count_nonzero((offset >= 0.0) & (offset < h)) / h
            below = step * np.count_nonzero((offset <= 0.0) & (offset > -h)) / h
            if start_side == 0.0:
                hit_time = 0.0
            else:
                crossed = np.flatnonzero(np.sign(values - level) != start_side)
                hit_time = float(crossed[0] * step) if crossed.size else math.inf
            closest = float(np.min(np.abs(values - level)))
            out.append((hit_time, above, below, closest))
        return out

    rows = run_blocks(task, n_paths, block_size, threads)
    hit_times = np.array([row[0] for row in rows])
    above = np.array([row[1] for row in rows])
    below = np.array([row[2] for row in rows])
    closest = np.array([row[3] for row in rows])
    density = 0.5 * (above + below)

    early = hit_times <= 0.5 * horizon
    both_sides = (above > 0.0) & (below > 0.0)
    positive_fraction = float(np.mean(both_sides[early])) if np.any(early) else math.nan
    # the support of L stays inside the visited range
    far = ~np.isfinite(hit_times) & (closest >= h)
    unvisited_zero = bool(np.all(density[far] == 0.0))

    target = expected_local_time(level, x0, horizon)
    mean, se = _mean_and_se(density)
    if se > 0.0:
        z = (mean - target) / se
    else:
        z = 0.0 if math.isclose(mean, target, rel_tol=1e-12, abs_tol=1e-15) else math.inf
    p_value = float(2.0 * norm.sf(abs(z)))

    flags: List[str] = []
    if not np.any(early):
        flags.append("no_early_hits")
    _underpowered(flags, n_paths, settings)
    passed = bool(
        p_value > significance
        and np.any(early)
        and positive_fraction >= POSITIVITY_FLOOR
        and unvisited_zero
    )
    logger.info(
        "local_time_positivity_check n=%s early_hits=%s positive_fraction=%s z=%s",
        n_paths,
        int(np.sum(early)),
        positive_fraction,
        z,
    )
    return MCSummary(
        n_paths=n_paths,
        estimate=mean,
        std_error=se,
        flags=flags,
        details={
            "level": level,
            "horizon": horizon,
            "bandwidth": h,
            "target": target,
            "z_score": z,
            "p_value": p_value,
            "significance": significance,
            "early_hits": int(np.sum(early)),
            "positive_fraction": positive_fraction,
            "far_paths": int(np.sum(far)),
            "unvisited_zero": unvisited_zero,
            "passed": passed,
        },
    )


__all__ = [
    "OCCUPATION_TOLERANCE",
    "POSITIVITY_FLOOR",
    "REFINEMENT_FLIP_LIMIT",
    "TwoSampleResult",
    "cherny_dichotomy_check",
    "expected_local_time",
    "fubini_mean_check",
    "ks_critical_value",
    "local_time_positivity_check",
    "occupation_check",
    "ray_knight_check",
    "reflection_median",
    "williams_check",
]
