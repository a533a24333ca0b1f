"""Compact quadrature and finite/infinite classification of improper integrals."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy import integrate

if TYPE_CHECKING:
    from .coeffspec import StateSpace

logger = logging.getLogger(__name__)

Evaluator = Callable[[np.ndarray], np.ndarray]
Side = Literal["left_of", "right_of"]
VerdictKind = Literal["finite", "infinite", "indeterminate"]

# aggregate increment ratio above which a window counts as level or growing
_LEVEL_RATIO = 1.0 - 1e-6
# aggregate ratio at or below which a window counts as geometric decay
_GEOMETRIC_RATIO = 0.99
_NUDGE_ATTEMPTS = 12
_MAX_INFINITE_REACH = 1e150


class NonConvergentError(RuntimeError):
    """Raised when adaptive quadrature cannot meet its tolerance."""


class Tolerances(BaseModel):
    rel_tol: float = Field(default=1e-8, gt=0, description="Relative tolerance.")
    abs_tol: float = Field(default=1e-10, gt=0, description="Absolute tolerance.")
    max_depth: int = Field(default=40, ge=4, description="Subdivision depth budget.")
    shrink_ratio: float = Field(default=0.5, gt=0, lt=1, description="Refinement ratio q.")
    decision_window: int = Field(default=6, ge=3, description="Increments per decision.")
    max_steps: int = Field(default=200, ge=8, description="Refinement steps per endpoint.")

    def target(self, value: float) -> float:
        return max(self.abs_tol, self.rel_tol * abs(value))


@dataclass(frozen=True, slots=True)
class QuadResult:
    value: float
    error_estimate: float
    subdivisions: int


@dataclass(slots=True)
class ImproperVerdict:
    kind: VerdictKind
    value: Optional[float] = None
    error_estimate: Optional[float] = None
    exponent_estimate: Optional[float] = None
    partial_integrals: List[Tuple[float, float]] = field(default_factory=list)
    increments: List[float] = field(default_factory=list)
    ratio_estimate: Optional[float] = None
    tail_estimate: float = 0.0
    endpoint: float = 0.0
    side: Side = "left_of"
    note: Optional[str] = None

    @property
    def is_finite(self) -> bool:
        return self.kind == "finite"

    @property
    def is_infinite(self) -> bool:
        return self.kind == "infinite"


class _NudgedIntegrand:
    """Scalar wrapper that steps off nodes where g is undefined or infinite."""

    def __init__(self, g: Evaluator, a: float, b: float) -> None:
        self.g = g
        self.mid = 0.5 * (a + b)
        self.nudged = 0
        self.failed: Optional[float] = None

    def __call__(self, x: float) -> float:
        value = float(self.g(np.asarray(x, dtype=float)))
        if math.isfinite(value):
            return value
        direction = 1.0 if x < self.mid else -1.0
        base = max(np.spacing(x), np.spacing(1.0) * 1e-300)
        for attempt in range(_NUDGE_ATTEMPTS):
            shifted = x + direction * base * (4.0**attempt)
            value = float(self.g(np.asarray(shifted, dtype=float)))
            if math.isfinite(value):
                self.nudged += 1
                return value
        if self.failed is None:
            self.failed = x
        return 0.0


def integrate_compact(g: Evaluator, a: float, b: float, tol: Tolerances) -> QuadResult:
    """Adaptive Gauss-Kronrod quadrature of g over [a, b]."""

    if not (math.isfinite(a) and math.isfinite(b)) or not a < b:
        raise ValueError(f"integrate_compact needs finite a < b, got [{a}, {b}]")
    wrapped = _NudgedIntegrand(g, a, b)
    limit = 5 * tol.max_depth
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        result = integrate.quad(
            wrapped,
            a,
            b,
            epsabs=tol.abs_tol,
            epsrel=max(tol.rel_tol, 1e-14),
            limit=limit,
            full_output=1,
        )
    value, error = float(result[0]), float(result[1])
    info = result[2]
    converged = len(result) == 3
    if wrapped.failed is not None:
        raise NonConvergentError(
            f"integrand undefined around x={wrapped.failed:g} on [{a:g}, {b:g}]"
        )
    if not math.isfinite(value):
        raise NonConvergentError(f"non-finite integral on [{a:g}, {b:g}]")
    if not converged and error > 10.0 * tol.target(value):
        raise NonConvergentError(
            f"quadrature on [{a:g}, {b:g}] stopped at error {error:.3g} "
            f"(target {tol.target(value):.3g})"
        )
    return QuadResult(value=value, error_estimate=abs(error), subdivisions=int(info["last"]))


# ---------------------------------------------------------------------------
# Improper integrals
# ---------------------------------------------------------------------------


def refinement_point(endpoint: float, side: Side, inner: float, k: int, q: float) -> Tuple[float, float]:
    """Return (x_k, eps_k) for refinement step k."""

    if math.isfinite(endpoint):
        eps = abs(endpoint - inner) * q**k
        x = endpoint - eps if side == "left_of" else endpoint + eps
        return x, eps
    reach = (abs(inner) + 1.0) / q**k
    x = reach if side == "left_of" else -reach
    return x, 1.0 / reach


def _aggregate_ratio(window: Sequence[float]) -> float:
    head = float(sum(window[:-1]))
    tail = float(sum(window[1:]))
    if head <= 0.0:
        return 0.0 if tail <= 0.0 else math.inf
    return tail / head


def _step_ratios(window: Sequence[float]) -> List[float]:
    ratios: List[float] = []
    for prev, cur in zip(window[:-1], window[1:]):
        if prev <= 0.0:
            ratios.append(0.0 if cur <= 0.0 else math.inf)
        else:
            ratios.append(cur / prev)
    return ratios


def _exponent_fit(g: Evaluator, points: Sequence[float], scales: Sequence[float]) -> Optional[float]:
    values = np.asarray(g(np.asarray(points, dtype=float)), dtype=float)
    mask = np.isfinite(values) & (values > 0.0)
    if mask.sum() < 3:
        return None
    log_scale = np.log(np.asarray(scales, dtype=float)[mask])
    if np.ptp(log_scale) == 0.0:
        return None
    slope, _ = np.polyfit(log_scale, np.log(values[mask]), 1)
    return float(slope)


def classify_improper(
    g: Evaluator, endpoint: float, side: Side, inner: float, tol: Tolerances
) -> ImproperVerdict:
    """Decide whether the integral of g from inner toward endpoint is finite."""

    if side == "left_of" and not inner < endpoint:
        raise ValueError("inner must lie left of the endpoint")
    if side == "right_of" and not inner > endpoint:
        raise ValueError("inner must lie right of the endpoint")

    q = tol.shrink_ratio
    infinite_endpoint = not math.isfinite(endpoint)
    window = tol.decision_window
    verdict = ImproperVerdict(kind="indeterminate", endpoint=endpoint, side=side)
    points: List[float] = []
    # exponent fit uses distance to a finite endpoint, |x| for an infinite one
    scales: List[float] = []
    total = 0.0
    previous = inner
    k = 1 if not infinite_endpoint else 0

    def finish(kind: VerdictKind, note: Optional[str] = None) -> ImproperVerdict:
        verdict.kind = kind
        verdict.note = note
        tail_points = points[-window:]
        tail_scales = scales[-window:]
        verdict.exponent_estimate = _exponent_fit(g, tail_points, tail_scales)
        logger.debug(
            "improper_classified endpoint=%s side=%s kind=%s steps=%s",
            endpoint,
            side,
            kind,
            len(verdict.increments),
        )
        return verdict

    for _ in range(tol.max_steps):
        x, eps = refinement_point(endpoint, side, inner, k, q)
        k += 1
        at_resolution = (
            (not infinite_endpoint and (x == endpoint or x == previous))
            or (infinite_endpoint and abs(x) > _MAX_INFINITE_REACH)
        )
        if at_resolution:
            break
        lo, hi = (previous, x) if side == "left_of" else (x, previous)
        if lo == hi:
            previous = x
            continue
        try:
            piece = integrate_compact(g, lo, hi, tol)
        except NonConvergentError as exc:
            return finish("indeterminate", note=str(exc))
        increment = max(piece.value, 0.0)
        total += increment
        previous = x
        verdict.increments.append(increment)
        verdict.partial_integrals.append((eps, total))
        points.append(x)
        scales.append(eps if not infinite_endpoint else abs(x))

        if len(verdict.increments) < window:
            continue
        recent = verdict.increments[-window:]
        ratio = _aggregate_ratio(recent)
        verdict.ratio_estimate = ratio if math.isfinite(ratio) else None
        if ratio >= _LEVEL_RATIO and min(recent) >= tol.abs_tol:
            return finish("infinite")
        if ratio <= _GEOMETRIC_RATIO and max(_step_ratios(recent)) < 1.0:
            tail = recent[-1] * ratio / (1.0 - ratio) if ratio > 0.0 else 0.0
            if tail <= tol.target(total):
                verdict.tail_estimate = tail
                verdict.value = total + tail
                verdict.error_estimate = max(tail, tol.target(total))
                return finish("finite")

    if len(verdict.increments) >= window:
        recent = verdict.increments[-window:]
        ratio = _aggregate_ratio(recent)
        verdict.ratio_estimate = ratio if math.isfinite(ratio) else None
        if ratio >= _LEVEL_RATIO and min(recent) >= tol.abs_tol:
            return finish("infinite")
        if ratio <= _GEOMETRIC_RATIO and max(_step_ratios(recent)) < 1.0:
            tail = recent[-1] * ratio / (1.0 - ratio) if ratio > 0.0 else 0.0
            verdict.tail_estimate = tail
            verdict.value = total + tail
            spread = max(_step_ratios(recent)) - min(_step_ratios(recent))
            verdict.error_estimate = max(tail * spread, tol.target(total))
            return finish("finite", note="extrapolated at refinement limit")
    return finish("indeterminate", note="no decisive trend in the refinement window")


# ---------------------------------------------------------------------------
# Local integrability and the non-integrability set
# ---------------------------------------------------------------------------


@dataclass(slots=True)
class LocalIntegrability:
    point: float
    integrable: Optional[bool]
    bounded: bool = False
    left: Optional[ImproperVerdict] = None
    right: Optional[ImproperVerdict] = None

    @property
    def indeterminate(self) -> bool:
        return self.integrable is None


def _looks_bounded(g: Evaluator, x: float, radius: float) -> bool:
    offsets = radius * 2.0 ** -np.arange(0, 41, dtype=float)
    left = np.asarray(g(x - offsets), dtype=float)
    right = np.asarray(g(x + offsets), dtype=float)
    # float resolution: drop offsets that collapse onto x
    keep = (x - offsets != x) & (x + offsets != x)
    values = np.abs(np.concatenate([left[keep], right[keep]]))
    if values.size == 0 or not np.all(np.isfinite(values)):
        return False
    near = np.concatenate([left[keep][20:], right[keep][20:]])
    far = np.concatenate([left[keep][:20], right[keep][:20]])
    if near.size == 0 or far.size == 0:
        return True
    return bool(np.max(np.abs(near)) <= 2.0 * np.max(np.abs(far)) + 1e-12)


def local_integrability_at(
    g: Evaluator, x: float, tol: Tolerances, radius: Optional[float] = None
) -> LocalIntegrability:
    """Membership test g in L1_loc(x) from both sides of x."""

    radius = radius if radius is not None else 0.5 * max(1.0, abs(x)) * 1e-2
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    if _looks_bounded(g, x, radius):
        return LocalIntegrability(point=x, integrable=True, bounded=True)
    left = classify_improper(g, x, "left_of", x - radius, tol)
    right = classify_improper(g, x, "right_of", x + radius, tol)
    if left.is_infinite or right.is_infinite:
        integrable: Optional[bool] = False
    elif left.is_finite and right.is_finite:
        integrable = True
    else:
        integrable = None
    return LocalIntegrability(point=x, integrable=integrable, left=left, right=right)


@dataclass(slots=True)
class DSetResult:
    points: List[float] = field(default_factory=list)
    indeterminate: List[float] = field(default_factory=list)
    tested: List[float] = field(default_factory=list)
    checks: List[LocalIntegrability] = field(default_factory=list)


def nonintegrability_set(
    g: Evaluator, J: "StateSpace", candidates: Sequence[float], tol: Tolerances
) -> DSetResult:
    """Candidates where g fails to be locally integrable."""

    ordered = sorted({float(c) for c in candidates if J.l < float(c) < J.r})
    result = DSetResult(tested=list(ordered))
    for idx, point in enumerate(ordered):
        gaps = [point - J.l, J.r - point, 1.0]
        if idx > 0:
            gaps.append(point - ordered[idx - 1])
        if idx + 1 < len(ordered):
            gaps.append(ordered[idx + 1] - point)
        radius = 0.5 * min(gaps)
        check = local_integrability_at(g, point, tol, radius=radius)
        if check.integrable is False:
            result.points.append(point)
            result.checks.append(check)
        elif check.integrable is None:
            result.indeterminate.append(point)
            result.checks.append(check)
    logger.debug(
        "nonintegrability_set tested=%s found=%s indeterminate=%s",
        len(ordered),
        len(result.points),
        len(result.indeterminate),
    )
    return result


__all__ = [
    "DSetResult",
    "Evaluator",
    "ImproperVerdict",
    "LocalIntegrability",
    "NonConvergentError",
    "QuadResult",
    "Side",
    "Tolerances",
    "VerdictKind",
    "classify_improper",
    "integrate_compact",
    "local_integrability_at",
    "nonintegrability_set",
    "refinement_point",
]
