"""Boundary behaviour, D-set reduction and convergence verdicts for
integral functionals of one-dimensional diffusions."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Literal, Optional, Sequence, Tuple

import numpy as np

from .coeffspec import Expr, Problem, StateSpace, evaluator, feature_probes, probe_grid
from .config import AppSettings, get_settings
from .quad import (
    DSetResult,
    Evaluator,
    ImproperVerdict,
    Tolerances,
    classify_improper,
    nonintegrability_set,
)
from .scale import (
    BoundaryLimits,
    EndpointLimit,
    EndpointName,
    MeshResolutionError,
    ScaleFunction,
    scale_limits,
)

logger = logging.getLogger(__name__)

EventKind = Literal["zero", "finite", "infinite", "event_null", "inconclusive"]
RecurrenceKind = Literal["recurrent", "transient", "undetermined"]

FINITE_BEFORE_ETA_D = "the functional is finite for every t < eta_D"
INFINITE_AFTER_ETA_D = "the functional is infinite for every t > eta_D"


@dataclass(slots=True)
class EventVerdict:
    kind: EventKind
    integral: Optional[ImproperVerdict] = None
    witness: Optional[float] = None
    note: Optional[str] = None

    @property
    def conclusive(self) -> bool:
        return self.kind != "inconclusive"


@dataclass(slots=True)
class EndpointBehavior:
    endpoint: EndpointName
    # None when the scale limit itself is indeterminate
    attracted: Optional[bool]
    # present only for attracted endpoints
    explosive: Optional[bool]
    feller_integrand_verdict: Optional[ImproperVerdict]
    limit: EndpointLimit
    note: Optional[str] = None

    @property
    def event_null(self) -> bool:
        """The event {Y_t -> endpoint} has probability zero."""

        return self.attracted is False


@dataclass(slots=True)
class RecurrenceClass:
    kind: RecurrenceKind
    left: EndpointBehavior
    right: EndpointBehavior
    limits: BoundaryLimits
    flagged: bool = False

    @property
    def recurrent(self) -> bool:
        return self.kind == "recurrent"

    def behavior(self, endpoint: EndpointName) -> EndpointBehavior:
        return self.left if endpoint == "l" else self.right


@dataclass(slots=True)
class ReducedProblem:
    D_points: List[float]
    alpha: float
    beta: float
    I: Optional[StateSpace]
    x0_in_D: bool
    problem: Optional[Problem] = None
    indeterminate: List[float] = field(default_factory=list)
    tested: List[float] = field(default_factory=list)
    checks: DSetResult = field(default_factory=DSetResult)

    @property
    def blocking(self) -> List[float]:
        """Indeterminate candidates that could move alpha, beta or x0's membership."""

        return [p for p in self.indeterminate if self.alpha <= p <= self.beta]


@dataclass(slots=True)
class ConvergenceReport:
    problem: Problem
    reduced: ReducedProblem
    reference_point: float
    finite_before_etaD: str = FINITE_BEFORE_ETA_D
    infinite_after_etaD: str = INFINITE_AFTER_ETA_D
    recurrence: Optional[RecurrenceClass] = None
    limits: Optional[BoundaryLimits] = None
    on_event_A: Optional[EventVerdict] = None
    on_limit_r: Optional[EventVerdict] = None
    on_limit_l: Optional[EventVerdict] = None
    on_start_in_D: Optional[EventKind] = None
    status: Literal["conclusive", "inconclusive"] = "conclusive"
    blocking: List[str] = field(default_factory=list)
    candidates_tested: int = 0
    notes: List[str] = field(default_factory=list)

    def events(self) -> Dict[str, EventKind]:
        """Populated events and their verdict kinds."""

        out: Dict[str, EventKind] = {}
        if self.on_start_in_D is not None:
            out["on_start_in_D"] = self.on_start_in_D
        for name in ("on_event_A", "on_limit_r", "on_limit_l"):
            verdict = getattr(self, name)
            if verdict is not None:
                out[name] = verdict.kind
        return out

    def block(self, reason: str) -> None:
        self.status = "inconclusive"
        if reason not in self.blocking:
            self.blocking.append(reason)


# ---------------------------------------------------------------------------
# Boundary classification
# ---------------------------------------------------------------------------


def _side(endpoint: EndpointName) -> Literal["left_of", "right_of"]:
    return "left_of" if endpoint == "r" else "right_of"


def _from_improper(verdict: ImproperVerdict) -> EventVerdict:
    kind: EventKind = "inconclusive"
    if verdict.is_finite:
        kind = "finite"
    elif verdict.is_infinite:
        kind = "infinite"
    return EventVerdict(kind=kind, integral=verdict, note=verdict.note)


def feller_test(
    p: Problem,
    sf: ScaleFunction,
    endpoint: EndpointName,
    tol: Tolerances,
    limits: Optional[BoundaryLimits] = None,
) -> EndpointBehavior:
    """Attraction from the scale limit, explosion from Feller's integrand
    (s(e) - s)/(rho sigma^2) near the endpoint."""

    limits = limits or scale_limits(sf, tol)
    limit = limits.get(endpoint)
    if limit.is_infinite:
        return EndpointBehavior(endpoint, False, None, None, limit)
    if limit.is_indeterminate:
        return EndpointBehavior(
            endpoint, None, None, None, limit, note="scale limit indeterminate"
        )

    def integrand(x: np.ndarray) -> np.ndarray:
        sigma = p.sigma_eval(x)
        with np.errstate(all="ignore"):
            return sf.tail(x, endpoint) / (sf.rho(x) * sigma * sigma)

    verdict = classify_improper(
        integrand, sf.space.endpoint(endpoint), _side(endpoint), sf.c, tol
    )
    explosive = {"finite": True, "infinite": False}.get(verdict.kind)
    logger.info("feller_test endpoint=%s explosive=%s", endpoint, explosive)
    return EndpointBehavior(
        endpoint,
        True,
        explosive,
        verdict,
        limit,
        note=None if explosive is not None else "feller integral indeterminate",
    )


def classify_recurrence(
    p: Problem,
    sf: ScaleFunction,
    tol: Tolerances,
    limits: Optional[BoundaryLimits] = None,
) -> RecurrenceClass:
    limits = limits or scale_limits(sf, tol)
    left = feller_test(p, sf, "l", tol, limits)
    right = feller_test(p, sf, "r", tol, limits)
    if limits.recurrent:
        kind: RecurrenceKind = "recurrent"
    elif limits.s_l.is_finite or limits.s_r.is_finite:
        kind = "transient"
    else:
        kind = "undetermined"
    flagged = limits.s_l.is_indeterminate or limits.s_r.is_indeterminate
    return RecurrenceClass(kind=kind, left=left, right=right, limits=limits, flagged=flagged)


# ---------------------------------------------------------------------------
# D-set reduction
# ---------------------------------------------------------------------------


def default_candidates(p: Problem, n_probes: int) -> List[float]:
    """Probe grid, breakpoints of the coefficients and f, declared
    singularities, x0 and probes where f/sigma^2 is not finite."""

    grid = probe_grid(p.space, n_probes)
    with np.errstate(all="ignore"):
        values = np.asarray(p.g_ratio(grid), dtype=float)
    bad = grid[~np.isfinite(values)]
    points = set(grid.tolist()) | set(p.breakpoints()) | {p.space.x0} | set(bad.tolist())
    return sorted(x for x in points if p.space.l < x < p.space.r)


def reduce_by_D(p: Problem, candidates: Iterable[float], tol: Tolerances) -> ReducedProblem:
    x0 = p.space.x0
    pool = sorted({float(c) for c in candidates} | {x0} | set(p.declared_singularities))
    found = nonintegrability_set(p.g_ratio, p.space, pool, tol)
    x0_in_D = x0 in found.points
    below = [d for d in found.points if d < x0]
    above = [d for d in found.points if d > x0]
    alpha = max(below) if below else p.space.l
    beta = min(above) if above else p.space.r
    if x0_in_D:
        interval = None
        reduced_problem = None
    else:
        interval = StateSpace(alpha, beta, x0)
        reduced_problem = p.with_space(interval)
    logger.info(
        "reduce_by_D tested=%s d_points=%s alpha=%s beta=%s x0_in_D=%s",
        len(found.tested),
        len(found.points),
        alpha,
        beta,
        x0_in_D,
    )
    return ReducedProblem(
        D_points=list(found.points),
        alpha=alpha,
        beta=beta,
        I=interval,
        x0_in_D=x0_in_D,
        problem=reduced_problem,
        indeterminate=list(found.indeterminate),
        tested=list(found.tested),
        checks=found,
    )


# ---------------------------------------------------------------------------
# Verdicts
# ---------------------------------------------------------------------------


def _positive_witness(
    f_eval: Evaluator, space: StateSpace, n_probes: int, marks: Sequence[float] = ()
) -> Optional[float]:
    grid = np.union1d(probe_grid(space, n_probes), feature_probes(marks, space))
    with np.errstate(all="ignore"):
        values = np.asarray(f_eval(grid), dtype=float)
        step = 1e-9 * np.maximum(1.0, np.abs(grid))
        left = np.asarray(f_eval(grid - step), dtype=float)
        right = np.asarray(f_eval(grid + step), dtype=float)
    # a single positive float is not Lebesgue-positive; require a positive neighbour
    positive = (values > 0.0) & ((left > 0.0) | (right > 0.0))
    hits = grid[positive]
    return float(hits[0]) if hits.size else None


def recurrent_verdict(
    p_reduced: Problem,
    sf: ScaleFunction,
    tol: Tolerances,
    *,
    f_ae_zero: bool = False,
    n_probes: Optional[int] = None,
) -> EventVerdict:
    """Zero iff f vanishes Lebesgue-a.e. on I, else Infinite."""

    limits = scale_limits(sf, tol)
    if not limits.recurrent:
        raise ValueError("recurrent_verdict needs s(l) = -inf and s(r) = +inf")
    if f_ae_zero:
        return EventVerdict(kind="zero", note="f declared zero almost everywhere")
    n_probes = n_probes or get_settings().positivity_probes
    witness = _positive_witness(
        p_reduced.f_eval, p_reduced.space, n_probes, p_reduced.breakpoints()
    )
    if witness is None:
        return EventVerdict(kind="zero", note=f"f vanishes at all {n_probes} probes")
    return EventVerdict(kind="infinite", witness=witness)


def endpoint_verdict(
    p_reduced: Problem,
    sf: ScaleFunction,
    endpoint: EndpointName,
    tol: Tolerances,
) -> EventVerdict:
    """Finite on {Y -> e} iff (s(e) - s) f/(rho sigma^2) is integrable at e."""

    limits = scale_limits(sf, tol)
    limit = limits.get(endpoint)
    if limit.is_infinite:
        return EventVerdict(kind="event_null", note="endpoint not attracting")
    if limit.is_indeterminate:
        return EventVerdict(
            kind="inconclusive", integral=limit.verdict, note="scale limit indeterminate"
        )

    def integrand(x: np.ndarray) -> np.ndarray:
        sigma = p_reduced.sigma_eval(x)
        with np.errstate(all="ignore"):
            return sf.tail(x, endpoint) * p_reduced.f_eval(x) / (sf.rho(x) * sigma * sigma)

    verdict = classify_improper(
        integrand, sf.space.endpoint(endpoint), _side(endpoint), sf.c, tol
    )
    return _from_improper(verdict)


theorem2_verdict = recurrent_verdict
theorem3_verdict = endpoint_verdict


def _brownian_integrand_verdict(
    g_eval: Evaluator, x0: float, r: float, tol: Tolerances
) -> EventVerdict:
    verdict = classify_improper(g_eval, r, "left_of", x0, tol)
    return _from_improper(verdict)


def brownian_case_verdict(
    f: Expr,
    x0: float,
    r: float,
    tol: Tolerances,
    *,
    settings: Optional[AppSettings] = None,
) -> EventVerdict:
    """Brownian motion from x0 stopped at r: the functional up to tau_r is
    finite iff (r - x) f(x) is integrable at r-."""

    if not x0 < r:
        raise ValueError("brownian_case_verdict needs x0 < r")
    settings = settings or get_settings()
    f_eval = evaluator(f)
    below = StateSpace(-math.inf, r, x0)
    grid = probe_grid(below, settings.candidate_probes)
    found = nonintegrability_set(f_eval, below, grid.tolist(), tol)
    if found.points or found.indeterminate:
        return EventVerdict(
            kind="inconclusive",
            note="f is not grid-verified locally integrable below r",
            witness=(found.points or found.indeterminate)[0],
        )

    def integrand(x: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            return (r - x) * f_eval(x)

    return _brownian_integrand_verdict(integrand, x0, r, tol)


def whole_line_brownian_verdict(
    f: Expr,
    tol: Tolerances,
    *,
    x0: float = 0.0,
    settings: Optional[AppSettings] = None,
) -> EventVerdict:
    """For Brownian motion on R, int_0^t f(B) is finite for every t iff f is
    locally integrable everywhere, and infinite for every t > 0 otherwise."""

    settings = settings or get_settings()
    f_eval = evaluator(f)
    line = StateSpace(-math.inf, math.inf, x0)
    grid = probe_grid(line, settings.candidate_probes)
    with np.errstate(all="ignore"):
        values = np.asarray(f_eval(grid), dtype=float)
    candidates = set(grid.tolist()) | set(grid[~np.isfinite(values)].tolist())
    found = nonintegrability_set(f_eval, line, sorted(candidates), tol)
    if found.points:
        return EventVerdict(kind="infinite", witness=found.points[0])
    if found.indeterminate:
        return EventVerdict(kind="inconclusive", witness=found.indeterminate[0])
    return EventVerdict(kind="finite")


# ---------------------------------------------------------------------------
# Change of variables
# ---------------------------------------------------------------------------


@dataclass(slots=True)
class TransformedProblem:
    """Driftless problem for s(Y): sigma~ = (rho sigma) o s^-1, f~ = f o s^-1."""

    s_l: float
    s_r: float
    sigma_tilde: Evaluator
    f_tilde: Evaluator
    s_inverse: Evaluator
    scale: ScaleFunction
    problem: Problem

    def endpoint_check(self, endpoint: EndpointName, tol: Tolerances) -> EventVerdict:
        """Brownian-case verdict for the transformed problem at level s(e).

        The integrand (s(e) - u) f~(u)/sigma~(u)^2 is written in the scale
        distance v = |s(e) - u| so it stays resolved as u approaches s(e).
        """

        sf = self.scale
        limit = self.s_r if endpoint == "r" else self.s_l
        if not math.isfinite(limit):
            return EventVerdict(kind="event_null", note="level not reachable")
        start = float(sf.tail(sf.c, endpoint))
        p = self.problem

        def integrand(v: np.ndarray) -> np.ndarray:
            vs = np.atleast_1d(np.asarray(v, dtype=float))
            out = np.empty_like(vs)
            for i, dist in enumerate(vs):
                try:
                    x = sf.inverse_tail(float(dist), endpoint)
                except MeshResolutionError:
                    out[i] = math.nan
                    continue
                sigma_t = float(sf.rho(x)) * float(p.sigma_eval(np.asarray(x)))
                with np.errstate(all="ignore"):
                    out[i] = dist * float(p.f_eval(np.asarray(x))) / (sigma_t * sigma_t)
            return out.reshape(np.shape(v))

        verdict = classify_improper(integrand, 0.0, "right_of", start, tol)
        return _from_improper(verdict)


def transform_problem(
    p: Problem, sf: ScaleFunction, tol: Optional[Tolerances] = None
) -> TransformedProblem:
    limits = scale_limits(sf, tol or sf.tol)

    def s_inverse(u: np.ndarray) -> np.ndarray:
        return sf.inverse(u)

    def sigma_tilde(u: np.ndarray) -> np.ndarray:
        x = sf.inverse(u)
        with np.errstate(all="ignore"):
            return sf.rho(x) * p.sigma_eval(x)

    def f_tilde(u: np.ndarray) -> np.ndarray:
        return p.f_eval(sf.inverse(u))

    return TransformedProblem(
        s_l=limits.s_l.value,
        s_r=limits.s_r.value,
        sigma_tilde=sigma_tilde,
        f_tilde=f_tilde,
        s_inverse=s_inverse,
        scale=sf,
        problem=p,
    )


# ---------------------------------------------------------------------------
# Composition
# ---------------------------------------------------------------------------


def full_verdict(
    p: Problem,
    tol: Tolerances,
    *,
    reference_point: Optional[float] = None,
    candidates: Optional[Iterable[float]] = None,
    f_ae_zero: bool = False,
    settings: Optional[AppSettings] = None,
) -> ConvergenceReport:
    """Reduce by D, classify the reduced interval and emit a verdict per event."""

    settings = settings or get_settings()
    pool = (
        list(candidates)
        if candidates is not None
        else default_candidates(p, settings.candidate_probes)
    )
    reduced = reduce_by_D(p, pool, tol)
    c = p.space.x0 if reference_point is None else float(reference_point)
    report = ConvergenceReport(
        problem=p,
        reduced=reduced,
        reference_point=c,
        candidates_tested=len(reduced.tested),
    )
    for point in reduced.blocking:
        report.block(f"d_candidate_indeterminate x={point:.12g}")
    if report.blocking:
        return report

    if reduced.x0_in_D:
        report.on_start_in_D = "zero"
        report.notes.append("x0 lies in D: eta_D = 0")
        return report

    assert reduced.problem is not None and reduced.I is not None
    if not reduced.I.l < c < reduced.I.r:
        report.notes.append(f"reference point {c:g} outside I; using x0")
        c = reduced.I.x0
        report.reference_point = c
    sf = ScaleFunction(reduced.problem, c, tol)
    limits = scale_limits(sf, tol)
    report.limits = limits
    recurrence = classify_recurrence(reduced.problem, sf, tol, limits)
    report.recurrence = recurrence

    if recurrence.recurrent:
        report.on_event_A = recurrent_verdict(
            reduced.problem,
            sf,
            tol,
            f_ae_zero=f_ae_zero,
            n_probes=settings.positivity_probes,
        )
        return report

    sides: Tuple[EndpointName, ...] = ("r", "l")
    for endpoint in sides:
        limit = limits.get(endpoint)
        if limit.is_indeterminate:
            verdict = EventVerdict(
                kind="inconclusive", integral=limit.verdict, note="scale limit indeterminate"
            )
            report.block(f"scale_limit_{endpoint}")
        else:
            verdict = endpoint_verdict(reduced.problem, sf, endpoint, tol)
            if verdict.kind == "inconclusive":
                report.block(f"endpoint_integral_{endpoint}")
        setattr(report, f"on_limit_{endpoint}", verdict)
    logger.info("full_verdict status=%s events=%s", report.status, report.events())
    return report


__all__ = [
    "ConvergenceReport",
    "EndpointBehavior",
    "EventKind",
    "EventVerdict",
    "FINITE_BEFORE_ETA_D",
    "INFINITE_AFTER_ETA_D",
    "RecurrenceClass",
    "ReducedProblem",
    "TransformedProblem",
    "brownian_case_verdict",
    "classify_recurrence",
    "default_candidates",
    "endpoint_verdict",
    "feller_test",
    "full_verdict",
    "recurrent_verdict",
    "reduce_by_D",
    "theorem2_verdict",
    "theorem3_verdict",
    "transform_problem",
    "whole_line_brownian_verdict",
]
