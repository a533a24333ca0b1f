"""Conversion of classifier and simulation results into report sections."""

from __future__ import annotations

from typing import Dict, Optional, Union

from .classify import ConvergenceReport, EventVerdict
from .models import (
    CheckSection,
    ClassifierSection,
    EndpointBehaviorSection,
    EndpointLimitSection,
    EventSection,
    ImproperVerdictSection,
    MCSummarySection,
    RecurrenceSection,
    ReductionSection,
)
from .quad import ImproperVerdict
from .simkit.agreement import MCSummary
from .simkit.identities import TwoSampleResult


def improper_section(verdict: Optional[ImproperVerdict]) -> Optional[ImproperVerdictSection]:
    if verdict is None:
        return None
    return ImproperVerdictSection(
        kind=verdict.kind,
        value=verdict.value,
        error_estimate=verdict.error_estimate,
        exponent_estimate=verdict.exponent_estimate,
        ratio_estimate=verdict.ratio_estimate,
        tail_estimate=verdict.tail_estimate,
        endpoint=verdict.endpoint,
        side=verdict.side,
        note=verdict.note,
        partial_integrals=[[float(x), float(v)] for x, v in verdict.partial_integrals],
        increments=[float(v) for v in verdict.increments],
    )


def event_section(verdict: EventVerdict) -> EventSection:
    return EventSection(
        kind=verdict.kind,
        witness=verdict.witness,
        note=verdict.note,
        integral=improper_section(verdict.integral),
    )


def classifier_section(report: ConvergenceReport) -> ClassifierSection:
    reduced = report.reduced
    limits: Dict[str, EndpointLimitSection] = {}
    if report.limits is not None:
        for name in ("l", "r"):
            limit = report.limits.get(name)
            limits[name] = EndpointLimitSection(
                kind=limit.kind, value=limit.value, verdict=improper_section(limit.verdict)
            )
    recurrence = None
    if report.recurrence is not None:
        rec = report.recurrence
        recurrence = RecurrenceSection(
            kind=rec.kind,
            flagged=rec.flagged,
            endpoints={
                b.endpoint: EndpointBehaviorSection(
                    attracted=b.attracted,
                    explosive=b.explosive,
                    note=b.note,
                    feller_integral=improper_section(b.feller_integrand_verdict),
                )
                for b in (rec.left, rec.right)
            },
        )
    events = {
        name: event_section(getattr(report, name))
        for name in ("on_event_A", "on_limit_r", "on_limit_l")
        if getattr(report, name) is not None
    }
    return ClassifierSection(
        status=report.status,
        blocking=list(report.blocking),
        notes=list(report.notes),
        reference_point=report.reference_point,
        reduction=ReductionSection(
            D_points=list(reduced.D_points),
            alpha=reduced.alpha,
            beta=reduced.beta,
            x0_in_D=reduced.x0_in_D,
            indeterminate=list(reduced.indeterminate),
            candidates_tested=report.candidates_tested,
        ),
        limits=limits,
        recurrence=recurrence,
        events=events,
        on_start_in_D=report.on_start_in_D,
        finite_before_etaD=report.finite_before_etaD,
        infinite_after_etaD=report.infinite_after_etaD,
    )


def summary_section(summary: MCSummary, *, include_per_path: bool = True) -> MCSummarySection:
    return MCSummarySection(
        n_paths=summary.n_paths,
        estimate=summary.estimate,
        std_error=summary.std_error,
        per_path=list(summary.per_path) if include_per_path and summary.per_path else None,
        flags=list(summary.flags),
        details=dict(summary.details),
    )


def check_section(name: str, result: Union[TwoSampleResult, MCSummary]) -> CheckSection:
    underpowered = any(flag.endswith("underpowered") for flag in result.flags)
    if isinstance(result, TwoSampleResult):
        return CheckSection(
            name=name,
            passed=result.passed,
            underpowered=underpowered,
            flags=list(result.flags),
            statistic=result.statistic,
            p_value=result.p_value,
            n_left=result.n_left,
            n_right=result.n_right,
            details=dict(result.details),
        )
    details = dict(result.details)
    return CheckSection(
        name=name,
        passed=bool(details.get("passed", False)),
        underpowered=underpowered,
        flags=list(result.flags),
        z_score=details.get("z_score"),
        p_value=details.get("p_value"),
        estimate=result.estimate,
        std_error=result.std_error,
        n_paths=result.n_paths,
        details=details,
    )


__all__ = [
    "check_section",
    "classifier_section",
    "event_section",
    "improper_section",
    "summary_section",
]
