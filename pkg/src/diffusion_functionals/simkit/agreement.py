"""Agreement between classifier verdicts and simulated functional trends."""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from ..classify import ConvergenceReport, EventKind
from ..coeffspec import Problem, to_text
from ..quad import Tolerances
from ..scale import ScaleFunction
from .paths import PathSample, simulate_paths
from .trajectory import Trend, functional_trajectory

logger = logging.getLogger(__name__)

_EXPECTED: Dict[EventKind, Trend] = {
    "zero": "Converging",
    "finite": "Converging",
    "infinite": "Diverging",
}


@dataclass(slots=True)
class MCSummary:
    n_paths: int
    estimate: float
    std_error: float
    per_path: Optional[List[float]] = None
    flags: List[str] = field(default_factory=list)
    details: Dict[str, Any] = field(default_factory=dict)
    # leading simulated paths, kept on request for dumping
    paths: List[PathSample] = field(default_factory=list)

    @property
    def flagged(self) -> bool:
        return bool(self.flags)


def binomial_summary(hits: int, n: int) -> tuple:
    """Fraction and its binomial standard error."""

    if n == 0:
        return math.nan, math.nan
    fraction = hits / n
    return fraction, math.sqrt(fraction * (1.0 - fraction) / n)


def _event_for(path: PathSample, report: ConvergenceReport, sf: Optional[ScaleFunction]) -> str:
    if path.exit.kind == "exit":
        return f"on_limit_{path.exit.endpoint}"
    if report.on_event_A is not None:
        return "on_event_A"
    # still running at the horizon: attribute to the endpoint it is heading for
    live = [
        e
        for e in ("l", "r")
        if getattr(report, f"on_limit_{e}") is not None
        and getattr(report, f"on_limit_{e}").kind != "event_null"
    ]
    if len(live) == 1:
        return f"on_limit_{live[0]}"
    assert sf is not None
    y = np.asarray(path.terminal_value)
    closer_r = float(sf.tail(y, "r")) <= float(sf.tail(y, "l"))
    return "on_limit_r" if closer_r else "on_limit_l"


def verdict_agreement(
    p: Problem,
    report: ConvergenceReport,
    n_paths: int,
    *,
    dt: float,
    horizon: float,
    master_seed: int,
    dyadic_count: int = 16,
    block_size: int = 256,
    threads: int = 1,
    record_stride: int = 10,
    max_halvings: int = 30,
    min_event_paths: int = 30,
    threshold: Optional[float] = None,
    tol: Optional[Tolerances] = None,
    keep_paths: int = 0,
) -> MCSummary:
    """Simulate the reduced problem and count paths whose trend matches the
    verdict for the event they realise.

    ``p`` is the original problem; paths are driven on the reduced interval
    carried by ``report``.

    A bucket is flagged when it holds fewer than ``min_event_paths`` paths,
    or fewer than 1 / (1 - threshold) paths, the smallest count at which a
    single disagreement can fall below the threshold.

    The first ``keep_paths`` simulated paths are returned on the summary.
    """

    if report.status != "conclusive":
        raise ValueError("verdict_agreement needs a conclusive report")
    reduced = report.reduced.problem
    if reduced is None:
        raise ValueError("x0 lies in D: there is no interval to simulate on")
    required = min_event_paths
    if threshold is not None and threshold < 1.0:
        required = max(required, math.ceil(1.0 / (1.0 - threshold) - 1e-9))
    sf = None
    if report.on_event_A is None:
        sf = ScaleFunction(reduced, report.reference_point, tol or Tolerances())

    paths = simulate_paths(
        reduced,
        n_paths,
        dt=dt,
        horizon=horizon,
        master_seed=master_seed,
        integrand=reduced.f_eval,
        integrand_label=to_text(p.f),
        record_stride=record_stride,
        max_halvings=max_halvings,
        block_size=block_size,
        threads=threads,
    )

    flags: List[str] = []
    per_path: List[float] = []
    buckets: Dict[str, Counter] = {}
    aborted = 0
    for path in paths:
        if path.exit.kind == "aborted":
            aborted += 1
            per_path.append(math.nan)
            continue
        event = _event_for(path, report, sf)
        diagnostic = functional_trajectory(path, dyadic_count=dyadic_count)
        per_path.append(diagnostic.slope)
        counts = buckets.setdefault(event, Counter())
        counts["n"] += 1
        counts[diagnostic.trend] += 1

    details: Dict[str, Any] = {}
    agree_total = 0
    counted_total = 0
    for event in sorted(buckets):
        counts = buckets[event]
        verdict = getattr(report, event)
        expected = _EXPECTED.get(verdict.kind) if verdict is not None else None
        n = counts["n"]
        entry: Dict[str, Any] = {
            "n": n,
            "converging": counts["Converging"],
            "diverging": counts["Diverging"],
            "undecided": counts["Undecided"],
            "expected": expected,
        }
        if expected is None:
            entry["fraction"] = math.nan
            flags.append(f"unexpected_event:{event}")
        else:
            agree = counts[expected]
            entry["agree"] = agree
            entry["fraction"] = agree / n
            agree_total += agree
            counted_total += n
            if n < required:
                flags.append(f"too_few_paths:{event}")
        details[event] = entry
    if aborted:
        flags.append(f"aborted_paths:{aborted}")
    if counted_total == 0:
        flags.append("no_paths_classified")

    estimate, std_error = binomial_summary(agree_total, counted_total)
    logger.info(
        "verdict_agreement n=%s events=%s estimate=%s flags=%s",
        n_paths,
        sorted(buckets),
        estimate,
        flags,
    )
    return MCSummary(
        n_paths=n_paths,
        estimate=estimate,
        std_error=std_error,
        per_path=per_path,
        flags=flags,
        details=details,
        paths=paths[: max(keep_paths, 0)],
    )


__all__ = ["MCSummary", "binomial_summary", "verdict_agreement"]
