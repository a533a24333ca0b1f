"""Scale density rho, scale function s and their boundary limits."""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from scipy import optimize

from .coeffspec import Problem, StateSpace, is_constant
from .quad import (
    ImproperVerdict,
    Tolerances,
    VerdictKind,
    classify_improper,
    integrate_compact,
    refinement_point,
)

logger = logging.getLogger(__name__)

EndpointName = Literal["l", "r"]
ArrayLike = Union[float, np.ndarray]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)
_MAX_INFINITE_REACH = 1e150


class MeshResolutionError(RuntimeError):
    """Raised when the knot mesh cannot resolve a requested point or level."""


@dataclass(frozen=True, slots=True)
class _KnotTable:
    x: np.ndarray
    log_rho: np.ndarray
    s: np.ndarray
    # ds[i] is the integral of rho over [x[i], x[i + 1]]
    ds: np.ndarray


@dataclass(slots=True)
class _GapCheck:
    agrees: bool
    exponent: float
    rho_integral: float


class ScaleFunction:
    """rho(x) = exp(-int_c^x 2mu/sigma^2) and s(x) = int_c^x rho on a knot mesh.

    Knots are seeded at ``c`` and added lazily toward each endpoint on the
    refinement schedule used by :func:`classify_improper`. Every new gap is
    accepted only when the 20-point Gauss-Legendre values of its drift and
    rho integrals agree with adaptive quadrature; otherwise it is bisected.
    Between knots both functions are evaluated from the nearest lower knot.
    """

    def __init__(
        self, problem: Problem, c: Optional[float] = None, tol: Optional[Tolerances] = None
    ) -> None:
        self.problem = problem
        self.c = float(problem.space.x0 if c is None else c)
        if not problem.space.l < self.c < problem.space.r:
            raise ValueError(f"reference point {self.c} is not inside J")
        self.tol = tol or Tolerances()
        self._zero_drift = is_constant(problem.mu, 0.0)
        self._singularities = tuple(
            p for p in problem.declared_singularities if problem.space.l < p < problem.space.r
        )
        self._lock = threading.Lock()
        self._table = _KnotTable(
            x=np.array([self.c]),
            log_rho=np.array([0.0]),
            s=np.array([0.0]),
            ds=np.array([], dtype=float),
        )
        # integral of rho over each completed schedule step, per side
        self._steps: Dict[str, List[float]] = {"l": [], "r": []}
        self._exhausted: Dict[str, bool] = {"l": False, "r": False}
        # integral of rho covered by knots walked past the exhausted schedule
        self._beyond: Dict[str, float] = {"l": 0.0, "r": 0.0}
        self._limits_cache: Dict[str, "BoundaryLimits"] = {}

    @property
    def space(self) -> StateSpace:
        return self.problem.space

    # -- drift and Gauss-Legendre pieces ------------------------------------

    def _drift(self, x: np.ndarray) -> np.ndarray:
        if self._zero_drift:
            return np.zeros_like(np.asarray(x, dtype=float))
        return self.problem.drift_ratio(x)

    def _gl_exponent(self, base: np.ndarray, x: np.ndarray) -> np.ndarray:
        base = np.asarray(base, dtype=float)
        x = np.asarray(x, dtype=float)
        half = 0.5 * (x - base)
        if self._zero_drift:
            return np.zeros_like(half)
        mid = 0.5 * (x + base)
        nodes = mid[..., None] + half[..., None] * _GL_NODES
        with np.errstate(all="ignore"):
            return half * np.sum(self._drift(nodes) * _GL_WEIGHTS, axis=-1)

    def _gl_rho_integral(self, base: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Oriented int_base^x exp(-int_base^y drift) dy."""

        base = np.asarray(base, dtype=float)
        x = np.asarray(x, dtype=float)
        base, x = np.broadcast_arrays(base, x)
        half = 0.5 * (x - base)
        if self._zero_drift:
            return 2.0 * half
        mid = 0.5 * (x + base)
        ys = mid[..., None] + half[..., None] * _GL_NODES
        exponent = self._gl_exponent(np.broadcast_to(base[..., None], ys.shape), ys)
        with np.errstate(all="ignore"):
            return half * np.sum(np.exp(-exponent) * _GL_WEIGHTS, axis=-1)

    def _check_gap(self, a: float, b: float) -> _GapCheck:
        lo, hi = (a, b) if a < b else (b, a)
        sign = 1.0 if b > a else -1.0
        if self._zero_drift:
            return _GapCheck(agrees=True, exponent=0.0, rho_integral=hi - lo)
        exact = sign * integrate_compact(self._drift, lo, hi, self.tol).value
        approx = float(self._gl_exponent(np.asarray(a), np.asarray(b)))
        agrees = abs(approx - exact) <= self.tol.rel_tol * max(1.0, abs(exact))

        def relative_rho(y: np.ndarray) -> np.ndarray:
            return np.exp(-self._gl_exponent(np.full_like(y, a), y))

        # the rho integral is positive whatever the orientation
        rho_quad = integrate_compact(relative_rho, lo, hi, self.tol).value
        rho_gl = abs(float(self._gl_rho_integral(np.asarray(a), np.asarray(b))))
        agrees = agrees and abs(rho_gl - rho_quad) <= self.tol.target(rho_quad)
        return _GapCheck(agrees=agrees, exponent=exact, rho_integral=rho_quad)

    def _walk(
        self,
        start: Tuple[float, float, float],
        b: float,
        depth: int,
        out: List[Tuple[float, float, float, float]],
    ) -> Tuple[float, float, float]:
        a, log_rho_a, s_a = start
        check = self._check_gap(a, b)
        if not check.agrees and depth < self.tol.max_depth:
            m = 0.5 * (a + b)
            if m != a and m != b:
                middle = self._walk(start, m, depth + 1, out)
                return self._walk(middle, b, depth + 1, out)
        if not check.agrees:
            logger.debug("scale_gap_unresolved a=%s b=%s depth=%s", a, b, depth)
        with np.errstate(over="ignore"):
            increment = float(np.exp(log_rho_a)) * check.rho_integral
        log_rho_b = log_rho_a - check.exponent
        s_b = s_a + increment if b > a else s_a - increment
        out.append((b, log_rho_b, s_b, increment))
        return (b, log_rho_b, s_b)

    # -- mesh growth ----------------------------------------------------------

    def _append(self, side: EndpointName, knots: List[Tuple[float, float, float, float]]) -> None:
        table = self._table
        xs = np.array([k[0] for k in knots])
        log_rho = np.array([k[1] for k in knots])
        s = np.array([k[2] for k in knots])
        ds = np.array([k[3] for k in knots])
        if side == "r":
            self._table = _KnotTable(
                x=np.concatenate([table.x, xs]),
                log_rho=np.concatenate([table.log_rho, log_rho]),
                s=np.concatenate([table.s, s]),
                ds=np.concatenate([table.ds, ds]),
            )
        else:
            self._table = _KnotTable(
                x=np.concatenate([xs[::-1], table.x]),
                log_rho=np.concatenate([log_rho[::-1], table.log_rho]),
                s=np.concatenate([s[::-1], table.s]),
                ds=np.concatenate([ds[::-1], table.ds]),
            )

    def _walk_to(self, side: EndpointName, target: float) -> float:
        """Add knots from the outermost knot on ``side`` to ``target``; returns
        the integral of rho covered."""

        table = self._table
        i = -1 if side == "r" else 0
        start = (float(table.x[i]), float(table.log_rho[i]), float(table.s[i]))
        stops = [
            p
            for p in self._singularities
            if (start[0] < p < target if side == "r" else target < p < start[0])
        ]
        stops = sorted(stops, reverse=side == "l") + [target]
        knots: List[Tuple[float, float, float, float]] = []
        for stop in stops:
            start = self._walk(start, stop, 0, knots)
        self._append(side, knots)
        return float(sum(k[3] for k in knots))

    def _extend(self, side: EndpointName) -> bool:
        """Advance the mesh by one schedule step toward an endpoint."""

        with self._lock:
            if self._exhausted[side]:
                return False
            endpoint = self.space.endpoint(side)
            finite = math.isfinite(endpoint)
            steps = self._steps[side]
            k = len(steps) + (1 if finite else 0)
            orientation = "left_of" if side == "r" else "right_of"
            target, _ = refinement_point(endpoint, orientation, self.c, k, self.tol.shrink_ratio)
            outer = float(self._table.x[-1] if side == "r" else self._table.x[0])
            beyond = target > outer if side == "r" else target < outer
            stalled = (
                len(steps) >= self.tol.max_steps + self.tol.decision_window
                or not beyond
                or (finite and target == endpoint)
                or (not finite and abs(target) > _MAX_INFINITE_REACH)
            )
            if stalled:
                self._exhausted[side] = True
                return False
            steps.append(self._walk_to(side, target))
            return True

    def _ensure(self, xs: np.ndarray) -> _KnotTable:
        if xs.size == 0:
            return self._table
        if not np.all(self.space.contains(xs)):
            bad = xs[~self.space.contains(xs)]
            raise ValueError(f"points outside J=({self.space.l}, {self.space.r}): {bad[:3]}")
        lo, hi = float(np.min(xs)), float(np.max(xs))
        while lo < self._table.x[0]:
            if not self._extend("l"):
                with self._lock:
                    if lo < self._table.x[0]:
                        self._beyond["l"] += self._walk_to("l", lo)
        while hi > self._table.x[-1]:
            if not self._extend("r"):
                with self._lock:
                    if hi > self._table.x[-1]:
                        self._beyond["r"] += self._walk_to("r", hi)
        return self._table

    @staticmethod
    def _locate(table: _KnotTable, xs: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(table.x, xs, side="right") - 1
        return np.clip(idx, 0, table.x.size - 1)

    # -- public evaluators ----------------------------------------------------

    def log_rho(self, x: ArrayLike) -> np.ndarray:
        xs = np.asarray(x, dtype=float)
        table = self._ensure(xs)
        idx = self._locate(table, xs)
        return table.log_rho[idx] - self._gl_exponent(table.x[idx], xs)

    def rho(self, x: ArrayLike) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_rho(x))

    def s(self, x: ArrayLike) -> np.ndarray:
        xs = np.asarray(x, dtype=float)
        table = self._ensure(xs)
        idx = self._locate(table, xs)
        with np.errstate(over="ignore", invalid="ignore"):
            return table.s[idx] + np.exp(table.log_rho[idx]) * self._gl_rho_integral(
                table.x[idx], xs
            )

    def _geometric_tail(self, side: EndpointName) -> float:
        """rho integral from the outermost knot to the endpoint.

        The step ratio is fitted over the last decision window of schedule
        steps. Knots walked past the exhausted schedule are subtracted.
        """

        steps = self._steps[side]
        if len(steps) < 2 or steps[-1] == 0.0:
            return 0.0
        window = steps[-self.tol.decision_window :]
        if min(window[:-1]) <= 0.0 or window[-1] >= window[-2]:
            return math.inf
        ratio = sum(window[1:]) / sum(window[:-1])
        if ratio >= 1.0:
            return math.inf
        return max(steps[-1] * ratio / (1.0 - ratio) - self._beyond[side], 0.0)

    def tail(self, x: ArrayLike, endpoint: EndpointName) -> np.ndarray:
        """|s(endpoint) - s(x)| as an integral of rho from x outward.

        Knot increments are summed from the endpoint inward so points close
        to an attracted endpoint keep their relative accuracy.
        """

        xs = np.asarray(x, dtype=float)
        table = self._ensure(xs)
        margin = self.tol.decision_window
        if endpoint == "r":
            edge = float(np.max(xs)) if xs.size else self.c
            while (
                table.x.size - np.searchsorted(table.x, edge, side="right") < margin
                or len(self._steps["r"]) < 2
            ) and self._extend("r"):
                table = self._table
        elif endpoint == "l":
            edge = float(np.min(xs)) if xs.size else self.c
            while (
                np.searchsorted(table.x, edge, side="left") < margin or len(self._steps["l"]) < 2
            ) and self._extend("l"):
                table = self._table
        else:
            raise ValueError(f"unknown endpoint {endpoint!r}")
        table = self._table
        geometric = self._geometric_tail(endpoint)
        idx = self._locate(table, xs)
        with np.errstate(over="ignore", invalid="ignore"):
            if endpoint == "r":
                nxt = np.minimum(idx + 1, table.x.size - 1)
                partial = np.where(
                    nxt > idx,
                    -np.exp(table.log_rho[nxt]) * self._gl_rho_integral(table.x[nxt], xs),
                    0.0,
                )
                suffix = np.concatenate([np.cumsum(table.ds[::-1])[::-1], [0.0]])
                return partial + suffix[nxt] + geometric
            partial = np.exp(table.log_rho[idx]) * self._gl_rho_integral(table.x[idx], xs)
            prefix = np.concatenate([[0.0], np.cumsum(table.ds)])
            return partial + prefix[idx] + geometric

    def _inverse_scalar(self, u: float) -> float:
        if not math.isfinite(u):
            raise MeshResolutionError(f"cannot invert s at non-finite level {u}")
        table = self._table
        while not table.s[0] <= u <= table.s[-1]:
            side: EndpointName = "l" if u < table.s[0] else "r"
            if not self._extend(side):
                raise MeshResolutionError(
                    f"level {u} lies outside the resolved scale range "
                    f"[{table.s[0]:.6g}, {table.s[-1]:.6g}]"
                )
            table = self._table
        k = int(np.searchsorted(table.s, u, side="left"))
        if table.s[k] == u:
            return float(table.x[k])
        a, b = float(table.x[k - 1]), float(table.x[k])
        xtol = 1e-14 * max(1.0, abs(a), abs(b))
        return float(
            optimize.brentq(lambda y: float(self.s(y)) - u, a, b, xtol=xtol, rtol=1e-15)
        )

    def inverse(self, u: ArrayLike) -> np.ndarray:
        """Monotone inverse of s on the resolved range."""

        us = np.asarray(u, dtype=float)
        out = np.array([self._inverse_scalar(float(v)) for v in us.ravel()])
        return out.reshape(us.shape)

    def inverse_tail(self, v: float, endpoint: EndpointName) -> float:
        """Point x whose scale distance to ``endpoint`` equals v."""

        if not v > 0.0 or not math.isfinite(v):
            raise MeshResolutionError(f"scale distance must be positive and finite, got {v}")
        outer = -1 if endpoint == "r" else 0
        while float(self.tail(self._table.x[outer], endpoint)) >= v:
            if not self._extend(endpoint):
                raise MeshResolutionError(
                    f"scale distance {v:.3g} is below the resolved mesh toward {endpoint}"
                )
        table = self._table
        tails = np.asarray(self.tail(table.x, endpoint), dtype=float)
        if endpoint == "r":
            k = int(np.argmax(tails < v))
            if k == 0:
                raise MeshResolutionError(f"scale distance {v:.3g} exceeds the resolved range")
            a, b = float(table.x[k - 1]), float(table.x[k])
        else:
            k = int(np.argmax(tails >= v)) if np.any(tails >= v) else -1
            if k <= 0:
                raise MeshResolutionError(f"scale distance {v:.3g} exceeds the resolved range")
            a, b = float(table.x[k - 1]), float(table.x[k])
        xtol = 1e-14 * max(1.0, abs(a), abs(b))
        return float(
            optimize.brentq(
                lambda y: float(self.tail(y, endpoint)) - v, a, b, xtol=xtol, rtol=1e-15
            )
        )

    def knots(self) -> Tuple[np.ndarray, np.ndarray]:
        """Copy of the current (x, s) knot table."""

        table = self._table
        return table.x.copy(), table.s.copy()


# ---------------------------------------------------------------------------
# Standalone helpers
# ---------------------------------------------------------------------------


def rho_at(p: Problem, c: float, x: float, tol: Optional[Tolerances] = None) -> float:
    """rho(x) anchored at c with the exponent from adaptive quadrature."""

    tol = tol or Tolerances()
    space = p.space
    if not (space.l < c < space.r and space.l < x < space.r):
        raise ValueError("rho_at needs c and x inside J")
    if x == c or is_constant(p.mu, 0.0):
        return 1.0
    lo, hi = (c, x) if c < x else (x, c)
    exponent = integrate_compact(p.drift_ratio, lo, hi, tol).value
    if x < c:
        exponent = -exponent
    with np.errstate(over="ignore"):
        return float(np.exp(-exponent))


def s_at(sf: ScaleFunction, x: float) -> float:
    return float(sf.s(x))


@dataclass(slots=True)
class EndpointLimit:
    endpoint: EndpointName
    kind: VerdictKind
    # s at the endpoint; +-inf when infinite, nan when indeterminate
    value: float
    verdict: ImproperVerdict

    @property
    def is_finite(self) -> bool:
        return self.kind == "finite"

    @property
    def is_infinite(self) -> bool:
        return self.kind == "infinite"

    @property
    def is_indeterminate(self) -> bool:
        return self.kind == "indeterminate"


@dataclass(slots=True)
class BoundaryLimits:
    c: float
    s_l: EndpointLimit
    s_r: EndpointLimit
    notes: List[str] = field(default_factory=list)

    def get(self, endpoint: EndpointName) -> EndpointLimit:
        return self.s_l if endpoint == "l" else self.s_r

    @property
    def recurrent(self) -> bool:
        return self.s_l.is_infinite and self.s_r.is_infinite


def _endpoint_limit(sf: ScaleFunction, endpoint: EndpointName, tol: Tolerances) -> EndpointLimit:
    side = "left_of" if endpoint == "r" else "right_of"
    bound = sf.space.endpoint(endpoint)
    verdict = classify_improper(sf.rho, bound, side, sf.c, tol)
    sign = 1.0 if endpoint == "r" else -1.0
    if verdict.is_finite and verdict.value is not None:
        value = sign * verdict.value
    elif verdict.is_infinite:
        value = sign * math.inf
    else:
        value = math.nan
    logger.info("scale_limits_computed endpoint=%s kind=%s value=%s", endpoint, verdict.kind, value)
    return EndpointLimit(endpoint=endpoint, kind=verdict.kind, value=value, verdict=verdict)


def scale_limits(sf: ScaleFunction, tol: Optional[Tolerances] = None) -> BoundaryLimits:
    """Classify s(l) and s(r) via the improper integral of rho from c."""

    tol = tol or sf.tol
    key = tol.model_dump_json()
    cached = sf._limits_cache.get(key)
    if cached is not None:
        return cached
    limits = BoundaryLimits(
        c=sf.c,
        s_l=_endpoint_limit(sf, "l", tol),
        s_r=_endpoint_limit(sf, "r", tol),
    )
    if limits.s_l.is_indeterminate or limits.s_r.is_indeterminate:
        limits.notes.append("scale limit indeterminate; classification is partial")
    sf._limits_cache[key] = limits
    return limits


__all__ = [
    "BoundaryLimits",
    "EndpointLimit",
    "EndpointName",
    "MeshResolutionError",
    "ScaleFunction",
    "rho_at",
    "s_at",
    "scale_limits",
]
