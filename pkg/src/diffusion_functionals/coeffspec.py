"""Coefficient expression language and validated problem definitions."""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .quad import Tolerances, local_integrability_at

logger = logging.getLogger(__name__)

Evaluator = Callable[[np.ndarray], np.ndarray]


class ExpressionError(ValueError):
    """Raised when an expression string cannot be parsed."""

    def __init__(self, reason: str, offset: int, text: str = "") -> None:
        super().__init__(f"{reason} at byte offset {offset}")
        self.reason = reason
        self.offset = offset
        self.text = text


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Num:
    value: float


@dataclass(frozen=True, slots=True)
class Var:
    name: str = "x"


@dataclass(frozen=True, slots=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True, slots=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True, slots=True)
class Call:
    name: str
    args: Tuple["Expr", ...]


Expr = Union[Num, Var, Neg, BinOp, Call]

FUNCTION_ARITY: Dict[str, int] = {
    "exp": 1,
    "log": 1,
    "abs": 1,
    "sqrt": 1,
    "min": 2,
    "max": 2,
    "indicator": 2,
}

# ---------------------------------------------------------------------------
# Tokenizer and parser
# ---------------------------------------------------------------------------

_NUMBER_RE = re.compile(r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")


@dataclass(slots=True)
class _Token:
    kind: str
    text: str
    offset: int


def _tokenize(text: str) -> List[_Token]:
    tokens: List[_Token] = []
    idx = 0

    def byte_offset(pos: int) -> int:
        return len(text[:pos].encode("utf-8"))

    while idx < len(text):
        char = text[idx]
        if char.isspace():
            idx += 1
            continue
        number = _NUMBER_RE.match(text, idx)
        if number:
            tokens.append(_Token("num", number.group(0), byte_offset(idx)))
            idx = number.end()
            continue
        name = _NAME_RE.match(text, idx)
        if name:
            tokens.append(_Token("name", name.group(0), byte_offset(idx)))
            idx = name.end()
            continue
        if char in "+-*/^(),":
            tokens.append(_Token(char, char, byte_offset(idx)))
            idx += 1
            continue
        raise ExpressionError(f"unexpected character {char!r}", byte_offset(idx), text)
    tokens.append(_Token("end", "", byte_offset(len(text))))
    return tokens


class _Parser:
    """Recursive descent: sum < product < unary minus < power < atom."""

    def __init__(self, text: str) -> None:
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def expect(self, kind: str) -> _Token:
        token = self.peek()
        if token.kind != kind:
            found = token.text or "end of input"
            raise ExpressionError(f"expected {kind!r}, found {found!r}", token.offset, self.text)
        return self.advance()

    def parse(self) -> Expr:
        expr = self.parse_sum()
        token = self.peek()
        if token.kind != "end":
            raise ExpressionError(f"unexpected token {token.text!r}", token.offset, self.text)
        return expr

    def parse_sum(self) -> Expr:
        left = self.parse_product()
        while self.peek().kind in ("+", "-"):
            op = self.advance().kind
            left = BinOp(op, left, self.parse_product())
        return left

    def parse_product(self) -> Expr:
        left = self.parse_unary()
        while self.peek().kind in ("*", "/"):
            op = self.advance().kind
            left = BinOp(op, left, self.parse_unary())
        return left

    def parse_unary(self) -> Expr:
        if self.peek().kind == "-":
            self.advance()
            return Neg(self.parse_unary())
        return self.parse_power()

    def parse_power(self) -> Expr:
        base = self.parse_atom()
        if self.peek().kind == "^":
            self.advance()
            # right associative; the exponent may carry its own unary minus
            return BinOp("^", base, self.parse_unary())
        return base

    def parse_atom(self) -> Expr:
        token = self.advance()
        if token.kind == "num":
            value = float(token.text)
            if not math.isfinite(value):
                raise ExpressionError("numeric literal out of range", token.offset, self.text)
            return Num(value)
        if token.kind == "name":
            if token.text == "x":
                return Var()
            if token.text not in FUNCTION_ARITY:
                raise ExpressionError(
                    f"unknown identifier {token.text!r}", token.offset, self.text
                )
            return self.parse_call(token)
        if token.kind == "(":
            inner = self.parse_sum()
            self.expect(")")
            return inner
        found = token.text or "end of input"
        raise ExpressionError(f"unexpected {found!r}", token.offset, self.text)

    def parse_call(self, name: _Token) -> Expr:
        self.expect("(")
        args: List[Expr] = []
        if self.peek().kind != ")":
            args.append(self.parse_sum())
            while self.peek().kind == ",":
                self.advance()
                args.append(self.parse_sum())
        self.expect(")")
        arity = FUNCTION_ARITY[name.text]
        if len(args) != arity:
            raise ExpressionError(
                f"{name.text} expects {arity} argument(s), got {len(args)}",
                name.offset,
                self.text,
            )
        return Call(name.text, tuple(args))


def parse_expr(text: str) -> Expr:
    """Parse an expression string into an AST."""

    if not text or not text.strip():
        raise ExpressionError("empty expression", 0, text or "")
    return _Parser(text).parse()


def to_text(expr: Expr) -> str:
    """Print an AST in a fully parenthesised form that re-parses to itself."""

    if isinstance(expr, Num):
        return repr(float(expr.value))
    if isinstance(expr, Var):
        return "x"
    if isinstance(expr, Neg):
        return f"(-{to_text(expr.operand)})"
    if isinstance(expr, BinOp):
        return f"({to_text(expr.left)} {expr.op} {to_text(expr.right)})"
    if isinstance(expr, Call):
        return f"{expr.name}({', '.join(to_text(arg) for arg in expr.args)})"
    raise TypeError(f"not an expression node: {expr!r}")


def is_constant(expr: Expr, value: float) -> bool:
    return isinstance(expr, Num) and expr.value == value


# ---------------------------------------------------------------------------
# Breakpoints
# ---------------------------------------------------------------------------


def _children(expr: Expr) -> Tuple[Expr, ...]:
    if isinstance(expr, Neg):
        return (expr.operand,)
    if isinstance(expr, BinOp):
        return (expr.left, expr.right)
    if isinstance(expr, Call):
        return expr.args
    return ()


def _mentions_x(expr: Expr) -> bool:
    return isinstance(expr, Var) or any(_mentions_x(child) for child in _children(expr))


def _constant_value(expr: Expr) -> Optional[float]:
    if _mentions_x(expr):
        return None
    value = eval_expr(expr, 0.0)
    return value if math.isfinite(value) else None


def _affine(expr: Expr) -> Optional[Tuple[float, float]]:
    """(slope, intercept) when expr is affine in x, else None."""

    constant = _constant_value(expr)
    if constant is not None:
        return 0.0, constant
    if isinstance(expr, Var):
        return 1.0, 0.0
    if isinstance(expr, Neg):
        inner = _affine(expr.operand)
        return None if inner is None else (-inner[0], -inner[1])
    if not isinstance(expr, BinOp):
        return None
    left = _affine(expr.left)
    right = _affine(expr.right)
    if left is None or right is None:
        return None
    if expr.op == "+":
        return left[0] + right[0], left[1] + right[1]
    if expr.op == "-":
        return left[0] - right[0], left[1] - right[1]
    if expr.op == "*" and (left[0] == 0.0 or right[0] == 0.0):
        return (
            left[0] * right[1] + right[0] * left[1],
            left[1] * right[1],
        )
    if expr.op == "/" and right[0] == 0.0 and right[1] != 0.0:
        return left[0] / right[1], left[1] / right[1]
    return None


def _root(expr: Expr) -> Optional[float]:
    pair = _affine(expr)
    if pair is None or pair[0] == 0.0:
        return None
    return -pair[1] / pair[0]


def breakpoints(expr: Expr) -> List[float]:
    """Points where expr may jump, kink or blow up.

    Covers constant indicator bounds, crossings of affine min/max arguments,
    and zeros of affine arguments to abs, sqrt, log, division and powers.
    """

    found: List[Optional[float]] = []
    stack = [expr]
    while stack:
        node = stack.pop()
        if isinstance(node, Call):
            if node.name == "indicator":
                found.extend(_constant_value(arg) for arg in node.args)
            elif node.name in ("min", "max"):
                found.append(_root(BinOp("-", node.args[0], node.args[1])))
            elif node.name in ("abs", "sqrt", "log"):
                found.append(_root(node.args[0]))
        elif isinstance(node, BinOp):
            if node.op == "/":
                found.append(_root(node.right))
            elif node.op == "^":
                found.append(_root(node.left))
        stack.extend(_children(node))
    return sorted({x for x in found if x is not None and math.isfinite(x)})


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _evaluate(expr: Expr, x: np.ndarray) -> np.ndarray:
    if isinstance(expr, Num):
        return np.full_like(x, expr.value)
    if isinstance(expr, Var):
        return x
    if isinstance(expr, Neg):
        return -_evaluate(expr.operand, x)
    if isinstance(expr, BinOp):
        left = _evaluate(expr.left, x)
        right = _evaluate(expr.right, x)
        if expr.op == "+":
            return left + right
        if expr.op == "-":
            return left - right
        if expr.op == "*":
            return left * right
        if expr.op == "/":
            return np.where(right == 0.0, np.nan, left / right)
        return np.power(left, right)
    if isinstance(expr, Call):
        args = [_evaluate(arg, x) for arg in expr.args]
        name = expr.name
        if name == "exp":
            return np.exp(args[0])
        if name == "log":
            return np.where(args[0] > 0.0, np.log(args[0]), np.nan)
        if name == "abs":
            return np.abs(args[0])
        if name == "sqrt":
            return np.sqrt(args[0])
        if name == "min":
            return np.minimum(args[0], args[1])
        if name == "max":
            return np.maximum(args[0], args[1])
        inside = (x > args[0]) & (x < args[1])
        return np.where(inside, 1.0, 0.0)
    raise TypeError(f"not an expression node: {expr!r}")


def evaluate(expr: Expr, x: Union[float, np.ndarray]) -> np.ndarray:
    """Vectorised evaluation; NaN is the undefined marker."""

    values = np.asarray(x, dtype=float)
    with np.errstate(all="ignore"):
        return np.asarray(_evaluate(expr, values), dtype=float)


def eval_expr(expr: Expr, x: float) -> float:
    return float(evaluate(expr, float(x)))


def evaluator(expr: Expr) -> Evaluator:
    def _call(x: np.ndarray) -> np.ndarray:
        return evaluate(expr, x)

    return _call


# ---------------------------------------------------------------------------
# State space and problem
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class StateSpace:
    l: float
    r: float
    x0: float

    def __post_init__(self) -> None:
        if math.isnan(self.l) or math.isnan(self.r) or not math.isfinite(self.x0):
            raise ValueError("state space bounds must be numbers and x0 finite")
        if not (self.l < self.x0 < self.r):
            raise ValueError(f"expected l < x0 < r, got ({self.l}, {self.x0}, {self.r})")

    def contains(self, x: Union[float, np.ndarray]) -> np.ndarray:
        values = np.asarray(x, dtype=float)
        return (values > self.l) & (values < self.r)

    def endpoint(self, name: str) -> float:
        if name == "l":
            return self.l
        if name == "r":
            return self.r
        raise ValueError(f"unknown endpoint {name!r}")


@dataclass(frozen=True, slots=True)
class Problem:
    space: StateSpace
    mu: Expr
    sigma: Expr
    f: Expr
    declared_singularities: Tuple[float, ...] = ()

    def mu_eval(self, x: np.ndarray) -> np.ndarray:
        return evaluate(self.mu, x)

    def sigma_eval(self, x: np.ndarray) -> np.ndarray:
        return evaluate(self.sigma, x)

    def f_eval(self, x: np.ndarray) -> np.ndarray:
        return evaluate(self.f, x)

    def drift_ratio(self, x: np.ndarray) -> np.ndarray:
        """2 mu / sigma^2, the integrand of the scale exponent."""

        sigma = self.sigma_eval(x)
        with np.errstate(all="ignore"):
            return 2.0 * self.mu_eval(x) / (sigma * sigma)

    def abs_drift_ratio(self, x: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            return np.abs(self.drift_ratio(x))

    def inverse_variance(self, x: np.ndarray) -> np.ndarray:
        sigma = self.sigma_eval(x)
        with np.errstate(all="ignore"):
            return 1.0 / (sigma * sigma)

    def g_ratio(self, x: np.ndarray) -> np.ndarray:
        """f / sigma^2, whose local integrability defines the set D."""

        sigma = self.sigma_eval(x)
        with np.errstate(all="ignore"):
            return self.f_eval(x) / (sigma * sigma)

    def breakpoints(self) -> List[float]:
        """Breakpoints of mu, sigma and f plus the declared singularities."""

        marks = set(self.declared_singularities)
        for expr in (self.mu, self.sigma, self.f):
            marks.update(breakpoints(expr))
        return sorted(marks)

    def is_standard_brownian(self) -> bool:
        return is_constant(self.mu, 0.0) and is_constant(self.sigma, 1.0)

    def with_space(self, space: StateSpace) -> "Problem":
        return replace(self, space=space)

    def with_f(self, f: Expr) -> "Problem":
        return replace(self, f=f)


def build_problem(
    l: float,
    r: float,
    x0: float,
    mu: str,
    sigma: str,
    f: str,
    declared_singularities: Sequence[float] = (),
) -> Problem:
    """Convenience constructor from expression strings."""

    return Problem(
        space=StateSpace(float(l), float(r), float(x0)),
        mu=parse_expr(mu),
        sigma=parse_expr(sigma),
        f=parse_expr(f),
        declared_singularities=tuple(sorted(float(p) for p in declared_singularities)),
    )


def probe_grid(space: StateSpace, n: int) -> np.ndarray:
    """Probe points inside J: a symmetric uniform block plus geometric
    clustering toward each endpoint, plus x0."""

    if n < 4:
        raise ValueError("probe grid needs at least 4 points")
    x0 = space.x0
    scale = max(1.0, abs(x0))
    lo = space.l if math.isfinite(space.l) else x0 - 10.0 * scale
    hi = space.r if math.isfinite(space.r) else x0 + 10.0 * scale
    half = n // 8
    offsets = np.arange(-half, half + 1, dtype=float) / (half + 1)
    centre = 0.5 * (lo + hi)
    uniform = centre + 0.5 * (hi - lo) * offsets

    per_side = max(2, (n - offsets.size - 1) // 2)
    pieces = [uniform, np.array([x0])]
    if math.isfinite(space.l):
        pieces.append(space.l + (x0 - space.l) * np.geomspace(1.0, 1e-8, per_side))
    else:
        pieces.append(x0 - scale * np.geomspace(1e-2, 1e8, per_side))
    if math.isfinite(space.r):
        pieces.append(space.r - (space.r - x0) * np.geomspace(1.0, 1e-8, per_side))
    else:
        pieces.append(x0 + scale * np.geomspace(1e-2, 1e8, per_side))

    grid = np.unique(np.concatenate(pieces))
    return grid[space.contains(grid)]


def feature_probes(points: Sequence[float], space: StateSpace) -> np.ndarray:
    """Breakpoints inside J, each flanked on both sides, plus the midpoints
    between neighbouring breakpoints and toward each endpoint."""

    inside = sorted({float(x) for x in points if math.isfinite(x) and space.l < x < space.r})
    if not inside:
        return np.empty(0)
    marks = np.array(inside)
    flank = 1e-6 * np.maximum(1.0, np.abs(marks))
    lo = space.l if math.isfinite(space.l) else marks[0] - 2.0 * max(1.0, abs(marks[0]))
    hi = space.r if math.isfinite(space.r) else marks[-1] + 2.0 * max(1.0, abs(marks[-1]))
    outer = np.concatenate([[lo], marks, [hi]])
    pieces = [marks, marks - flank, marks + flank, 0.5 * (outer[1:] + outer[:-1])]
    grid = np.unique(np.concatenate(pieces))
    return grid[space.contains(grid)]


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Violation:
    condition: str
    point: float
    value: Optional[float] = None

    def describe(self) -> str:
        shown = "undefined" if self.value is None or math.isnan(self.value) else f"{self.value:g}"
        return f"{self.condition} at x={self.point:g} (value {shown})"


@dataclass(slots=True)
class ValidationReport:
    problem: Problem
    violations: List[Violation] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)
    probes: int = 0
    grid_verified: bool = True

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_for_violations(self) -> Problem:
        if self.violations:
            raise ProblemValidationError(self.violations)
        return self.problem


class ProblemValidationError(ValueError):
    """Raised when a problem fails the probe-grid checks."""

    def __init__(self, violations: Sequence[Violation]) -> None:
        self.violations = list(violations)
        summary = "; ".join(v.describe() for v in self.violations[:5])
        more = "" if len(self.violations) <= 5 else f" (+{len(self.violations) - 5} more)"
        super().__init__(f"problem validation failed: {summary}{more}")


def _isolated_undefined(values_at: Evaluator, x: float) -> bool:
    """True when an undefined value at x has defined neighbours on both sides."""

    step = max(abs(x), 1.0) * 1e-9
    neighbours = values_at(np.array([x - step, x + step]))
    return bool(np.all(~np.isnan(neighbours)))


def _local_radius(space: StateSpace, x: float) -> float:
    return 0.5 * min(1.0, x - space.l, space.r - x)


def validate_problem(
    p: Problem,
    n_probes: int,
    tol: Optional[Tolerances] = None,
    *,
    extra_points: Sequence[float] = (),
) -> ValidationReport:
    """Check sigma != 0 and the finiteness / sign of mu, sigma, f on a probe grid.

    The grid is the shared probe grid, the flanked breakpoints of the
    expressions, the declared singularities and any ``extra_points`` inside J.
    """

    if n_probes < 16:
        raise ValueError("n_probes must be at least 16")
    tol = tol or Tolerances()
    space = p.space
    extra = [d for d in p.declared_singularities if space.l < d < space.r]
    requested = np.asarray(list(extra_points), dtype=float)
    points = np.unique(
        np.concatenate(
            [
                probe_grid(space, n_probes),
                feature_probes(p.breakpoints(), space),
                np.array(extra, dtype=float),
                requested[space.contains(requested)],
            ]
        )
    )
    report = ValidationReport(problem=p, probes=int(points.size))

    mu = p.mu_eval(points)
    sigma = p.sigma_eval(points)
    f = p.f_eval(points)
    suspicious: List[float] = list(extra)

    for idx, x in enumerate(points.tolist()):
        if sigma[idx] == 0.0:
            report.violations.append(Violation("sigma_zero", x, 0.0))
        elif not math.isfinite(sigma[idx]):
            if math.isnan(sigma[idx]) and _isolated_undefined(p.sigma_eval, x):
                suspicious.append(x)
            else:
                report.violations.append(Violation("sigma_undefined", x, float(sigma[idx])))
        if not math.isfinite(mu[idx]):
            if math.isnan(mu[idx]) and _isolated_undefined(p.mu_eval, x):
                suspicious.append(x)
            else:
                report.violations.append(Violation("mu_undefined", x, float(mu[idx])))
        if math.isnan(f[idx]):
            if _isolated_undefined(p.f_eval, x):
                report.notes.append(f"f undefined at isolated point x={x:g}")
            else:
                report.violations.append(Violation("f_undefined", x, None))
        elif f[idx] < 0.0:
            report.violations.append(Violation("f_negative", x, float(f[idx])))

    for x in sorted(set(suspicious)):
        radius = _local_radius(space, x)
        for label, g in (("inverse_variance", p.inverse_variance), ("drift_ratio", p.abs_drift_ratio)):
            check = local_integrability_at(g, x, tol, radius=radius)
            if check.integrable is False:
                report.violations.append(Violation(f"engelbert_schmidt_{label}", x, None))
            elif check.integrable is None:
                report.notes.append(f"{label} local integrability indeterminate at x={x:g}")

    report.notes.append("engelbert_schmidt: grid-verified")
    logger.debug(
        "problem_validated probes=%s violations=%s", report.probes, len(report.violations)
    )
    return report


__all__ = [
    "BinOp",
    "Call",
    "Evaluator",
    "Expr",
    "ExpressionError",
    "FUNCTION_ARITY",
    "Neg",
    "Num",
    "Problem",
    "ProblemValidationError",
    "StateSpace",
    "ValidationReport",
    "Var",
    "Violation",
    "breakpoints",
    "build_problem",
    "eval_expr",
    "evaluate",
    "evaluator",
    "feature_probes",
    "is_constant",
    "parse_expr",
    "probe_grid",
    "to_text",
    "validate_problem",
]
