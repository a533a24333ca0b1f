"""Pydantic models for run configs and machine-readable reports."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Mapping, Optional, Union

import yaml
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    ValidationError,
    WithJsonSchema,
    field_validator,
    model_validator,
)

from .coeffspec import ExpressionError, Problem, build_problem, parse_expr
from .quad import Tolerances

_NONFINITE = {"inf": math.inf, "+inf": math.inf, "-inf": -math.inf, "nan": math.nan}


class ConfigError(ValueError):
    """Raised for unreadable or invalid run configs."""


def _decode_float(value: Any) -> Any:
    if isinstance(value, str):
        key = value.strip().lower()
        if key in _NONFINITE:
            return _NONFINITE[key]
    return value


def encode_float(value: float) -> Union[float, str]:
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def encode_floats(value: Any) -> Any:
    """Replace non-finite floats anywhere in a JSON-like tree by their string form."""

    if isinstance(value, float):
        return encode_float(value)
    if isinstance(value, dict):
        return {str(k): encode_floats(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [encode_floats(v) for v in value]
    return value


EncodedFloat = Annotated[
    float,
    BeforeValidator(_decode_float),
    PlainSerializer(encode_float, return_type=Union[float, str], when_used="json"),
    WithJsonSchema(
        {
            "anyOf": [
                {"type": "number"},
                {"type": "string", "enum": ["inf", "-inf", "nan"]},
            ]
        }
    ),
]


# ---------------------------------------------------------------------------
# Run config
# ---------------------------------------------------------------------------


class ProblemBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    l: EncodedFloat = Field(description="Left endpoint of J; may be '-inf'.")
    r: EncodedFloat = Field(description="Right endpoint of J; may be 'inf'.")
    x0: float = Field(description="Starting point, l < x0 < r.")
    mu: str = Field(default="0", description="Drift expression in x.")
    sigma: str = Field(default="1", description="Diffusion coefficient expression in x.")
    f: str = Field(description="Nonnegative integrand expression in x.")
    declared_singularities: List[float] = Field(
        default_factory=list,
        description="Points where the user knows a coefficient or f is singular.",
    )
    f_ae_zero: bool = Field(
        default=False,
        description="Assert f = 0 almost everywhere; overrides the positivity search.",
    )
    reference_point: Optional[float] = Field(
        default=None,
        description="Reference point c of the scale function; defaults to x0.",
    )

    @field_validator("mu", "sigma", "f")
    @classmethod
    def _parses(cls, value: str) -> str:
        try:
            parse_expr(value)
        except ExpressionError as exc:
            raise ValueError(str(exc)) from exc
        return value

    @model_validator(mode="after")
    def _ordered(self) -> "ProblemBlock":
        if math.isnan(self.l) or math.isnan(self.r):
            raise ValueError("endpoints must not be nan")
        if not math.isfinite(self.x0):
            raise ValueError("x0 must be finite")
        if not self.l < self.x0 < self.r:
            raise ValueError(f"expected l < x0 < r, got ({self.l}, {self.x0}, {self.r})")
        return self

    def build(self) -> Problem:
        return build_problem(
            self.l,
            self.r,
            self.x0,
            self.mu,
            self.sigma,
            self.f,
            self.declared_singularities,
        )


class SimulationBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dt: float = Field(default=1e-3, gt=0, le=1.0, description="Base time step.")
    horizon: float = Field(default=100.0, gt=0, description="Simulation horizon T.")
    n_paths: int = Field(default=500, ge=1, description="Paths for verdict agreement.")
    master_seed: int = Field(default=0, ge=0, lt=2**64, description="Master seed.")
    dyadic_count: int = Field(default=16, ge=4, le=60, description="Dyadic checkpoints K.")
    bandwidth: Optional[float] = Field(
        default=None, gt=0, description="Local-time bandwidth; defaults to 2 sqrt(dt)."
    )
    agreement_threshold: float = Field(default=0.9, ge=0, le=1)
    block_size: int = Field(default=256, ge=1, description="Paths per deterministic block.")
    record_stride: int = Field(default=10, ge=1, description="Keep every n-th step.")
    max_halvings: int = Field(default=30, ge=0, le=60)
    threads: int = Field(default=1, ge=1, description="Worker threads; never changes results.")

    def resolved_bandwidth(self) -> float:
        return self.bandwidth if self.bandwidth is not None else 2.0 * math.sqrt(self.dt)


class IdentitiesBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    r: float = Field(default=1.0)
    x0: float = Field(default=0.0)
    u: float = Field(default=0.5, gt=0)
    n_paths: int = Field(default=2000, ge=1)
    significance: float = Field(default=0.01, gt=0, lt=1)
    max_time: Optional[float] = Field(
        default=None, gt=0, description="Censoring time; defaults to 1e4 (r - x0)^2."
    )
    cherny_exponents: List[float] = Field(default_factory=lambda: [1.5, 2.5])
    cherny_eps: float = Field(default=1.0, gt=0)
    cherny_paths: Optional[int] = Field(default=None, ge=1, description="Defaults to n_paths // 4.")
    cherny_octaves: int = Field(default=32, ge=4, le=60)
    fubini_paths: Optional[int] = Field(
        default=None, ge=1, description="Defaults to 5 * n_paths // 2."
    )
    fubini_integrands: List[str] = Field(default_factory=lambda: ["1", "x"])
    occupation_paths: Optional[int] = Field(
        default=None, ge=1, description="Defaults to n_paths // 20."
    )
    occupation_integrand: str = Field(default="exp(-x^2)")
    positivity_horizon: float = Field(
        default=1.0, gt=0, description="Time up to which local time at r - u is measured."
    )
    positivity_paths: Optional[int] = Field(default=None, ge=1, description="Defaults to n_paths.")

    @field_validator("fubini_integrands")
    @classmethod
    def _integrands_parse(cls, values: List[str]) -> List[str]:
        for value in values:
            try:
                parse_expr(value)
            except ExpressionError as exc:
                raise ValueError(f"{value!r}: {exc}") from exc
        return values

    @field_validator("occupation_integrand")
    @classmethod
    def _occupation_parses(cls, value: str) -> str:
        try:
            parse_expr(value)
        except ExpressionError as exc:
            raise ValueError(str(exc)) from exc
        return value

    @field_validator("cherny_exponents")
    @classmethod
    def _not_boundary(cls, values: List[float]) -> List[float]:
        if any(v == 2.0 for v in values):
            raise ValueError("exponent 2 sits on the dichotomy boundary")
        return values

    @model_validator(mode="after")
    def _gap(self) -> "IdentitiesBlock":
        if not self.x0 < self.r:
            raise ValueError("identities need x0 < r")
        if self.u > self.r - self.x0:
            raise ValueError("u must not exceed r - x0")
        return self

    def check_paths(self) -> Dict[str, int]:
        """Paths per check; counts left unset scale with n_paths."""

        n = self.n_paths
        return {
            "ray_knight": n,
            "williams": n,
            "cherny": self.cherny_paths or max(1, n // 4),
            "fubini": self.fubini_paths or max(1, 5 * n // 2),
            "occupation": self.occupation_paths or max(1, n // 20),
            "local_time": self.positivity_paths or n,
        }


class OutputBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    report_path: Optional[str] = None
    dump_paths: bool = False
    dump_dir: str = "paths"
    dump_limit: int = Field(default=100, ge=0)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    problem: Optional[ProblemBlock] = None
    tolerances: Tolerances = Field(default_factory=Tolerances)
    simulation: SimulationBlock = Field(default_factory=SimulationBlock)
    identities: IdentitiesBlock = Field(default_factory=IdentitiesBlock)
    output: OutputBlock = Field(default_factory=OutputBlock)

    def require_problem(self) -> ProblemBlock:
        if self.problem is None:
            raise ConfigError("problem: block is required for this subcommand")
        return self.problem

    def with_overrides(
        self,
        *,
        seed: Optional[int] = None,
        threads: Optional[int] = None,
        paths: Optional[int] = None,
    ) -> "RunConfig":
        """Copy with CLI overrides applied.

        ``paths`` sets both path counts and clears the per-check identity
        counts so every identity check runs on the same N.
        """

        simulation = self.simulation.model_copy(
            update={
                k: v
                for k, v in (("master_seed", seed), ("threads", threads), ("n_paths", paths))
                if v is not None
            }
        )
        identities = self.identities
        if paths is not None:
            identities = identities.model_copy(
                update={
                    "n_paths": paths,
                    "cherny_paths": None,
                    "fubini_paths": None,
                    "occupation_paths": None,
                    "positivity_paths": None,
                }
            )
        return self.model_copy(update={"simulation": simulation, "identities": identities})


def _format_validation_error(exc: ValidationError) -> str:
    parts = []
    for error in exc.errors():
        location = ".".join(str(p) for p in error["loc"]) or "<root>"
        parts.append(f"{location}: {error['msg']}")
    return "; ".join(parts)


def config_from_mapping(data: Any, source: str = "<config>") -> RunConfig:
    if not isinstance(data, Mapping):
        raise ConfigError(f"{source}: top level must be a mapping")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"{source}: {_format_validation_error(exc)}") from exc


def load_config(path: Union[str, Path]) -> RunConfig:
    """Read a JSON or YAML run config; errors carry line/column or field path."""

    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    if path.suffix.lower() in {".yml", ".yaml"}:
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"{mark.line + 1}:{mark.column + 1}" if mark is not None else "?"
            problem = getattr(exc, "problem", None) or str(exc)
            raise ConfigError(f"{path}:{where}: {problem}") from exc
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return config_from_mapping(data, str(path))


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


class ImproperVerdictSection(BaseModel):
    kind: Literal["finite", "infinite", "indeterminate"]
    value: Optional[EncodedFloat] = None
    error_estimate: Optional[EncodedFloat] = None
    exponent_estimate: Optional[EncodedFloat] = None
    ratio_estimate: Optional[EncodedFloat] = None
    tail_estimate: EncodedFloat = 0.0
    endpoint: EncodedFloat
    side: Literal["left_of", "right_of"]
    note: Optional[str] = None
    partial_integrals: List[List[EncodedFloat]] = Field(
        default_factory=list, description="(refinement point, partial integral) rows."
    )
    increments: List[EncodedFloat] = Field(default_factory=list)


class EndpointLimitSection(BaseModel):
    kind: Literal["finite", "infinite", "indeterminate"]
    value: EncodedFloat
    verdict: Optional[ImproperVerdictSection] = None


class EndpointBehaviorSection(BaseModel):
    attracted: Optional[bool]
    explosive: Optional[bool]
    note: Optional[str] = None
    feller_integral: Optional[ImproperVerdictSection] = None


class RecurrenceSection(BaseModel):
    kind: Literal["recurrent", "transient", "undetermined"]
    flagged: bool = False
    endpoints: Dict[str, EndpointBehaviorSection] = Field(default_factory=dict)


class ReductionSection(BaseModel):
    D_points: List[EncodedFloat] = Field(default_factory=list)
    alpha: EncodedFloat
    beta: EncodedFloat
    x0_in_D: bool
    indeterminate: List[EncodedFloat] = Field(default_factory=list)
    candidates_tested: int = 0


class EventSection(BaseModel):
    kind: Literal["zero", "finite", "infinite", "event_null", "inconclusive"]
    witness: Optional[EncodedFloat] = None
    note: Optional[str] = None
    integral: Optional[ImproperVerdictSection] = None


class ClassifierSection(BaseModel):
    status: Literal["conclusive", "inconclusive"]
    blocking: List[str] = Field(default_factory=list)
    notes: List[str] = Field(default_factory=list)
    reference_point: EncodedFloat
    reduction: ReductionSection
    limits: Dict[str, EndpointLimitSection] = Field(default_factory=dict)
    recurrence: Optional[RecurrenceSection] = None
    events: Dict[str, EventSection] = Field(default_factory=dict)
    on_start_in_D: Optional[str] = None
    finite_before_etaD: str
    infinite_after_etaD: str


class MCSummarySection(BaseModel):
    n_paths: int
    estimate: EncodedFloat
    std_error: EncodedFloat
    per_path: Optional[List[EncodedFloat]] = None
    flags: List[str] = Field(default_factory=list)
    details: Dict[str, Any] = Field(default_factory=dict)


class SimulationSection(BaseModel):
    agreement: Optional[MCSummarySection] = None
    threshold: float
    passed: bool
    flags: List[str] = Field(default_factory=list)
    dumped_paths: int = 0


class CheckSection(BaseModel):
    name: str
    passed: bool
    underpowered: bool = False
    flags: List[str] = Field(default_factory=list)
    statistic: Optional[EncodedFloat] = None
    p_value: Optional[EncodedFloat] = None
    z_score: Optional[EncodedFloat] = None
    estimate: Optional[EncodedFloat] = None
    std_error: Optional[EncodedFloat] = None
    n_left: Optional[int] = None
    n_right: Optional[int] = None
    n_paths: Optional[int] = None
    details: Dict[str, Any] = Field(default_factory=dict)


class IdentitiesSection(BaseModel):
    significance: float
    checks: List[CheckSection] = Field(default_factory=list)


class Report(BaseModel):
    tool: str = "diffusion-functionals"
    version: str
    subcommand: Literal["classify", "verify", "identities"]
    status: Literal["conclusive", "inconclusive", "error"]
    exit_code: int = Field(ge=0, le=2)
    config: Optional[RunConfig] = None
    classifier: Optional[ClassifierSection] = None
    simulation: Optional[SimulationSection] = None
    identities: Optional[IdentitiesSection] = None
    errors: List[str] = Field(default_factory=list)
    timings: Dict[str, float] = Field(
        default_factory=dict, description="Wall-clock seconds; not reproducible."
    )

    def to_json(self) -> str:
        payload = encode_floats(self.model_dump(mode="json"))
        return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False)


__all__ = [
    "CheckSection",
    "ClassifierSection",
    "ConfigError",
    "EncodedFloat",
    "EndpointBehaviorSection",
    "EndpointLimitSection",
    "EventSection",
    "IdentitiesBlock",
    "IdentitiesSection",
    "ImproperVerdictSection",
    "MCSummarySection",
    "OutputBlock",
    "ProblemBlock",
    "RecurrenceSection",
    "ReductionSection",
    "Report",
    "RunConfig",
    "SimulationBlock",
    "SimulationSection",
    "config_from_mapping",
    "encode_float",
    "encode_floats",
    "load_config",
]
