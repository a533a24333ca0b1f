"""Verdict ledger for recorded runs.

Uses SQLAlchemy with SQLite. Each run is keyed by a hash of its problem
(canonical coefficient text plus tolerances) so classifier verdicts and Monte
Carlo agreement can be compared across seeds and path counts.
"""

from __future__ import annotations

import hashlib
import json
import math
import uuid
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, cast

from sqlalchemy import (
    Boolean,
    Column,
    DateTime,
    Float,
    Integer,
    String,
    Text,
    asc,
    create_engine,
    desc,
)
from sqlalchemy.orm import Session, declarative_base, sessionmaker

from .coeffspec import parse_expr, to_text
from .config import get_settings
from .models import Report, RunConfig

Base = declarative_base()


class RunRecord(Base):
    """A single recorded CLI run."""

    __tablename__ = "runs"

    id = Column(String(36), primary_key=True, default=lambda: str(uuid.uuid4()))
    created_at = Column(DateTime, default=lambda: datetime.now(timezone.utc))
    label = Column(Text, nullable=True)
    subcommand = Column(String(20), nullable=False)
    status = Column(String(20), default="conclusive")
    exit_code = Column(Integer, default=0)
    problem_key = Column(String(64), nullable=True, index=True)
    problem_text = Column(Text, nullable=True)
    # text keeps the full unsigned 64-bit range
    master_seed = Column(String(24), nullable=True)
    n_paths = Column(Integer, nullable=True)
    report_json = Column(Text, nullable=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "created_at": self.created_at.isoformat() if self.created_at else None,
            "label": self.label,
            "subcommand": self.subcommand,
            "status": self.status,
            "exit_code": self.exit_code,
            "problem_key": self.problem_key,
            "master_seed": int(self.master_seed) if self.master_seed is not None else None,
            "n_paths": self.n_paths,
        }

    def to_full_dict(self) -> Dict[str, Any]:
        result = self.to_dict()
        report_json = cast(Optional[str], self.report_json)
        result["problem_text"] = self.problem_text
        result["report"] = json.loads(report_json) if report_json else None
        return result


class EventVerdictRecord(Base):
    """Classifier kind and simulated agreement for one event of a run."""

    __tablename__ = "event_verdicts"

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(String(36), nullable=False, index=True)
    event = Column(String(40), nullable=False)
    kind = Column(String(20), nullable=False)
    agreement = Column(Float, nullable=True)
    agreement_n = Column(Integer, nullable=True)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "agreement": self.agreement, "n": self.agreement_n}


class CheckRecord(Base):
    """Outcome of one identity check of a run."""

    __tablename__ = "identity_checks"

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(String(36), nullable=False, index=True)
    name = Column(String(60), nullable=False)
    passed = Column(Boolean, nullable=False)
    underpowered = Column(Boolean, default=False)
    p_value = Column(Float, nullable=True)
    estimate = Column(Float, nullable=True)
    n_paths = Column(Integer, nullable=True)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "underpowered": self.underpowered,
            "p_value": self.p_value,
            "estimate": self.estimate,
            "n_paths": self.n_paths,
        }


_engine = None
_Session: sessionmaker | None = None


def get_db_path() -> Path:
    """Get the path to the SQLite database file."""
    settings = get_settings()
    db_dir = Path(settings.data_dir) / "data"
    db_dir.mkdir(parents=True, exist_ok=True)
    return db_dir / "runs.db"


def init_db() -> None:
    """Initialize the database, creating tables if they don't exist."""
    global _engine, _Session
    db_path = get_db_path()
    _engine = create_engine(f"sqlite:///{db_path}", echo=False)
    Base.metadata.create_all(_engine)
    _Session = sessionmaker(bind=_engine)


def get_session() -> Session:
    """Get a database session."""
    global _Session
    if _Session is None:
        init_db()
    if _Session is None:  # pragma: no cover
        raise RuntimeError("Database session factory failed to initialize")
    return _Session()


# ---------------------------------------------------------------------------
# Problem keys
# ---------------------------------------------------------------------------


def _number(value: float) -> str:
    return repr(float(value))


def problem_text(config: RunConfig) -> str:
    """Canonical text of what a run decides.

    Coefficients are re-rendered from their parsed form so spacing and
    redundant parentheses do not change the key. Identity runs have no
    problem block; their key covers the identity parameters minus path counts.
    """

    tol = json.dumps(config.tolerances.model_dump(mode="json"), sort_keys=True)
    block = config.problem
    if block is None:
        ident = config.identities.model_dump(
            mode="json",
            exclude={
                "n_paths",
                "cherny_paths",
                "fubini_paths",
                "occupation_paths",
                "positivity_paths",
            },
        )
        return "identities|" + json.dumps(ident, sort_keys=True)
    singular = ",".join(_number(s) for s in sorted(block.declared_singularities))
    reference = "" if block.reference_point is None else _number(block.reference_point)
    parts = [
        _number(block.l),
        _number(block.r),
        _number(block.x0),
        to_text(parse_expr(block.mu)),
        to_text(parse_expr(block.sigma)),
        to_text(parse_expr(block.f)),
        singular,
        reference,
        str(block.f_ae_zero),
        tol,
    ]
    return "problem|" + "|".join(parts)


def problem_key(config: RunConfig) -> str:
    """Stable sha256 key of :func:`problem_text`."""
    return hashlib.sha256(problem_text(config).encode()).hexdigest()


def _finite(value: Optional[float]) -> Optional[float]:
    if value is None or not math.isfinite(value):
        return None
    return float(value)


# ---------------------------------------------------------------------------
# Recording and queries
# ---------------------------------------------------------------------------


def record_report(report: Report, *, label: Optional[str] = None) -> str:
    """Save a report with its per-event verdicts and identity checks.

    Returns the run ID.
    """
    config = report.config
    run_id = str(uuid.uuid4())
    record = RunRecord(
        id=run_id,
        label=label,
        subcommand=report.subcommand,
        status=report.status,
        exit_code=report.exit_code,
        problem_key=problem_key(config) if config is not None else None,
        problem_text=problem_text(config) if config is not None else None,
        report_json=report.to_json(),
    )
    rows: List[Any] = [record]

    if config is not None and report.subcommand == "identities":
        record.master_seed = str(config.simulation.master_seed)
        record.n_paths = config.identities.n_paths
    elif config is not None and report.simulation is not None:
        record.master_seed = str(config.simulation.master_seed)
        record.n_paths = config.simulation.n_paths

    if report.classifier is not None:
        details: Dict[str, Any] = {}
        if report.simulation is not None and report.simulation.agreement is not None:
            details = report.simulation.agreement.details
        for event, section in sorted(report.classifier.events.items()):
            entry = details.get(event, {})
            rows.append(
                EventVerdictRecord(
                    run_id=run_id,
                    event=event,
                    kind=section.kind,
                    agreement=_finite(entry.get("fraction")),
                    agreement_n=entry.get("n"),
                )
            )

    if report.identities is not None:
        for check in report.identities.checks:
            rows.append(
                CheckRecord(
                    run_id=run_id,
                    name=check.name,
                    passed=check.passed,
                    underpowered=check.underpowered,
                    p_value=_finite(check.p_value),
                    estimate=_finite(check.estimate),
                    n_paths=check.n_paths,
                )
            )

    session = get_session()
    try:
        session.add_all(rows)
        session.commit()
        return run_id
    finally:
        session.close()


def list_runs(
    limit: int = 50,
    offset: int = 0,
    *,
    problem_key: Optional[str] = None,
    subcommand: Optional[str] = None,
) -> List[Dict[str, Any]]:
    """List runs, most recent first, optionally for one problem key."""
    session = get_session()
    try:
        query = session.query(RunRecord)
        if problem_key is not None:
            query = query.filter_by(problem_key=problem_key)
        if subcommand is not None:
            query = query.filter_by(subcommand=subcommand)
        records = query.order_by(desc(RunRecord.created_at)).limit(limit).offset(offset).all()
        return [r.to_dict() for r in records]
    finally:
        session.close()


def verdict_history(key: str) -> List[Dict[str, Any]]:
    """Every recorded run of one problem, oldest first, with its verdicts."""
    session = get_session()
    try:
        records = (
            session.query(RunRecord)
            .filter_by(problem_key=key)
            .order_by(asc(RunRecord.created_at))
            .all()
        )
        history = []
        for record in records:
            entry = record.to_dict()
            entry["events"] = {
                row.event: row.to_dict()
                for row in session.query(EventVerdictRecord).filter_by(run_id=record.id)
            }
            entry["checks"] = {
                row.name: row.to_dict()
                for row in session.query(CheckRecord).filter_by(run_id=record.id)
            }
            history.append(entry)
        return history
    finally:
        session.close()


def get_run(run_id: str) -> Optional[Dict[str, Any]]:
    """Get a specific run by ID, including the report."""
    session = get_session()
    try:
        record = session.query(RunRecord).filter_by(id=run_id).first()
        if record is None:
            return None
        return record.to_full_dict()
    finally:
        session.close()


def delete_run(run_id: str) -> bool:
    """Delete a run and its verdict rows. Returns False if not found."""
    session = get_session()
    try:
        record = session.query(RunRecord).filter_by(id=run_id).first()
        if record is None:
            return False
        session.query(EventVerdictRecord).filter_by(run_id=run_id).delete()
        session.query(CheckRecord).filter_by(run_id=run_id).delete()
        session.delete(record)
        session.commit()
        return True
    finally:
        session.close()


__all__ = [
    "CheckRecord",
    "EventVerdictRecord",
    "RunRecord",
    "delete_run",
    "get_run",
    "init_db",
    "list_runs",
    "problem_key",
    "problem_text",
    "record_report",
    "verdict_history",
]
