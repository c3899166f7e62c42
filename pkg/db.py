# db.py - optional ledger of evaluation runs
import logging
from contextlib import contextmanager
from datetime import datetime
from typing import Generator, Optional

from sqlalchemy import DateTime, Float, ForeignKey, Integer, Text, create_engine, select
from sqlalchemy.orm import DeclarativeBase, Mapped, Session, mapped_column, relationship, sessionmaker
from sqlalchemy.sql import func

logger = logging.getLogger(__name__)


class Base(DeclarativeBase):
    pass


class EvaluationRun(Base):
    __tablename__ = "evaluation_runs"

    id: Mapped[int] = mapped_column(Integer, primary_key=True, autoincrement=True)
    created_at: Mapped[datetime] = mapped_column(DateTime(timezone=True), server_default=func.now())
    seed: Mapped[int | None] = mapped_column(Integer, nullable=True)
    n_validation: Mapped[int] = mapped_column(Integer)
    best_source: Mapped[str] = mapped_column(Text)
    config_json: Mapped[str | None] = mapped_column(Text, nullable=True)

    rows: Mapped[list["RunRow"]] = relationship(
        back_populates="run",
        cascade="all, delete-orphan",
        order_by="RunRow.rank.asc()",
    )


class RunRow(Base):
    __tablename__ = "run_rows"

    id: Mapped[int] = mapped_column(Integer, primary_key=True, autoincrement=True)
    run_id: Mapped[int] = mapped_column(Integer, ForeignKey("evaluation_runs.id", ondelete="CASCADE"), index=True)
    rank: Mapped[int] = mapped_column(Integer)
    name: Mapped[str] = mapped_column(Text)
    kind: Mapped[str] = mapped_column(Text)     # model|ensemble|published
    auc: Mapped[float] = mapped_column(Float)
    f1: Mapped[float] = mapped_column(Float)
    ece: Mapped[float] = mapped_column(Float)
    overall: Mapped[float] = mapped_column(Float)

    run: Mapped["EvaluationRun"] = relationship(back_populates="rows")


_ENGINE = None
_SessionLocal: Optional[sessionmaker[Session]] = None
_URL: Optional[str] = None


def init_runs_db(url: str) -> None:
    global _ENGINE, _SessionLocal, _URL
    _ENGINE = create_engine(url, pool_pre_ping=True, echo=False)
    Base.metadata.create_all(_ENGINE)
    _SessionLocal = sessionmaker(
        bind=_ENGINE,
        autocommit=False,
        autoflush=False,
        expire_on_commit=False,
    )
    _URL = url
    logger.info(f"Run ledger ready at {_ENGINE.url.render_as_string(hide_password=True)}")


def is_runs_db_ready() -> bool:
    return _SessionLocal is not None


def runs_db_url() -> Optional[str]:
    return _URL


@contextmanager
def runs_session() -> Generator[Session, None, None]:
    if not _SessionLocal:
        raise RuntimeError("Run ledger not initialized. Call init_runs_db() first.")
    db = _SessionLocal()
    try:
        yield db
    finally:
        db.close()


def get_runs_db():
    if not _SessionLocal:
        raise RuntimeError("Run ledger not initialized")
    db = _SessionLocal()
    try:
        yield db
    finally:
        db.close()


def record_run(db: Session, report, config_json: str | None = None) -> int:
    """Stores a ranked report (anything with .seed, .n_validation and .rows)."""
    run = EvaluationRun(
        seed=report.seed,
        n_validation=report.n_validation,
        best_source=report.rows[0].name if report.rows else "",
        config_json=config_json,
    )
    for rank, row in enumerate(report.rows, start=1):
        run.rows.append(
            RunRow(rank=rank, name=row.name, kind=row.kind, auc=row.auc, f1=row.f1, ece=row.ece, overall=row.overall)
        )
    try:
        db.add(run)
        db.commit()
    except Exception:
        db.rollback()
        raise
    db.refresh(run)
    return run.id


def list_runs(db: Session, limit: int = 50) -> list[dict]:
    runs = db.execute(
        select(EvaluationRun).order_by(EvaluationRun.id.desc()).limit(limit)
    ).scalars().all()
    return [
        {
            "id": r.id,
            "created_at": r.created_at.isoformat() if r.created_at else None,
            "seed": r.seed,
            "n_validation": r.n_validation,
            "best_source": r.best_source,
            "rows": [
                {"rank": row.rank, "name": row.name, "kind": row.kind, "auc": row.auc,
                 "f1": row.f1, "ece": row.ece, "overall": row.overall}
                for row in r.rows
            ],
        }
        for r in runs
    ]
