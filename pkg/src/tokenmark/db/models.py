"""SQLAlchemy ORM 모델.

실험 실행과 공격별 시드 결과를 저장합니다.
"""

from __future__ import annotations

from datetime import datetime, timezone
from pathlib import Path

from sqlalchemy import (
    Column,
    DateTime,
    Engine,
    Float,
    ForeignKey,
    Index,
    Integer,
    String,
    Text,
    create_engine,
)
from sqlalchemy import event as sa_event
from sqlalchemy.orm import DeclarativeBase, Session, sessionmaker


class Base(DeclarativeBase):
    pass


class ExperimentRun(Base):
    """실험 실행 한 건."""

    __tablename__ = "experiment_runs"

    id = Column(Integer, primary_key=True, autoincrement=True)
    name = Column(String(100), nullable=False)
    method = Column(String(10), nullable=False)  # post, hard, soft, none
    gamma = Column(Float, nullable=False)
    sigma = Column(Float, nullable=False)
    n_lists = Column(Integer, nullable=False)
    fpr = Column(Float, nullable=False)
    seeds = Column(Text, nullable=False)  # JSON
    mean_auc = Column(Float, nullable=True)
    mean_tpr = Column(Float, nullable=True)
    created_at = Column(DateTime, default=lambda: datetime.now(timezone.utc))

    __table_args__ = (Index("idx_runs_name", "name"),)


class AttackResult(Base):
    """실행 × 공격 × 시드 결과."""

    __tablename__ = "attack_results"

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(Integer, ForeignKey("experiment_runs.id"), nullable=False)
    attack = Column(String(50), nullable=False)
    seed = Column(Integer, nullable=False)
    auc = Column(Float, nullable=False)
    tpr_at_fpr = Column(Float, nullable=False)
    detect_rate = Column(Float, nullable=True)
    false_alarm_rate = Column(Float, nullable=True)
    psnr = Column(Float, nullable=True)
    ssim = Column(Float, nullable=True)

    __table_args__ = (Index("idx_results_run_attack", "run_id", "attack"),)


def create_db_engine(db_path: str, echo: bool = False) -> Engine:
    """SQLite 엔진을 생성합니다."""
    engine = create_engine(
        f"sqlite:///{db_path}",
        echo=echo,
        connect_args={"timeout": 30},
    )

    # WAL 모드 활성화 (동시 읽기/쓰기 지원)
    @sa_event.listens_for(engine, "connect")
    def set_sqlite_pragma(dbapi_connection, connection_record):  # type: ignore[no-untyped-def]
        cursor = dbapi_connection.cursor()
        cursor.execute("PRAGMA journal_mode=WAL")
        cursor.execute("PRAGMA busy_timeout=30000")
        cursor.close()

    return engine


def init_db(db_path: str, echo: bool = False) -> sessionmaker[Session]:
    """데이터베이스를 초기화하고 세션 팩토리를 반환합니다."""
    Path(db_path).parent.mkdir(parents=True, exist_ok=True)
    engine = create_db_engine(db_path, echo=echo)
    Base.metadata.create_all(engine)
    return sessionmaker(bind=engine)
