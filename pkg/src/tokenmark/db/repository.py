"""실험 결과 저장소 CRUD 모듈."""

from __future__ import annotations

import json
import math

import pandas as pd
from sqlalchemy.orm import Session

from tokenmark.db.models import AttackResult, ExperimentRun
from tokenmark.eval.experiment import ExperimentReport
from tokenmark.logging_config import get_logger

log = get_logger(__name__)

RESULT_COLUMNS = [
    "attack", "seed", "auc", "tpr_at_fpr", "detect_rate", "false_alarm_rate", "psnr", "ssim",
]


def _nullable(value: float) -> float | None:
    """SQLite에 저장할 수 없는 NaN/inf는 NULL로 바꿉니다."""
    return None if math.isnan(value) or math.isinf(value) else value


def save_experiment_report(session: Session, report: ExperimentReport) -> int:
    """실험 보고서를 저장하고 실행 ID를 반환합니다."""
    run = ExperimentRun(
        name=report.name,
        method=report.method,
        gamma=report.gamma,
        sigma=report.sigma,
        n_lists=report.n_lists,
        fpr=report.fpr,
        seeds=json.dumps(report.seeds),
        mean_auc=report.mean_auc() if report.results else None,
        mean_tpr=report.mean_tpr() if report.results else None,
    )
    session.add(run)
    session.flush()
    for r in report.results:
        session.add(
            AttackResult(
                run_id=run.id,
                attack=r.attack,
                seed=r.seed,
                auc=r.auc,
                tpr_at_fpr=r.tpr_at_fpr,
                detect_rate=r.detect_rate,
                false_alarm_rate=r.false_alarm_rate,
                psnr=_nullable(r.psnr),
                ssim=_nullable(r.ssim),
            )
        )
    session.commit()
    log.info("experiment_saved", run_id=run.id, name=report.name, results=len(report.results))
    return run.id  # type: ignore[return-value]


def get_attack_results(session: Session, run_id: int) -> pd.DataFrame:
    """실행 ID의 공격별 시드 결과를 DataFrame으로 반환합니다."""
    rows = (
        session.query(AttackResult)
        .filter_by(run_id=run_id)
        .order_by(AttackResult.id)
        .all()
    )
    if not rows:
        return pd.DataFrame(columns=RESULT_COLUMNS)
    return pd.DataFrame([{col: getattr(r, col) for col in RESULT_COLUMNS} for r in rows])


def list_runs(session: Session, limit: int = 20) -> list[dict]:
    """최근 실행 목록을 반환합니다."""
    runs = (
        session.query(ExperimentRun)
        .order_by(ExperimentRun.id.desc())
        .limit(limit)
        .all()
    )
    return [
        {
            "id": r.id,
            "name": r.name,
            "method": r.method,
            "gamma": r.gamma,
            "sigma": r.sigma,
            "n_lists": r.n_lists,
            "seeds": json.loads(r.seeds),  # type: ignore[arg-type]
            "mean_auc": r.mean_auc,
            "mean_tpr": r.mean_tpr,
        }
        for r in runs
    ]
