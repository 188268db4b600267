"""실험/검출 결과 텍스트 포맷팅 모듈."""

from __future__ import annotations

import math
from typing import TYPE_CHECKING

from tokenmark.utils import format_pct, format_z

if TYPE_CHECKING:
    from tokenmark.eval.experiment import ExperimentReport, ExposureReport, ObservationRow
    from tokenmark.watermark.detector import DetectionResult
    from tokenmark.watermark.greenlist import PoolReport

SEPARATOR = "━━━━━━━━━━━━━━━"


def _fmt_db(value: float) -> str:
    if math.isnan(value):
        return "-"
    return "inf" if math.isinf(value) else f"{value:.2f}"


def _fmt_ratio(value: float) -> str:
    return "-" if math.isnan(value) else f"{value:.4f}"


def _fmt_optional(value: float | None) -> str:
    return "-" if value is None else _fmt_ratio(value)


def format_experiment_table(report: ExperimentReport) -> str:
    """method × attack × {AUC, T@1F} 표와 시드별 값을 만듭니다."""
    lines = [
        f"실험: {report.name}",
        f"방식: {report.method} | γ={report.gamma:g} | σ={report.sigma:g} | N={report.n_lists}",
        f"시드: {', '.join(str(s) for s in report.seeds)} | FPR 기준: {format_pct(report.fpr)}",
        SEPARATOR,
        f"{'attack':<16}{'AUC':>8}{'T@F':>8}{'detect':>9}{'PSNR':>8}{'SSIM':>8}",
    ]
    summary = report.summary()
    for row in summary.itertuples(index=False):
        lines.append(
            f"{row.attack:<16}{row.auc:>8.3f}{row.tpr_at_fpr:>8.3f}{row.detect_rate:>9.3f}"
            f"{_fmt_db(row.psnr):>8}{_fmt_ratio(row.ssim):>8}"
        )
    lines.append(SEPARATOR)
    lines.append("시드별:")
    for r in report.results:
        lines.append(
            f"  seed={r.seed} {r.attack}: AUC {r.auc:.4f} | T@F {r.tpr_at_fpr:.4f} "
            f"| z̄+ {format_z(r.z_pos_mean)} | z̄- {format_z(r.z_neg_mean)}"
        )
    return "\n".join(lines)


def format_detection(result: DetectionResult) -> str:
    """사람이 읽는 검출 요약."""
    verdict = "워터마크 검출" if result.decision else "워터마크 없음"
    return (
        f"{verdict}\n"
        f"최적 리스트: {result.best_list} ({result.green_counts[result.best_list]}/{result.hw} 그린)\n"
        f"z: {format_z(result.z)} (임계값 {result.z_threshold:.4f}, γ_eff {result.gamma_eff:.4f})"
    )


def format_pool_report(report: PoolReport, green_size: int) -> str:
    hist = ", ".join(f"{k}:{v}" for k, v in sorted(report.col_histogram.items()))
    return (
        f"행 합 조건: {'만족' if report.row_ok else '위반'} (green_size={green_size})\n"
        f"최대 열 편차: {report.max_col_dev:.4f}\n"
        f"열 합 분포: {hist}"
    )


def format_observation_table(rows: list[ObservationRow]) -> str:
    """코드북 축소 스윕 표."""
    lines = [f"{'ratio':>6}{'codes':>7}{'consistency':>13}{'PSNR':>8}{'SSIM':>8}", SEPARATOR]
    for r in rows:
        lines.append(
            f"{r.ratio:>6.2f}{r.retained:>7}{r.consistency:>13.4f}"
            f"{_fmt_db(r.psnr):>8}{_fmt_ratio(r.ssim):>8}"
        )
    return "\n".join(lines)


def format_exposure_report(report: ExposureReport) -> str:
    return (
        f"토큰 맵: {report.n_maps}개 | 리스트: N={report.n_lists}\n"
        f"추정 리스트 최대 겹침: {format_pct(report.overlap)}\n"
        f"그린 지정 변동계수: {report.assignment_cv:.4f}"
    )


def format_runs_table(runs: list[dict]) -> str:
    """list_runs 결과 표. 최신 실행이 먼저 옵니다."""
    if not runs:
        return "저장된 실행이 없습니다"
    lines = [f"{'id':>4}  {'name':<20}{'method':<8}{'γ':>6}{'N':>5}{'AUC':>8}{'T@F':>8}", SEPARATOR]
    for r in runs:
        lines.append(
            f"{r['id']:>4}  {r['name']:<20}{r['method']:<8}{r['gamma']:>6g}{r['n_lists']:>5}"
            f"{_fmt_optional(r['mean_auc']):>8}{_fmt_optional(r['mean_tpr']):>8}"
        )
    return "\n".join(lines)
