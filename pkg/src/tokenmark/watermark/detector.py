"""워터마크 검출 모듈.

그린 토큰 수를 세고 one-proportion z-검정을 수행합니다. 다중 리스트 풀에서는
모든 리스트 중 최대 카운트를 사용하며, 그 귀무분포로 임계값을 보정합니다.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import norm

from tokenmark.errors import FormatError, InvalidArgumentError
from tokenmark.logging_config import get_logger
from tokenmark.vq.codebook import Codebook
from tokenmark.vq.quantizer import (
    Image,
    ScaleSchedule,
    TokenMap,
    encode,
    quantize,
    quantize_multiscale,
)
from tokenmark.watermark.greenlist import GreenListPool

log = get_logger(__name__)

RECORD_KEYS = ("green_counts", "best_list", "z", "gamma_eff", "hw", "z_threshold", "decision")


@dataclass
class DetectionResult:
    """검출 결과. decision = z > z_threshold."""

    green_counts: list[int]
    best_list: int
    z: float
    gamma_eff: float
    hw: int
    z_threshold: float
    decision: bool

    @property
    def p_value(self) -> float:
        """단일 리스트 기준 단측 p-value (다중 리스트 보정 없음)."""
        return float(norm.sf(self.z))

    def to_record(self) -> str:
        """고정 키 순서의 한 줄 JSON 레코드."""
        data = asdict(self)
        return json.dumps({k: data[k] for k in RECORD_KEYS}, ensure_ascii=False)

    @classmethod
    def from_record(cls, line: str) -> DetectionResult:
        try:
            data = json.loads(line)
            return cls(
                green_counts=[int(c) for c in data["green_counts"]],
                best_list=int(data["best_list"]),
                z=float(data["z"]),
                gamma_eff=float(data["gamma_eff"]),
                hw=int(data["hw"]),
                z_threshold=float(data["z_threshold"]),
                decision=bool(data["decision"]),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise FormatError(f"검출 레코드를 해석할 수 없습니다: {e}", offset=0) from e


def _check_vocab(q: TokenMap, pool: GreenListPool) -> None:
    if q.vocab_size != pool.vocab_size:
        raise InvalidArgumentError(
            f"어휘 크기 불일치: token map V={q.vocab_size}, pool V={pool.vocab_size}"
        )


def count_green(q: TokenMap, pool: GreenListPool, list_id: int) -> int:
    """|{(i,j) : q[i,j] ∈ G_list_id}|."""
    _check_vocab(q, pool)
    pool.check_list_id(list_id)
    return int(pool.matrix[list_id][q.tokens].sum())


def green_counts(q: TokenMap, pool: GreenListPool) -> np.ndarray:
    """모든 리스트의 그린 카운트 (길이 N). 토큰 히스토그램 × Mᵀ로 계산합니다."""
    _check_vocab(q, pool)
    hist = np.bincount(q.tokens.ravel(), minlength=pool.vocab_size)
    return pool.matrix.astype(np.int64) @ hist


def z_score(count: int, gamma_eff: float, hw: int) -> float:
    """z = (count − γ·hw) / √(γ(1−γ)·hw)."""
    if not 0.0 < gamma_eff < 1.0:
        raise InvalidArgumentError(f"gamma_eff가 0 또는 1이면 분산이 0입니다: {gamma_eff}")
    if hw < 1:
        raise InvalidArgumentError(f"hw는 1 이상이어야 합니다: {hw}")
    return (count - gamma_eff * hw) / math.sqrt(gamma_eff * (1.0 - gamma_eff) * hw)


def detect_tokenmap(q: TokenMap, pool: GreenListPool, z_th: float) -> DetectionResult:
    """모든 리스트를 평가해 최대 카운트(동률 시 최소 인덱스)로 z-검정합니다."""
    counts = green_counts(q, pool)
    best = int(np.argmax(counts))
    z = z_score(int(counts[best]), pool.gamma_eff, q.size)
    result = DetectionResult(
        green_counts=[int(c) for c in counts],
        best_list=best,
        z=z,
        gamma_eff=pool.gamma_eff,
        hw=q.size,
        z_threshold=z_th,
        decision=bool(z > z_th),
    )
    log.debug("detection_completed", best_list=best, z=round(z, 4), decision=result.decision)
    return result


def detect_image(
    img: Image,
    cb: Codebook,
    pool: GreenListPool,
    patch: int,
    z_th: float,
    sched: ScaleSchedule | None = None,
) -> DetectionResult:
    """코드북과 풀만으로 검출합니다. 다중 스케일이면 최대 스케일 맵만 사용합니다."""
    pool.check_codebook(cb)
    f = encode(img, patch)
    q = quantize(f, cb) if sched is None else quantize_multiscale(f, cb, sched).largest
    return detect_tokenmap(q, pool, z_th)


def null_max_z(
    pool: GreenListPool,
    hw: int,
    trials: int,
    rng: np.random.Generator,
    batch: int = 1000,
) -> np.ndarray:
    """균등 토큰 귀무 맵들에 대한 최대-리스트 z 표본 (길이 trials)."""
    if trials < 1:
        raise InvalidArgumentError(f"trials는 1 이상이어야 합니다: {trials}")
    denom = math.sqrt(pool.gamma_eff * (1.0 - pool.gamma_eff) * hw)
    if denom == 0.0:
        raise InvalidArgumentError(f"gamma_eff가 0 또는 1이면 분산이 0입니다: {pool.gamma_eff}")
    # 배치당 불리언 텐서 N×b×hw를 약 8M 원소로 제한
    batch = max(1, min(batch, (1 << 23) // (pool.list_count * hw)))
    out = np.empty(trials, dtype=np.float64)
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        tokens = rng.integers(pool.vocab_size, size=(b, hw))
        counts = pool.matrix[:, tokens].sum(axis=2)  # (N, b)
        out[done:done + b] = (counts.max(axis=0) - pool.gamma_eff * hw) / denom
        done += b
    return out


def calibrate_threshold(
    pool: GreenListPool,
    hw: int,
    target_fpr: float,
    trials: int,
    rng: np.random.Generator,
) -> float:
    """몬테카를로 귀무 표본에서 z > z_th 비율이 target_fpr 이하가 되는 가장 작은 표본값.

    카운트가 이산적이라 실제 FPR은 목표보다 낮을 수 있습니다.
    """
    if not 0.0 < target_fpr < 1.0:
        raise InvalidArgumentError(f"target_fpr은 (0, 1) 범위여야 합니다: {target_fpr}")
    if trials < 1000:
        raise InvalidArgumentError(f"trials는 1000 이상이어야 합니다: {trials}")
    null = np.sort(null_max_z(pool, hw, trials, rng))
    idx = math.ceil((1.0 - target_fpr) * trials) - 1
    z_th = float(null[idx])
    log.info(
        "threshold_calibrated",
        n_lists=pool.list_count, hw=hw, target_fpr=target_fpr, trials=trials, z_threshold=z_th,
    )
    return z_th
