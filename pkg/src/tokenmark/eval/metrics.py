"""평가 지표 모듈.

토큰 일관성, PSNR/SSIM, ROC-AUC, TPR@FPR과 화이트박스 빈도 분석 지표를 제공합니다.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import rankdata

from tokenmark.errors import InvalidArgumentError
from tokenmark.vq.quantizer import Image, TokenMap
from tokenmark.watermark.greenlist import GreenListPool

SSIM_WINDOW = 8
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


@dataclass
class ScoreSet:
    """워터마크(positives)와 클린(negatives) 이미지의 검출 점수."""

    positives: np.ndarray
    negatives: np.ndarray

    def __post_init__(self) -> None:
        self.positives = np.asarray(self.positives, dtype=np.float64).ravel()
        self.negatives = np.asarray(self.negatives, dtype=np.float64).ravel()
        if self.positives.size == 0 or self.negatives.size == 0:
            raise InvalidArgumentError("positives와 negatives는 비어 있을 수 없습니다")

    def swapped(self) -> ScoreSet:
        return ScoreSet(self.negatives, self.positives)


def token_consistency(q1: TokenMap, q2: TokenMap) -> float:
    """두 토큰 맵에서 토큰이 일치하는 위치의 비율."""
    if q1.shape != q2.shape or q1.vocab_size != q2.vocab_size:
        raise InvalidArgumentError(
            f"토큰 맵 형태가 다릅니다: {q1.shape}/V={q1.vocab_size} vs {q2.shape}/V={q2.vocab_size}"
        )
    return float(np.mean(q1.tokens == q2.tokens))


def _check_same_shape(a: Image, b: Image) -> None:
    if a.pixels.shape != b.pixels.shape:
        raise InvalidArgumentError(f"이미지 크기가 다릅니다: {a.pixels.shape} vs {b.pixels.shape}")


def psnr(a: Image, b: Image) -> float:
    """10·log10(1/MSE) dB. 동일한 이미지는 +inf."""
    _check_same_shape(a, b)
    mse = float(np.mean((a.pixels - b.pixels) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def ssim(a: Image, b: Image) -> float:
    """단일 스케일 SSIM. 8×8 유효 윈도(이미지가 작으면 min(8, H, W)), 채널 평균."""
    _check_same_shape(a, b)
    win = min(SSIM_WINDOW, a.height, a.width)
    values = []
    for c in range(a.channels):
        wx = sliding_window_view(a.pixels[:, :, c], (win, win))
        wy = sliding_window_view(b.pixels[:, :, c], (win, win))
        mu_x = wx.mean(axis=(-2, -1))
        mu_y = wy.mean(axis=(-2, -1))
        var_x = wx.var(axis=(-2, -1))
        var_y = wy.var(axis=(-2, -1))
        cov = (wx * wy).mean(axis=(-2, -1)) - mu_x * mu_y
        num = (2 * mu_x * mu_y + SSIM_C1) * (2 * cov + SSIM_C2)
        den = (mu_x**2 + mu_y**2 + SSIM_C1) * (var_x + var_y + SSIM_C2)
        values.append(float(np.mean(num / den)))
    return float(np.mean(values))


def roc_auc(s: ScoreSet) -> float:
    """Mann-Whitney AUC = P(pos > neg) + ½·P(pos = neg). 순위 합으로 정확히 계산합니다."""
    n_pos, n_neg = s.positives.size, s.negatives.size
    ranks = rankdata(np.concatenate([s.positives, s.negatives]))
    u = ranks[:n_pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def tpr_at_fpr(s: ScoreSet, fpr: float) -> float:
    """경험적 FPR ≤ fpr을 만족하는 가장 작은 임계값 t에서 TPR = #{pos > t} / n_pos."""
    if not 0.0 <= fpr <= 1.0:
        raise InvalidArgumentError(f"fpr은 [0, 1] 범위여야 합니다: {fpr}")
    neg_desc = np.sort(s.negatives)[::-1]
    m = math.floor(fpr * neg_desc.size + 1e-12)
    threshold = neg_desc[m] if m < neg_desc.size else -math.inf
    return float(np.mean(s.positives > threshold))


def token_frequency(maps: Sequence[TokenMap], V: int) -> np.ndarray:
    """토큰 맵 집합의 정규화된 토큰 히스토그램 (길이 V)."""
    if not maps:
        raise InvalidArgumentError("토큰 맵이 없습니다")
    hist = np.zeros(V, dtype=np.float64)
    for q in maps:
        if q.vocab_size != V:
            raise InvalidArgumentError(f"어휘 크기 불일치: map V={q.vocab_size}, V={V}")
        hist += np.bincount(q.tokens.ravel(), minlength=V)
    return hist / hist.sum()


def green_assignment_cv(pool: GreenListPool, n_maps: int, rng: np.random.Generator) -> float:
    """맵마다 균등하게 리스트를 뽑을 때, 토큰별 그린 지정 빈도의 변동계수(std/mean)."""
    if n_maps < 1:
        raise InvalidArgumentError(f"n_maps는 1 이상이어야 합니다: {n_maps}")
    draws = rng.integers(pool.list_count, size=n_maps)
    usage = np.bincount(draws, minlength=pool.list_count).astype(np.float64)
    freq = usage @ pool.matrix / n_maps
    return float(freq.std() / freq.mean())


def estimate_green_list(maps: Sequence[TokenMap], green_size: int) -> np.ndarray:
    """빈도 상위 green_size개 토큰을 그린 리스트로 추정합니다 (동률 시 낮은 인덱스 우선)."""
    if not maps:
        raise InvalidArgumentError("토큰 맵이 없습니다")
    freq = token_frequency(maps, maps[0].vocab_size)
    if not 1 <= green_size <= freq.size:
        raise InvalidArgumentError(f"green_size 범위 초과: {green_size}")
    order = np.argsort(-freq, kind="stable")
    return np.sort(order[:green_size])


def estimation_overlap(estimate: np.ndarray, pool: GreenListPool) -> float:
    """추정 리스트와 실제 리스트들의 최대 겹침 비율 |est ∩ G_i| / green_size."""
    mask = np.zeros(pool.vocab_size, dtype=bool)
    mask[np.asarray(estimate, dtype=np.int64)] = True
    overlaps = (pool.matrix & mask).sum(axis=1)
    return float(overlaps.max() / pool.green_size)
