"""로짓 소스 모듈.

실제 자기회귀 트랜스포머 대신 워터마크 수식을 검증하기 위한 장난감 소스를 제공합니다.
"""

from __future__ import annotations

from collections.abc import Sequence
from typing import Protocol

import numpy as np
from scipy.ndimage import uniform_filter1d

from tokenmark.errors import InvalidArgumentError
from tokenmark.logging_config import get_logger
from tokenmark.vq.quantizer import TokenMap

log = get_logger(__name__)


class LogitSource(Protocol):
    """다음 토큰 로짓 생성기. (context, position, 소스 시드)가 같으면 같은 출력을 냅니다."""

    @property
    def vocab_size(self) -> int: ...

    def next_logits(self, context: Sequence[int], position: int) -> np.ndarray: ...


class SmoothRandomSource:
    """문맥과 무관한 시드 기반 소스.

    격자 위치마다 어휘 위의 랜덤 워크를 이동 평균으로 평활화한 뒤 τ로 나눕니다.
    τ = ∞이면 균등 분포입니다.
    """

    def __init__(self, V: int, seed: int, tau: float = 1.0, window: int = 8) -> None:
        if V < 2:
            raise InvalidArgumentError(f"V는 2 이상이어야 합니다: {V}")
        if not tau > 0:
            raise InvalidArgumentError(f"tau는 0보다 커야 합니다: {tau}")
        if window < 1:
            raise InvalidArgumentError(f"window는 1 이상이어야 합니다: {window}")
        self._V = V
        self._seed = seed
        self._tau = tau
        self._window = window

    @property
    def vocab_size(self) -> int:
        return self._V

    def next_logits(self, context: Sequence[int], position: int) -> np.ndarray:
        if np.isinf(self._tau):
            return np.zeros(self._V)
        rng = np.random.default_rng([self._seed, position])
        walk = np.cumsum(rng.standard_normal(self._V))
        smooth = uniform_filter1d(walk, size=self._window, mode="nearest")
        smooth = (smooth - smooth.mean()) / (smooth.std() + 1e-12)
        return smooth / self._tau


class BigramSource:
    """양자화된 코퍼스에서 학습한 래스터 순서 바이그램 소스 (라플라스 평활화)."""

    def __init__(self, log_unigram: np.ndarray, log_bigram: np.ndarray) -> None:
        V = log_unigram.shape[0]
        if log_bigram.shape != (V, V):
            raise InvalidArgumentError(f"바이그램 행렬 크기 오류: {log_bigram.shape}, V={V}")
        self._log_unigram = log_unigram
        self._log_bigram = log_bigram

    @classmethod
    def fit(cls, maps: Sequence[TokenMap], V: int, alpha: float = 1.0) -> BigramSource:
        """토큰 맵들의 래스터 순서 인접 쌍을 세어 조건부 로그 확률을 만듭니다."""
        if alpha <= 0:
            raise InvalidArgumentError(f"alpha는 0보다 커야 합니다: {alpha}")
        unigram = np.full(V, alpha, dtype=np.float64)
        bigram = np.full((V, V), alpha, dtype=np.float64)
        for q in maps:
            if q.vocab_size != V:
                raise InvalidArgumentError(f"어휘 크기 불일치: map V={q.vocab_size}, V={V}")
            flat = q.tokens.ravel()
            np.add.at(unigram, flat, 1.0)
            np.add.at(bigram, (flat[:-1], flat[1:]), 1.0)

        log_unigram = np.log(unigram / unigram.sum())
        log_bigram = np.log(bigram / bigram.sum(axis=1, keepdims=True))
        log.info("bigram_source_fitted", maps=len(maps), vocab_size=V, alpha=alpha)
        return cls(log_unigram, log_bigram)

    @property
    def vocab_size(self) -> int:
        return int(self._log_unigram.shape[0])

    def next_logits(self, context: Sequence[int], position: int) -> np.ndarray:
        if len(context) == 0:
            return self._log_unigram.copy()
        return self._log_bigram[context[-1]].copy()


def build_source(
    kind: str, V: int, seed: int, tau: float = 1.0, maps: Sequence[TokenMap] | None = None
) -> LogitSource:
    """설정 문자열(bigram | smooth)로 소스를 만듭니다."""
    if kind == "smooth":
        return SmoothRandomSource(V, seed, tau)
    if kind == "bigram":
        if not maps:
            raise InvalidArgumentError("bigram 소스에는 학습용 토큰 맵이 필요합니다")
        return BigramSource.fit(maps, V)
    raise InvalidArgumentError(f"알 수 없는 소스 종류: '{kind}'")
