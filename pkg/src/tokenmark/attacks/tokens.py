"""토큰 공간 공격 모듈."""

from __future__ import annotations

import numpy as np

from tokenmark.errors import InvalidArgumentError
from tokenmark.vq.quantizer import TokenMap


def token_flip(q: TokenMap, p: float, rng: np.random.Generator) -> TokenMap:
    """각 토큰을 확률 p로 균등 무작위 토큰으로 독립 치환합니다."""
    if not 0.0 <= p <= 1.0:
        raise InvalidArgumentError(f"p는 [0, 1] 범위여야 합니다: {p}")
    flip = rng.random(q.tokens.shape) < p
    replacement = rng.integers(q.vocab_size, size=q.tokens.shape)
    return q.with_tokens(np.where(flip, replacement, q.tokens))


def expected_green_after_flip(green_fraction: float, p: float, gamma_eff: float, hw: int) -> float:
    """token_flip 이후 원래 리스트의 기대 그린 카운트 (1−p)·hw·g₀ + p·γ·hw."""
    return (1.0 - p) * hw * green_fraction + p * gamma_eff * hw
