"""워터마크 삽입 모듈.

생성 중 로짓 바이어스(hard: 레드 토큰 마스킹, soft: 그린 토큰에 σ 가산)와
생성 후 최근접 그린 토큰 치환(post)을 제공합니다.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from tokenmark.errors import InvalidArgumentError, InvalidStateError
from tokenmark.logging_config import get_logger
from tokenmark.vq.codebook import Codebook
from tokenmark.vq.quantizer import (
    Image,
    MultiScaleTokenMaps,
    ScaleSchedule,
    TokenMap,
    decode,
    encode,
    quantize,
)
from tokenmark.watermark.greenlist import GreenListPool, SubstitutionTable
from tokenmark.watermark.sources import LogitSource

log = get_logger(__name__)

# 마스킹된 로짓. softmax 정규화에서 명시적으로 제외됩니다.
NEG_INF = float(np.finfo(np.float64).min)


class BiasMode(Enum):
    HARD = "hard"
    SOFT = "soft"
    NONE = "none"


class GenerationOrder(Enum):
    RASTER = "raster"
    RANDOM = "random"


@dataclass(frozen=True)
class BiasConfig:
    """생성 중 바이어스 설정. sigma는 soft 모드에서만 사용됩니다."""

    mode: BiasMode
    sigma: float = 0.0
    list_id: int = 0
    temperature: float = 1.0

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise InvalidArgumentError(f"sigma는 0 이상이어야 합니다: {self.sigma}")
        if not self.temperature > 0:
            raise InvalidArgumentError(f"temperature는 0보다 커야 합니다: {self.temperature}")
        if self.list_id < 0:
            raise InvalidArgumentError(f"list_id는 0 이상이어야 합니다: {self.list_id}")

    def unbiased(self) -> BiasConfig:
        return BiasConfig(BiasMode.NONE, self.sigma, self.list_id, self.temperature)


def _check_logits(l: np.ndarray, V: int) -> np.ndarray:
    l = np.asarray(l, dtype=np.float64)
    if l.shape != (V,):
        raise InvalidArgumentError(f"로짓 길이({l.shape})가 어휘 크기({V})와 다릅니다")
    return l


def bias_logits_hard(l: np.ndarray, pool: GreenListPool, list_id: int) -> np.ndarray:
    """레드 토큰 로짓을 NEG_INF로 바꿉니다. 그린 토큰은 그대로입니다."""
    l = _check_logits(l, pool.vocab_size)
    pool.check_list_id(list_id)
    if not np.all(np.isfinite(l)):
        raise InvalidArgumentError("hard 바이어스 입력 로짓은 모두 유한해야 합니다")
    return np.where(pool.matrix[list_id], l, NEG_INF)


def bias_logits_soft(l: np.ndarray, pool: GreenListPool, list_id: int, sigma: float) -> np.ndarray:
    """l̂ = l + σ·1[i∈G]."""
    l = _check_logits(l, pool.vocab_size)
    pool.check_list_id(list_id)
    if sigma < 0:
        raise InvalidArgumentError(f"sigma는 0 이상이어야 합니다: {sigma}")
    return l + sigma * pool.matrix[list_id]


def apply_bias(l: np.ndarray, pool: GreenListPool, cfg: BiasConfig) -> np.ndarray:
    if cfg.mode is BiasMode.HARD:
        return bias_logits_hard(l, pool, cfg.list_id)
    if cfg.mode is BiasMode.SOFT:
        return bias_logits_soft(l, pool, cfg.list_id, cfg.sigma)
    return _check_logits(l, pool.vocab_size)


def softmax_probs(l: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """softmax(l / temperature). NEG_INF(또는 -inf) 항목의 확률은 정확히 0입니다."""
    if not temperature > 0:
        raise InvalidArgumentError(f"temperature는 0보다 커야 합니다: {temperature}")
    l = np.asarray(l, dtype=np.float64)
    live = l > NEG_INF
    if not np.any(live):
        raise InvalidStateError("모든 로짓이 -inf라 샘플링할 수 없습니다")
    scaled = l[live] / temperature
    weights = np.exp(scaled - scaled.max())
    probs = np.zeros_like(l)
    probs[live] = weights / weights.sum()
    return probs


def sample_token(l: np.ndarray, temperature: float, rng: np.random.Generator) -> int:
    """softmax(l / temperature)에서 토큰 하나를 샘플링합니다."""
    probs = softmax_probs(l, temperature)
    return int(rng.choice(probs.shape[0], p=probs))


def choose_list_id(pool: GreenListPool, rng: np.random.Generator) -> int:
    """이미지마다 풀에서 그린 리스트 하나를 균등하게 고릅니다."""
    return int(rng.integers(pool.list_count))


def generate_watermarked(
    src: LogitSource,
    pool: GreenListPool,
    cfg: BiasConfig,
    shape: tuple[int, int],
    order: GenerationOrder,
    rng: np.random.Generator,
    codebook_id: int | None = None,
    prefix: list[int] | None = None,
    position_offset: int = 0,
) -> TokenMap:
    """h·w개 토큰을 주어진 순서로 생성하며 매 단계 바이어스를 적용합니다.

    그린 리스트는 위치와 무관한 전역 분할이므로 생성 순서가 바이어스에 영향을 주지 않습니다.
    source에는 position = position_offset + 셀 인덱스(래스터)가 전달되고,
    context는 prefix 뒤에 이번 맵에서 방출된 토큰이 방출 순서대로 붙습니다.
    """
    if src.vocab_size != pool.vocab_size:
        raise InvalidArgumentError(
            f"어휘 크기 불일치: source V={src.vocab_size}, pool V={pool.vocab_size}"
        )
    h, w = shape
    if h < 1 or w < 1:
        raise InvalidArgumentError(f"격자 크기는 1 이상이어야 합니다: {shape}")
    if cfg.mode is not BiasMode.NONE:
        pool.check_list_id(cfg.list_id)

    cells = h * w
    visit = np.arange(cells) if order is GenerationOrder.RASTER else rng.permutation(cells)
    context = list(prefix) if prefix else []
    tokens = np.empty(cells, dtype=np.int64)
    for cell in visit:
        logits = apply_bias(src.next_logits(context, position_offset + int(cell)), pool, cfg)
        token = sample_token(logits, cfg.temperature, rng)
        tokens[cell] = token
        context.append(token)

    cb_id = pool.codebook_id if codebook_id is None else codebook_id
    return TokenMap(tokens.reshape(h, w), pool.vocab_size, cb_id)


def generate_watermarked_multiscale(
    src: LogitSource,
    pool: GreenListPool,
    cfg: BiasConfig,
    sched: ScaleSchedule,
    rng: np.random.Generator,
    order: GenerationOrder = GenerationOrder.RASTER,
    codebook_id: int | None = None,
) -> MultiScaleTokenMaps:
    """스케일 1..K−1은 바이어스 없이, 마지막 스케일 K에만 cfg를 적용해 생성합니다."""
    maps: list[TokenMap] = []
    context: list[int] = []
    offset = 0
    last = len(sched) - 1
    for k, scale in enumerate(sched.scales):
        step_cfg = cfg if k == last else cfg.unbiased()
        q = generate_watermarked(
            src, pool, step_cfg, scale, order, rng,
            codebook_id=codebook_id, prefix=context, position_offset=offset,
        )
        maps.append(q)
        context.extend(int(t) for t in q.tokens.ravel())
        offset += q.size
    cb_id = pool.codebook_id if codebook_id is None else codebook_id
    return MultiScaleTokenMaps(maps, cb_id)


def embed_posthoc(
    img: Image,
    cb: Codebook,
    pool: GreenListPool,
    list_id: int,
    patch: int,
    table: SubstitutionTable | None = None,
) -> tuple[Image, TokenMap]:
    """quantize → 레드 토큰을 최근접 그린 토큰으로 치환 → decode.

    반환 토큰 맵은 전부 그린이며 원본 이미지는 수정하지 않습니다.
    여러 이미지를 처리할 때는 같은 SubstitutionTable을 넘겨 재사용합니다.
    """
    pool.check_list_id(list_id)
    if table is None:
        table = SubstitutionTable(cb, pool)
    q = quantize(encode(img, patch), cb)
    q_wm = q.with_tokens(table.table(list_id)[q.tokens])
    return decode(q_wm, cb, patch), q_wm
