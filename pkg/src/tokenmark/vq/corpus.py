"""데스크 규모 실험용 코퍼스 모듈.

부드러운 합성 이미지 생성, 패치 추출, 코퍼스 일괄 양자화를 제공합니다.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from tokenmark.errors import InvalidArgumentError
from tokenmark.logging_config import get_logger
from tokenmark.utils import job_rng
from tokenmark.vq.codebook import Codebook, PatchCorpus
from tokenmark.vq.quantizer import Image, TokenMap, encode, quantize

log = get_logger(__name__)


def synthetic_image(size: int, channels: int, rng: np.random.Generator) -> Image:
    """저주파 정현파 + 가우시안 블롭 + 선형 그라디언트로 구성된 부드러운 이미지."""
    yy, xx = np.meshgrid(np.linspace(0.0, 1.0, size), np.linspace(0.0, 1.0, size), indexing="ij")
    layers = []

    for _ in range(3):
        freq = rng.uniform(0.5, 3.0, size=2)
        phase = rng.uniform(0.0, 2 * np.pi)
        layers.append(0.15 * np.sin(2 * np.pi * (freq[0] * xx + freq[1] * yy) + phase))

    for _ in range(2):
        cy, cx = rng.uniform(0.0, 1.0, size=2)
        width = rng.uniform(0.1, 0.3)
        amp = rng.uniform(-0.3, 0.3)
        layers.append(amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width**2)))

    gx, gy = rng.uniform(-0.2, 0.2, size=2)
    layers.append(gx * (xx - 0.5) + gy * (yy - 0.5))

    stack = np.stack(layers, axis=-1)  # (size, size, L)
    mix = rng.uniform(0.6, 1.4, size=(stack.shape[-1], channels))
    offset = rng.uniform(0.35, 0.65, size=channels)
    pixels = offset + stack @ mix
    return Image(np.clip(pixels, 0.0, 1.0))


def synthetic_corpus(count: int, size: int, channels: int, seed: int) -> list[Image]:
    """시드별로 결정적인 합성 코퍼스를 생성합니다."""
    if count < 1 or size < 1:
        raise InvalidArgumentError(f"count와 size는 1 이상이어야 합니다: {count}, {size}")
    if channels not in (1, 3):
        raise InvalidArgumentError(f"channels는 1 또는 3이어야 합니다: {channels}")
    images = [synthetic_image(size, channels, job_rng(seed, i)) for i in range(count)]
    log.info("synthetic_corpus_generated", count=count, size=size, channels=channels, seed=seed)
    return images


def extract_patches(images: Sequence[Image], patch: int) -> PatchCorpus:
    """이미지들을 encode해 모든 패치 벡터를 모읍니다."""
    if not images:
        raise InvalidArgumentError("패치를 추출할 이미지가 없습니다")
    blocks = []
    for img in images:
        f = encode(img, patch)
        blocks.append(f.values.reshape(-1, f.dim))
    dims = {b.shape[1] for b in blocks}
    if len(dims) != 1:
        raise InvalidArgumentError(f"이미지들의 패치 차원이 서로 다릅니다: {sorted(dims)}")
    return PatchCorpus(np.concatenate(blocks, axis=0), source_count=len(images))


def quantize_corpus(images: Sequence[Image], cb: Codebook, patch: int) -> list[TokenMap]:
    """코퍼스 전체를 토큰 맵으로 양자화합니다."""
    return [quantize(encode(img, patch), cb) for img in images]
