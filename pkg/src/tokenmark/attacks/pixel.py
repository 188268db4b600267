"""픽셀 공간 공격 모듈.

모든 공격은 원본을 수정하지 않고, 크기와 [0,1] 범위를 보존한 새 Image를 반환합니다.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import map_coordinates, uniform_filter

from tokenmark.errors import InvalidArgumentError
from tokenmark.vq.codebook import Codebook
from tokenmark.vq.quantizer import Image, decode, encode, interpolate, quantize

ROTATE_FILL = 0.5
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def gauss_noise(img: Image, var: float, rng: np.random.Generator) -> Image:
    """픽셀마다 N(0, var) 가산 잡음 후 [0,1]로 clamp."""
    if var < 0:
        raise InvalidArgumentError(f"var는 0 이상이어야 합니다: {var}")
    if var == 0:
        return img.copy()
    noise = rng.normal(0.0, math.sqrt(var), size=img.pixels.shape)
    return Image(np.clip(img.pixels + noise, 0.0, 1.0))


def box_blur(img: Image, k: int) -> Image:
    """k×k 평균 필터 (reflect 패딩)."""
    if k < 1:
        raise InvalidArgumentError(f"k는 1 이상이어야 합니다: {k}")
    if k == 1:
        return img.copy()
    return Image(uniform_filter(img.pixels, size=(k, k, 1), mode="reflect"))


def crop_resize(img: Image, ratio: float, rng: np.random.Generator) -> Image:
    """면적 비율 ratio(변 길이 √ratio)의 무작위 축 정렬 크롭 후 원래 크기로 쌍선형 리사이즈."""
    if not 0.0 < ratio <= 1.0:
        raise InvalidArgumentError(f"ratio는 (0, 1] 범위여야 합니다: {ratio}")
    side = math.sqrt(ratio)
    ch = min(img.height, max(1, round(img.height * side)))
    cw = min(img.width, max(1, round(img.width * side)))
    top = int(rng.integers(0, img.height - ch + 1))
    left = int(rng.integers(0, img.width - cw + 1))
    crop = img.pixels[top:top + ch, left:left + cw]
    return Image(interpolate(crop, img.height, img.width))


def rotate(img: Image, degrees: float) -> Image:
    """중심 기준 반시계 방향 회전. 쌍선형 샘플링, 범위 밖은 0.5로 채웁니다."""
    H, W = img.height, img.width
    ci, cj = (H - 1) / 2.0, (W - 1) / 2.0
    theta = math.radians(degrees)
    cos_t, sin_t = math.cos(theta), math.sin(theta)

    ii, jj = np.meshgrid(
        np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing="ij"
    )
    x_out = jj - cj
    y_out = ci - ii
    x_src = cos_t * x_out + sin_t * y_out
    y_src = -sin_t * x_out + cos_t * y_out
    rows = ci - y_src
    cols = cj + x_src

    eps = 1e-9
    inside = (rows >= -eps) & (rows <= H - 1 + eps) & (cols >= -eps) & (cols <= W - 1 + eps)
    out = np.empty_like(img.pixels)
    for c in range(img.channels):
        sampled = map_coordinates(img.pixels[:, :, c], [rows, cols], order=1, mode="nearest")
        out[:, :, c] = np.where(inside, sampled, ROTATE_FILL)
    return Image(out)


def value_jitter(img: Image, brightness: float, contrast: float) -> Image:
    """out = clamp((img − 0.5)·contrast + 0.5 + brightness)."""
    if contrast < 0:
        raise InvalidArgumentError(f"contrast는 0 이상이어야 합니다: {contrast}")
    return Image(np.clip((img.pixels - 0.5) * contrast + 0.5 + brightness, 0.0, 1.0))


def saturation_scale(img: Image, factor: float) -> Image:
    """픽셀별 휘도를 기준으로 채도를 factor배 합니다. 흑백 이미지는 그대로입니다."""
    if factor < 0:
        raise InvalidArgumentError(f"factor는 0 이상이어야 합니다: {factor}")
    if img.channels == 1:
        return img.copy()
    luma = (img.pixels @ LUMA_WEIGHTS)[:, :, np.newaxis]
    return Image(np.clip(luma + factor * (img.pixels - luma), 0.0, 1.0))


def pixel_quantize(img: Image, levels: int) -> Image:
    """채널마다 levels 단계 균일 양자화 (JPEG 대용)."""
    if not 2 <= levels <= 256:
        raise InvalidArgumentError(f"levels는 [2, 256] 범위여야 합니다: {levels}")
    step = levels - 1
    return Image(np.round(img.pixels * step) / step)


def foreign_requantize(img: Image, cb2: Codebook, patch: int) -> Image:
    """독립적으로 학습된 다른 코드북으로 encode/quantize/decode (재생성 공격 대용)."""
    return decode(quantize(encode(img, patch), cb2), cb2, patch)
