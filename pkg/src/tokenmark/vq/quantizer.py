"""양자화 파이프라인 모듈.

이미지 → 특징 맵(encode) → 토큰 맵(quantize) → 이미지(decode)의 장난감 VQ 파이프라인과
다중 스케일 잔차 양자화를 제공합니다. 인코더/디코더는 비중첩 패치 reshape입니다.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import map_coordinates

from tokenmark.errors import FormatError, InvalidArgumentError
from tokenmark.logging_config import get_logger
from tokenmark.utils import FORMAT_VERSION, BinaryReader, write_atomic
from tokenmark.vq.codebook import Codebook, nearest_codes

log = get_logger(__name__)

TOKENMAP_MAGIC = b"LBWT"


@dataclass
class Image:
    """H×W×Ch 픽셀 (실수, [0,1])."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        pixels = np.asarray(self.pixels, dtype=np.float64)
        if pixels.ndim == 2:
            pixels = pixels[:, :, np.newaxis]
        if pixels.ndim != 3 or pixels.shape[2] not in (1, 3):
            raise InvalidArgumentError(f"이미지는 H×W×(1|3) 형태여야 합니다: {pixels.shape}")
        if pixels.shape[0] < 1 or pixels.shape[1] < 1:
            raise InvalidArgumentError("이미지 크기는 1 이상이어야 합니다")
        if not np.all(np.isfinite(pixels)):
            raise InvalidArgumentError("이미지에 유한하지 않은 픽셀이 있습니다")
        self.pixels = np.clip(pixels, 0.0, 1.0)

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def channels(self) -> int:
        return int(self.pixels.shape[2])

    def copy(self) -> Image:
        return Image(self.pixels.copy())


@dataclass
class FeatureMap:
    """h×w×C 특징 맵."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3:
            raise InvalidArgumentError(f"특징 맵은 h×w×C 형태여야 합니다: {values.shape}")
        self.values = values

    @property
    def h(self) -> int:
        return int(self.values.shape[0])

    @property
    def w(self) -> int:
        return int(self.values.shape[1])

    @property
    def dim(self) -> int:
        return int(self.values.shape[2])


@dataclass
class TokenMap:
    """h×w 코드 인덱스 격자."""

    tokens: np.ndarray
    vocab_size: int
    codebook_id: int

    def __post_init__(self) -> None:
        tokens = np.asarray(self.tokens)
        if tokens.ndim != 2:
            raise InvalidArgumentError(f"토큰 맵은 2차원이어야 합니다: {tokens.shape}")
        tokens = tokens.astype(np.int64)
        if tokens.size and (tokens.min() < 0 or tokens.max() >= self.vocab_size):
            raise InvalidArgumentError(f"토큰이 [0, {self.vocab_size}) 범위를 벗어났습니다")
        self.tokens = tokens

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.tokens.shape[0]), int(self.tokens.shape[1]))

    @property
    def size(self) -> int:
        return int(self.tokens.size)

    def with_tokens(self, tokens: np.ndarray) -> TokenMap:
        return TokenMap(tokens, self.vocab_size, self.codebook_id)


@dataclass(frozen=True)
class ScaleSchedule:
    """다중 스케일 (h_k, w_k) 목록. 면적이 엄격히 증가하고 마지막이 전체 해상도입니다."""

    scales: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        scales = tuple((int(h), int(w)) for h, w in self.scales)
        if not scales:
            raise InvalidArgumentError("스케일 스케줄이 비어 있습니다")
        if any(h < 1 or w < 1 for h, w in scales):
            raise InvalidArgumentError(f"스케일 크기는 1 이상이어야 합니다: {scales}")
        areas = [h * w for h, w in scales]
        if any(b <= a for a, b in zip(areas, areas[1:])):
            raise InvalidArgumentError(f"스케일 면적이 엄격히 증가해야 합니다: {scales}")
        object.__setattr__(self, "scales", scales)

    @classmethod
    def parse(cls, text: str) -> ScaleSchedule:
        """"1x1,2x2,4x4" 형식 문자열을 파싱합니다."""
        try:
            scales = tuple(
                (int(h), int(w)) for h, w in (part.lower().split("x") for part in text.split(","))
            )
        except ValueError as e:
            raise InvalidArgumentError(f"스케일 스케줄 형식 오류: '{text}'") from e
        return cls(scales)

    @property
    def final(self) -> tuple[int, int]:
        return self.scales[-1]

    def __len__(self) -> int:
        return len(self.scales)


@dataclass
class MultiScaleTokenMaps:
    """스케줄에 대응하는 K개의 토큰 맵."""

    maps: list[TokenMap]
    codebook_id: int

    @property
    def largest(self) -> TokenMap:
        return self.maps[-1]


def _check_patch(height: int, width: int, patch: int) -> None:
    if patch < 1 or height % patch != 0 or width % patch != 0:
        raise InvalidArgumentError(f"patch({patch})가 이미지 크기 {height}×{width}를 나누지 않습니다")


def encode(img: Image, patch: int) -> FeatureMap:
    """비중첩 패치를 (행, 열, 채널) 순서로 펼쳐 특징 맵을 만듭니다."""
    H, W, ch = img.pixels.shape
    _check_patch(H, W, patch)
    h, w = H // patch, W // patch
    values = (
        img.pixels.reshape(h, patch, w, patch, ch)
        .transpose(0, 2, 1, 3, 4)
        .reshape(h, w, patch * patch * ch)
    )
    return FeatureMap(values.copy())


def _unpatchify(values: np.ndarray, patch: int) -> np.ndarray:
    h, w, C = values.shape
    if C % (patch * patch) != 0:
        raise InvalidArgumentError(f"특징 차원 {C}가 patch²({patch * patch})의 배수가 아닙니다")
    ch = C // (patch * patch)
    if ch not in (1, 3):
        raise InvalidArgumentError(f"채널 수는 1 또는 3이어야 합니다: {ch}")
    return (
        values.reshape(h, w, patch, patch, ch)
        .transpose(0, 2, 1, 3, 4)
        .reshape(h * patch, w * patch, ch)
    )


def features_to_image(f: FeatureMap, patch: int) -> Image:
    """특징 맵을 이미지로 되돌립니다 ([0,1]로 clamp)."""
    return Image(np.clip(_unpatchify(f.values, patch), 0.0, 1.0))


def quantize(f: FeatureMap, cb: Codebook) -> TokenMap:
    """격자 셀마다 nearest_code를 적용합니다."""
    if f.dim != cb.dim:
        raise InvalidArgumentError(f"특징 차원({f.dim})이 코드북 차원({cb.dim})과 다릅니다")
    tokens = nearest_codes(cb, f.values.reshape(-1, f.dim)).reshape(f.h, f.w)
    return TokenMap(tokens, cb.vocab_size, cb.id)


def lookup_map(q: TokenMap, cb: Codebook) -> np.ndarray:
    """토큰 맵을 코드 벡터 격자(h×w×C, double)로 바꿉니다."""
    if q.codebook_id != cb.id:
        raise InvalidArgumentError("토큰 맵의 codebook_id가 코드북과 일치하지 않습니다")
    return cb.as_float64()[q.tokens]


def decode(q: TokenMap, cb: Codebook, patch: int) -> Image:
    """x̂ = D(lookup(Z, q)): 토큰을 코드 벡터 패치로 바꾸고 [0,1]로 clamp합니다."""
    return features_to_image(FeatureMap(lookup_map(q, cb)), patch)


def interpolate(grid: np.ndarray, h2: int, w2: int) -> np.ndarray:
    """쌍선형 리샘플링.

    출력 셀 (i,j)의 원본 좌표는 ((i+0.5)·h/h2 − 0.5, (j+0.5)·w/w2 − 0.5)이며 경계로 clamp됩니다.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 3:
        raise InvalidArgumentError(f"격자는 h×w×C 형태여야 합니다: {grid.shape}")
    h, w, C = grid.shape
    if min(h, w, h2, w2) < 1:
        raise InvalidArgumentError(f"격자 크기는 1 이상이어야 합니다: {h}×{w} → {h2}×{w2}")
    if (h, w) == (h2, w2):
        return grid.copy()

    rows = np.clip((np.arange(h2) + 0.5) * (h / h2) - 0.5, 0.0, h - 1)
    cols = np.clip((np.arange(w2) + 0.5) * (w / w2) - 0.5, 0.0, w - 1)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    out = np.empty((h2, w2, C), dtype=np.float64)
    for c in range(C):
        out[:, :, c] = map_coordinates(grid[:, :, c], [rr, cc], order=1, mode="nearest")
    return out


def quantize_multiscale(
    f: FeatureMap, cb: Codebook, sched: ScaleSchedule
) -> MultiScaleTokenMaps:
    """잔차 다중 스케일 양자화.

    r_k를 (h_k, w_k)로 축소해 양자화하고, 양자화된 맵을 (h_K, w_K)로 확대해 잔차에서 뺍니다.
    """
    if sched.final != (f.h, f.w):
        raise InvalidArgumentError(f"최종 스케일 {sched.final}이 특징 맵 {f.h}×{f.w}와 다릅니다")
    if f.dim != cb.dim:
        raise InvalidArgumentError(f"특징 차원({f.dim})이 코드북 차원({cb.dim})과 다릅니다")

    codes = cb.as_float64()
    residual = f.values.copy()
    maps: list[TokenMap] = []
    for hk, wk in sched.scales:
        down = interpolate(residual, hk, wk)
        tokens = nearest_codes(cb, down.reshape(-1, f.dim)).reshape(hk, wk)
        maps.append(TokenMap(tokens, cb.vocab_size, cb.id))
        residual = residual - interpolate(codes[tokens], f.h, f.w)
    return MultiScaleTokenMaps(maps, cb.id)


def reconstruct_multiscale(
    ms: MultiScaleTokenMaps, cb: Codebook, sched: ScaleSchedule
) -> FeatureMap:
    """f̂ = Σ_k interpolate(lookup(Z, q_k), h_K, w_K)."""
    if len(ms.maps) != len(sched):
        raise InvalidArgumentError(f"토큰 맵 수({len(ms.maps)})가 스케줄({len(sched)})과 다릅니다")
    h, w = sched.final
    total = np.zeros((h, w, cb.dim), dtype=np.float64)
    for q, scale in zip(ms.maps, sched.scales):
        if q.shape != scale:
            raise InvalidArgumentError(f"토큰 맵 크기 {q.shape}가 스케일 {scale}과 다릅니다")
        total += interpolate(lookup_map(q, cb), h, w)
    return FeatureMap(total)


def tokenmap_to_bytes(q: TokenMap) -> bytes:
    h, w = q.shape
    header = TOKENMAP_MAGIC + struct.pack(
        "<HIIIQ", FORMAT_VERSION, h, w, q.vocab_size, q.codebook_id
    )
    return header + q.tokens.astype("<u4").tobytes()


def save_tokenmap(q: TokenMap, path: str | Path) -> None:
    """토큰 맵을 LBWT 포맷으로 저장합니다."""
    write_atomic(path, tokenmap_to_bytes(q))


def load_tokenmap(path: str | Path) -> TokenMap:
    """LBWT 파일을 로드합니다."""
    reader = BinaryReader.from_path(path, "token map")
    reader.expect_magic(TOKENMAP_MAGIC)
    reader.expect_version()
    h = reader.read_u32()
    w = reader.read_u32()
    V = reader.read_u32()
    codebook_id = reader.read_u64()
    payload_at = reader.offset
    tokens = np.frombuffer(reader.read_bytes(h * w * 4), dtype="<u4").reshape(h, w)
    reader.expect_end()
    if tokens.size and int(tokens.max()) >= V:
        raise FormatError(f"토큰이 어휘 크기 {V}를 벗어났습니다", offset=payload_at)
    return TokenMap(tokens.astype(np.int64), V, codebook_id)
