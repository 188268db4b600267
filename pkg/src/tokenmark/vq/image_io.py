"""이미지 입출력 모듈.

바이너리 PGM(P5)/PPM(P6), maxval 255만 지원합니다. 픽셀 v ↔ 실수 v/255.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from tokenmark.errors import FormatError
from tokenmark.vq.quantizer import Image

IMAGE_SUFFIXES = (".ppm", ".pgm")
_MODES = {"L": 1, "RGB": 3}


def to_uint8(img: Image) -> np.ndarray:
    """[0,1] 실수 픽셀을 8비트로 반올림합니다."""
    return np.round(np.clip(img.pixels, 0.0, 1.0) * 255.0).astype(np.uint8)


def from_uint8(arr: np.ndarray) -> Image:
    return Image(arr.astype(np.float64) / 255.0)


def read_image(path: str | Path) -> Image:
    """PGM/PPM 파일을 읽습니다."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"이미지 파일이 없습니다: {p}")
    try:
        with PILImage.open(p) as pil:
            if pil.format != "PPM" or pil.mode not in _MODES:
                raise FormatError(
                    f"지원하지 않는 이미지 형식: {pil.format}/{pil.mode} (8비트 P5/P6만 허용)",
                    offset=0,
                )
            arr = np.array(pil, dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as e:
        raise FormatError(f"이미지를 해석할 수 없습니다: {p} ({e})", offset=0) from e
    return from_uint8(arr)


def write_image(img: Image, path: str | Path) -> None:
    """채널 수에 따라 PGM(1채널) 또는 PPM(3채널)으로 저장합니다."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    arr = to_uint8(img)
    if img.channels == 1:
        pil = PILImage.fromarray(np.ascontiguousarray(arr[:, :, 0]))
    else:
        pil = PILImage.fromarray(arr)
    pil.save(p, format="PPM")


def image_suffix(img: Image) -> str:
    return ".pgm" if img.channels == 1 else ".ppm"


def list_image_files(directory: str | Path) -> list[Path]:
    """디렉토리의 PGM/PPM 파일을 이름순으로 반환합니다."""
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"코퍼스 디렉토리가 없습니다: {d}")
    return sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def load_image_dir(directory: str | Path) -> list[Image]:
    """디렉토리의 모든 이미지를 이름순으로 로드합니다."""
    return [read_image(p) for p in list_image_files(directory)]
