"""유틸리티 모듈.

지문(fingerprint) 해시, 작업별 난수 스트림, 바이너리 포맷 헬퍼, 출력 포맷팅을 제공합니다.
"""

from __future__ import annotations

import hashlib
import os
import struct
from pathlib import Path

import numpy as np

from tokenmark.errors import FormatError

FORMAT_VERSION = 1


def fingerprint(*parts: bytes) -> int:
    """바이트 조각들로부터 결정적인 64비트 지문을 계산합니다."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(part)
    return int.from_bytes(h.digest(), "little")


def job_rng(seed: int, job_index: int) -> np.random.Generator:
    """(seed, job_index)에서 독립적인 난수 스트림을 만듭니다.

    스케줄링 순서와 무관하게 작업별 결과가 재현됩니다.
    """
    return np.random.default_rng([seed, job_index])


class BinaryReader:
    """오프셋을 추적하는 리틀엔디언 바이너리 리더."""

    def __init__(self, data: bytes, kind: str) -> None:
        self._data = data
        self._offset = 0
        self._kind = kind

    @classmethod
    def from_path(cls, path: str | Path, kind: str) -> BinaryReader:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"{kind} 파일이 없습니다: {p}")
        return cls(p.read_bytes(), kind)

    @property
    def offset(self) -> int:
        return self._offset

    def read_bytes(self, n: int) -> bytes:
        end = self._offset + n
        if end > len(self._data):
            raise FormatError(f"{self._kind} 파일이 잘렸습니다", offset=len(self._data))
        chunk = self._data[self._offset:end]
        self._offset = end
        return chunk

    def _unpack(self, fmt: str) -> int | float:
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.read_bytes(size))[0]  # type: ignore[no-any-return]

    def expect_magic(self, magic: bytes) -> None:
        got = self.read_bytes(len(magic))
        if got != magic:
            raise FormatError(f"{self._kind} 매직 바이트가 다릅니다: {got!r}", offset=0)

    def expect_version(self) -> None:
        at = self._offset
        version = self.read_u16()
        if version != FORMAT_VERSION:
            raise FormatError(f"지원하지 않는 {self._kind} 포맷 버전: {version}", offset=at)

    def read_u16(self) -> int:
        return int(self._unpack("<H"))

    def read_u32(self) -> int:
        return int(self._unpack("<I"))

    def read_u64(self) -> int:
        return int(self._unpack("<Q"))

    def read_f64(self) -> float:
        return float(self._unpack("<d"))

    def expect_end(self) -> None:
        if self._offset != len(self._data):
            raise FormatError(f"{self._kind} 파일 끝에 여분의 바이트가 있습니다", offset=self._offset)


def write_atomic(path: str | Path, payload: bytes) -> None:
    """같은 디렉토리의 임시 파일에 기록한 뒤 os.replace로 교체합니다.

    중간에 실패해도 기존 파일은 그대로 남습니다. 부모 디렉토리는 필요하면 만듭니다.
    """
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    tmp = p.with_name(p.name + ".tmp")
    try:
        tmp.write_bytes(payload)
        os.replace(tmp, p)
    finally:
        tmp.unlink(missing_ok=True)


def format_pct(value: float) -> str:
    """비율(0~1)을 퍼센트 문자열로 포맷팅합니다."""
    return f"{value * 100:.2f}%"


def format_z(value: float) -> str:
    """z-score를 부호 포함 문자열로 포맷팅합니다."""
    sign = "+" if value >= 0 else ""
    return f"{sign}{value:.4f}"
