"""그린 리스트 풀 모듈.

N×V 이진 행렬 M(행 합 = green_size, 열 합 ≈ γN)을 생성·검증·저장하고,
사후 치환을 위한 최근접 그린 토큰 테이블을 제공합니다.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from tokenmark.errors import FormatError, InvalidArgumentError
from tokenmark.logging_config import get_logger
from tokenmark.utils import FORMAT_VERSION, BinaryReader, fingerprint, write_atomic
from tokenmark.vq.codebook import Codebook

log = get_logger(__name__)

POOL_MAGIC = b"LBWG"
DEFAULT_MAX_ITERS = 1000


def green_size_for(gamma: float, V: int) -> int:
    """green_size = round(γV). 반올림은 half-up입니다."""
    return int(math.floor(gamma * V + 0.5))


@dataclass(eq=False)
class GreenListPool:
    """N개의 그린 리스트를 담은 이진 행렬과 메타데이터."""

    matrix: np.ndarray
    gamma: float
    codebook_id: int = 0
    green_size: int = field(init=False)
    pool_id: int = field(init=False)

    def __post_init__(self) -> None:
        matrix = np.asarray(self.matrix).astype(bool)
        if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 2:
            raise InvalidArgumentError(f"풀 행렬은 N≥1, V≥2인 N×V 형태여야 합니다: {matrix.shape}")
        if not 0.0 < self.gamma <= 1.0:
            raise InvalidArgumentError(f"gamma는 (0, 1] 범위여야 합니다: {self.gamma}")
        row_sums = matrix.sum(axis=1)
        if not np.all(row_sums == row_sums[0]) or row_sums[0] < 1:
            raise InvalidArgumentError("모든 그린 리스트의 크기가 같고 1 이상이어야 합니다")
        matrix.setflags(write=False)
        self.matrix = matrix
        self.green_size = int(row_sums[0])
        self.pool_id = fingerprint(
            struct.pack(
                "<IIdIQ", self.list_count, self.vocab_size, self.gamma,
                self.green_size, self.codebook_id,
            ),
            pack_rows(matrix),
        )

    @property
    def list_count(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def vocab_size(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def gamma_eff(self) -> float:
        """검정에 쓰이는 실제 그린 비율 green_size / V."""
        return self.green_size / self.vocab_size

    @property
    def theta(self) -> float:
        """열 합 목표치 θ = γN."""
        return self.gamma * self.list_count

    @cached_property
    def green_lists(self) -> tuple[np.ndarray, ...]:
        """행별 정렬된 그린 인덱스 G_i."""
        return tuple(np.flatnonzero(row) for row in self.matrix)

    def red_list(self, list_id: int) -> np.ndarray:
        """R_i = G_i의 여집합."""
        self.check_list_id(list_id)
        return np.flatnonzero(~self.matrix[list_id])

    def check_list_id(self, list_id: int) -> None:
        if not 0 <= list_id < self.list_count:
            raise InvalidArgumentError(f"list_id 범위 초과: {list_id} (N={self.list_count})")

    def check_codebook(self, cb: Codebook) -> None:
        """풀과 코드북의 호환성을 확인합니다. codebook_id=0인 풀은 어휘 크기만 확인합니다."""
        if cb.vocab_size != self.vocab_size:
            raise InvalidArgumentError(
                f"어휘 크기 불일치: codebook V={cb.vocab_size}, pool V={self.vocab_size}"
            )
        if self.codebook_id not in (0, cb.id):
            raise InvalidArgumentError("풀이 다른 코드북에 대해 발급되었습니다")

    def bound_to(self, cb: Codebook) -> GreenListPool:
        """같은 행렬을 주어진 코드북에 귀속시킨 풀을 반환합니다."""
        self.check_codebook(cb)
        return GreenListPool(self.matrix.copy(), self.gamma, codebook_id=cb.id)


@dataclass
class PoolReport:
    """validate_pool 결과."""

    row_ok: bool
    max_col_dev: float
    col_histogram: dict[int, int]


@dataclass
class RepairTrace:
    """알고리즘 반복 기록."""

    max_dev_history: list[float]
    sweeps: int
    converged: bool


def _max_col_dev(matrix: np.ndarray, theta: float) -> float:
    return float(np.max(np.abs(matrix.sum(axis=0) - theta)))


def init_green_matrix(N: int, V: int, green_size: int, rng: np.random.Generator) -> np.ndarray:
    """행마다 green_size개 열을 비복원 균등 추출해 1로 채웁니다."""
    matrix = np.zeros((N, V), dtype=bool)
    for i in range(N):
        matrix[i, rng.permutation(V)[:green_size]] = True
    return matrix


def repair_green_matrix(
    matrix: np.ndarray, theta: float, max_iters: int = DEFAULT_MAX_ITERS
) -> RepairTrace:
    """열 합이 θ에 가까워지도록 행 내부 1↔0 교환을 반복합니다 (제자리 수정).

    행마다 빈도를 다시 계산하고, 과다 열(M_ij=1)은 빈도 내림차순, 과소 열(M_ij=0)은 빈도
    오름차순(동률은 인덱스 순)으로 짝지어 교환합니다. 빈도 차가 2 이상인 쌍만 교환하므로
    열 편차 제곱합이 매 교환마다 줄고 최대 편차는 늘지 않습니다. 행 합은 모든 중간 상태에서
    보존됩니다. 스윕 전후 행렬이 같거나 최대 편차가 1 미만이면 수렴으로 봅니다.
    """
    history = [_max_col_dev(matrix, theta)]
    converged = history[0] < 1.0
    sweeps = 0
    while not converged and sweeps < max_iters:
        before = matrix.copy()
        for i in range(matrix.shape[0]):
            freq = matrix.sum(axis=0)
            row = matrix[i]
            one_to_zero = np.flatnonzero((freq > theta) & row)
            zero_to_one = np.flatnonzero((freq < theta) & ~row)
            one_to_zero = one_to_zero[np.lexsort((one_to_zero, -freq[one_to_zero]))]
            zero_to_one = zero_to_one[np.lexsort((zero_to_one, freq[zero_to_one]))]
            k = min(one_to_zero.size, zero_to_one.size)
            # 차이가 1인 쌍은 편차만 맞바꿉니다
            k = int(np.count_nonzero(freq[one_to_zero[:k]] - freq[zero_to_one[:k]] >= 2))
            if k:
                row[zero_to_one[:k]] = True
                row[one_to_zero[:k]] = False
        sweeps += 1
        history.append(_max_col_dev(matrix, theta))
        converged = np.array_equal(before, matrix) or history[-1] < 1.0
    return RepairTrace(max_dev_history=history, sweeps=sweeps, converged=converged)


def generate_green_matrix(
    N: int,
    gamma: float,
    V: int,
    seed: int,
    max_iters: int = DEFAULT_MAX_ITERS,
    codebook_id: int = 0,
) -> GreenListPool:
    """무작위 초기화 후 교환 보정으로 그린 리스트 풀을 생성합니다."""
    if N < 1:
        raise InvalidArgumentError(f"N은 1 이상이어야 합니다: {N}")
    if V < 2:
        raise InvalidArgumentError(f"V는 2 이상이어야 합니다: {V}")
    if not 0.0 < gamma <= 1.0:
        raise InvalidArgumentError(f"gamma는 (0, 1] 범위여야 합니다: {gamma}")
    green_size = green_size_for(gamma, V)
    if green_size < 1:
        raise InvalidArgumentError(f"round(γV)가 0입니다 (γ={gamma}, V={V})")

    rng = np.random.default_rng(seed)
    matrix = init_green_matrix(N, V, green_size, rng)
    trace = repair_green_matrix(matrix, gamma * N, max_iters)
    pool = GreenListPool(matrix, gamma, codebook_id=codebook_id)

    log.info(
        "green_matrix_generated",
        n_lists=N, gamma=gamma, vocab_size=V, green_size=green_size, seed=seed,
        sweeps=trace.sweeps, converged=trace.converged,
        max_col_dev=trace.max_dev_history[-1], pool_id=pool.pool_id,
    )
    return pool


def validate_pool(pool: GreenListPool) -> PoolReport:
    """행 합 조건과 열 합 편차를 보고합니다."""
    row_ok = bool(np.all(pool.matrix.sum(axis=1) == pool.green_size))
    col_sums = pool.matrix.sum(axis=0)
    values, counts = np.unique(col_sums, return_counts=True)
    return PoolReport(
        row_ok=row_ok,
        max_col_dev=_max_col_dev(pool.matrix, pool.theta),
        col_histogram={int(v): int(c) for v, c in zip(values, counts)},
    )


class SubstitutionTable:
    """리스트별 최근접 그린 토큰 테이블 (코드북 × 풀에 대해 한 번 계산)."""

    def __init__(self, cb: Codebook, pool: GreenListPool) -> None:
        pool.check_codebook(cb)
        self._codes = cb.as_float64()
        self._pool = pool
        self._tables: dict[int, np.ndarray] = {}

    def table(self, list_id: int) -> np.ndarray:
        """길이 V 배열: token → 치환될 그린 토큰."""
        self._pool.check_list_id(list_id)
        if list_id not in self._tables:
            green = self._pool.green_lists[list_id]
            dists = cdist(self._codes, self._codes[green], metric="sqeuclidean")
            table = green[np.argmin(dists, axis=1)]
            table[green] = green
            self._tables[list_id] = table
        return self._tables[list_id]


def nearest_green(cb: Codebook, pool: GreenListPool, list_id: int, token: int) -> int:
    """그린이면 token 자신, 아니면 코드 벡터 거리가 가장 가까운 그린 토큰 (동률 시 최소 인덱스)."""
    pool.check_codebook(cb)
    pool.check_list_id(list_id)
    if not 0 <= token < pool.vocab_size:
        raise InvalidArgumentError(f"토큰 범위 초과: {token} (V={pool.vocab_size})")
    return int(SubstitutionTable(cb, pool).table(list_id)[token])


def pack_rows(matrix: np.ndarray) -> bytes:
    """행마다 ceil(V/8) 바이트, LSB-first로 비트 패킹합니다."""
    return np.packbits(matrix.astype(np.uint8), axis=1, bitorder="little").tobytes()


def pool_to_bytes(pool: GreenListPool) -> bytes:
    header = POOL_MAGIC + struct.pack(
        "<HIIdIQ", FORMAT_VERSION, pool.list_count, pool.vocab_size, pool.gamma,
        pool.green_size, pool.codebook_id,
    )
    return header + pack_rows(pool.matrix) + struct.pack("<Q", pool.pool_id)


def pool_file_size(N: int, V: int) -> int:
    """LBWG 파일 크기 = 헤더 34바이트 + N·ceil(V/8) + 지문 8바이트."""
    return 4 + 2 + 4 + 4 + 8 + 4 + 8 + N * ((V + 7) // 8) + 8


def save_pool(pool: GreenListPool, path: str | Path) -> None:
    """풀을 LBWG 포맷으로 저장합니다."""
    write_atomic(path, pool_to_bytes(pool))
    log.info("pool_saved", path=str(path), pool_id=pool.pool_id)


def load_pool(path: str | Path) -> GreenListPool:
    """LBWG 파일을 로드하고 지문을 검증합니다."""
    reader = BinaryReader.from_path(path, "pool")
    reader.expect_magic(POOL_MAGIC)
    reader.expect_version()
    N = reader.read_u32()
    V = reader.read_u32()
    gamma = reader.read_f64()
    green_size = reader.read_u32()
    codebook_id = reader.read_u64()
    rows_at = reader.offset
    row_bytes = (V + 7) // 8
    packed = np.frombuffer(reader.read_bytes(N * row_bytes), dtype=np.uint8).reshape(N, row_bytes)
    fp_at = reader.offset
    stored_id = reader.read_u64()
    reader.expect_end()

    matrix = np.unpackbits(packed, axis=1, count=V, bitorder="little").astype(bool)
    try:
        pool = GreenListPool(matrix, gamma, codebook_id=codebook_id)
    except InvalidArgumentError as e:
        raise FormatError(f"풀 내용이 올바르지 않습니다: {e}", offset=rows_at) from e
    if pool.green_size != green_size:
        raise FormatError("헤더의 green_size가 행렬과 다릅니다", offset=rows_at)
    if pool.pool_id != stored_id:
        raise FormatError("풀 지문이 내용과 일치하지 않습니다", offset=fp_at)
    return pool
