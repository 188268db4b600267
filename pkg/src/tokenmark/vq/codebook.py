"""코드북 모듈.

코드 테이블 Z(V×C)의 학습(k-means), 최근접 코드 탐색, 비트 단위 영속화를 담당합니다.
코드북은 생성 후 불변이며 여러 작업자가 공유해도 안전합니다.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.cluster import kmeans_plusplus

from tokenmark.errors import FormatError, InvalidArgumentError
from tokenmark.logging_config import get_logger
from tokenmark.utils import FORMAT_VERSION, BinaryReader, fingerprint, write_atomic

log = get_logger(__name__)

CODEBOOK_MAGIC = b"LBWC"
CODEBOOK_HEADER_SIZE = 4 + 2 + 4 + 4
# 한 번에 거리 행렬을 계산할 최대 원소 수 (메모리 상한)
_CHUNK_ELEMENTS = 4_000_000


@dataclass(frozen=True, eq=False)
class Codebook:
    """V개의 C차원 코드 벡터. 값은 binary32로 저장됩니다."""

    vectors: np.ndarray
    id: int = field(init=False)

    def __post_init__(self) -> None:
        vectors = np.asarray(self.vectors)
        if vectors.ndim != 2:
            raise InvalidArgumentError(f"코드북은 2차원 행렬이어야 합니다 (현재: {vectors.ndim}차원)")
        V, C = vectors.shape
        if V < 2 or C < 1:
            raise InvalidArgumentError(f"V ≥ 2, C ≥ 1 이어야 합니다 (현재: V={V}, C={C})")
        if not np.all(np.isfinite(vectors)):
            raise InvalidArgumentError("코드북에 유한하지 않은 값이 있습니다")
        stored = np.ascontiguousarray(vectors, dtype="<f4")
        stored.setflags(write=False)
        object.__setattr__(self, "vectors", stored)
        object.__setattr__(
            self, "id", fingerprint(struct.pack("<II", V, C), stored.tobytes())
        )

    @property
    def vocab_size(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def as_float64(self) -> np.ndarray:
        """거리 계산용 double 정밀도 사본."""
        return self.vectors.astype(np.float64)

    def truncated(self, size: int) -> Codebook:
        """앞쪽 size개 코드만 남긴 축소 코드북을 반환합니다."""
        if not 2 <= size <= self.vocab_size:
            raise InvalidArgumentError(f"축소 크기는 2~{self.vocab_size} 사이여야 합니다: {size}")
        return Codebook(self.vectors[:size])


@dataclass
class PatchCorpus:
    """k-means 학습용 패치 모음."""

    patches: np.ndarray  # (n, C)
    source_count: int

    def __post_init__(self) -> None:
        self.patches = np.asarray(self.patches, dtype=np.float64)
        if self.patches.ndim != 2 or self.patches.shape[0] == 0:
            raise InvalidArgumentError("패치 코퍼스가 비어 있거나 2차원이 아닙니다")

    def __len__(self) -> int:
        return int(self.patches.shape[0])

    @property
    def dim(self) -> int:
        return int(self.patches.shape[1])


@dataclass
class KMeansFit:
    """k-means 학습 결과."""

    centers: np.ndarray
    labels: np.ndarray
    objective_history: list[float]
    n_iter: int
    converged: bool

    @property
    def objective(self) -> float:
        return self.objective_history[-1]


def assign_nearest(points: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """각 점의 최근접 중심 인덱스와 제곱 거리를 반환합니다.

    제곱 유클리드 거리(double)를 비교하며, 동률이면 가장 작은 인덱스를 택합니다.
    """
    n = points.shape[0]
    k = centers.shape[0]
    chunk = max(1, _CHUNK_ELEMENTS // max(k, 1))
    labels = np.empty(n, dtype=np.int64)
    dists = np.empty(n, dtype=np.float64)
    for start in range(0, n, chunk):
        block = cdist(points[start:start + chunk], centers, metric="sqeuclidean")
        idx = np.argmin(block, axis=1)
        labels[start:start + chunk] = idx
        dists[start:start + chunk] = block[np.arange(block.shape[0]), idx]
    return labels, dists


def nearest_codes(cb: Codebook, vectors: np.ndarray) -> np.ndarray:
    """여러 벡터(n×C)에 대해 nearest_code를 한 번에 계산합니다."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[1] != cb.dim:
        raise InvalidArgumentError(
            f"벡터 차원이 코드북과 다릅니다: {vectors.shape[-1]} != {cb.dim}"
        )
    labels, _ = assign_nearest(vectors, cb.as_float64())
    return labels


def nearest_code(cb: Codebook, v: np.ndarray) -> int:
    """‖Z[j] − v‖₂를 최소화하는 코드 인덱스 (동률 시 최소 인덱스)."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (cb.dim,):
        raise InvalidArgumentError(f"벡터 길이가 코드북 차원과 다릅니다: {v.shape} != ({cb.dim},)")
    if not np.all(np.isfinite(v)):
        raise InvalidArgumentError("유한하지 않은 벡터는 양자화할 수 없습니다")
    return int(nearest_codes(cb, v[np.newaxis, :])[0])


def lookup(cb: Codebook, idx: int) -> np.ndarray:
    """idx번째 코드 벡터를 반환합니다."""
    if not 0 <= idx < cb.vocab_size:
        raise InvalidArgumentError(f"코드 인덱스 범위 초과: {idx} (V={cb.vocab_size})")
    return cb.vectors[idx].astype(np.float64)


def _repair_empty_clusters(points: np.ndarray, centers: np.ndarray, labels: np.ndarray) -> int:
    """빈 클러스터를 자기 중심에서 가장 먼 점으로 재시드합니다. 재시드 개수를 반환합니다.

    거리는 갱신된 중심 기준으로 다시 계산합니다.
    """
    counts = np.bincount(labels, minlength=centers.shape[0])
    empty = np.flatnonzero(counts == 0)
    if empty.size == 0:
        return 0
    diff = points - centers[labels]
    dists = np.einsum("ij,ij->i", diff, diff)
    # 안정 정렬: 거리가 같으면 앞쪽 점 우선
    far_order = np.argsort(-dists, kind="stable")
    for cluster, point_idx in zip(empty, far_order[: empty.size]):
        centers[cluster] = points[point_idx]
    return int(empty.size)


def fit_kmeans(corpus: PatchCorpus, V: int, max_iters: int, seed: int) -> KMeansFit:
    """k-means++ 시딩 + Lloyd 반복으로 V개의 중심을 학습합니다.

    할당이 바뀌지 않거나 max_iters에 도달하면 멈춥니다. 목적함수는 반복마다 비증가합니다.
    """
    if max_iters < 1:
        raise InvalidArgumentError(f"max_iters는 1 이상이어야 합니다: {max_iters}")
    if V < 2:
        raise InvalidArgumentError(f"V는 2 이상이어야 합니다: {V}")
    points = corpus.patches
    if len(corpus) < V:
        raise InvalidArgumentError(f"패치 수({len(corpus)})가 V({V})보다 작습니다")
    if not np.all(np.isfinite(points)):
        raise InvalidArgumentError("패치에 유한하지 않은 값이 있습니다")

    centers, _ = kmeans_plusplus(points, n_clusters=V, random_state=seed)
    centers = centers.astype(np.float64)

    labels, dists = assign_nearest(points, centers)
    history = [float(dists.sum())]
    converged = False
    n_iter = 0

    for n_iter in range(1, max_iters + 1):
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, points)
        counts = np.bincount(labels, minlength=V)
        nonempty = counts > 0
        centers[nonempty] = sums[nonempty] / counts[nonempty, np.newaxis]
        _repair_empty_clusters(points, centers, labels)

        new_labels, dists = assign_nearest(points, centers)
        history.append(float(dists.sum()))
        if np.array_equal(new_labels, labels):
            converged = True
            labels = new_labels
            break
        labels = new_labels

    return KMeansFit(
        centers=centers, labels=labels, objective_history=history,
        n_iter=n_iter, converged=converged,
    )


def train_codebook(corpus: PatchCorpus, V: int, max_iters: int, seed: int) -> Codebook:
    """패치 코퍼스에서 k-means로 코드북을 학습합니다."""
    fit = fit_kmeans(corpus, V, max_iters, seed)
    cb = Codebook(fit.centers)
    log.info(
        "codebook_trained",
        vocab_size=V, dim=corpus.dim, patches=len(corpus), iterations=fit.n_iter,
        converged=fit.converged, objective=fit.objective, codebook_id=cb.id,
    )
    return cb


def shuffle_rows(cb: Codebook, seed: int) -> Codebook:
    """코드 순서를 시드로 한 번 섞습니다 (앞쪽 k개 축소 규약용)."""
    order = np.random.default_rng(seed).permutation(cb.vocab_size)
    return Codebook(cb.vectors[order])


def codebook_to_bytes(cb: Codebook) -> bytes:
    header = CODEBOOK_MAGIC + struct.pack("<HII", FORMAT_VERSION, cb.vocab_size, cb.dim)
    return header + cb.vectors.tobytes() + struct.pack("<Q", cb.id)


def codebook_file_size(V: int, C: int) -> int:
    """LBWC 파일 크기 = 헤더 + V·C·4 + 지문 8바이트."""
    return CODEBOOK_HEADER_SIZE + V * C * 4 + 8


def save_codebook(cb: Codebook, path: str | Path) -> None:
    """코드북을 LBWC 포맷으로 저장합니다."""
    write_atomic(path, codebook_to_bytes(cb))
    log.info("codebook_saved", path=str(path), codebook_id=cb.id)


def load_codebook(path: str | Path) -> Codebook:
    """LBWC 파일을 로드하고 지문을 검증합니다."""
    reader = BinaryReader.from_path(path, "codebook")
    reader.expect_magic(CODEBOOK_MAGIC)
    reader.expect_version()
    V = reader.read_u32()
    C = reader.read_u32()
    if V < 2 or C < 1:
        raise FormatError(f"잘못된 코드북 크기: V={V}, C={C}", offset=6)
    payload_at = reader.offset
    payload = reader.read_bytes(V * C * 4)
    fp_at = reader.offset
    stored_id = reader.read_u64()
    reader.expect_end()

    vectors = np.frombuffer(payload, dtype="<f4").reshape(V, C)
    if not np.all(np.isfinite(vectors)):
        raise FormatError("코드북에 유한하지 않은 값이 있습니다", offset=payload_at)
    cb = Codebook(vectors)
    if cb.id != stored_id:
        raise FormatError("코드북 지문이 내용과 일치하지 않습니다", offset=fp_at)
    return cb
