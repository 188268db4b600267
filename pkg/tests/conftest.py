"""테스트 공통 fixture."""

import os
import tempfile

import numpy as np
import pytest

from tokenmark.db.models import init_db
from tokenmark.vq.codebook import Codebook, train_codebook
from tokenmark.vq.corpus import extract_patches, synthetic_corpus
from tokenmark.watermark.greenlist import generate_green_matrix


@pytest.fixture
def tmp_db():
    """임시 SQLite DB 세션 팩토리를 제공합니다."""
    with tempfile.NamedTemporaryFile(suffix=".db", delete=False) as f:
        db_path = f.name

    session_factory = init_db(db_path)
    yield session_factory

    os.unlink(db_path)


@pytest.fixture
def db_session(tmp_db):
    """DB 세션을 제공합니다."""
    session = tmp_db()
    yield session
    session.close()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_point_codebook():
    """{(0,0), (1,1)} 코드북."""
    return Codebook(np.array([[0.0, 0.0], [1.0, 1.0]]))


@pytest.fixture
def interior_codebook():
    """값이 [0.05, 0.95] 안에 있는 V=16, C=4 코드북 (patch=2, 흑백). decode에서 clamp가 일어나지 않습니다."""
    vectors = np.random.default_rng(7).uniform(0.05, 0.95, size=(16, 4))
    return Codebook(vectors)


@pytest.fixture(scope="session")
def gray_corpus():
    """16×16 흑백 합성 이미지 12장."""
    return synthetic_corpus(12, 16, 1, seed=0)


@pytest.fixture(scope="session")
def rgb_corpus():
    """16×16 컬러 합성 이미지 6장."""
    return synthetic_corpus(6, 16, 3, seed=1)


@pytest.fixture(scope="session")
def gray_codebook(gray_corpus):
    """gray_corpus에서 학습한 V=64, patch=2 코드북."""
    return train_codebook(extract_patches(gray_corpus, 2), 64, max_iters=20, seed=0)


@pytest.fixture
def gray_pool(gray_codebook):
    """gray_codebook에 귀속된 N=4, γ=0.25 풀."""
    return generate_green_matrix(4, 0.25, 64, seed=3, codebook_id=gray_codebook.id)


@pytest.fixture
def small_pool():
    """코드북에 귀속되지 않은 N=8, γ=0.25, V=64 풀."""
    return generate_green_matrix(8, 0.25, 64, seed=0)
