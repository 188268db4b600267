"""그린 카운트, z-검정, 다중 리스트 검출, 임계값 보정 테스트."""

import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from tokenmark.errors import FormatError, InvalidArgumentError
from tokenmark.vq.quantizer import TokenMap
from tokenmark.watermark.detector import (
    RECORD_KEYS,
    DetectionResult,
    calibrate_threshold,
    count_green,
    detect_image,
    detect_tokenmap,
    green_counts,
    null_max_z,
    z_score,
)
from tokenmark.watermark.embed import (
    BiasConfig,
    BiasMode,
    GenerationOrder,
    embed_posthoc,
    generate_watermarked,
)
from tokenmark.watermark.greenlist import GreenListPool, generate_green_matrix
from tokenmark.watermark.sources import SmoothRandomSource


def test_count_all_green(small_pool):
    green = small_pool.green_lists[0]
    q = TokenMap(np.resize(green, (4, 4)), 64, 0)
    assert count_green(q, small_pool, 0) == 16


def test_count_full_pool(rng):
    pool = GreenListPool(np.ones((2, 64)), 1.0)
    q = TokenMap(rng.integers(64, size=(5, 5)), 64, 0)
    assert count_green(q, pool, 1) == 25


def test_count_matches_brute_force(small_pool, rng):
    q = TokenMap(rng.integers(64, size=(16, 16)), 64, 0)
    counts = green_counts(q, small_pool)
    for i in range(small_pool.list_count):
        green = set(small_pool.green_lists[i].tolist())
        expected = sum(1 for t in q.tokens.ravel() if int(t) in green)
        assert count_green(q, small_pool, i) == expected
        assert counts[i] == expected


def test_count_vocab_mismatch(small_pool):
    with pytest.raises(InvalidArgumentError):
        count_green(TokenMap(np.zeros((2, 2), dtype=int), 32, 0), small_pool, 0)


def test_z_score_examples():
    assert z_score(64, 0.25, 256) == 0.0
    assert z_score(256, 0.5, 256) == pytest.approx(16.0)
    assert z_score(26, 0.1, 256) == pytest.approx(0.4 / 4.8)


def test_z_score_degenerate_gamma():
    with pytest.raises(InvalidArgumentError):
        z_score(10, 1.0, 10)
    with pytest.raises(InvalidArgumentError):
        z_score(0, 0.0, 10)
    with pytest.raises(InvalidArgumentError):
        z_score(0, 0.5, 0)


@given(
    gamma=st.floats(0.01, 0.99),
    hw=st.integers(1, 4096),
    d=st.floats(0.0, 100.0),
)
def test_z_score_antisymmetric(gamma, hw, d):
    center = gamma * hw
    expected = -z_score(center - d, gamma, hw)
    assert z_score(center + d, gamma, hw) == pytest.approx(expected, abs=1e-9)


@given(gamma=st.floats(0.01, 0.99), hw=st.integers(2, 4096), count=st.integers(0, 4095))
def test_z_score_increasing(gamma, hw, count):
    count = min(count, hw - 1)
    assert z_score(count + 1, gamma, hw) > z_score(count, gamma, hw)


def test_detect_hard_generated_map():
    pool = generate_green_matrix(16, 0.25, 64, seed=1)
    src = SmoothRandomSource(64, seed=2)
    q = generate_watermarked(
        src, pool, BiasConfig(BiasMode.HARD, list_id=7), (16, 16), GenerationOrder.RASTER,
        np.random.default_rng(0),
    )
    result = detect_tokenmap(q, pool, z_th=4.0)
    gamma = pool.gamma_eff
    assert result.best_list == 7 or result.green_counts[result.best_list] == 256
    assert result.green_counts[7] == 256
    assert result.z == pytest.approx((256 - gamma * 256) / math.sqrt(gamma * (1 - gamma) * 256))
    assert result.decision


def test_detect_single_list_reduces_to_z_test(rng):
    pool = generate_green_matrix(1, 0.3, 50, seed=0)
    q = TokenMap(rng.integers(50, size=(8, 8)), 50, 0)
    result = detect_tokenmap(q, pool, z_th=2.0)
    assert result.best_list == 0
    assert result.z == pytest.approx(z_score(count_green(q, pool, 0), pool.gamma_eff, 64))
    assert result.decision == (result.z > 2.0)


def test_detect_tie_lowest_index():
    pool = GreenListPool(np.array([[1, 0, 1, 0], [1, 0, 1, 0], [0, 1, 0, 1]]), 0.5)
    q = TokenMap(np.array([[0, 2]]), 4, 0)
    assert detect_tokenmap(q, pool, 1.0).best_list == 0


def test_detect_image_posthoc(gray_corpus, gray_codebook, gray_pool):
    marked, _ = embed_posthoc(gray_corpus[0], gray_codebook, gray_pool, 3, 2)
    result = detect_image(marked, gray_codebook, gray_pool, 2, z_th=4.0)
    assert result.decision
    assert result.best_list == 3


def test_detect_image_degenerate_pool(gray_corpus, gray_codebook):
    pool = GreenListPool(np.ones((1, 64)), 1.0)
    with pytest.raises(InvalidArgumentError):
        detect_image(gray_corpus[0], gray_codebook, pool, 2, z_th=4.0)


def test_detect_image_wrong_codebook(gray_corpus, gray_codebook, interior_codebook):
    pool = generate_green_matrix(2, 0.25, 64, seed=0, codebook_id=interior_codebook.id)
    with pytest.raises(InvalidArgumentError):
        detect_image(gray_corpus[0], gray_codebook, pool, 2, z_th=4.0)


def test_null_single_list_moments():
    pool = generate_green_matrix(1, 0.1, 1024, seed=0)
    z = null_max_z(pool, 256, 100_000, np.random.default_rng(0))
    assert abs(z.mean()) <= 0.02
    assert 0.97 <= z.var() <= 1.03
    assert 0.005 <= float(np.mean(z > 2.326)) <= 0.02


def test_calibrate_single_list_normal_quantile():
    pool = generate_green_matrix(1, 0.5, 64, seed=0)
    z_th = calibrate_threshold(pool, 4096, 0.01, 20_000, np.random.default_rng(1))
    assert z_th == pytest.approx(norm.ppf(0.99), abs=0.1)


def test_calibrate_multi_list_exceeds_single():
    single = generate_green_matrix(1, 0.1, 1024, seed=0)
    multi = generate_green_matrix(32, 0.1, 1024, seed=0)
    z1 = calibrate_threshold(single, 256, 0.01, 5000, np.random.default_rng(2))
    z32 = calibrate_threshold(multi, 256, 0.01, 5000, np.random.default_rng(2))
    assert z32 > z1


@pytest.mark.slow
def test_calibrated_threshold_controls_fpr():
    pool = generate_green_matrix(32, 0.1, 1024, seed=0)
    z_th = calibrate_threshold(pool, 256, 0.01, 100_000, np.random.default_rng(3))
    validation = null_max_z(pool, 256, 100_000, np.random.default_rng(4))
    fpr = float(np.mean(validation > z_th))
    assert 0.007 <= fpr <= 0.013


def test_calibrate_invalid():
    pool = generate_green_matrix(2, 0.5, 16, seed=0)
    with pytest.raises(InvalidArgumentError):
        calibrate_threshold(pool, 16, 0.0, 1000, np.random.default_rng(0))
    with pytest.raises(InvalidArgumentError):
        calibrate_threshold(pool, 16, 0.01, 999, np.random.default_rng(0))


def test_record_key_order_and_round_trip(small_pool, rng):
    q = TokenMap(rng.integers(64, size=(4, 4)), 64, 0)
    result = detect_tokenmap(q, small_pool, 4.0)
    line = result.to_record()
    assert list(json.loads(line).keys()) == list(RECORD_KEYS)
    assert "\n" not in line
    assert DetectionResult.from_record(line) == result


def test_record_parse_error():
    with pytest.raises(FormatError):
        DetectionResult.from_record('{"z": 1.0}')


def test_p_value():
    result = DetectionResult([5], 0, 0.0, 0.5, 10, 4.0, False)
    assert result.p_value == pytest.approx(0.5)
