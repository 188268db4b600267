"""encode / quantize / decode 및 다중 스케일 양자화 테스트."""

import numpy as np
import pytest

from tokenmark.errors import FormatError, InvalidArgumentError
from tokenmark.vq.codebook import Codebook
from tokenmark.vq.quantizer import (
    FeatureMap,
    Image,
    MultiScaleTokenMaps,
    ScaleSchedule,
    TokenMap,
    decode,
    encode,
    features_to_image,
    interpolate,
    load_tokenmap,
    quantize,
    quantize_multiscale,
    reconstruct_multiscale,
    save_tokenmap,
)


def test_encode_single_patch():
    img = Image(np.array([[0.0, 1.0], [0.5, 0.25]]))
    f = encode(img, 2)
    assert (f.h, f.w, f.dim) == (1, 1, 4)
    assert np.array_equal(f.values[0, 0], [0.0, 1.0, 0.5, 0.25])


def test_encode_patch_one_is_reshape(rng):
    pixels = rng.random((3, 5, 3))
    f = encode(Image(pixels), 1)
    assert np.array_equal(f.values, pixels)


def test_encode_shape_arithmetic(rng):
    f = encode(Image(rng.random((4, 4, 3))), 2)
    assert (f.h, f.w, f.dim) == (2, 2, 12)


def test_encode_non_divisible():
    with pytest.raises(InvalidArgumentError):
        encode(Image(np.zeros((5, 4))), 2)


def test_encode_then_unquantized_decode_is_lossless(rng):
    img = Image(rng.random((8, 12, 3)))
    back = features_to_image(encode(img, 4), 4)
    assert np.array_equal(back.pixels, img.pixels)


def test_quantize_constant_map(interior_codebook):
    values = np.tile(interior_codebook.vectors[5].astype(np.float64), (3, 3, 1))
    q = quantize(FeatureMap(values), interior_codebook)
    assert np.all(q.tokens == 5)
    assert q.codebook_id == interior_codebook.id


def test_quantize_exact_codes(two_point_codebook):
    values = np.array([[[0.0, 0.0], [1.0, 1.0]]])
    q = quantize(FeatureMap(values), two_point_codebook)
    assert q.tokens.tolist() == [[0, 1]]


def test_quantize_matches_brute_force(interior_codebook, rng):
    values = rng.random((5, 6, 4))
    q = quantize(FeatureMap(values), interior_codebook)
    codes = interior_codebook.as_float64()
    for i in range(5):
        for j in range(6):
            dists = ((codes - values[i, j]) ** 2).sum(axis=1)
            assert q.tokens[i, j] == int(np.argmin(dists))


def test_quantize_is_elementwise(interior_codebook, rng):
    values = rng.random((1, 12, 4))
    perm = rng.permutation(12)
    q = quantize(FeatureMap(values), interior_codebook)
    q_perm = quantize(FeatureMap(values[:, perm]), interior_codebook)
    assert np.array_equal(q_perm.tokens[0], q.tokens[0][perm])


def test_quantize_dimension_mismatch(two_point_codebook, rng):
    with pytest.raises(InvalidArgumentError):
        quantize(FeatureMap(rng.random((2, 2, 3))), two_point_codebook)


def test_decode_uniform_gray_patch():
    cb = Codebook(np.array([[0.5] * 4, [0.1] * 4]))
    img = decode(TokenMap(np.zeros((1, 1), dtype=int), 2, cb.id), cb, 2)
    assert img.pixels.shape == (2, 2, 1)
    assert np.allclose(img.pixels, 0.5)


def test_decode_reproduces_image_built_from_codes(interior_codebook, rng):
    tokens = rng.integers(16, size=(3, 4))
    q = TokenMap(tokens, 16, interior_codebook.id)
    img = decode(q, interior_codebook, 2)
    again = decode(quantize(encode(img, 2), interior_codebook), interior_codebook, 2)
    assert np.array_equal(again.pixels, img.pixels)


def test_token_consistency_fixed_point(interior_codebook, rng):
    for _ in range(10):
        q = TokenMap(rng.integers(16, size=(4, 4)), 16, interior_codebook.id)
        q2 = quantize(encode(decode(q, interior_codebook, 2), 2), interior_codebook)
        assert np.array_equal(q2.tokens, q.tokens)


def test_decode_clamps():
    cb = Codebook(np.array([[-1.0] * 4, [2.0] * 4]))
    img = decode(TokenMap(np.array([[0, 1]]), 2, cb.id), cb, 2)
    assert img.pixels.min() == 0.0
    assert img.pixels.max() == 1.0


def test_decode_codebook_mismatch(interior_codebook, two_point_codebook):
    q = TokenMap(np.zeros((1, 1), dtype=int), 16, two_point_codebook.id)
    with pytest.raises(InvalidArgumentError):
        decode(q, interior_codebook, 2)


def test_interpolate_identity(rng):
    grid = rng.random((3, 4, 2))
    assert np.array_equal(interpolate(grid, 3, 4), grid)


def test_interpolate_constant(rng):
    grid = np.full((2, 3, 2), 0.7)
    out = interpolate(grid, 5, 7)
    assert out.shape == (5, 7, 2)
    assert np.allclose(out, 0.7)


def test_interpolate_coordinate_formula():
    # 원본 열 좌표: -0.25, 0.25, 0.75, 1.25 → clamp 후 0, 0.25, 0.75, 1
    grid = np.array([[[0.0], [4.0]]])
    out = interpolate(grid, 1, 4)
    assert np.allclose(out[0, :, 0], [0.0, 1.0, 3.0, 4.0])


def test_interpolate_downsample_center():
    grid = np.arange(16, dtype=np.float64).reshape(4, 4, 1)
    out = interpolate(grid, 1, 1)
    # 좌표 (1.5, 1.5): 중앙 네 셀의 평균
    assert out[0, 0, 0] == pytest.approx((5 + 6 + 9 + 10) / 4)


def test_interpolate_invalid_size(rng):
    with pytest.raises(InvalidArgumentError):
        interpolate(rng.random((2, 2, 1)), 0, 3)


def test_schedule_validation():
    with pytest.raises(InvalidArgumentError):
        ScaleSchedule(((2, 2), (2, 2)))
    with pytest.raises(InvalidArgumentError):
        ScaleSchedule(())
    sched = ScaleSchedule.parse("1x1,2x2,4x4")
    assert sched.scales == ((1, 1), (2, 2), (4, 4))
    assert sched.final == (4, 4)


def test_schedule_parse_error():
    with pytest.raises(InvalidArgumentError):
        ScaleSchedule.parse("1x1,2by2")


def test_multiscale_single_scale_equals_quantize(interior_codebook, rng):
    f = FeatureMap(rng.random((4, 4, 4)))
    ms = quantize_multiscale(f, interior_codebook, ScaleSchedule(((4, 4),)))
    assert np.array_equal(ms.maps[0].tokens, quantize(f, interior_codebook).tokens)


def test_multiscale_residual_vanishes():
    code = np.array([0.5, 0.3, 0.2, 0.6])
    cb = Codebook(np.stack([np.zeros(4), code, np.full(4, 0.9)]))
    c32 = cb.as_float64()[1]
    f = FeatureMap(np.tile(c32, (2, 2, 1)))
    ms = quantize_multiscale(f, cb, ScaleSchedule(((1, 1), (2, 2))))
    assert np.all(ms.maps[0].tokens == 1)
    assert np.all(ms.maps[1].tokens == 0)
    recon = reconstruct_multiscale(ms, cb, ScaleSchedule(((1, 1), (2, 2))))
    assert np.allclose(recon.values, f.values, atol=1e-12)


def test_multiscale_telescoping(rng):
    vectors = np.concatenate([np.zeros((1, 4)), rng.normal(0.0, 0.5, size=(31, 4))])
    cb = Codebook(vectors)
    sched = ScaleSchedule(((1, 1), (2, 2), (4, 4)))
    f = FeatureMap(rng.normal(0.0, 1.0, size=(4, 4, 4)))
    ms = quantize_multiscale(f, cb, sched)
    codes = cb.as_float64()

    residual = f.values.copy()
    for q, (hk, wk) in zip(ms.maps, sched.scales):
        assert q.shape == (hk, wk)
        before = residual
        residual = residual - interpolate(codes[q.tokens], 4, 4)
    # 마지막 단계는 제로 코드가 있으므로 잔차 노름을 늘리지 않습니다
    assert np.linalg.norm(residual) <= np.linalg.norm(before) + 1e-9

    recon = reconstruct_multiscale(ms, cb, sched)
    assert np.allclose(f.values - recon.values, residual, atol=1e-9)


def test_multiscale_schedule_mismatch(interior_codebook, rng):
    f = FeatureMap(rng.random((4, 4, 4)))
    with pytest.raises(InvalidArgumentError):
        quantize_multiscale(f, interior_codebook, ScaleSchedule(((1, 1), (2, 2))))


def test_reconstruct_zero_code():
    cb = Codebook(np.stack([np.zeros(4), np.ones(4)]))
    sched = ScaleSchedule(((1, 1), (2, 2)))
    ms = MultiScaleTokenMaps(
        [TokenMap(np.zeros(s, dtype=int), 2, cb.id) for s in sched.scales], cb.id
    )
    assert np.array_equal(reconstruct_multiscale(ms, cb, sched).values, np.zeros((2, 2, 4)))


def test_reconstruct_count_mismatch(interior_codebook):
    ms = MultiScaleTokenMaps([TokenMap(np.zeros((2, 2), dtype=int), 16, interior_codebook.id)], 0)
    with pytest.raises(InvalidArgumentError):
        reconstruct_multiscale(ms, interior_codebook, ScaleSchedule(((1, 1), (2, 2))))


def test_tokenmap_validation():
    with pytest.raises(InvalidArgumentError):
        TokenMap(np.array([[0, 4]]), 4, 0)


def test_tokenmap_file_round_trip(tmp_path, rng):
    q = TokenMap(rng.integers(1024, size=(16, 16)), 1024, 0xDEADBEEF)
    path = tmp_path / "q.lbwt"
    save_tokenmap(q, path)
    loaded = load_tokenmap(path)
    assert np.array_equal(loaded.tokens, q.tokens)
    assert loaded.vocab_size == 1024
    assert loaded.codebook_id == 0xDEADBEEF
    assert path.stat().st_size == 4 + 2 + 4 + 4 + 4 + 8 + 16 * 16 * 4


def test_tokenmap_bad_magic(tmp_path):
    path = tmp_path / "q.lbwt"
    path.write_bytes(b"LBWC" + b"\x00" * 40)
    with pytest.raises(FormatError):
        load_tokenmap(path)
