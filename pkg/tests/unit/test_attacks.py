"""픽셀/토큰 공격과 공격 파이프라인 테스트."""

import numpy as np
import pytest

from tokenmark.attacks.pipeline import (
    PRESETS,
    AttackContext,
    AttackPipeline,
    apply_pixel_attacks,
    apply_token_attacks,
    get_preset,
)
from tokenmark.attacks.pixel import (
    ROTATE_FILL,
    box_blur,
    crop_resize,
    foreign_requantize,
    gauss_noise,
    pixel_quantize,
    rotate,
    saturation_scale,
    value_jitter,
)
from tokenmark.attacks.spec import AttackKind, AttackSpec
from tokenmark.attacks.tokens import expected_green_after_flip, token_flip
from tokenmark.errors import InvalidArgumentError
from tokenmark.vq.image_io import from_uint8, to_uint8
from tokenmark.vq.quantizer import Image, TokenMap


@pytest.fixture
def rgb_image(rng):
    return Image(rng.random((16, 16, 3)))


@pytest.fixture
def gray_image(rng):
    return Image(rng.random((12, 12, 1)))


# ── 픽셀 공격 ──


def test_identity_parameters(rgb_image, rng):
    assert np.array_equal(gauss_noise(rgb_image, 0.0, rng).pixels, rgb_image.pixels)
    assert np.array_equal(box_blur(rgb_image, 1).pixels, rgb_image.pixels)
    assert np.array_equal(crop_resize(rgb_image, 1.0, rng).pixels, rgb_image.pixels)
    assert np.allclose(rotate(rgb_image, 0.0).pixels, rgb_image.pixels)
    assert np.allclose(value_jitter(rgb_image, 0.0, 1.0).pixels, rgb_image.pixels)
    assert np.allclose(saturation_scale(rgb_image, 1.0).pixels, rgb_image.pixels)


def test_pixel_quantize_256_identity_on_8bit(rng):
    arr = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
    img = from_uint8(arr)
    assert np.array_equal(to_uint8(pixel_quantize(img, 256)), arr)


def test_attacks_do_not_modify_input(rgb_image, rng):
    before = rgb_image.pixels.copy()
    gauss_noise(rgb_image, 0.05, rng)
    box_blur(rgb_image, 3)
    rotate(rgb_image, 30.0)
    assert np.array_equal(rgb_image.pixels, before)


@pytest.mark.parametrize(
    "attack",
    [
        lambda img, rng: gauss_noise(img, 0.5, rng),
        lambda img, rng: box_blur(img, 5),
        lambda img, rng: crop_resize(img, 0.3, rng),
        lambda img, rng: rotate(img, 37.0),
        lambda img, rng: value_jitter(img, 0.4, 5.0),
        lambda img, rng: saturation_scale(img, 3.0),
        lambda img, rng: pixel_quantize(img, 3),
    ],
)
def test_shape_and_range_preserved(attack, rgb_image, rng):
    out = attack(rgb_image, rng)
    assert out.pixels.shape == rgb_image.pixels.shape
    assert out.pixels.min() >= 0.0
    assert out.pixels.max() <= 1.0


def test_gauss_noise_deterministic(rgb_image):
    a = gauss_noise(rgb_image, 0.1, np.random.default_rng(5))
    b = gauss_noise(rgb_image, 0.1, np.random.default_rng(5))
    c = gauss_noise(rgb_image, 0.1, np.random.default_rng(6))
    assert np.array_equal(a.pixels, b.pixels)
    assert not np.array_equal(a.pixels, c.pixels)


def test_gauss_noise_variance():
    img = Image(np.full((64, 64, 1), 0.5))
    out = gauss_noise(img, 0.001, np.random.default_rng(0))
    assert np.var(out.pixels) == pytest.approx(0.001, rel=0.1)


@pytest.mark.parametrize("k", [3, 4])
def test_box_blur_impulse(k):
    pixels = np.zeros((16, 16, 1))
    pixels[8, 8, 0] = 1.0
    out = box_blur(Image(pixels), k)
    assert out.pixels.max() == pytest.approx(1.0 / k**2)
    assert out.pixels.sum() == pytest.approx(1.0)
    assert np.count_nonzero(out.pixels > 1e-12) == k * k


def test_box_blur_constant_image():
    img = Image(np.full((10, 10, 3), 0.3))
    assert np.allclose(box_blur(img, 8).pixels, 0.3)


def test_crop_resize_constant_image(rng):
    img = Image(np.full((16, 16, 3), 0.7))
    assert np.allclose(crop_resize(img, 0.5, rng).pixels, 0.7)


def test_crop_resize_invalid(rgb_image, rng):
    with pytest.raises(InvalidArgumentError):
        crop_resize(rgb_image, 0.0, rng)
    with pytest.raises(InvalidArgumentError):
        crop_resize(rgb_image, 1.5, rng)


def test_rotate_180(rgb_image):
    out = rotate(rgb_image, 180.0)
    assert np.allclose(out.pixels, rgb_image.pixels[::-1, ::-1], atol=1e-6)


def test_rotate_90_counterclockwise(rgb_image):
    out = rotate(rgb_image, 90.0)
    assert np.allclose(out.pixels, np.rot90(rgb_image.pixels, axes=(0, 1)), atol=1e-6)


def test_rotate_corners_filled():
    img = Image(np.zeros((16, 16, 1)))
    out = rotate(img, 45.0)
    for i, j in [(0, 0), (0, 15), (15, 0), (15, 15)]:
        assert out.pixels[i, j, 0] == ROTATE_FILL
    assert out.pixels[8, 8, 0] == 0.0


def test_value_jitter_examples():
    img = Image(np.full((4, 4, 1), 0.5))
    assert np.allclose(value_jitter(img, 0.2, 1.0).pixels, 0.7)
    noisy = Image(np.random.default_rng(0).random((4, 4, 3)))
    assert np.allclose(value_jitter(noisy, 0.1, 0.0).pixels, 0.6)
    with pytest.raises(InvalidArgumentError):
        value_jitter(img, 0.0, -1.0)


def test_saturation_zero_is_grayscale(rgb_image):
    out = saturation_scale(rgb_image, 0.0)
    assert np.allclose(out.pixels[:, :, 0], out.pixels[:, :, 1])
    assert np.allclose(out.pixels[:, :, 1], out.pixels[:, :, 2])


def test_saturation_gray_image_unchanged(gray_image):
    assert np.array_equal(saturation_scale(gray_image, 3.0).pixels, gray_image.pixels)


def test_pixel_quantize_binary(rgb_image):
    out = pixel_quantize(rgb_image, 2)
    assert set(np.unique(out.pixels)) <= {0.0, 1.0}


def test_pixel_quantize_idempotent(rgb_image):
    once = pixel_quantize(rgb_image, 8)
    assert np.array_equal(pixel_quantize(once, 8).pixels, once.pixels)
    assert len(np.unique(once.pixels)) <= 8


def test_pixel_quantize_invalid(rgb_image):
    with pytest.raises(InvalidArgumentError):
        pixel_quantize(rgb_image, 1)
    with pytest.raises(InvalidArgumentError):
        pixel_quantize(rgb_image, 257)


def test_foreign_requantize_idempotent(gray_corpus, gray_codebook):
    once = foreign_requantize(gray_corpus[0], gray_codebook, 2)
    twice = foreign_requantize(once, gray_codebook, 2)
    assert np.allclose(twice.pixels, once.pixels)


def test_foreign_requantize_changes_tokens(gray_corpus, gray_codebook):
    out = foreign_requantize(gray_corpus[0], gray_codebook, 2)
    assert out.pixels.shape == gray_corpus[0].pixels.shape
    assert not np.array_equal(out.pixels, gray_corpus[0].pixels)


# ── 토큰 공격 ──


def test_token_flip_zero_is_identity(rng):
    q = TokenMap(rng.integers(64, size=(8, 8)), 64, 5)
    out = token_flip(q, 0.0, rng)
    assert np.array_equal(out.tokens, q.tokens)
    assert out.codebook_id == 5


def test_token_flip_half_on_all_green(small_pool):
    green = small_pool.green_lists[0]
    q = TokenMap(np.resize(green, (64, 64)), 64, 0)
    out = token_flip(q, 0.5, np.random.default_rng(3))
    fraction = np.isin(out.tokens, green).mean()
    expected = expected_green_after_flip(1.0, 0.5, small_pool.gamma_eff, q.size) / q.size
    assert expected == pytest.approx(0.625)
    assert fraction == pytest.approx(expected, abs=0.03)


def test_token_flip_invalid(rng):
    q = TokenMap(np.zeros((2, 2), dtype=int), 4, 0)
    with pytest.raises(InvalidArgumentError):
        token_flip(q, 1.5, rng)


# ── AttackSpec / 파이프라인 ──


def test_spec_defaults_filled():
    assert AttackSpec(AttackKind.BOX_BLUR).params == {"k": 8.0}
    assert AttackSpec(AttackKind.ROTATE).params == {"max_degrees": 180.0}
    assert AttackSpec(AttackKind.BOX_BLUR, {"k": 3}).label() == "box_blur(k=3)"


def test_spec_validation():
    with pytest.raises(InvalidArgumentError):
        AttackSpec(AttackKind.GAUSS_NOISE, {"sigma": 1.0})
    with pytest.raises(InvalidArgumentError):
        AttackSpec(AttackKind.TOKEN_FLIP, {"p": 1.5})
    with pytest.raises(InvalidArgumentError):
        AttackSpec(AttackKind.BOX_BLUR, {"k": 2.5})
    with pytest.raises(InvalidArgumentError):
        AttackSpec.from_mapping({"kind": "jpeg_compress"})


def test_pipeline_splits_pixel_and_token_steps():
    pipeline = AttackPipeline.from_steps("mixed", [
        {"kind": "token_flip", "params": {"p": 0.2}, "seed": 1},
        {"kind": "gauss_noise", "params": {"var": 0.01}, "seed": 2},
    ])
    assert [s.kind for s in pipeline.pixel_steps] == [AttackKind.GAUSS_NOISE]
    assert [s.kind for s in pipeline.token_steps] == [AttackKind.TOKEN_FLIP]
    assert not pipeline.needs_foreign_codebook
    assert AttackPipeline("none").describe() == "none"


def test_pipeline_deterministic_per_job(rgb_image):
    pipeline = get_preset("gauss")
    context = AttackContext(patch=4)
    a = apply_pixel_attacks(rgb_image, pipeline, context, job_index=3)
    b = apply_pixel_attacks(rgb_image, pipeline, context, job_index=3)
    c = apply_pixel_attacks(rgb_image, pipeline, context, job_index=4)
    assert np.array_equal(a.pixels, b.pixels)
    assert not np.array_equal(a.pixels, c.pixels)


def test_pipeline_applies_steps_in_order(rgb_image):
    pipeline = AttackPipeline.from_steps("order", [
        {"kind": "value_jitter", "params": {"brightness": 0.0, "contrast": 0.0}},
        {"kind": "pixel_quantize", "params": {"levels": 2}},
    ])
    out = apply_pixel_attacks(rgb_image, pipeline, AttackContext(patch=4))
    # 0.5로 평탄화한 뒤 2단계 양자화하면 round-half-even으로 0이 됩니다
    assert np.array_equal(out.pixels, np.zeros_like(rgb_image.pixels))


def test_token_pipeline(rng):
    q = TokenMap(rng.integers(16, size=(8, 8)), 16, 0)
    pipeline = AttackPipeline.from_steps("flip", [{"kind": "token_flip", "params": {"p": 1.0}}])
    a = apply_token_attacks(q, pipeline, job_index=0)
    b = apply_token_attacks(q, pipeline, job_index=0)
    assert np.array_equal(a.tokens, b.tokens)
    assert np.array_equal(apply_token_attacks(q, get_preset("clean")).tokens, q.tokens)


def test_presets():
    assert set(PRESETS) == {"clean", "gauss", "color", "geom", "jpeg", "regen"}
    assert PRESETS["regen"].needs_foreign_codebook
    assert [s.kind for s in PRESETS["geom"].steps] == [AttackKind.CROP_RESIZE, AttackKind.ROTATE]
    with pytest.raises(InvalidArgumentError):
        get_preset("blur")


def test_regen_requires_foreign_codebook(rgb_image, gray_corpus, gray_codebook):
    with pytest.raises(InvalidArgumentError):
        apply_pixel_attacks(rgb_image, get_preset("regen"), AttackContext(patch=4))
    context = AttackContext(patch=2, foreign_codebook=gray_codebook)
    out = apply_pixel_attacks(gray_corpus[1], get_preset("regen"), context)
    assert out.pixels.shape == gray_corpus[1].pixels.shape


@pytest.mark.parametrize("p", [0.1, 0.3, 0.5])
def test_token_flip_mean_green_count(small_pool, p):
    green = small_pool.green_lists[0]
    q = TokenMap(np.resize(green, (16, 16)), 64, 0)
    rng = np.random.default_rng(int(p * 100))
    counts = np.array([np.isin(token_flip(q, p, rng).tokens, green).sum() for _ in range(1000)])
    expected = expected_green_after_flip(1.0, p, small_pool.gamma_eff, q.size)
    keep = (1 - p) + p * small_pool.gamma_eff
    se = np.sqrt(q.size * keep * (1 - keep) / counts.size)
    assert abs(counts.mean() - expected) <= 4 * se
