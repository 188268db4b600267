"""공격 파이프라인 모듈.

AttackSpec 목록을 왼쪽에서 오른쪽으로 적용합니다. 픽셀 단계는 이미지에, 토큰 단계(token_flip)는
재양자화된 토큰 맵에 적용됩니다. 단계별 난수는 (step.seed, job_index)에서 파생됩니다.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np

from tokenmark.attacks.pixel import (
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
from tokenmark.attacks.tokens import token_flip
from tokenmark.errors import InvalidArgumentError
from tokenmark.utils import job_rng
from tokenmark.vq.codebook import Codebook
from tokenmark.vq.quantizer import Image, TokenMap


@dataclass(frozen=True)
class AttackContext:
    """파이프라인 실행에 필요한 외부 자원."""

    patch: int
    foreign_codebook: Codebook | None = None


@dataclass(frozen=True)
class AttackPipeline:
    """이름이 붙은 공격 단계 목록."""

    name: str
    steps: tuple[AttackSpec, ...] = ()

    @classmethod
    def from_steps(
        cls, name: str, steps: Iterable[Mapping[str, Any] | AttackSpec]
    ) -> AttackPipeline:
        specs = tuple(s if isinstance(s, AttackSpec) else AttackSpec.from_mapping(s) for s in steps)
        return cls(name, specs)

    @property
    def pixel_steps(self) -> tuple[AttackSpec, ...]:
        return tuple(s for s in self.steps if not s.kind.is_token_level)

    @property
    def token_steps(self) -> tuple[AttackSpec, ...]:
        return tuple(s for s in self.steps if s.kind.is_token_level)

    @property
    def needs_foreign_codebook(self) -> bool:
        return any(s.kind is AttackKind.FOREIGN_REQUANTIZE for s in self.steps)

    def describe(self) -> str:
        if not self.steps:
            return "none"
        return " → ".join(s.label() for s in self.steps)


def apply_pixel_step(
    img: Image, step: AttackSpec, rng: np.random.Generator, context: AttackContext
) -> Image:
    """픽셀 공격 한 단계를 적용합니다."""
    p = step.params
    kind = step.kind
    if kind is AttackKind.GAUSS_NOISE:
        return gauss_noise(img, p["var"], rng)
    if kind is AttackKind.BOX_BLUR:
        return box_blur(img, int(p["k"]))
    if kind is AttackKind.CROP_RESIZE:
        return crop_resize(img, p["ratio"], rng)
    if kind is AttackKind.ROTATE:
        degrees = p["degrees"] if "degrees" in p else float(rng.uniform(0.0, p["max_degrees"]))
        return rotate(img, degrees)
    if kind is AttackKind.VALUE_JITTER:
        if "brightness" in p:
            brightness = p["brightness"]
        else:
            spread = p["brightness_range"]
            brightness = float(rng.uniform(-spread, spread))
        if "contrast" in p:
            contrast = p["contrast"]
        else:
            spread = p["contrast_range"]
            contrast = float(rng.uniform(max(0.0, 1.0 - spread), 1.0 + spread))
        return value_jitter(img, brightness, contrast)
    if kind is AttackKind.SATURATION:
        return saturation_scale(img, p["factor"])
    if kind is AttackKind.PIXEL_QUANTIZE:
        return pixel_quantize(img, int(p["levels"]))
    if kind is AttackKind.FOREIGN_REQUANTIZE:
        if context.foreign_codebook is None:
            raise InvalidArgumentError("foreign_requantize 공격에는 두 번째 코드북이 필요합니다")
        return foreign_requantize(img, context.foreign_codebook, context.patch)
    raise InvalidArgumentError(f"픽셀 공격이 아닙니다: {kind.value}")


def apply_pixel_attacks(
    img: Image, pipeline: AttackPipeline, context: AttackContext, job_index: int = 0
) -> Image:
    """파이프라인의 픽셀 단계를 순서대로 적용합니다. 같은 (spec, job_index)면 결과가 같습니다."""
    out = img
    for step in pipeline.pixel_steps:
        out = apply_pixel_step(out, step, job_rng(step.seed, job_index), context)
    return out


def apply_token_attacks(q: TokenMap, pipeline: AttackPipeline, job_index: int = 0) -> TokenMap:
    """파이프라인의 토큰 단계를 순서대로 적용합니다."""
    out = q
    for step in pipeline.token_steps:
        out = token_flip(out, step.params["p"], job_rng(step.seed, job_index))
    return out


def _preset(name: str, steps: Sequence[Mapping[str, Any]]) -> AttackPipeline:
    return AttackPipeline.from_steps(name, steps)


PRESETS: dict[str, AttackPipeline] = {
    "clean": AttackPipeline("clean"),
    "gauss": _preset("gauss", [
        {"kind": "gauss_noise", "params": {"var": 0.1}, "seed": 11},
        {"kind": "box_blur", "params": {"k": 8}},
    ]),
    "color": _preset("color", [
        {
            "kind": "value_jitter",
            "params": {"brightness_range": 0.2, "contrast_range": 3.0},
            "seed": 12,
        },
        {"kind": "saturation", "params": {"factor": 3.0}},
    ]),
    "geom": _preset("geom", [
        {"kind": "crop_resize", "params": {"ratio": 0.7}, "seed": 13},
        {"kind": "rotate", "params": {"max_degrees": 180.0}, "seed": 14},
    ]),
    "jpeg": _preset("jpeg", [{"kind": "pixel_quantize", "params": {"levels": 8}}]),
    "regen": _preset("regen", [{"kind": "foreign_requantize"}]),
}


def get_preset(name: str) -> AttackPipeline:
    try:
        return PRESETS[name]
    except KeyError as e:
        raise InvalidArgumentError(
            f"알 수 없는 공격 프리셋: '{name}' (허용: {sorted(PRESETS)})"
        ) from e
