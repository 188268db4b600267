"""공격 명세 모듈.

공격 종류와 파라미터 허용 범위, 파이프라인 한 단계({kind, params, seed})를 정의합니다.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from tokenmark.errors import InvalidArgumentError


class AttackKind(Enum):
    GAUSS_NOISE = "gauss_noise"
    BOX_BLUR = "box_blur"
    CROP_RESIZE = "crop_resize"
    ROTATE = "rotate"
    VALUE_JITTER = "value_jitter"
    SATURATION = "saturation"
    PIXEL_QUANTIZE = "pixel_quantize"
    TOKEN_FLIP = "token_flip"
    FOREIGN_REQUANTIZE = "foreign_requantize"

    @property
    def is_token_level(self) -> bool:
        """재양자화된 토큰 맵에 적용되는 공격인지 여부."""
        return self is AttackKind.TOKEN_FLIP


# 종류별 파라미터: 이름 → (기본값, 최솟값, 최댓값)
PARAM_RANGES: dict[AttackKind, dict[str, tuple[float, float, float]]] = {
    AttackKind.GAUSS_NOISE: {"var": (0.1, 0.0, math.inf)},
    AttackKind.BOX_BLUR: {"k": (8, 1, math.inf)},
    AttackKind.CROP_RESIZE: {"ratio": (0.7, 1e-6, 1.0)},
    # degrees가 있으면 고정 각도, 없으면 [0, max_degrees]에서 시드로 추출
    AttackKind.ROTATE: {"degrees": (math.nan, -360.0, 360.0), "max_degrees": (180.0, 0.0, 360.0)},
    # brightness/contrast가 없으면 ±brightness_range, max(0, 1±contrast_range)에서 추출
    AttackKind.VALUE_JITTER: {
        "brightness": (math.nan, -1.0, 1.0),
        "contrast": (math.nan, 0.0, math.inf),
        "brightness_range": (0.0, 0.0, 1.0),
        "contrast_range": (0.0, 0.0, math.inf),
    },
    AttackKind.SATURATION: {"factor": (3.0, 0.0, math.inf)},
    AttackKind.PIXEL_QUANTIZE: {"levels": (8, 2, 256)},
    AttackKind.TOKEN_FLIP: {"p": (0.1, 0.0, 1.0)},
    AttackKind.FOREIGN_REQUANTIZE: {},
}

INTEGER_PARAMS = {(AttackKind.BOX_BLUR, "k"), (AttackKind.PIXEL_QUANTIZE, "levels")}


@dataclass(frozen=True)
class AttackSpec:
    """공격 한 단계. params는 종류별 허용 범위로 검증되고 기본값이 채워집니다."""

    kind: AttackKind
    params: dict[str, float] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self) -> None:
        ranges = PARAM_RANGES[self.kind]
        unknown = set(self.params) - set(ranges)
        if unknown:
            raise InvalidArgumentError(
                f"{self.kind.value} 공격에 알 수 없는 파라미터: {sorted(unknown)}"
            )
        resolved: dict[str, float] = {}
        for name, (default, lo, hi) in ranges.items():
            value = float(self.params.get(name, default))
            if math.isnan(value):
                continue
            if not lo <= value <= hi:
                raise InvalidArgumentError(
                    f"{self.kind.value}.{name}={value}가 허용 범위 [{lo}, {hi}]를 벗어났습니다"
                )
            if (self.kind, name) in INTEGER_PARAMS and not value.is_integer():
                raise InvalidArgumentError(f"{self.kind.value}.{name}는 정수여야 합니다: {value}")
            resolved[name] = value
        object.__setattr__(self, "params", resolved)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> AttackSpec:
        """{kind, params, seed} 매핑(YAML 항목)에서 생성합니다."""
        try:
            kind = AttackKind(data["kind"])
        except (KeyError, ValueError) as e:
            raise InvalidArgumentError(f"알 수 없는 공격 종류: {data.get('kind')!r}") from e
        return cls(kind, dict(data.get("params") or {}), int(data.get("seed", 0)))

    def label(self) -> str:
        args = ",".join(f"{k}={v:g}" for k, v in self.params.items())
        return f"{self.kind.value}({args})"
