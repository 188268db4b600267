"""설정 관리 모듈.

config/settings.yaml에서 기본 하이퍼파라미터를, 환경변수(LBW_*)와 .env에서 런타임 설정을 로드합니다.
실험 설정(ExperimentConfig)은 eval 명령에 전달되는 별도 YAML 파일에서 읽습니다.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Any

import yaml
from pydantic import BaseModel, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from tokenmark.attacks.pipeline import PRESETS
from tokenmark.attacks.spec import AttackKind

EMBED_MODES = ("post", "hard", "soft", "none")
SOURCE_KINDS = ("bigram", "smooth")


def _resolve_project_root() -> Path:
    """프로젝트 루트 디렉토리를 결정합니다.

    환경변수 LBW_ROOT가 설정되어 있으면 해당 경로를, 아니면 현재 작업 디렉토리를 사용합니다.
    """
    env_root = os.environ.get("LBW_ROOT")
    if env_root:
        return Path(env_root)
    return Path.cwd()


PROJECT_ROOT = _resolve_project_root()


def _load_yaml_settings() -> dict[str, Any]:
    """config/settings.yaml 파일을 로드합니다."""
    settings_path = PROJECT_ROOT / "config" / "settings.yaml"
    if settings_path.exists():
        with open(settings_path) as f:
            return yaml.safe_load(f) or {}
    return {}


def _check_gamma(v: float) -> float:
    if not 0.0 < v <= 1.0:
        raise ValueError("gamma는 (0, 1] 범위여야 합니다")
    return v


def _check_mode(v: str) -> str:
    if v not in EMBED_MODES:
        raise ValueError(f"mode는 {EMBED_MODES} 중 하나여야 합니다")
    return v


class RuntimeConfig(BaseSettings):
    """런타임 설정. LBW_SEED는 --seed가 없는 모든 명령의 기본 시드입니다."""

    model_config = SettingsConfigDict(env_prefix="LBW_", env_file=".env", extra="ignore")

    seed: int = 0
    workers: int = 1

    @field_validator("workers")
    @classmethod
    def validate_workers(cls, v: int) -> int:
        if v < 1:
            raise ValueError("workers는 1 이상이어야 합니다")
        return v


class WatermarkConfig(BaseSettings):
    """워터마크 기본 하이퍼파라미터 (settings.yaml에서 로드)."""

    model_config = SettingsConfigDict(extra="ignore")

    patch: int = 4
    vocab_size: int = 1024
    gamma: float = 0.1
    sigma: float = 4.0
    n_lists: int = 32
    mode: str = "post"
    temperature: float = 1.0
    z_threshold: float = 4.0
    pool_max_iters: int = 1000
    kmeans_max_iters: int = 25

    @field_validator("gamma")
    @classmethod
    def validate_gamma(cls, v: float) -> float:
        return _check_gamma(v)

    @field_validator("mode")
    @classmethod
    def validate_mode(cls, v: str) -> str:
        return _check_mode(v)

    @field_validator("sigma")
    @classmethod
    def validate_sigma(cls, v: float) -> float:
        if v < 0:
            raise ValueError("sigma는 0 이상이어야 합니다")
        return v

    @field_validator("temperature")
    @classmethod
    def validate_temperature(cls, v: float) -> float:
        if v <= 0:
            raise ValueError("temperature는 0보다 커야 합니다")
        return v

    @field_validator("patch", "vocab_size", "n_lists", "pool_max_iters", "kmeans_max_iters")
    @classmethod
    def validate_positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("양의 정수여야 합니다")
        return v


class LoggingConfig(BaseSettings):
    """로깅 설정."""

    model_config = SettingsConfigDict(extra="ignore")

    level: str = "INFO"
    file: str | None = None
    max_bytes: int = 10_485_760  # 10MB
    backup_count: int = 5


class AttackStepConfig(BaseModel):
    """공격 파이프라인의 한 단계 {kind, params, seed}."""

    kind: str
    params: dict[str, float] = Field(default_factory=dict)
    seed: int = 0

    @field_validator("kind")
    @classmethod
    def validate_kind(cls, v: str) -> str:
        valid = [k.value for k in AttackKind]
        if v not in valid:
            raise ValueError(f"알 수 없는 공격 종류: '{v}' (허용: {valid})")
        return v


class ExperimentConfig(BaseModel):
    """run_experiment 설정. 모든 범위는 작업 시작 전에 검증됩니다."""

    name: str = "experiment"
    mode: str = "post"
    codebook_path: str | None = None
    pool_path: str | None = None
    foreign_codebook_path: str | None = None
    corpus_dir: str | None = None
    synthetic_count: int = 100
    synthetic_size: int = 64
    synthetic_channels: int = 3
    corpus_seed: int = 0
    vocab_size: int = 1024
    kmeans_max_iters: int = 25
    patch: int = 4
    gamma: float = 0.1
    sigma: float = 4.0
    n_lists: int = 32
    temperature: float = 1.0
    list_seed: int = 0
    source: str = "bigram"
    source_tau: float = 1.0
    source_seed: int = 0
    grid: tuple[int, int] | None = None
    pixel_roundtrip: bool = True
    n_images: int = 100
    attacks: dict[str, list[AttackStepConfig]] = Field(default_factory=lambda: {"clean": []})
    presets: list[str] = Field(default_factory=list)
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    fpr: float = 0.01
    z_threshold: float = 4.0
    pool_max_iters: int = 1000
    workers: int = 1
    output_dir: str = "results"
    db_path: str | None = None

    @field_validator("gamma")
    @classmethod
    def validate_gamma(cls, v: float) -> float:
        return _check_gamma(v)

    @field_validator("mode")
    @classmethod
    def validate_mode(cls, v: str) -> str:
        return _check_mode(v)

    @field_validator("source")
    @classmethod
    def validate_source(cls, v: str) -> str:
        if v not in SOURCE_KINDS:
            raise ValueError(f"source는 {SOURCE_KINDS} 중 하나여야 합니다")
        return v

    @field_validator("fpr")
    @classmethod
    def validate_fpr(cls, v: float) -> float:
        if not 0.0 < v < 1.0:
            raise ValueError("fpr은 (0, 1) 범위여야 합니다")
        return v

    @field_validator("seeds")
    @classmethod
    def validate_seeds(cls, v: list[int]) -> list[int]:
        if not v:
            raise ValueError("seeds는 최소 1개가 필요합니다")
        return v

    @field_validator(
        "synthetic_count", "synthetic_size", "vocab_size", "kmeans_max_iters", "patch",
        "n_lists", "n_images", "pool_max_iters", "workers",
    )
    @classmethod
    def validate_positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("양의 정수여야 합니다")
        return v

    @model_validator(mode="after")
    def validate_consistency(self) -> ExperimentConfig:
        if self.sigma < 0:
            raise ValueError("sigma는 0 이상이어야 합니다")
        if self.temperature <= 0:
            raise ValueError("temperature는 0보다 커야 합니다")
        if self.synthetic_channels not in (1, 3):
            raise ValueError("synthetic_channels는 1 또는 3이어야 합니다")
        if self.corpus_dir is None and self.synthetic_size % self.patch != 0:
            raise ValueError("synthetic_size는 patch의 배수여야 합니다")
        for label in ("codebook_path", "pool_path", "foreign_codebook_path", "corpus_dir"):
            value = getattr(self, label)
            if value is not None and not Path(value).exists():
                raise ValueError(f"{label} 경로가 없습니다: {value}")
        unknown = [p for p in self.presets if p not in PRESETS]
        if unknown:
            raise ValueError(f"알 수 없는 공격 프리셋: {unknown} (허용: {sorted(PRESETS)})")
        uses_foreign = any(
            step.kind == AttackKind.FOREIGN_REQUANTIZE.value
            for steps in self.attacks.values() for step in steps
        ) or any(PRESETS[p].needs_foreign_codebook for p in self.presets)
        if uses_foreign and self.foreign_codebook_path is None and self.codebook_path is not None:
            raise ValueError("foreign_requantize 공격에는 foreign_codebook_path가 필요합니다")
        if self.mode == "post" and self.corpus_dir is None and self.n_images > self.synthetic_count:
            raise ValueError("post 모드에서는 n_images가 synthetic_count 이하여야 합니다")
        return self


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    """실험 설정 YAML 파일을 로드합니다."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"실험 설정 파일이 없습니다: {p}")
    with open(p) as f:
        data = yaml.safe_load(f) or {}
    return ExperimentConfig(**data)


class AppConfig:
    """전체 애플리케이션 설정을 관리하는 최상위 클래스."""

    def __init__(self) -> None:
        yaml_settings = _load_yaml_settings()

        self.runtime = RuntimeConfig(**yaml_settings.get("runtime", {}))
        self.watermark = WatermarkConfig(**yaml_settings.get("watermark", {}))
        self.logging = LoggingConfig(**yaml_settings.get("logging", {}))
