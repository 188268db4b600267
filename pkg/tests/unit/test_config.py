"""설정 로딩과 검증 테스트."""

from pathlib import Path

import pytest
import yaml
from pydantic import ValidationError

from tokenmark.config import (
    AppConfig,
    ExperimentConfig,
    RuntimeConfig,
    WatermarkConfig,
    load_experiment_config,
)

EXPERIMENTS_DIR = Path(__file__).resolve().parents[2] / "config" / "experiments"


def test_experiment_defaults():
    config = ExperimentConfig()
    assert config.mode == "post"
    assert config.gamma == 0.1
    assert config.n_lists == 32
    assert config.seeds == [0, 1, 2, 3, 4]
    assert list(config.attacks) == ["clean"]


@pytest.mark.parametrize(
    "overrides",
    [
        {"gamma": 0.0},
        {"gamma": 1.5},
        {"mode": "sampling"},
        {"source": "transformer"},
        {"fpr": 0.0},
        {"seeds": []},
        {"n_lists": 0},
        {"sigma": -1.0},
        {"temperature": 0.0},
        {"synthetic_channels": 2},
        {"presets": ["blur"]},
        {"attacks": {"x": [{"kind": "jpeg_compress"}]}},
    ],
)
def test_experiment_rejects_invalid(overrides):
    with pytest.raises(ValidationError):
        ExperimentConfig(**overrides)


def test_synthetic_size_must_match_patch():
    with pytest.raises(ValidationError):
        ExperimentConfig(synthetic_size=30, patch=4)
    assert ExperimentConfig(synthetic_size=30, patch=3).patch == 3


def test_post_mode_needs_enough_images():
    with pytest.raises(ValidationError):
        ExperimentConfig(mode="post", synthetic_count=10, n_images=20)
    assert ExperimentConfig(mode="hard", synthetic_count=10, n_images=20).n_images == 20


def test_missing_paths_rejected(tmp_path):
    with pytest.raises(ValidationError):
        ExperimentConfig(codebook_path=str(tmp_path / "none.lbwc"))
    with pytest.raises(ValidationError):
        ExperimentConfig(pool_path=str(tmp_path / "none.lbwg"))
    with pytest.raises(ValidationError):
        ExperimentConfig(corpus_dir=str(tmp_path / "none"))


def test_foreign_attack_needs_foreign_codebook(tmp_path):
    codebook = tmp_path / "cb.lbwc"
    codebook.write_bytes(b"placeholder")
    with pytest.raises(ValidationError):
        ExperimentConfig(codebook_path=str(codebook), presets=["regen"])
    with pytest.raises(ValidationError):
        ExperimentConfig(
            codebook_path=str(codebook),
            attacks={"regen": [{"kind": "foreign_requantize"}]},
        )
    # 코드북을 직접 학습하는 경우 외부 코드북도 함께 학습합니다
    assert ExperimentConfig(presets=["regen"]).presets == ["regen"]


def test_load_experiment_yaml(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text(
        yaml.safe_dump({
            "name": "tiny",
            "mode": "hard",
            "synthetic_count": 4,
            "synthetic_size": 16,
            "attacks": {"flip": [{"kind": "token_flip", "params": {"p": 0.2}, "seed": 3}]},
            "seeds": [7],
        }),
        encoding="utf-8",
    )
    config = load_experiment_config(path)
    assert config.name == "tiny"
    assert config.attacks["flip"][0].params == {"p": 0.2}
    assert config.attacks["flip"][0].seed == 3
    assert config.seeds == [7]


def test_load_experiment_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_experiment_config(tmp_path / "none.yaml")


@pytest.mark.parametrize("name", ["post_clean.yaml", "soft_bigram.yaml"])
def test_bundled_experiment_configs_valid(name):
    config = load_experiment_config(EXPERIMENTS_DIR / name)
    assert config.n_images <= config.synthetic_count
    assert config.synthetic_size % config.patch == 0


def test_watermark_config_validation():
    assert WatermarkConfig().z_threshold == 4.0
    with pytest.raises(ValidationError):
        WatermarkConfig(gamma=2.0)
    with pytest.raises(ValidationError):
        WatermarkConfig(mode="sampling")


def test_runtime_seed_from_env(monkeypatch):
    monkeypatch.setenv("LBW_SEED", "42")
    assert RuntimeConfig().seed == 42
    monkeypatch.setenv("LBW_WORKERS", "0")
    with pytest.raises(ValidationError):
        RuntimeConfig()


def test_app_config_sections():
    app = AppConfig()
    assert app.watermark.patch >= 1
    assert app.logging.level in ("DEBUG", "INFO", "WARNING", "ERROR")
