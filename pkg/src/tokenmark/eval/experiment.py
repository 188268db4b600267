"""실험 실행 모듈.

시드마다 그린 리스트 풀을 새로 만들고(pool_path가 있으면 그 풀을 재사용), 워터마크 이미지 n_images장과 클린 이미지 n_images장에
공격 파이프라인을 적용한 뒤 검출 점수로 AUC / TPR@FPR을 집계합니다.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.stats import spearmanr

from tokenmark.attacks.pipeline import (
    PRESETS,
    AttackContext,
    AttackPipeline,
    apply_pixel_attacks,
    apply_token_attacks,
)
from tokenmark.config import ExperimentConfig
from tokenmark.errors import InvalidArgumentError
from tokenmark.eval.metrics import (
    ScoreSet,
    estimate_green_list,
    estimation_overlap,
    green_assignment_cv,
    psnr,
    roc_auc,
    ssim,
    token_consistency,
    tpr_at_fpr,
)
from tokenmark.logging_config import get_logger
from tokenmark.utils import job_rng
from tokenmark.vq.codebook import Codebook, load_codebook, shuffle_rows, train_codebook
from tokenmark.vq.corpus import extract_patches, quantize_corpus, synthetic_corpus
from tokenmark.vq.image_io import from_uint8, load_image_dir, to_uint8
from tokenmark.vq.quantizer import Image, TokenMap, decode, encode, quantize
from tokenmark.watermark.detector import detect_tokenmap
from tokenmark.watermark.embed import (
    BiasConfig,
    BiasMode,
    GenerationOrder,
    choose_list_id,
    embed_posthoc,
    generate_watermarked,
)
from tokenmark.watermark.greenlist import (
    GreenListPool,
    SubstitutionTable,
    generate_green_matrix,
    load_pool,
)
from tokenmark.watermark.sources import LogitSource, build_source

log = get_logger(__name__)

# 외부 코드북 학습 시드 오프셋 (주 코드북과 독립)
FOREIGN_SEED_OFFSET = 1_000_003


@dataclass
class ExperimentResources:
    """시드와 무관하게 한 번만 준비하는 자원."""

    images: list[Image]
    codebook: Codebook
    foreign_codebook: Codebook | None
    source: LogitSource | None
    grid: tuple[int, int]
    pipelines: list[AttackPipeline]
    pool: GreenListPool | None = None


@dataclass
class SeedResult:
    """한 시드 × 한 공격의 집계 결과."""

    seed: int
    attack: str
    auc: float
    tpr_at_fpr: float
    detect_rate: float
    false_alarm_rate: float
    z_pos_mean: float
    z_neg_mean: float
    psnr: float
    ssim: float


@dataclass
class ExperimentReport:
    """실험 결과. records는 (시드, 공격) 순서로 정렬되어 있습니다."""

    name: str
    method: str
    gamma: float
    sigma: float
    n_lists: int
    fpr: float
    seeds: list[int]
    results: list[SeedResult] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        """시드별 레코드 DataFrame."""
        rows = [
            {"method": self.method, "gamma": self.gamma, "sigma": self.sigma, **vars(r)}
            for r in self.results
        ]
        return pd.DataFrame(rows)

    def summary(self) -> pd.DataFrame:
        """공격별 시드 평균 (method × attack × {auc, tpr_at_fpr})."""
        df = self.to_frame()
        return (
            df.groupby(["method", "attack"], sort=False)[
                ["auc", "tpr_at_fpr", "detect_rate", "false_alarm_rate", "psnr", "ssim"]
            ]
            .mean()
            .reset_index()
        )

    def mean_auc(self) -> float:
        return float(np.mean([r.auc for r in self.results]))

    def mean_tpr(self) -> float:
        return float(np.mean([r.tpr_at_fpr for r in self.results]))


@dataclass
class _JobScores:
    pos: dict[str, tuple[float, bool]]
    neg: dict[str, tuple[float, bool]]
    psnr: float = math.nan
    ssim: float = math.nan


def build_pipelines(config: ExperimentConfig) -> list[AttackPipeline]:
    """설정의 attacks(이름 → 단계 목록)와 presets를 파이프라인 목록으로 만듭니다."""
    pipelines = [
        AttackPipeline.from_steps(name, [s.model_dump() for s in steps])
        for name, steps in config.attacks.items()
    ]
    names = {p.name for p in pipelines}
    pipelines.extend(PRESETS[p] for p in config.presets if p not in names)
    if not pipelines:
        raise InvalidArgumentError("평가할 공격 파이프라인이 없습니다")
    return pipelines


def load_corpus(config: ExperimentConfig) -> list[Image]:
    if config.corpus_dir is not None:
        images = load_image_dir(config.corpus_dir)
        if not images:
            raise InvalidArgumentError(f"코퍼스 디렉토리에 이미지가 없습니다: {config.corpus_dir}")
        return images
    return synthetic_corpus(
        config.synthetic_count, config.synthetic_size, config.synthetic_channels, config.corpus_seed
    )


def _train_or_load(
    path: str | None, images: list[Image], config: ExperimentConfig, seed: int
) -> Codebook:
    if path is not None:
        return load_codebook(path)
    corpus = extract_patches(images, config.patch)
    cb = train_codebook(corpus, config.vocab_size, config.kmeans_max_iters, seed)
    return shuffle_rows(cb, seed)


def prepare_resources(config: ExperimentConfig) -> ExperimentResources:
    """코퍼스, 코드북, (필요 시) 외부 코드북과 로짓 소스를 준비합니다."""
    images = load_corpus(config)
    pipelines = build_pipelines(config)
    cb = _train_or_load(config.codebook_path, images, config, config.corpus_seed)

    dim = config.patch * config.patch * images[0].channels
    if cb.dim != dim:
        raise InvalidArgumentError(f"코드북 차원({cb.dim})이 패치 차원({dim})과 다릅니다")

    foreign = None
    if any(p.needs_foreign_codebook for p in pipelines):
        foreign = _train_or_load(
            config.foreign_codebook_path, images, config, config.corpus_seed + FOREIGN_SEED_OFFSET
        )
        if foreign.dim != cb.dim:
            raise InvalidArgumentError("외부 코드북의 차원이 주 코드북과 다릅니다")

    h, w = images[0].height, images[0].width
    if h % config.patch or w % config.patch:
        raise InvalidArgumentError(f"이미지 크기 {h}×{w}가 patch {config.patch}의 배수가 아닙니다")
    grid = config.grid or (h // config.patch, w // config.patch)

    source = None
    if config.mode != "post":
        maps = quantize_corpus(images, cb, config.patch) if config.source == "bigram" else None
        source = build_source(
            config.source, cb.vocab_size, config.source_seed, config.source_tau, maps
        )
    elif config.n_images > len(images):
        raise InvalidArgumentError(
            f"n_images({config.n_images})가 코퍼스 크기({len(images)})보다 큽니다"
        )

    pool = None
    if config.pool_path is not None:
        pool = load_pool(config.pool_path)
        pool.check_codebook(cb)

    return ExperimentResources(
        images=images, codebook=cb, foreign_codebook=foreign, source=source,
        grid=grid, pipelines=pipelines, pool=pool,
    )


def _roundtrip(img: Image, enabled: bool) -> Image:
    return from_uint8(to_uint8(img)) if enabled else img


class _SeedRunner:
    """한 시드의 이미지별 작업. 작업은 서로 독립이며 job_index로 난수가 정해집니다."""

    def __init__(
        self, config: ExperimentConfig, res: ExperimentResources, pool: GreenListPool, seed: int
    ) -> None:
        self.config = config
        self.res = res
        self.pool = pool
        self.seed = seed
        self.context = AttackContext(patch=config.patch, foreign_codebook=res.foreign_codebook)
        self.table = SubstitutionTable(res.codebook, pool) if config.mode == "post" else None

    def _score(self, img: Image, pipeline: AttackPipeline, job_index: int) -> tuple[float, bool]:
        attacked = apply_pixel_attacks(img, pipeline, self.context, job_index)
        q = quantize(encode(attacked, self.config.patch), self.res.codebook)
        q = apply_token_attacks(q, pipeline, job_index)
        result = detect_tokenmap(q, self.pool, self.config.z_threshold)
        return result.z, result.decision

    def _generate(self, mode: BiasMode, list_id: int, rng: np.random.Generator) -> Image:
        assert self.res.source is not None
        cfg = BiasConfig(mode, self.config.sigma, list_id, self.config.temperature)
        q = generate_watermarked(
            self.res.source, self.pool, cfg, self.res.grid, GenerationOrder.RASTER, rng,
            codebook_id=self.res.codebook.id,
        )
        return decode(q, self.res.codebook, self.config.patch)

    def __call__(self, j: int) -> _JobScores:
        cfg = self.config
        list_id = choose_list_id(self.pool, np.random.default_rng([cfg.list_seed, self.seed, j]))
        scores = _JobScores(pos={}, neg={})

        if cfg.mode == "post":
            original = self.res.images[j]
            assert self.table is not None
            marked, _ = embed_posthoc(
                original, self.res.codebook, self.pool, list_id, cfg.patch, self.table
            )
            scores.psnr = psnr(original, marked)
            scores.ssim = ssim(original, marked)
            positive = _roundtrip(marked, cfg.pixel_roundtrip)
            negative = _roundtrip(original, cfg.pixel_roundtrip)
        else:
            positive = self._generate(BiasMode(cfg.mode), list_id, job_rng(self.seed, j))
            negative = self._generate(
                BiasMode.NONE, list_id, job_rng(self.seed, cfg.n_images + j)
            )
            positive = _roundtrip(positive, cfg.pixel_roundtrip)
            negative = _roundtrip(negative, cfg.pixel_roundtrip)

        for pipeline in self.res.pipelines:
            scores.pos[pipeline.name] = self._score(positive, pipeline, j)
            scores.neg[pipeline.name] = self._score(negative, pipeline, j)
        return scores


def _aggregate(
    seed: int, pipeline: AttackPipeline, jobs: list[_JobScores], fpr: float
) -> SeedResult:
    pos = np.array([job.pos[pipeline.name][0] for job in jobs])
    neg = np.array([job.neg[pipeline.name][0] for job in jobs])
    scores = ScoreSet(pos, neg)
    return SeedResult(
        seed=seed,
        attack=pipeline.name,
        auc=roc_auc(scores),
        tpr_at_fpr=tpr_at_fpr(scores, fpr),
        detect_rate=float(np.mean([job.pos[pipeline.name][1] for job in jobs])),
        false_alarm_rate=float(np.mean([job.neg[pipeline.name][1] for job in jobs])),
        z_pos_mean=float(pos.mean()),
        z_neg_mean=float(neg.mean()),
        psnr=float(np.mean([job.psnr for job in jobs])),
        ssim=float(np.mean([job.ssim for job in jobs])),
    )


def run_experiment(
    config: ExperimentConfig, resources: ExperimentResources | None = None
) -> ExperimentReport:
    """시드마다 풀과 생성 난수를 바꿔 실험을 반복하고 시드별 결과를 기록합니다."""
    res = resources or prepare_resources(config)
    gamma = res.pool.gamma if res.pool is not None else config.gamma
    n_lists = res.pool.list_count if res.pool is not None else config.n_lists
    report = ExperimentReport(
        name=config.name, method=config.mode, gamma=gamma, sigma=config.sigma,
        n_lists=n_lists, fpr=config.fpr, seeds=list(config.seeds),
    )
    log.info(
        "experiment_started",
        name=config.name, mode=config.mode, gamma=gamma, n_images=config.n_images,
        seeds=config.seeds, attacks=[p.name for p in res.pipelines], workers=config.workers,
    )

    for seed in config.seeds:
        pool = res.pool or generate_green_matrix(
            config.n_lists, config.gamma, res.codebook.vocab_size, seed,
            config.pool_max_iters, codebook_id=res.codebook.id,
        )
        runner = _SeedRunner(config, res, pool, seed)
        # executor.map은 작업 순서대로 결과를 돌려줍니다
        with ThreadPoolExecutor(max_workers=config.workers) as executor:
            jobs = list(executor.map(runner, range(config.n_images)))

        for pipeline in res.pipelines:
            result = _aggregate(seed, pipeline, jobs, config.fpr)
            report.results.append(result)
            log.info(
                "seed_evaluated",
                seed=seed, attack=pipeline.name, auc=round(result.auc, 4),
                tpr_at_fpr=round(result.tpr_at_fpr, 4),
            )

    log.info("experiment_completed", name=config.name, mean_auc=report.mean_auc())
    return report


def run_gamma_sweep(
    config: ExperimentConfig,
    gammas: list[float],
    resources: ExperimentResources | None = None,
) -> pd.DataFrame:
    """같은 자원으로 γ만 바꿔 실험을 반복하고 (γ, 공격)별 시드 평균을 모읍니다.

    z_gap은 양성과 음성 평균 z의 차이로, AUC가 포화된 γ끼리의 순위를 가릅니다.
    """
    res = resources or prepare_resources(config)
    if res.pool is not None:
        raise InvalidArgumentError("고정 풀로는 γ를 바꿀 수 없습니다 (pool_path 제거 필요)")
    frames = []
    for gamma in gammas:
        report = run_experiment(config.model_copy(update={"gamma": gamma}), res)
        df = report.to_frame()
        df["z_gap"] = df["z_pos_mean"] - df["z_neg_mean"]
        frames.append(
            df.groupby(["gamma", "attack"], sort=False)[
                ["auc", "tpr_at_fpr", "z_pos_mean", "z_neg_mean", "z_gap"]
            ]
            .mean()
            .reset_index()
        )
    return pd.concat(frames, ignore_index=True)


def sweep_rank_correlation(sweep: pd.DataFrame, attack: str, key: str = "gamma") -> float:
    """key와 검출 강도(AUC, 동률이면 z_gap) 순위의 Spearman 상관."""
    rows = sweep[sweep["attack"] == attack]
    if len(rows) < 2:
        raise InvalidArgumentError(f"공격 '{attack}'의 스윕 지점이 2개 미만입니다")
    order = np.lexsort((rows["z_gap"].to_numpy(), rows["auc"].to_numpy()))
    strength = np.empty(len(rows), dtype=np.int64)
    strength[order] = np.arange(len(rows))
    return float(spearmanr(rows[key].to_numpy(), strength).statistic)


@dataclass
class ObservationRow:
    """코드북 축소 스윕의 한 행."""

    ratio: float
    retained: int
    consistency: float
    psnr: float
    ssim: float


def observe_codebook_ratio(
    images: list[Image],
    cb: Codebook,
    patch: int,
    ratios: list[float],
    attack: AttackPipeline | None = None,
    context: AttackContext | None = None,
) -> list[ObservationRow]:
    """앞쪽 ⌈ratio·V⌉개 코드만 남긴 코드북으로 재구성 품질과 재양자화 일관성을 측정합니다.

    attack이 주어지면 재구성 이미지에 픽셀 공격을 적용한 뒤 재양자화합니다.
    """
    if not images:
        raise InvalidArgumentError("관찰할 이미지가 없습니다")
    ctx = context or AttackContext(patch=patch)
    rows = []
    for ratio in ratios:
        if not 0.0 < ratio <= 1.0:
            raise InvalidArgumentError(f"ratio는 (0, 1] 범위여야 합니다: {ratio}")
        retained = max(2, math.ceil(ratio * cb.vocab_size - 1e-9))
        reduced = cb.truncated(retained)
        consistency, p_vals, s_vals = [], [], []
        for j, img in enumerate(images):
            q = quantize(encode(img, patch), reduced)
            recon = decode(q, reduced, patch)
            attacked = apply_pixel_attacks(recon, attack, ctx, j) if attack is not None else recon
            q2 = quantize(encode(attacked, patch), reduced)
            consistency.append(token_consistency(q, q2))
            p_vals.append(psnr(img, recon))
            s_vals.append(ssim(img, recon))
        row = ObservationRow(
            ratio=ratio,
            retained=retained,
            consistency=float(np.mean(consistency)),
            psnr=float(np.mean(p_vals)),
            ssim=float(np.mean(s_vals)),
        )
        rows.append(row)
        log.info("observation_row", **vars(row))
    return rows


@dataclass
class ExposureReport:
    """워터마크 토큰 맵만으로 그린 리스트를 빈도 추정했을 때의 노출 정도."""

    n_maps: int
    n_lists: int
    overlap: float
    assignment_cv: float


def observe_green_exposure(
    maps: list[TokenMap], pool: GreenListPool, rng: np.random.Generator
) -> ExposureReport:
    """빈도 상위 green_size개 토큰과 실제 리스트들의 최대 겹침, 리스트 지정 변동계수를 잽니다."""
    if not maps:
        raise InvalidArgumentError("관찰할 토큰 맵이 없습니다")
    estimate = estimate_green_list(maps, pool.green_size)
    report = ExposureReport(
        n_maps=len(maps),
        n_lists=pool.list_count,
        overlap=estimation_overlap(estimate, pool),
        assignment_cv=green_assignment_cv(pool, len(maps), rng),
    )
    log.info("green_exposure_observed", **vars(report))
    return report
