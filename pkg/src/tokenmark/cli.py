"""명령줄 인터페이스.

사용법: tokenmark <command> [options]

종료 코드: 0 성공, 1 상태 오류, 2 사용법 오류, 3 파일 형식 오류, 4 잘못된 인자/설정/파일 없음.
검출 결과(decision)는 종료 코드가 아니라 출력 레코드로 전달됩니다.
"""

from __future__ import annotations

import argparse
import sys
from collections.abc import Sequence
from pathlib import Path

import numpy as np
import yaml
from pydantic import ValidationError

from tokenmark.attacks.pipeline import (
    AttackContext,
    AttackPipeline,
    apply_pixel_attacks,
    apply_token_attacks,
    get_preset,
)
from tokenmark.config import EMBED_MODES, SOURCE_KINDS, AppConfig, load_experiment_config
from tokenmark.errors import FormatError, InvalidArgumentError, InvalidStateError
from tokenmark.logging_config import get_logger, setup_logging
from tokenmark.vq.codebook import Codebook, fit_kmeans, load_codebook, save_codebook, shuffle_rows
from tokenmark.vq.corpus import extract_patches, quantize_corpus, synthetic_corpus
from tokenmark.vq.image_io import image_suffix, load_image_dir, read_image, write_image
from tokenmark.vq.quantizer import (
    ScaleSchedule,
    TokenMap,
    decode,
    encode,
    features_to_image,
    load_tokenmap,
    quantize,
    reconstruct_multiscale,
    save_tokenmap,
)
from tokenmark.watermark.detector import calibrate_threshold, detect_image, detect_tokenmap
from tokenmark.watermark.embed import (
    BiasConfig,
    BiasMode,
    GenerationOrder,
    choose_list_id,
    embed_posthoc,
    generate_watermarked,
    generate_watermarked_multiscale,
)
from tokenmark.watermark.greenlist import (
    GreenListPool,
    generate_green_matrix,
    load_pool,
    save_pool,
    validate_pool,
)
from tokenmark.watermark.sources import LogitSource, build_source

log = get_logger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_INVALID = 4
EXIT_STATE = 1

OBSERVE_RATIOS = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0"


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError as e:
        raise InvalidArgumentError(f"격자 형식 오류: '{text}' (예: 16x16)") from e
    return h, w


def _load_pool_for(path: str, cb: Codebook) -> GreenListPool:
    pool = load_pool(path)
    pool.check_codebook(cb)
    return pool


def _resolve_list_id(text: str, pool: GreenListPool, seed: int) -> int:
    if text == "random":
        return choose_list_id(pool, np.random.default_rng(seed))
    try:
        list_id = int(text)
    except ValueError as e:
        raise InvalidArgumentError(f"--list-id는 정수 또는 random이어야 합니다: '{text}'") from e
    pool.check_list_id(list_id)
    return list_id


def _load_pipeline(args: argparse.Namespace) -> AttackPipeline:
    if args.preset:
        return get_preset(args.preset)
    path = Path(args.spec)
    if not path.exists():
        raise FileNotFoundError(f"공격 명세 파일이 없습니다: {path}")
    with open(path) as f:
        steps = yaml.safe_load(f) or []
    if not isinstance(steps, list):
        raise InvalidArgumentError("공격 명세는 {kind, params, seed} 항목의 목록이어야 합니다")
    return AttackPipeline.from_steps(path.stem, steps)


# ── 명령 ──────────────────────────────────────────────


def cmd_train_codebook(args: argparse.Namespace, app: AppConfig) -> int:
    images = load_image_dir(args.corpus)
    if not images:
        raise InvalidArgumentError(f"코퍼스 디렉토리에 이미지가 없습니다: {args.corpus}")
    corpus = extract_patches(images, args.patch)
    max_iters = args.max_iters or app.watermark.kmeans_max_iters
    fit = fit_kmeans(corpus, args.vocab, max_iters, args.seed)
    cb = shuffle_rows(Codebook(fit.centers), args.seed)
    save_codebook(cb, args.out)
    log.info("codebook_trained", vocab_size=args.vocab, iterations=fit.n_iter, codebook_id=cb.id)
    print(f"objective={fit.objective:.6f}")
    print(f"iterations={fit.n_iter} converged={fit.converged}")
    print(f"codebook_id={cb.id:016x}")
    return EXIT_OK


def cmd_gen_pool(args: argparse.Namespace, app: AppConfig) -> int:
    codebook_id = 0
    if args.codebook:
        cb = load_codebook(args.codebook)
        if cb.vocab_size != args.vocab:
            raise InvalidArgumentError(
                f"--vocab({args.vocab})이 코드북 어휘 크기({cb.vocab_size})와 다릅니다"
            )
        codebook_id = cb.id
    pool = generate_green_matrix(
        args.n, args.gamma, args.vocab, args.seed,
        args.max_iters or app.watermark.pool_max_iters, codebook_id=codebook_id,
    )
    save_pool(pool, args.out)
    report = validate_pool(pool)
    print(f"max_col_dev={report.max_col_dev:.6f}")
    print(f"green_size={pool.green_size} gamma_eff={pool.gamma_eff:.6f}")
    print(f"pool_id={pool.pool_id:016x}")
    return EXIT_OK


def _build_cli_source(args: argparse.Namespace, cb: Codebook) -> LogitSource:
    maps: list[TokenMap] | None = None
    if args.source == "bigram":
        if not args.corpus:
            raise InvalidArgumentError("bigram 소스에는 --corpus가 필요합니다")
        maps = quantize_corpus(load_image_dir(args.corpus), cb, args.patch)
    return build_source(args.source, cb.vocab_size, args.source_seed, args.source_tau, maps)


def cmd_embed(args: argparse.Namespace, app: AppConfig) -> int:
    cb = load_codebook(args.codebook)
    pool = _load_pool_for(args.pool, cb)
    list_id = _resolve_list_id(args.list_id, pool, args.seed)

    if args.mode == "post":
        if not args.input:
            raise InvalidArgumentError("post 모드에는 --in 이미지가 필요합니다")
        marked, q = embed_posthoc(read_image(args.input), cb, pool, list_id, args.patch)
    else:
        sigma = app.watermark.sigma if args.sigma is None else args.sigma
        temperature = app.watermark.temperature if args.temperature is None else args.temperature
        cfg = BiasConfig(BiasMode(args.mode), sigma, list_id, temperature)
        src = _build_cli_source(args, cb)
        rng = np.random.default_rng(args.seed)
        order = GenerationOrder(args.order)
        if args.scales:
            sched = ScaleSchedule.parse(args.scales)
            ms = generate_watermarked_multiscale(
                src, pool, cfg, sched, rng, order, codebook_id=cb.id
            )
            marked = features_to_image(reconstruct_multiscale(ms, cb, sched), args.patch)
            q = ms.largest
        else:
            q = generate_watermarked(
                src, pool, cfg, _parse_grid(args.grid), order, rng, codebook_id=cb.id
            )
            marked = decode(q, cb, args.patch)

    write_image(marked, args.out)
    if args.tokens_out:
        save_tokenmap(q, args.tokens_out)
    print(f"list_id={list_id}")
    print(f"tokens={q.shape[0]}x{q.shape[1]}")
    return EXIT_OK


def cmd_detect(args: argparse.Namespace, app: AppConfig) -> int:
    z_th = app.watermark.z_threshold if args.z_th is None else args.z_th
    if args.tokens:
        pool = load_pool(args.pool)
        result = detect_tokenmap(load_tokenmap(args.tokens), pool, z_th)
    else:
        if not (args.input and args.codebook):
            raise InvalidArgumentError("이미지 검출에는 --in과 --codebook이 필요합니다")
        cb = load_codebook(args.codebook)
        pool = _load_pool_for(args.pool, cb)
        sched = ScaleSchedule.parse(args.scales) if args.scales else None
        result = detect_image(read_image(args.input), cb, pool, args.patch, z_th, sched)
    print(result.to_record())
    return EXIT_OK


def cmd_attack(args: argparse.Namespace, app: AppConfig) -> int:
    pipeline = _load_pipeline(args)
    foreign = load_codebook(args.foreign_codebook) if args.foreign_codebook else None
    context = AttackContext(patch=args.patch, foreign_codebook=foreign)
    attacked = apply_pixel_attacks(read_image(args.input), pipeline, context, args.job_index)
    write_image(attacked, args.out)

    if pipeline.token_steps or args.tokens_out:
        if not (args.codebook and args.tokens_out):
            raise InvalidArgumentError("토큰 공격에는 --codebook과 --tokens-out이 필요합니다")
        cb = load_codebook(args.codebook)
        q = quantize(encode(attacked, args.patch), cb)
        q = apply_token_attacks(q, pipeline, args.job_index)
        save_tokenmap(q, args.tokens_out)
    print(f"attack={pipeline.describe()}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, app: AppConfig) -> int:
    from tokenmark.eval.experiment import run_experiment
    from tokenmark.eval.report import format_experiment_table

    config = load_experiment_config(args.config)
    if args.out:
        config = config.model_copy(update={"output_dir": args.out})
    report = run_experiment(config)

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report.to_frame().to_csv(out_dir / "records.csv", index=False)
    table = format_experiment_table(report)
    (out_dir / "report.txt").write_text(table + "\n", encoding="utf-8")

    db_path = args.db or config.db_path
    if db_path:
        from tokenmark.db.models import init_db
        from tokenmark.db.repository import save_experiment_report

        session_factory = init_db(db_path)
        with session_factory() as session:
            run_id = save_experiment_report(session, report)
        log.info("experiment_stored", db_path=db_path, run_id=run_id)

    print(table)
    return EXIT_OK


def cmd_observe(args: argparse.Namespace, app: AppConfig) -> int:
    from tokenmark.eval.experiment import observe_codebook_ratio, observe_green_exposure
    from tokenmark.eval.report import format_exposure_report, format_observation_table

    cb = load_codebook(args.codebook)
    if args.corpus:
        images = load_image_dir(args.corpus)
    else:
        images = synthetic_corpus(args.count, args.size, args.channels, args.seed)
    if args.experiment == "green-estimation":
        if not args.pool:
            raise InvalidArgumentError("green-estimation에는 --pool이 필요합니다")
        pool = load_pool(args.pool)
        pool.check_codebook(cb)
        maps = [quantize(encode(img, args.patch), cb) for img in images]
        exposure = observe_green_exposure(maps, pool, np.random.default_rng(args.seed))
        print(format_exposure_report(exposure))
        return EXIT_OK
    if args.experiment == "token-consistency":
        ratios = [1.0]
    else:
        try:
            ratios = [float(r) for r in args.ratios.split(",")]
        except ValueError as e:
            raise InvalidArgumentError(f"--ratios 형식 오류: '{args.ratios}'") from e
    attack = get_preset(args.preset) if args.preset else None
    foreign = load_codebook(args.foreign_codebook) if args.foreign_codebook else None
    rows = observe_codebook_ratio(
        images, cb, args.patch, ratios, attack, AttackContext(args.patch, foreign)
    )
    print(format_observation_table(rows))
    return EXIT_OK


def cmd_runs(args: argparse.Namespace, app: AppConfig) -> int:
    from tokenmark.db.models import init_db
    from tokenmark.db.repository import list_runs
    from tokenmark.eval.report import format_runs_table

    if not Path(args.db).exists():
        raise FileNotFoundError(f"DB 파일이 없습니다: {args.db}")
    session_factory = init_db(args.db)
    with session_factory() as session:
        runs = list_runs(session, args.limit)
    print(format_runs_table(runs))
    return EXIT_OK


def cmd_make_corpus(args: argparse.Namespace, app: AppConfig) -> int:
    images = synthetic_corpus(args.count, args.size, args.channels, args.seed)
    out = Path(args.out)
    width = len(str(len(images) - 1))
    for i, img in enumerate(images):
        write_image(img, out / f"img_{i:0{width}d}{image_suffix(img)}")
    print(f"images={len(images)} dir={out}")
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace, app: AppConfig) -> int:
    pool = load_pool(args.pool)
    rng = np.random.default_rng(args.seed)
    z_th = calibrate_threshold(pool, args.hw, args.fpr, args.trials, rng)
    print(f"z_threshold={z_th:.6f}")
    return EXIT_OK


# ── 파서 ──────────────────────────────────────────────


def build_parser(default_seed: int) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tokenmark", description="이미지 토큰 워터마크 도구")
    parser.add_argument("--quiet", action="store_true", help="경고 이상만 로깅")
    sub = parser.add_subparsers(dest="command", required=True)

    def seeded(p: argparse.ArgumentParser) -> argparse.ArgumentParser:
        p.add_argument("--seed", type=int, default=default_seed, help="난수 시드 (기본: LBW_SEED)")
        return p

    p = seeded(sub.add_parser("train-codebook", help="k-means 코드북 학습"))
    p.add_argument("--corpus", required=True)
    p.add_argument("--patch", type=int, required=True)
    p.add_argument("--vocab", type=int, required=True)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_codebook)

    p = seeded(sub.add_parser("gen-pool", help="그린 리스트 풀 생성"))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--vocab", type=int, required=True)
    p.add_argument("--codebook", help="풀을 귀속시킬 코드북")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_pool)

    p = seeded(sub.add_parser("embed", help="워터마크 삽입 또는 생성"))
    p.add_argument("--mode", choices=EMBED_MODES, required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--patch", type=int, required=True)
    p.add_argument("--list-id", default="random")
    p.add_argument("--in", dest="input")
    p.add_argument("--out", required=True)
    p.add_argument("--tokens-out")
    p.add_argument("--sigma", type=float)
    p.add_argument("--temperature", type=float)
    p.add_argument("--source", choices=SOURCE_KINDS, default="smooth")
    p.add_argument("--source-seed", type=int, default=0)
    p.add_argument("--source-tau", type=float, default=1.0)
    p.add_argument("--corpus", help="bigram 소스 학습용 코퍼스")
    p.add_argument("--grid", default="16x16")
    p.add_argument("--scales", help="다중 스케일 스케줄 (예: 1x1,2x2,4x4,8x8,16x16)")
    p.add_argument("--order", choices=[o.value for o in GenerationOrder], default="raster")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("detect", help="워터마크 검출")
    p.add_argument("--pool", required=True)
    p.add_argument("--codebook")
    p.add_argument("--patch", type=int, default=4)
    p.add_argument("--in", dest="input")
    p.add_argument("--tokens", help="이미지 대신 토큰 맵 파일 검출")
    p.add_argument("--scales")
    p.add_argument("--z-th", type=float)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("attack", help="공격 파이프라인 적용")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--preset")
    group.add_argument("--spec", help="{kind, params, seed} 목록 YAML")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--patch", type=int, default=4)
    p.add_argument("--codebook")
    p.add_argument("--foreign-codebook")
    p.add_argument("--tokens-out")
    p.add_argument("--job-index", type=int, default=0)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("eval", help="실험 실행")
    p.add_argument("--config", required=True)
    p.add_argument("--db")
    p.add_argument("--out", help="output_dir 덮어쓰기")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("runs", help="저장된 실험 실행 목록")
    p.add_argument("--db", required=True)
    p.add_argument("--limit", type=int, default=20)
    p.set_defaults(func=cmd_runs)

    p = seeded(sub.add_parser("observe", help="토큰 일관성 / 코드북 축소 / 그린 리스트 추정 관찰"))
    p.add_argument(
        "--experiment",
        choices=["token-consistency", "codebook-reduction", "green-estimation"],
        required=True,
    )
    p.add_argument("--codebook", required=True)
    p.add_argument("--pool", help="green-estimation 대상 풀")
    p.add_argument("--patch", type=int, required=True)
    p.add_argument("--corpus")
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--channels", type=int, default=3)
    p.add_argument("--ratios", default=OBSERVE_RATIOS)
    p.add_argument("--preset", help="재양자화 전에 적용할 공격 프리셋")
    p.add_argument("--foreign-codebook")
    p.set_defaults(func=cmd_observe)

    p = seeded(sub.add_parser("make-corpus", help="합성 코퍼스 생성"))
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--channels", type=int, default=3)
    p.set_defaults(func=cmd_make_corpus)

    p = seeded(sub.add_parser("calibrate", help="몬테카를로 임계값 보정"))
    p.add_argument("--pool", required=True)
    p.add_argument("--hw", type=int, required=True)
    p.add_argument("--fpr", type=float, default=0.01)
    p.add_argument("--trials", type=int, default=100_000)
    p.set_defaults(func=cmd_calibrate)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        app = AppConfig()
    except ValidationError as e:
        print(f"설정 오류: {e}", file=sys.stderr)
        return EXIT_INVALID

    parser = build_parser(app.runtime.seed)
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE

    setup_logging(
        level="WARNING" if args.quiet else app.logging.level,
        log_file=app.logging.file,
        max_bytes=app.logging.max_bytes,
        backup_count=app.logging.backup_count,
    )

    try:
        return int(args.func(args, app))
    except FormatError as e:
        print(f"형식 오류: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except (InvalidArgumentError, ValidationError, FileNotFoundError) as e:
        print(f"오류: {e}", file=sys.stderr)
        return EXIT_INVALID
    except InvalidStateError as e:
        print(f"상태 오류: {e}", file=sys.stderr)
        return EXIT_STATE


if __name__ == "__main__":
    sys.exit(main())
