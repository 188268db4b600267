"""데스크 규모 벤치마크 스크립트.

post γ-스윕(token_flip p=0.3)과 soft σ-스윕을 실행하고 결과를 CSV로 저장합니다.

사용법: python scripts/run_benchmark.py [--quick]
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import pandas as pd

from tokenmark.config import AppConfig, ExperimentConfig
from tokenmark.eval.experiment import (
    prepare_resources,
    run_experiment,
    run_gamma_sweep,
    sweep_rank_correlation,
)
from tokenmark.logging_config import setup_logging

GAMMAS = [0.1, 0.3, 0.5, 0.7, 0.9]
SIGMAS = [1.0, 2.0, 4.0, 8.0]
FLIP = {"flip_0.3": [{"kind": "token_flip", "params": {"p": 0.3}, "seed": 7}]}


def _gamma_sweep(base: dict, out_dir: Path) -> pd.DataFrame:
    print("[*] post γ-스윕 (token_flip p=0.3)")
    config = ExperimentConfig(**base, mode="post", attacks=FLIP)
    df = run_gamma_sweep(config, GAMMAS)
    for row in df.itertuples(index=False):
        print(
            f"    γ={row.gamma:.1f}: AUC {row.auc:.4f} | T@1F {row.tpr_at_fpr:.4f} "
            f"| Δz {row.z_gap:.2f}"
        )
    rho = sweep_rank_correlation(df, "flip_0.3")
    print(f"    Spearman ρ(γ, AUC) = {rho:.3f}")
    df.to_csv(out_dir / "gamma_sweep.csv", index=False)
    return df


def _sigma_sweep(base: dict, out_dir: Path) -> pd.DataFrame:
    print("[*] soft σ-스윕 (bigram 소스)")
    config = ExperimentConfig(**base, mode="soft", source="bigram", attacks={"clean": []})
    resources = prepare_resources(config)
    frames = []
    for sigma in SIGMAS:
        report = run_experiment(config.model_copy(update={"sigma": sigma}), resources)
        frames.append(report.summary())
        print(f"    σ={sigma:g}: AUC {report.mean_auc():.4f} | T@1F {report.mean_tpr():.4f}")
    df = pd.concat(frames, ignore_index=True)
    df.insert(1, "sigma", SIGMAS)
    df.to_csv(out_dir / "sigma_sweep.csv", index=False)
    return df


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true", help="소규모 설정으로 빠르게 실행")
    parser.add_argument("--out", default="results/benchmark")
    args = parser.parse_args()

    app = AppConfig()
    setup_logging(level="WARNING", log_file=app.logging.file)

    if args.quick:
        base = {"synthetic_count": 60, "n_images": 60, "vocab_size": 256, "seeds": [0, 1]}
    else:
        base = {
            "synthetic_count": 300, "n_images": 300, "vocab_size": 1024, "seeds": [0, 1, 2, 3, 4]
        }
    base["workers"] = app.runtime.workers

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _gamma_sweep(base, out_dir)
    _sigma_sweep(base, out_dir)
    print(f"\n[*] 결과 저장: {out_dir}")


if __name__ == "__main__":
    main()
