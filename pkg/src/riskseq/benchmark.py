"""The pinned synthetic benchmark.

2000 rows, 6 features, windows of 32, seed 2. ``configs/benchmark.json``
holds the same settings for the CLI.
"""

from __future__ import annotations

from .config import DataConfig, RunConfig, SyntheticConfig, WindowConfig
from .datapipe import PreparedData, gen_synthetic, prepare
from .evaluation import ModelRun, compare_models
from .network import ConvBlock, HybridConfig
from .training import TrainConfig

BENCHMARK_SEED = 2

BENCHMARK = RunConfig(
    seed=BENCHMARK_SEED,
    model=HybridConfig(conv_blocks=(ConvBlock(8, 3, 2), ConvBlock(16, 3, 2)), hidden=16),
    train=TrainConfig(learning_rate=2e-3, epochs=40, batch_size=32, patience=8),
    window=WindowConfig(length=32, stride=1),
    data=DataConfig(
        synthetic=SyntheticConfig(
            n_rows=2000, n_features=6, regime_strength=1.5, noise_std=1.0, ar_coef=0.5,
            episode_len=(12, 40),
        )
    ),
)


def benchmark_data(cfg: RunConfig = BENCHMARK) -> PreparedData:
    syn = cfg.data.synthetic
    frame = gen_synthetic(
        cfg.seed, syn.n_rows, syn.n_features, cfg.window.length,
        regime_strength=syn.regime_strength, noise_std=syn.noise_std, ar_coef=syn.ar_coef,
        episode_len=syn.episode_len,
    )
    return prepare(frame, cfg.window.length, cfg.window.stride, cfg.split)


def run_benchmark(cfg: RunConfig = BENCHMARK) -> tuple[PreparedData, list[ModelRun]]:
    data = benchmark_data(cfg)
    return data, compare_models(data, cfg.model, cfg.train, seed=cfg.seed, threshold=cfg.threshold)
