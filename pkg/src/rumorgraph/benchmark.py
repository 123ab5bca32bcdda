"""Edge-signal comparison: full model vs the no-edge-path ablation.

Builds a synthetic corpus whose class signal lives in feature *differences*
along edges (absolute node positions drift), trains both models over several
seeds with identical data and protocol, and reports per-seed test accuracy.
The edge-attribute path reads the differences directly, so it should match
or beat the ablation on every seed.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .model import ModelConfig
from .synth import SynthConfig, synth_featured_graphs
from .train_eval import TrainConfig, evaluate, train


@dataclass(frozen=True)
class BenchmarkConfig:
    n_train: int = 120          # includes the validation carve-out
    n_val: int = 30
    n_test: int = 50
    feature_dim: int = 64
    signal_strength: float = 2.0
    edge_noise: float = 0.2
    base_scale: float = 6.0
    nodes_min: int = 4
    nodes_max: int = 10
    data_seed: int = 2024
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    hidden: int = 16
    edge_hidden: int = 16
    heads: int = 2
    depth: int = 2
    dropout: float = 0.2
    lr: float = 0.01
    batch_size: int = 16
    max_epochs: int = 25
    patience: int = 8

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d


@dataclass
class SeedResult:
    seed: int
    full_test_acc: float
    baseline_test_acc: float
    full_best_epoch: int
    baseline_best_epoch: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ComparisonResult:
    config: BenchmarkConfig
    per_seed: list[SeedResult]
    mean_full: float = field(init=False)
    mean_baseline: float = field(init=False)

    def __post_init__(self):
        self.mean_full = float(np.mean([r.full_test_acc for r in self.per_seed]))
        self.mean_baseline = float(np.mean([r.baseline_test_acc
                                            for r in self.per_seed]))

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(),
                "per_seed": [r.to_dict() for r in self.per_seed],
                "mean_full": self.mean_full,
                "mean_baseline": self.mean_baseline}


def benchmark_graphs(config: BenchmarkConfig):
    """(train+val graphs, test graphs) with the edge-difference signal."""
    synth_cfg = SynthConfig(
        n_graphs=config.n_train + config.n_test,
        feature_dim=config.feature_dim,
        nodes_range=(config.nodes_min, config.nodes_max),
        signal_strength=config.signal_strength,
        signal_mode="edge",
        edge_noise=config.edge_noise,
        base_scale=config.base_scale,
        repost_prob=0.0,
        seed=config.data_seed)
    graphs = synth_featured_graphs(synth_cfg)
    # labels cycle through the classes, so contiguous blocks stay balanced
    return graphs[:config.n_train], graphs[config.n_train:]


def run_comparison(config: BenchmarkConfig = BenchmarkConfig(),
                   verbose: bool = False) -> ComparisonResult:
    train_pool, test_graphs = benchmark_graphs(config)
    model_cfg = ModelConfig(
        in_dim=config.feature_dim, hidden=config.hidden,
        edge_hidden=config.edge_hidden, heads=config.heads,
        depth=config.depth, dropout=config.dropout)
    results = []
    for seed in config.seeds:
        order = np.random.default_rng(seed).permutation(len(train_pool))
        val = [train_pool[i] for i in order[:config.n_val]]
        tr = [train_pool[i] for i in order[config.n_val:]]
        train_cfg = TrainConfig(model=model_cfg, lr=config.lr,
                                batch_size=config.batch_size,
                                max_epochs=config.max_epochs,
                                patience=config.patience, seed=seed)
        full_params, full_log = train(train_cfg, tr, val, baseline=False)
        base_params, base_log = train(train_cfg, tr, val, baseline=True)
        res = SeedResult(
            seed=seed,
            full_test_acc=evaluate(full_params, test_graphs).accuracy,
            baseline_test_acc=evaluate(base_params, test_graphs).accuracy,
            full_best_epoch=full_log.best_epoch,
            baseline_best_epoch=base_log.best_epoch)
        results.append(res)
        if verbose:
            print(f"seed {seed}: full {res.full_test_acc:.3f} "
                  f"(best epoch {res.full_best_epoch}), "
                  f"baseline {res.baseline_test_acc:.3f} "
                  f"(best epoch {res.baseline_best_epoch})")
    return ComparisonResult(config=config, per_seed=results)
