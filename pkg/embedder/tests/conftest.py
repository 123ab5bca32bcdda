"""Shared fixtures: a lean base checkpoint and one fine-tuning run.

The base model keeps the contract shape (12 layers, hidden 768) but uses a
small vocabulary, narrow feed-forward blocks, and short sequences so the
whole suite runs in well under a minute on a CPU.
"""

import pytest

from embedder.basemodel import BaseModelConfig, build_base_checkpoint
from embedder.corpus import PairRecord
from embedder.finetune import FinetuneConfig, finetune

LEAN_BASE = BaseModelConfig(vocab_size=400, intermediate_size=192,
                            num_attention_heads=4, max_length=64, seed=0)


def signal_corpus(n_pos=34, neg_per_pos=5):
    """Toy NSP corpus with a learnable cue: genuine continuations answer the
    same topic token their context raised, adversarial ones a different one.
    Ratio is neg_per_pos negatives per positive (default 5:1, 204 pairs)."""
    pairs = []
    for i in range(n_pos):
        k = i % 7
        pairs.append(PairRecord(prev=f"question about topic{k} number {i}",
                                next=f"answer on topic{k} indeed", label=1))
    for i in range(n_pos):
        k = i % 7
        for j in range(neg_per_pos):
            kk = (k + 1 + j) % 7
            pairs.append(PairRecord(prev=f"question about topic{k} number {i}",
                                    next=f"answer on topic{kk} indeed", label=0))
    return pairs


@pytest.fixture(scope="session")
def pair_records():
    return signal_corpus()


@pytest.fixture(scope="session")
def base_dir(tmp_path_factory, pair_records):
    out = tmp_path_factory.mktemp("base")
    texts = [r.prev for r in pair_records] + [r.next for r in pair_records]
    build_base_checkpoint(out, texts, LEAN_BASE)
    return out


@pytest.fixture(scope="session")
def tuned(base_dir, pair_records):
    """One shared fine-tuning run: (FinetuneResult, config)."""
    config = FinetuneConfig(base_model=str(base_dir), epochs=3, batch_size=16,
                            max_length=64, seed=0)
    return finetune(pair_records, config), config
