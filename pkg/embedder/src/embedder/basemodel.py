"""Construction of a local base checkpoint.

Fine-tuning needs a 12-layer, 768-hidden bidirectional encoder checkpoint on
disk. In a connected environment that is any published BERT-base-compatible
checkpoint directory. This module builds one locally instead: a randomly
initialized encoder of the contract shape plus a WordPiece tokenizer trained
on a provided text corpus, so the whole pipeline runs in an offline sandbox.

Hidden size and depth are fixed — downstream consumers read 768-wide rows and
the trainable-scope contract names the 12th layer. Everything that does not
change the contract (vocabulary, feed-forward width, head count, maximum
sequence length) is configurable, which keeps test checkpoints lean.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

HIDDEN_SIZE = 768
NUM_LAYERS = 12


@dataclass
class BaseModelConfig:
    vocab_size: int = 8192        # upper bound; WordPiece stops at saturation
    intermediate_size: int = 3072
    num_attention_heads: int = 12
    max_length: int = 512
    seed: int = 0

    def validate(self) -> None:
        if self.vocab_size < 10:
            raise ValueError("vocab_size too small for the special tokens")
        if self.intermediate_size < 1 or self.max_length < 8:
            raise ValueError("intermediate_size/max_length out of range")
        if HIDDEN_SIZE % self.num_attention_heads:
            raise ValueError(
                f"num_attention_heads must divide {HIDDEN_SIZE}, "
                f"got {self.num_attention_heads}")


def build_base_checkpoint(out_dir: str | Path, texts: Iterable[str],
                          config: BaseModelConfig | None = None) -> dict:
    """Train a WordPiece tokenizer on `texts`, pair it with a randomly
    initialized 12-layer/768 encoder, and save both to `out_dir`.

    Returns a summary dict (vocab size actually reached, parameter count).
    """
    import torch
    from tokenizers import BertWordPieceTokenizer
    from transformers import BertConfig, BertForNextSentencePrediction, BertTokenizerFast

    config = config or BaseModelConfig()
    config.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    wp = BertWordPieceTokenizer(lowercase=True)
    wp.train_from_iterator(
        texts, vocab_size=config.vocab_size, min_frequency=1,
        special_tokens=["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"])
    wp.save_model(str(out_dir))
    tokenizer = BertTokenizerFast(str(out_dir / "vocab.txt"), do_lower_case=True,
                                  model_max_length=config.max_length)
    tokenizer.save_pretrained(out_dir)

    torch.manual_seed(config.seed)
    model_config = BertConfig(
        vocab_size=tokenizer.vocab_size,
        hidden_size=HIDDEN_SIZE,
        num_hidden_layers=NUM_LAYERS,
        num_attention_heads=config.num_attention_heads,
        intermediate_size=config.intermediate_size,
        max_position_embeddings=config.max_length,
    )
    model = BertForNextSentencePrediction(model_config)
    model.save_pretrained(out_dir)
    return {
        "dir": str(out_dir),
        "vocab_size": tokenizer.vocab_size,
        "hidden_size": HIDDEN_SIZE,
        "num_layers": NUM_LAYERS,
        "parameters": sum(p.numel() for p in model.parameters()),
    }
