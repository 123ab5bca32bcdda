"""Next-sentence-prediction fine-tuning with a frozen backbone.

The model is a 12-layer, 768-hidden bidirectional encoder with a binary
next-sentence head. Training updates only the 12th encoder layer, the pooler
that feeds the head, and the head itself; every other parameter is frozen and
must come out of training bitwise unchanged.

Pairs are encoded as [CLS] prev [SEP] next [SEP]. When a pair exceeds the
maximum sequence length it is truncated from the left, so the context kept is
the part closest to the continuation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from embedder.corpus import PairRecord
from embedder.fileio import atomic_write, make_header

HIDDEN_SIZE = 768
NUM_LAYERS = 12

# Parameter-name prefixes that stay trainable: the final (12th) encoder
# layer, the pooler (which exists to feed the NSP head), and the head.
TRAINABLE_PREFIXES = (
    f"bert.encoder.layer.{NUM_LAYERS - 1}.",
    "bert.pooler.",
    "cls.seq_relationship.",
)

LOSS_CURVE_FORMAT = "nsp-loss-curve"


class ModelContractError(ValueError):
    """The checkpoint does not meet the 12-layer / 768-hidden contract."""


@dataclass
class FinetuneConfig:
    base_model: str               # path to a checkpoint directory
    epochs: int = 3
    lr: float = 3e-5
    batch_size: int = 16
    max_length: int = 128
    weight_decay: float = 0.01
    seed: int = 0
    expected_ratio: float | None = 5.0  # negatives per positive; None = skip check

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr <= 0 or self.batch_size < 1 or self.max_length < 8:
            raise ValueError("lr/batch_size/max_length out of range")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")

    def to_dict(self) -> dict:
        return {"base_model": self.base_model, "epochs": self.epochs,
                "lr": self.lr, "batch_size": self.batch_size,
                "max_length": self.max_length,
                "weight_decay": self.weight_decay, "seed": self.seed,
                "expected_ratio": self.expected_ratio}


@dataclass
class FinetuneResult:
    model: object                    # trained BertForNextSentencePrediction
    tokenizer: object
    epoch_losses: list[float]        # mean training loss per epoch
    n_pairs: int
    n_trainable: int
    n_frozen: int
    config: FinetuneConfig = field(repr=False, default=None)


def load_checkpoint(path: str | Path):
    """Load (model, tokenizer) from a checkpoint directory, enforcing the
    12-layer / 768-hidden contract. Mismatches are fatal."""
    from transformers import BertForNextSentencePrediction, BertTokenizerFast

    path = Path(path)
    if not path.is_dir():
        raise ModelContractError(f"checkpoint directory not found: {path}")
    model = BertForNextSentencePrediction.from_pretrained(str(path))
    cfg = model.config
    if cfg.hidden_size != HIDDEN_SIZE:
        raise ModelContractError(
            f"{path}: hidden size {cfg.hidden_size}, this pipeline requires "
            f"{HIDDEN_SIZE} (feature consumers read {HIDDEN_SIZE}-wide rows)")
    if cfg.num_hidden_layers != NUM_LAYERS:
        raise ModelContractError(
            f"{path}: {cfg.num_hidden_layers} encoder layers, the trainable "
            f"scope is defined for {NUM_LAYERS}")
    tokenizer = BertTokenizerFast.from_pretrained(str(path))
    return model, tokenizer


def apply_freeze(model) -> tuple[int, int]:
    """Set requires_grad so only the final layer + pooler + NSP head train.

    Returns (n_trainable, n_frozen) parameter counts.
    """
    n_trainable = n_frozen = 0
    for name, param in model.named_parameters():
        trainable = name.startswith(TRAINABLE_PREFIXES)
        param.requires_grad = trainable
        if trainable:
            n_trainable += param.numel()
        else:
            n_frozen += param.numel()
    return n_trainable, n_frozen


def frozen_parameter_names(model) -> list[str]:
    return [name for name, _ in model.named_parameters()
            if not name.startswith(TRAINABLE_PREFIXES)]


def _encode_batch(tokenizer, batch: list[PairRecord], max_length: int):
    import torch

    enc = tokenizer(
        [r.prev for r in batch], [r.next for r in batch],
        truncation="longest_first", max_length=max_length,
        padding="longest", return_tensors="pt")
    targets = torch.tensor([r.nsp_target for r in batch], dtype=torch.long)
    return enc, targets


def finetune(records: list[PairRecord], config: FinetuneConfig) -> FinetuneResult:
    """Train the NSP objective on the pair corpus; only the final encoder
    layer and the head move. Returns the trained model plus the loss curve."""
    import torch

    config.validate()
    if not records:
        raise ValueError("empty pair corpus")

    model, tokenizer = load_checkpoint(config.base_model)
    # Keep the most recent context next to the continuation when trimming.
    tokenizer.truncation_side = "left"
    n_trainable, n_frozen = apply_freeze(model)
    model.train()

    torch.manual_seed(config.seed)
    optimizer = torch.optim.AdamW(
        (p for p in model.parameters() if p.requires_grad),
        lr=config.lr, weight_decay=config.weight_decay)

    generator = torch.Generator().manual_seed(config.seed)
    epoch_losses: list[float] = []
    for _ in range(config.epochs):
        order = torch.randperm(len(records), generator=generator).tolist()
        total = 0.0
        for start in range(0, len(records), config.batch_size):
            batch = [records[i] for i in order[start:start + config.batch_size]]
            enc, targets = _encode_batch(tokenizer, batch, config.max_length)
            out = model(**enc, labels=targets)
            out.loss.backward()
            optimizer.step()
            optimizer.zero_grad()
            total += out.loss.item() * len(batch)
        epoch_losses.append(total / len(records))

    model.eval()
    return FinetuneResult(model=model, tokenizer=tokenizer,
                          epoch_losses=epoch_losses, n_pairs=len(records),
                          n_trainable=n_trainable, n_frozen=n_frozen,
                          config=config)


def save_finetuned(result: FinetuneResult, out_dir: str | Path) -> dict:
    """Write checkpoint + loss curve + training metadata; returns a summary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result.model.save_pretrained(out_dir)
    result.tokenizer.save_pretrained(out_dir)

    config_dict = result.config.to_dict() if result.config else None
    curve_path = out_dir / "loss_curve.csv"
    header = make_header(LOSS_CURVE_FORMAT, config_dict)
    with atomic_write(curve_path) as fh:
        fh.write("# " + json.dumps(header, ensure_ascii=False) + "\n")
        fh.write("epoch,train_loss\n")
        for epoch, loss in enumerate(result.epoch_losses, start=1):
            fh.write(f"{epoch},{loss!r}\n")

    meta = {"n_pairs": result.n_pairs, "epoch_losses": result.epoch_losses,
            "n_trainable": result.n_trainable, "n_frozen": result.n_frozen,
            "config": config_dict}
    with atomic_write(out_dir / "training_meta.json") as fh:
        fh.write(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return {"checkpoint": str(out_dir), "loss_curve": str(curve_path),
            "epoch_losses": result.epoch_losses}
