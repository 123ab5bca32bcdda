"""Fine-tuning: freeze contract, loss behavior, checkpoint contract."""

import random

import pytest
import torch

from conftest import signal_corpus
from embedder.finetune import (
    HIDDEN_SIZE,
    NUM_LAYERS,
    TRAINABLE_PREFIXES,
    FinetuneConfig,
    ModelContractError,
    apply_freeze,
    finetune,
    frozen_parameter_names,
    load_checkpoint,
    save_finetuned,
)


class TestFreezeContract:
    def test_frozen_parameters_bitwise_unchanged(self, tuned, base_dir):
        result, _ = tuned
        base_model, _ = load_checkpoint(base_dir)
        base_state = base_model.state_dict()
        tuned_state = result.model.state_dict()
        frozen = frozen_parameter_names(result.model)
        assert len(frozen) > 150  # embeddings + 11 encoder layers
        for name in frozen:
            assert torch.equal(tuned_state[name], base_state[name]), name

    def test_trainable_parameters_moved(self, tuned, base_dir):
        result, _ = tuned
        base_model, _ = load_checkpoint(base_dir)
        base_state = base_model.state_dict()
        moved = [name for name, _ in result.model.named_parameters()
                 if name.startswith(TRAINABLE_PREFIXES)
                 and not torch.equal(result.model.state_dict()[name],
                                     base_state[name])]
        assert moved  # training actually updated the trainable scope

    def test_trainable_scope_names(self, base_dir):
        model, _ = load_checkpoint(base_dir)
        apply_freeze(model)
        trainable = {name for name, p in model.named_parameters()
                     if p.requires_grad}
        assert any(f"encoder.layer.{NUM_LAYERS - 1}." in n for n in trainable)
        assert any(n.startswith("bert.pooler.") for n in trainable)
        assert any(n.startswith("cls.seq_relationship.") for n in trainable)
        # nothing below the final layer trains
        for n in trainable:
            assert not any(f"encoder.layer.{k}." in n
                           for k in range(NUM_LAYERS - 1))


class TestLossBehavior:
    def test_loss_strictly_decreases(self, tuned):
        result, config = tuned
        assert config.epochs == 3
        assert result.n_pairs == 204
        losses = result.epoch_losses
        assert len(losses) == 3
        assert losses[1] < losses[0]
        assert losses[2] < losses[1]

    def test_shuffled_labels_stay_at_chance(self, base_dir):
        """A balanced corpus with shuffled labels has no learnable signal;
        the final training loss sits at the ln 2 chance level."""
        records = signal_corpus(n_pos=34, neg_per_pos=1)
        labels = [r.label for r in records]
        random.Random(7).shuffle(labels)
        shuffled = [type(r)(r.prev, r.next, lab)
                    for r, lab in zip(records, labels)]
        config = FinetuneConfig(base_model=str(base_dir), epochs=3,
                                batch_size=16, max_length=64, seed=0,
                                expected_ratio=None)
        result = finetune(shuffled, config)
        assert abs(result.epoch_losses[-1] - 0.6931471805599453) <= 0.15


class TestCheckpointContract:
    def test_hidden_size_mismatch_fatal(self, tmp_path):
        from transformers import BertConfig, BertForNextSentencePrediction
        small = BertForNextSentencePrediction(BertConfig(
            vocab_size=50, hidden_size=256, num_hidden_layers=2,
            num_attention_heads=4, intermediate_size=64,
            max_position_embeddings=32))
        small.save_pretrained(tmp_path / "small")
        with pytest.raises(ModelContractError, match=str(HIDDEN_SIZE)):
            load_checkpoint(tmp_path / "small")

    def test_layer_count_mismatch_fatal(self, tmp_path):
        from transformers import BertConfig, BertForNextSentencePrediction
        shallow = BertForNextSentencePrediction(BertConfig(
            vocab_size=50, hidden_size=HIDDEN_SIZE, num_hidden_layers=2,
            num_attention_heads=4, intermediate_size=64,
            max_position_embeddings=32))
        shallow.save_pretrained(tmp_path / "shallow")
        with pytest.raises(ModelContractError, match="layers"):
            load_checkpoint(tmp_path / "shallow")

    def test_missing_checkpoint_fatal(self, tmp_path):
        with pytest.raises(ModelContractError, match="not found"):
            load_checkpoint(tmp_path / "nope")

    def test_save_round_trip(self, tuned, tmp_path):
        result, _ = tuned
        summary = save_finetuned(result, tmp_path / "ckpt")
        model, tokenizer = load_checkpoint(tmp_path / "ckpt")
        for name, param in result.model.named_parameters():
            assert torch.equal(model.state_dict()[name], param.data), name
        curve = (tmp_path / "ckpt" / "loss_curve.csv").read_text().splitlines()
        assert curve[0].startswith("# ")
        assert curve[1] == "epoch,train_loss"
        assert len(curve) == 2 + len(result.epoch_losses)
        assert summary["epoch_losses"] == result.epoch_losses

    def test_empty_corpus_rejected(self, base_dir):
        with pytest.raises(ValueError, match="empty"):
            finetune([], FinetuneConfig(base_model=str(base_dir)))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            FinetuneConfig(base_model="x", epochs=0).validate()
        with pytest.raises(ValueError):
            FinetuneConfig(base_model="x", lr=-1.0).validate()
