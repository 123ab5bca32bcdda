"""Acceptance: the embedding component's headline guarantee in one test.

After NSP fine-tuning on a ~200-pair toy corpus: every parameter outside the
final encoder layer + NSP head is bitwise unchanged, the training loss
strictly decreases across the 3 epochs, and the exported NFV1 features
round-trip through the graph package's feature loader onto a propagation
graph.
"""

import numpy as np
import torch

from embedder.export import export_embeddings
from embedder.finetune import frozen_parameter_names, load_checkpoint, save_finetuned

from rumorgraph.graph import attach_features, build_static_graph, read_features
from rumorgraph.ingestion import PostMember, PostSet


def test_freeze_contract_end_to_end(tuned, base_dir, tmp_path):
    result, config = tuned
    assert result.n_pairs == 204 and config.epochs == 3

    # 1. frozen scope is bitwise untouched
    base_model, _ = load_checkpoint(base_dir)
    base_state = base_model.state_dict()
    tuned_state = result.model.state_dict()
    for name in frozen_parameter_names(result.model):
        assert torch.equal(tuned_state[name], base_state[name]), name

    # 2. NSP training loss strictly decreases across the 3 epochs
    a, b, c = result.epoch_losses
    assert b < a and c < b, result.epoch_losses

    # 3. exported features round-trip through the graph-side consumer
    ckpt = tmp_path / "ckpt"
    save_finetuned(result, ckpt)
    ps = PostSet(source_id="1", source_timestamp=0, source_text="claim",
                 members=[PostMember("2", "1", "reply", 60, "challenge"),
                          PostMember("3", "2", "reply", 120, "rebuttal")],
                 label=4)
    graph = build_static_graph(ps)
    out = tmp_path / "features.nfv1"
    export_embeddings(ckpt, [("1", "claim"), ("2", "challenge"),
                             ("3", "rebuttal")], out)
    fg = attach_features(graph, read_features(out), expected_dim=768)
    assert fg.features.shape == (3, 768)
    assert np.all(np.isfinite(fg.features))
