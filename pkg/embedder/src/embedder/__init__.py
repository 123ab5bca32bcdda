"""Sentence-pair fine-tuning and feature export.

This package fine-tunes a 12-layer, 768-hidden bidirectional encoder with a
next-sentence-prediction objective on a sentence-pair corpus, updating only
the final encoder layer and the NSP head, then exports per-node [CLS]
embeddings as NFV1 feature files for the graph-classification pipeline.

It interoperates with the graph package purely through files: it reads the
headered sentence-pair JSONL corpus and writes NFV1 feature files with id
sidecars. It never imports the graph package.
"""

from embedder.corpus import PairRecord, read_pair_corpus, read_text_map
from embedder.finetune import FinetuneConfig, FinetuneResult, finetune
from embedder.export import export_embeddings

__all__ = [
    "PairRecord",
    "read_pair_corpus",
    "read_text_map",
    "FinetuneConfig",
    "FinetuneResult",
    "finetune",
    "export_embeddings",
]
