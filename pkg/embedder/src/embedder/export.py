"""[CLS] embedding export in NFV1 format.

For every (node_id, text) entry the fine-tuned encoder is run in eval mode
and the final hidden state of the [CLS] token becomes that node's feature
row. Output is the binary NFV1 format the graph pipeline consumes — magic
"NFV1", u32-LE row count, u32-LE dim, row-major float32-LE payload — plus a
JSONL sidecar listing node ids in row order.

Texts are de-duplicated before encoding: each distinct string is encoded
exactly once and its row copied to every node that carries it, so identical
texts are identical rows bitwise and repeated runs produce identical files.
Empty texts get the encoding of the empty string and are flagged in the
sidecar.
"""

from __future__ import annotations

import struct
from pathlib import Path

from embedder.fileio import atomic_write, make_header, write_jsonl
from embedder.finetune import HIDDEN_SIZE, ModelContractError

FEATURES_MAGIC = b"NFV1"
FEATURE_IDS_FORMAT = "nfv1-ids"


def default_sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".ids.jsonl")


def _load_encoder(checkpoint: str | Path):
    from transformers import BertModel, BertTokenizerFast

    path = Path(checkpoint)
    if not path.is_dir():
        raise ModelContractError(f"checkpoint directory not found: {path}")
    model = BertModel.from_pretrained(str(path))
    if model.config.hidden_size != HIDDEN_SIZE:
        raise ModelContractError(
            f"{path}: hidden size {model.config.hidden_size}, feature "
            f"consumers read {HIDDEN_SIZE}-wide rows")
    tokenizer = BertTokenizerFast.from_pretrained(str(path))
    model.eval()
    return model, tokenizer


def encode_texts(checkpoint: str | Path, texts: list[str],
                 batch_size: int = 32, max_length: int | None = None):
    """Encode each distinct text once; returns a float32 (len(texts), 768)
    array where rows of equal texts are equal bitwise."""
    import numpy as np
    import torch

    model, tokenizer = _load_encoder(checkpoint)
    tokenizer.truncation_side = "left"
    max_length = max_length or tokenizer.model_max_length

    unique: list[str] = []
    index_of: dict[str, int] = {}
    for text in texts:
        if text not in index_of:
            index_of[text] = len(unique)
            unique.append(text)

    rows = np.empty((len(unique), HIDDEN_SIZE), dtype="<f4")
    with torch.no_grad():
        for start in range(0, len(unique), batch_size):
            batch = unique[start:start + batch_size]
            enc = tokenizer(batch, truncation=True, max_length=max_length,
                            padding="longest", return_tensors="pt")
            out = model(**enc)
            cls = out.last_hidden_state[:, 0, :]
            rows[start:start + len(batch)] = cls.numpy().astype("<f4")
    return rows[[index_of[t] for t in texts]]


def write_feature_file(path: str | Path, ids: list[str], data,
                       empty_flags: list[bool] | None = None,
                       sidecar_path: str | Path | None = None,
                       config: dict | None = None) -> Path:
    """Write an NFV1 file + id sidecar; returns the sidecar path."""
    import numpy as np

    path = Path(path)
    data = np.ascontiguousarray(data, dtype="<f4")
    n, dim = data.shape
    if len(ids) != n:
        raise ValueError(f"{len(ids)} ids for {n} rows")
    with atomic_write(path, binary=True) as fh:
        fh.write(FEATURES_MAGIC)
        fh.write(struct.pack("<II", n, dim))
        fh.write(data.tobytes())
    sidecar = Path(sidecar_path) if sidecar_path else default_sidecar_path(path)

    def sidecar_rows():
        for i, nid in enumerate(ids):
            row = {"row": i, "id": nid}
            if empty_flags and empty_flags[i]:
                row["empty"] = True
            yield row

    write_jsonl(sidecar, sidecar_rows(),
                header=make_header(FEATURE_IDS_FORMAT, config))
    return sidecar


def export_embeddings(checkpoint: str | Path, entries: list[tuple[str, str]],
                      out_path: str | Path, batch_size: int = 32,
                      max_length: int | None = None,
                      sidecar_path: str | Path | None = None,
                      config: dict | None = None) -> dict:
    """Encode (node_id, text) entries and write NFV1 + sidecar.

    Row order matches `entries`. Returns a summary dict.
    """
    if not entries:
        raise ValueError("no entries to export")
    ids = [nid for nid, _ in entries]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate node ids in export entries")
    texts = [text for _, text in entries]
    rows = encode_texts(checkpoint, texts, batch_size=batch_size,
                        max_length=max_length)
    empty_flags = [text == "" for text in texts]
    sidecar = write_feature_file(out_path, ids, rows, empty_flags=empty_flags,
                                 sidecar_path=sidecar_path, config=config)
    return {"features": str(out_path), "sidecar": str(sidecar),
            "rows": len(ids), "dim": HIDDEN_SIZE,
            "empty_texts": sum(empty_flags),
            "unique_texts": len(set(texts))}
