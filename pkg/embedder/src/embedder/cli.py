"""Command-line interface.

Subcommands:
  init-base  build a local 12-layer/768 base checkpoint (random weights,
             WordPiece tokenizer trained on the given corpus)
  finetune   NSP fine-tuning of a base checkpoint on a sentence-pair corpus,
             updating only the final encoder layer and the NSP head
  export     write per-node [CLS] embeddings as NFV1 + id sidecar
  text-map   derive a text-map file from a thread ("post-sets") file

Each command prints a one-line JSON summary to stdout. Errors print a
one-line JSON object to stderr; exit code 2 flags configuration/contract
problems, 3 flags bad input data.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from embedder.basemodel import BaseModelConfig, build_base_checkpoint
from embedder.corpus import (
    TEXT_MAP_FORMAT,
    read_pair_corpus,
    read_text_map,
    text_map_from_post_sets,
)
from embedder.export import export_embeddings
from embedder.fileio import DataError, make_header, write_jsonl
from embedder.finetune import (
    FinetuneConfig,
    ModelContractError,
    finetune,
    save_finetuned,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


def _emit(payload: dict) -> None:
    print(json.dumps(payload, ensure_ascii=False, sort_keys=True))


def _gather_texts(args) -> list[str]:
    texts: list[str] = []
    if args.pairs:
        for record in read_pair_corpus(args.pairs, expected_ratio=None):
            texts.append(record.prev)
            texts.append(record.next)
    if args.text_map:
        texts.extend(text for _, text in read_text_map(args.text_map))
    if not texts:
        raise DataError("no tokenizer corpus: pass --pairs and/or --text-map")
    return texts


def cmd_init_base(args) -> int:
    config = BaseModelConfig(vocab_size=args.vocab_size,
                             intermediate_size=args.intermediate_size,
                             num_attention_heads=args.heads,
                             max_length=args.max_length, seed=args.seed)
    try:
        config.validate()
    except ValueError as exc:
        raise ConfigCliError(str(exc)) from exc
    summary = build_base_checkpoint(args.out, _gather_texts(args), config)
    _emit({"command": "init-base", **summary})
    return EXIT_OK


def cmd_finetune(args) -> int:
    config = FinetuneConfig(base_model=args.base, epochs=args.epochs,
                            lr=args.lr, batch_size=args.batch_size,
                            max_length=args.max_length,
                            weight_decay=args.weight_decay, seed=args.seed,
                            expected_ratio=args.expected_ratio)
    try:
        config.validate()
    except ValueError as exc:
        raise ConfigCliError(str(exc)) from exc
    records = read_pair_corpus(args.pairs, expected_ratio=config.expected_ratio)
    result = finetune(records, config)
    summary = save_finetuned(result, args.out)
    _emit({"command": "finetune", "n_pairs": result.n_pairs,
           "n_trainable": result.n_trainable, "n_frozen": result.n_frozen,
           **summary})
    return EXIT_OK


def cmd_export(args) -> int:
    if bool(args.text_map) == bool(args.post_sets):
        raise ConfigCliError("pass exactly one of --text-map / --post-sets")
    entries = (read_text_map(args.text_map) if args.text_map
               else text_map_from_post_sets(args.post_sets))
    summary = export_embeddings(
        args.checkpoint, entries, args.out, batch_size=args.batch_size,
        max_length=args.max_length,
        config={"checkpoint": args.checkpoint,
                "source": args.text_map or args.post_sets})
    _emit({"command": "export", **summary})
    return EXIT_OK


def cmd_text_map(args) -> int:
    entries = text_map_from_post_sets(args.post_sets)
    write_jsonl(args.out, ({"id": nid, "text": text} for nid, text in entries),
                header=make_header(TEXT_MAP_FORMAT,
                                   {"source": args.post_sets}))
    _emit({"command": "text-map", "out": str(Path(args.out)),
           "entries": len(entries)})
    return EXIT_OK


class ConfigCliError(ValueError):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embedder",
        description="NSP fine-tuning and [CLS] feature export")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-base", help="build a local base checkpoint")
    p.add_argument("--out", required=True, help="checkpoint directory to create")
    p.add_argument("--pairs", help="sentence-pair corpus for tokenizer training")
    p.add_argument("--text-map", help="text-map file for tokenizer training")
    p.add_argument("--vocab-size", type=int, default=8192)
    p.add_argument("--intermediate-size", type=int, default=3072)
    p.add_argument("--heads", type=int, default=12)
    p.add_argument("--max-length", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_init_base)

    p = sub.add_parser("finetune", help="NSP fine-tuning, final layer + head only")
    p.add_argument("--pairs", required=True, help="sentence-pair corpus file")
    p.add_argument("--base", required=True, help="base checkpoint directory")
    p.add_argument("--out", required=True, help="output checkpoint directory")
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--lr", type=float, default=3e-5)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--max-length", type=int, default=128)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--expected-ratio", type=float, default=5.0,
                   help="expected negatives per positive (imbalance warning)")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("export", help="write [CLS] embeddings as NFV1 + sidecar")
    p.add_argument("--checkpoint", required=True, help="checkpoint directory")
    p.add_argument("--text-map", help="text-map file naming nodes to encode")
    p.add_argument("--post-sets", help="thread file naming nodes to encode")
    p.add_argument("--out", required=True, help="NFV1 output path")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--max-length", type=int, default=None)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("text-map", help="derive a text map from a thread file")
    p.add_argument("--post-sets", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_text_map)
    return parser


def _quiet_transformers() -> None:
    try:
        from transformers.utils import logging as hf_logging

        hf_logging.set_verbosity_error()
        hf_logging.disable_progress_bar()
    except ImportError:
        pass


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _quiet_transformers()
    try:
        return args.func(args)
    except (ConfigCliError, ModelContractError) as exc:
        print(json.dumps({"error": "config", "message": str(exc)}),
              file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(json.dumps({"error": "data", "message": str(exc)}),
              file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}),
              file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
