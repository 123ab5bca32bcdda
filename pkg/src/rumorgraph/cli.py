"""Command-line interface.

One executable with subcommands covering the pipeline end to end:

    ingest         record files -> labeled post sets + quarantine
    build-graphs   post sets -> propagation graphs (optional snapshots)
    gen-pairs      post sets -> sentence-pair corpus
    synth          write a synthetic record corpus with planted structure
    train          graphs + features -> checkpoint, train log, curves
    evaluate       checkpoint + graphs -> metrics report
    export-curves  train log -> plot-ready CSV

Options may come from flags or a JSON file via --config; explicit flags win.
Every artifact header echoes the effective configuration. Exit codes: 0 ok,
2 configuration problem, 3 data problem, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import numerics as nm
from .fileio import DataError, atomic_write, make_header
from .graph import (
    SNAPSHOT_INTERVAL_SECONDS,
    FeaturedGraph,
    attach_features,
    build_static_graph,
    read_features,
    read_graphs,
    snapshot_series,
    write_graphs,
)
from .ingestion import (
    join_post_sets,
    label_post_sets,
    load_corpus,
    read_post_sets,
    write_post_sets,
    write_quarantine,
)
from .model import (
    ModelConfig,
    ModelConfigError,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .pairs import PairStats, build_pair_corpus, write_pairs
from .synth import SynthConfig, generate_corpus, write_synth_corpus
from .train_eval import (
    TrainConfig,
    evaluate,
    export_curves,
    read_trainlog,
    split_dataset,
    train,
    write_trainlog,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

METRICS_FORMAT = "metrics-report"


class ConfigError(ValueError):
    pass


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"missing config file: {p}")
    try:
        obj = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{p}: config must be a JSON object")
    return obj


def _resolve(args: argparse.Namespace, file_cfg: dict, defaults: dict) -> dict:
    """Effective options: flag if given, else config-file value, else default."""
    unknown = set(file_cfg) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    out = {}
    for key, default in defaults.items():
        flag_val = getattr(args, key.replace("-", "_"), None)
        if flag_val is not None:
            out[key] = flag_val
        elif key in file_cfg:
            out[key] = file_cfg[key]
        else:
            out[key] = default
    return out


def _emit(obj: dict) -> None:
    print(json.dumps(obj, ensure_ascii=False))


# ---------------------------------------------------------------------------
# commands

def cmd_ingest(args) -> int:
    cfg = _resolve(args, _load_config_file(args.config), {
        "factchecks": None, "tweets": None, "comments": None,
        "reposts": None, "users": None, "out_dir": None})
    for key in ("factchecks", "tweets", "comments", "reposts", "users", "out_dir"):
        if not cfg[key]:
            raise ConfigError(f"--{key.replace('_', '-')} is required")
    out_dir = Path(cfg["out_dir"])
    corpus = load_corpus({k: cfg[k] for k in
                          ("factchecks", "tweets", "comments", "reposts", "users")})
    joined = join_post_sets(corpus)
    labeled = label_post_sets(joined.post_sets, corpus.factchecks)
    quarantine = corpus.quarantine + joined.quarantine + labeled.quarantine
    write_post_sets(out_dir / "post_sets.jsonl", labeled.post_sets, config=cfg)
    write_quarantine(out_dir / "quarantine.jsonl", quarantine, config=cfg)
    summary = corpus.summary()
    summary.update({
        "post_sets": len(labeled.post_sets),
        "labeled": sum(1 for ps in labeled.post_sets if ps.label is not None),
        "quarantined": len(quarantine),
        "unparsed_factcheck_links": labeled.unparsed_links,
        "post_sets_file": str(out_dir / "post_sets.jsonl"),
        "quarantine_file": str(out_dir / "quarantine.jsonl"),
    })
    _emit(summary)
    return EXIT_OK


def cmd_build_graphs(args) -> int:
    cfg = _resolve(args, _load_config_file(args.config), {
        "post_sets": None, "out": None, "augment_snapshots": False,
        "snapshot_interval_hours": 6.0})
    if not cfg["post_sets"] or not cfg["out"]:
        raise ConfigError("--post-sets and --out are required")
    if cfg["snapshot_interval_hours"] <= 0:
        raise ConfigError("--snapshot-interval-hours must be positive")
    sets = read_post_sets(cfg["post_sets"])
    graphs = [build_static_graph(ps) for ps in sets]
    n_snapshots = 0
    if cfg["augment_snapshots"]:
        interval = int(cfg["snapshot_interval_hours"] * 3600)
        out_graphs = []
        for g in graphs:
            out_graphs.append(g)
            series = snapshot_series(g, interval_seconds=interval)
            # the last snapshot always equals the full graph, which is
            # already in the file; export only the proper prefixes
            for snap in series[:-1]:
                out_graphs.append(snap.to_static_graph(g))
                n_snapshots += 1
        graphs = out_graphs
    write_graphs(cfg["out"], graphs, config=cfg)
    _emit({"graphs": len(graphs), "snapshots": n_snapshots, "out": str(cfg["out"])})
    return EXIT_OK


def cmd_gen_pairs(args) -> int:
    cfg = _resolve(args, _load_config_file(args.config), {
        "post_sets": None, "out": None, "neg_per_pos": 5, "seed": 0})
    if not cfg["post_sets"] or not cfg["out"]:
        raise ConfigError("--post-sets and --out are required")
    if cfg["neg_per_pos"] < 0:
        raise ConfigError("--neg-per-pos must be >= 0")
    sets = read_post_sets(cfg["post_sets"])
    stats = PairStats()
    pairs = build_pair_corpus(sets, neg_per_pos=int(cfg["neg_per_pos"]),
                              seed=int(cfg["seed"]), stats=stats)
    write_pairs(cfg["out"], pairs, config=cfg)
    summary = stats.to_dict()
    summary["out"] = str(cfg["out"])
    _emit(summary)
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = _resolve(args, _load_config_file(args.config), {
        "out_dir": None, "n_graphs": 20, "n_classes": 5, "nodes_min": 5,
        "nodes_max": 20, "feature_dim": 768, "signal_strength": 1.0,
        "signal_mode": "node", "edge_noise": 0.1, "base_scale": 1.0,
        "repost_prob": 0.12, "seed": 0})
    if not cfg["out_dir"]:
        raise ConfigError("--out-dir is required")
    try:
        synth_cfg = SynthConfig(
            n_graphs=int(cfg["n_graphs"]), n_classes=int(cfg["n_classes"]),
            nodes_range=(int(cfg["nodes_min"]), int(cfg["nodes_max"])),
            feature_dim=int(cfg["feature_dim"]),
            signal_strength=float(cfg["signal_strength"]),
            signal_mode=str(cfg["signal_mode"]),
            edge_noise=float(cfg["edge_noise"]),
            base_scale=float(cfg["base_scale"]),
            repost_prob=float(cfg["repost_prob"]), seed=int(cfg["seed"]))
    except DataError as exc:
        raise ConfigError(str(exc)) from exc
    result = write_synth_corpus(generate_corpus(synth_cfg), cfg["out_dir"])
    _emit({**result["summary"], "paths": result["paths"]})
    return EXIT_OK


def _model_config_from(cfg: dict) -> ModelConfig:
    return ModelConfig(
        in_dim=int(cfg["in_dim"]), hidden=int(cfg["hidden"]),
        edge_hidden=int(cfg["edge_hidden"]), classes=int(cfg["classes"]),
        heads=int(cfg["heads"]), depth=int(cfg["depth"]),
        dropout=float(cfg["dropout"]), neighborhood=str(cfg["neighborhood"]),
        attention_variant=str(cfg["attention_variant"]))


_TRAIN_DEFAULTS = {
    "graphs": None, "features": None, "out_dir": None,
    "in_dim": 768, "hidden": 64, "edge_hidden": 64, "classes": 5, "heads": 2,
    "depth": 2, "dropout": 0.5, "neighborhood": "directed",
    "attention_variant": "learned", "baseline": False,
    "lr": 0.01, "weight_decay": 0.01, "batch_size": 16, "max_epochs": 500,
    "patience": 50, "seed": 0, "val_fraction": 0.2, "test_fraction": 0.1,
    "curves": False,
}


def _load_featured(graphs_path, features_path, in_dim: int):
    """Graphs joined with features; unlabeled graphs are split off."""
    graphs = read_graphs(graphs_path)
    table = read_features(features_path)
    labeled, unlabeled = [], 0
    for g in graphs:
        fg = attach_features(g, table, expected_dim=in_dim)
        if fg.label is None:
            unlabeled += 1
        else:
            labeled.append(fg)
    return labeled, unlabeled


def _train_config_from(cfg: dict) -> TrainConfig:
    val, test = float(cfg["val_fraction"]), float(cfg["test_fraction"])
    if val < 0 or test < 0 or val + test >= 1:
        raise ConfigError(f"val/test fractions must be >= 0 and sum below 1, "
                          f"got {val}/{test}")
    try:
        return TrainConfig(
            model=_model_config_from(cfg), lr=float(cfg["lr"]),
            weight_decay=float(cfg["weight_decay"]),
            batch_size=int(cfg["batch_size"]), max_epochs=int(cfg["max_epochs"]),
            patience=int(cfg["patience"]),
            split=(1.0 - val - test, val, test), seed=int(cfg["seed"]))
    except DataError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_train(args) -> int:
    cfg = _resolve(args, _load_config_file(args.config), _TRAIN_DEFAULTS)
    for key in ("graphs", "features", "out_dir"):
        if not cfg[key]:
            raise ConfigError(f"--{key.replace('_', '-')} is required")
    train_cfg = _train_config_from(cfg)
    labeled, unlabeled = _load_featured(cfg["graphs"], cfg["features"],
                                        train_cfg.model.in_dim)
    if not labeled:
        raise DataError("no labeled graphs to train on")
    tr, va, te = split_dataset(labeled, train_cfg)
    params, log = train(train_cfg, tr, va, baseline=bool(cfg["baseline"]))

    out_dir = Path(cfg["out_dir"])
    checkpoint = out_dir / "checkpoint.npz"
    save_checkpoint(checkpoint, params, extra={"train_config": train_cfg.to_dict(),
                                               "baseline": bool(cfg["baseline"]),
                                               "cli_config": cfg})
    write_trainlog(out_dir / "trainlog.json", log, config=cfg)
    if cfg["curves"]:
        export_curves(log, out_dir / "curves.csv", config=cfg)
    summary = {
        "checkpoint": str(checkpoint),
        "trainlog": str(out_dir / "trainlog.json"),
        "graphs": {"train": len(tr), "val": len(va), "test": len(te),
                   "unlabeled_dropped": unlabeled},
        "epochs": len(log.epochs),
        "best_epoch": log.best_epoch,
        "best_val_loss": min(e.val_loss for e in log.epochs),
    }
    if te:
        summary["test"] = evaluate(params, te).to_dict()
    _emit(summary)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _resolve(args, _load_config_file(args.config), {
        "graphs": None, "features": None, "checkpoint": None,
        "subset": "test", "out": None, "seed": None})
    for key in ("graphs", "features", "checkpoint"):
        if not cfg[key]:
            raise ConfigError(f"--{key} is required")
    if cfg["subset"] not in ("train", "val", "test", "all"):
        raise ConfigError(f"unknown subset {cfg['subset']!r}")
    params, meta = load_checkpoint(cfg["checkpoint"])
    labeled, unlabeled = _load_featured(cfg["graphs"], cfg["features"],
                                        params.config.in_dim)
    if not labeled:
        raise DataError("no labeled graphs to evaluate")
    if cfg["subset"] == "all":
        chosen = labeled
    else:
        # reproduce the training split from the checkpoint's recorded config
        saved = meta.get("extra", {}).get("train_config")
        if saved is None:
            raise DataError("checkpoint records no training config; "
                            "only --subset all is possible")
        split_cfg = TrainConfig(model=params.config,
                                split=tuple(saved["split"]),
                                seed=int(saved["seed"]) if cfg["seed"] is None
                                else int(cfg["seed"]))
        tr, va, te = split_dataset(labeled, split_cfg)
        chosen = {"train": tr, "val": va, "test": te}[cfg["subset"]]
        if not chosen:
            raise DataError(f"subset {cfg['subset']!r} is empty under the "
                            "recorded split")
    report = evaluate(params, chosen)
    payload = make_header(METRICS_FORMAT, cfg)
    payload["subset"] = cfg["subset"]
    payload["metrics"] = report.to_dict()
    if cfg["out"]:
        with atomic_write(cfg["out"]) as fh:
            fh.write(json.dumps(payload, indent=2) + "\n")
    _emit(payload)
    return EXIT_OK


def cmd_export_curves(args) -> int:
    cfg = _resolve(args, _load_config_file(args.config),
                   {"trainlog": None, "out": None})
    if not cfg["trainlog"] or not cfg["out"]:
        raise ConfigError("--trainlog and --out are required")
    header, log = read_trainlog(cfg["trainlog"])
    export_curves(log, cfg["out"], config=header.get("config"))
    _emit({"out": str(cfg["out"]), "epochs": len(log.epochs),
           "best_epoch": log.best_epoch})
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rumorgraph",
        description="Rumor-propagation graphs and their classification models.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON file with defaults for this command")

    p = sub.add_parser("ingest", help="record files -> labeled post sets")
    add_common(p)
    p.add_argument("--factchecks")
    p.add_argument("--tweets")
    p.add_argument("--comments")
    p.add_argument("--reposts")
    p.add_argument("--users")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build-graphs", help="post sets -> propagation graphs")
    add_common(p)
    p.add_argument("--post-sets")
    p.add_argument("--out")
    p.add_argument("--augment-snapshots", action="store_const", const=True,
                   default=None)
    p.add_argument("--snapshot-interval-hours", type=float)
    p.set_defaults(func=cmd_build_graphs)

    p = sub.add_parser("gen-pairs", help="post sets -> sentence-pair corpus")
    add_common(p)
    p.add_argument("--post-sets")
    p.add_argument("--out")
    p.add_argument("--neg-per-pos", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gen_pairs)

    p = sub.add_parser("synth", help="write a synthetic record corpus")
    add_common(p)
    p.add_argument("--out-dir")
    p.add_argument("--n-graphs", type=int)
    p.add_argument("--n-classes", type=int)
    p.add_argument("--nodes-min", type=int)
    p.add_argument("--nodes-max", type=int)
    p.add_argument("--feature-dim", type=int)
    p.add_argument("--signal-strength", type=float)
    p.add_argument("--signal-mode", choices=["node", "edge"])
    p.add_argument("--edge-noise", type=float)
    p.add_argument("--base-scale", type=float)
    p.add_argument("--repost-prob", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="graphs + features -> checkpoint")
    add_common(p)
    p.add_argument("--graphs")
    p.add_argument("--features")
    p.add_argument("--out-dir")
    p.add_argument("--in-dim", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--edge-hidden", type=int)
    p.add_argument("--classes", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--neighborhood", choices=["directed", "undirected"])
    p.add_argument("--attention-variant", choices=["learned", "attrmean"])
    p.add_argument("--baseline", action="store_const", const=True, default=None)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--val-fraction", type=float)
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--curves", action="store_const", const=True, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="checkpoint + graphs -> metrics")
    add_common(p)
    p.add_argument("--graphs")
    p.add_argument("--features")
    p.add_argument("--checkpoint")
    p.add_argument("--subset", choices=["train", "val", "test", "all"])
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-curves", help="train log -> CSV")
    add_common(p)
    p.add_argument("--trainlog")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_curves)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ModelConfigError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return EXIT_CONFIG
    except (nm.NonFiniteError, nm.ShapeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return EXIT_NUMERIC
    except DataError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
