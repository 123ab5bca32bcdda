"""Synthetic record-corpus generator.

Produces the same five JSONL record files a real crawl provides, plus a
node-feature file, with class-dependent structure planted in the features so
end-to-end runs have a known answer. Two planting modes:

* ``node``: every node's feature vector leans toward a per-class direction;
  absolute positions carry the signal.
* ``edge``: a node's feature is its parent's plus a per-class step, starting
  from a random source position; feature *differences* along edges are
  informative while absolute positions drift.

Generation is a pure function of the config; writing the same corpus twice
produces byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .fileio import DataError, atomic_write
from .graph import FeatureTable, FeaturedGraph, attach_features, build_static_graph, write_features
from .ingestion import VERDICT_CLASSES, PostMember, PostSet, repost_node_id


@dataclass
class SynthConfig:
    n_graphs: int = 20
    n_classes: int = 5
    nodes_range: tuple[int, int] = (5, 20)  # total nodes including the source
    feature_dim: int = 768
    signal_strength: float = 1.0
    signal_mode: str = "node"  # "node" | "edge"
    edge_noise: float = 0.1
    base_scale: float = 1.0
    repost_prob: float = 0.12
    seed: int = 0

    def __post_init__(self):
        if self.n_graphs < 1:
            raise DataError("n_graphs must be >= 1")
        if not 1 <= self.n_classes <= len(VERDICT_CLASSES):
            raise DataError(f"n_classes must be in [1, {len(VERDICT_CLASSES)}]")
        if self.nodes_range[0] < 1 or self.nodes_range[1] < self.nodes_range[0]:
            raise DataError(f"bad nodes_range {self.nodes_range}")
        if self.signal_mode not in ("node", "edge"):
            raise DataError(f"unknown signal_mode {self.signal_mode!r}")
        if not 0.0 <= self.repost_prob <= 1.0:
            raise DataError("repost_prob must be in [0, 1]")
        if self.feature_dim < 1:
            raise DataError("feature_dim must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["nodes_range"] = list(self.nodes_range)
        return d


_ID_BASE = 100_000_000_000
_ID_STRIDE = 100_000
_USER_BASE = 900_000_000_000
_T0 = 1_600_000_000  # corpus epoch; graphs are spaced a day apart

_WORDS = ["really", "doubt", "confirmed", "source", "photo", "thread", "context",
          "misleading", "original", "evidence", "update", "quote", "agree",
          "nonsense", "verified", "clip", "archive", "detail"]


@dataclass
class SynthCorpus:
    config: SynthConfig
    factcheck_rows: list[dict]
    tweet_rows: list[dict]
    comment_rows: list[dict]
    repost_rows: list[dict]
    user_rows: list[dict]
    post_sets: list[PostSet]
    feature_ids: list[str]
    features: np.ndarray  # (total nodes, feature_dim)

    def summary(self) -> dict:
        return {"n_graphs": len(self.post_sets),
                "n_nodes": len(self.feature_ids),
                "n_comments": len(self.comment_rows),
                "n_reposts": len(self.repost_rows)}


def class_directions(config: SynthConfig) -> np.ndarray:
    """Fixed unit direction per class; the first draws of the corpus rng."""
    rng = np.random.default_rng(config.seed)
    d = rng.normal(size=(config.n_classes, config.feature_dim))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def generate_corpus(config: SynthConfig) -> SynthCorpus:
    rng = np.random.default_rng(config.seed)
    directions = rng.normal(size=(config.n_classes, config.feature_dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)

    factcheck_rows, tweet_rows, comment_rows = [], [], []
    repost_rows, user_rows = [], []
    post_sets: list[PostSet] = []
    feature_ids: list[str] = []
    feature_rows: list[np.ndarray] = []

    def base_noise():
        return config.base_scale * rng.normal(size=config.feature_dim)

    for j in range(config.n_graphs):
        label = j % config.n_classes
        direction = directions[label]
        source_id = str(_ID_BASE + j * _ID_STRIDE)
        source_ts = _T0 + j * 86_400
        n_nodes = int(rng.integers(config.nodes_range[0], config.nodes_range[1] + 1))

        def word():
            return _WORDS[int(rng.integers(0, len(_WORDS)))]

        def node_feature(parent_feat: np.ndarray | None) -> np.ndarray:
            if config.signal_mode == "node":
                return base_noise() + config.signal_strength * direction
            if parent_feat is None:
                return base_noise()
            return (parent_feat + config.signal_strength * direction
                    + config.edge_noise * rng.normal(size=config.feature_dim))

        source_feat = node_feature(None)
        feature_ids.append(source_id)
        feature_rows.append(source_feat)

        uid = str(_USER_BASE + j * _ID_STRIDE)
        user_rows.append({"id": uid, "username": f"user{j}_0"})
        source_text = f"claim {j} {word()} {word()} {word()}"
        tweet_rows.append({"id": source_id, "date": source_ts, "user_id": uid,
                           "tweet": source_text})
        factcheck_rows.append({
            "verdict": VERDICT_CLASSES[label],
            "statement": f"statement about claim {j}",
            "translate_twitter_links": [f"https://twitter.com/x/status/{source_id}"]})

        members: list[PostMember] = []
        # ids and features of nodes a later comment may reply to
        reply_targets = [(source_id, source_ts, source_feat)]
        for i in range(1, n_nodes):
            user = str(_USER_BASE + j * _ID_STRIDE + i)
            user_rows.append({"id": user, "username": f"user{j}_{i}"})
            # the first member is always a comment so every multi-node set
            # contributes sentence pairs
            if i > 1 and rng.random() < config.repost_prob:
                node_id = repost_node_id(source_id, user)
                repost_rows.append({"post_id": source_id, "user_id": user})
                members.append(PostMember(id=node_id, parent_id=source_id,
                                          kind="retweet", timestamp=source_ts,
                                          text=""))
                feat = node_feature(source_feat)
            else:
                parent_id, parent_ts, parent_feat = \
                    reply_targets[int(rng.integers(0, len(reply_targets)))]
                cid = str(_ID_BASE + j * _ID_STRIDE + i)
                ts = parent_ts + int(rng.integers(300, 30 * 3600))
                text = f"reply {i} {word()} {word()}"
                if rng.random() < 0.1:
                    text += f" https://t.co/x{i}"
                comment_rows.append({"comment_id": cid, "post_id": source_id,
                                     "reply_post_id": parent_id, "date": ts,
                                     "user_id": user, "comment": text})
                members.append(PostMember(id=cid, parent_id=parent_id,
                                          kind="reply", timestamp=ts, text=text))
                feat = node_feature(parent_feat)
                reply_targets.append((cid, ts, feat))
                node_id = cid
            feature_ids.append(node_id)
            feature_rows.append(feat)

        members.sort(key=lambda m: (m.timestamp, m.id))
        post_sets.append(PostSet(source_id=source_id, source_timestamp=source_ts,
                                 source_text=source_text, members=members,
                                 label=label))

    features = np.vstack(feature_rows) if feature_rows else \
        np.zeros((0, config.feature_dim))
    return SynthCorpus(config=config, factcheck_rows=factcheck_rows,
                       tweet_rows=tweet_rows, comment_rows=comment_rows,
                       repost_rows=repost_rows, user_rows=user_rows,
                       post_sets=post_sets, feature_ids=feature_ids,
                       features=features)


CORPUS_FILES = {"factchecks": "factchecks.jsonl", "tweets": "tweets.jsonl",
                "comments": "comments.jsonl", "reposts": "reposts.jsonl",
                "users": "users.jsonl"}
FEATURES_FILE = "features.nfv1"


def write_synth_corpus(corpus: SynthCorpus, out_dir: str | Path) -> dict:
    """Write the five record files plus the feature file; byte-stable."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows_by_file = {
        CORPUS_FILES["factchecks"]: corpus.factcheck_rows,
        CORPUS_FILES["tweets"]: corpus.tweet_rows,
        CORPUS_FILES["comments"]: corpus.comment_rows,
        CORPUS_FILES["reposts"]: corpus.repost_rows,
        CORPUS_FILES["users"]: corpus.user_rows,
    }
    for name, rows in rows_by_file.items():
        with atomic_write(out_dir / name) as fh:
            for row in rows:
                fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
    table = FeatureTable(ids=list(corpus.feature_ids), data=corpus.features)
    write_features(out_dir / FEATURES_FILE, table, config=corpus.config.to_dict())
    paths = {key: str(out_dir / name) for key, name in CORPUS_FILES.items()}
    paths["features"] = str(out_dir / FEATURES_FILE)
    return {"summary": corpus.summary(), "paths": paths}


def synth_featured_graphs(config: SynthConfig) -> list[FeaturedGraph]:
    """Generate and assemble in one step, skipping the file round trip.

    Features are rounded through float32 first so the result is bitwise
    identical to writing the corpus out and loading it back.
    """
    corpus = generate_corpus(config)
    rounded = corpus.features.astype("<f4").astype(np.float64)
    table = FeatureTable(ids=list(corpus.feature_ids), data=rounded)
    out = []
    for ps in corpus.post_sets:
        g = build_static_graph(ps)
        out.append(attach_features(g, table, expected_dim=config.feature_dim))
    return out
