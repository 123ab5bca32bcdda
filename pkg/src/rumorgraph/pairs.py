"""Sentence-pair corpus generation.

Positives come from two tree walks over each post set: the short form pairs
every leaf comment with its source-plus-parent context, the long form with
the full ancestor chain. Texts are cleaned of URLs and user mentions first;
comments whose cleaned text is empty drop out together with their subtrees.
Adversarial pairs reuse a positive's context with a continuation drawn from
a different post set, `neg_per_pos` per positive.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .fileio import DataError, make_header, read_jsonl, write_jsonl
from .ingestion import PostMember, PostSet

_URL_RE = re.compile(r"https?://\S+|www\.\S+", re.IGNORECASE)
_MENTION_RE = re.compile(r"@\w+")
_WS_RE = re.compile(r"\s+")

PAIRS_FORMAT = "sentence-pairs"


def clean_text(text: str) -> str:
    """Strip URLs and @mentions, collapse whitespace."""
    text = _URL_RE.sub(" ", text)
    text = _MENTION_RE.sub(" ", text)
    return _WS_RE.sub(" ", text).strip()


@dataclass(frozen=True)
class SentencePair:
    prev: str
    next: str
    label: int           # 1 = coherent continuation, 0 = adversarial
    origin: str          # "method1" | "method2" | "negative"
    set_id: str = ""     # post set of prev (in-memory provenance only)
    next_set_id: str = ""  # post set of next

    def to_dict(self) -> dict:
        return {"prev": self.prev, "next": self.next, "label": self.label,
                "origin": self.origin}


@dataclass
class _TreeNode:
    member: PostMember
    text: str
    children: list["_TreeNode"] = field(default_factory=list)


@dataclass
class PairStats:
    n_positive: int = 0
    n_negative: int = 0
    n_members_pruned: int = 0
    n_sets_without_text: int = 0
    n_duplicates_removed: int = 0

    def to_dict(self) -> dict:
        from dataclasses import asdict
        return asdict(self)


def _build_clean_tree(post_set: PostSet, stats: PairStats) -> list[_TreeNode]:
    """Top-level subtrees of the set with empty-text members pruned.

    Pruning removes a member's whole subtree: a reply to vanished text has
    lost its context, so it cannot supply a continuation either.
    """
    children_of: dict[str, list[PostMember]] = {}
    for m in sorted(post_set.members, key=lambda m: (m.timestamp, m.id)):
        children_of.setdefault(m.parent_id, []).append(m)

    pruned = 0

    def count_subtree(m: PostMember) -> int:
        return 1 + sum(count_subtree(c) for c in children_of.get(m.id, []))

    def build(m: PostMember) -> _TreeNode | None:
        nonlocal pruned
        text = clean_text(m.text)
        if not text:
            pruned += count_subtree(m)
            return None
        node = _TreeNode(member=m, text=text)
        for c in children_of.get(m.id, []):
            child = build(c)
            if child is not None:
                node.children.append(child)
        return node

    roots = [n for n in (build(m) for m in children_of.get(post_set.source_id, []))
             if n is not None]
    stats.n_members_pruned += pruned
    return roots


def _leaves_with_parents(root: _TreeNode) -> list[tuple[list[_TreeNode], _TreeNode]]:
    """(ancestor chain from root to the leaf's parent, leaf) for every leaf."""
    out = []

    def walk(node: _TreeNode, chain: list[_TreeNode]):
        if not node.children:
            out.append((chain, node))
            return
        for c in node.children:
            walk(c, chain + [node])

    walk(root, [])
    return out


def pair_generate1(source_text: str, root: _TreeNode, set_id: str) -> list[SentencePair]:
    """Leaf continuation against source (+ the leaf's direct parent when the
    leaf is nested)."""
    pairs = []
    for chain, leaf in _leaves_with_parents(root):
        if not chain:  # top-level leaf
            prev = source_text
        else:
            prev = f"{source_text} {chain[-1].text}"
        pairs.append(SentencePair(prev=prev, next=leaf.text, label=1,
                                  origin="method1", set_id=set_id,
                                  next_set_id=set_id))
    return pairs


def pair_generate2(source_text: str, root: _TreeNode, set_id: str) -> list[SentencePair]:
    """Leaf continuation against the full ancestor chain from the source."""
    pairs = []
    for chain, leaf in _leaves_with_parents(root):
        parts = [source_text] + [n.text for n in chain]
        pairs.append(SentencePair(prev=" ".join(parts), next=leaf.text, label=1,
                                  origin="method2", set_id=set_id,
                                  next_set_id=set_id))
    return pairs


def generate_positives(sets: list[PostSet],
                       stats: PairStats | None = None) -> list[SentencePair]:
    """Both walks over every top-level responsive tweet, deduplicated on
    (prev, next) keeping the first occurrence (short form enumerates first)."""
    stats = stats if stats is not None else PairStats()
    seen: set[tuple[str, str]] = set()
    out: list[SentencePair] = []
    for ps in sets:
        source_text = clean_text(ps.source_text)
        if not source_text:
            stats.n_sets_without_text += 1
            continue
        roots = _build_clean_tree(ps, stats)
        raw: list[SentencePair] = []
        for root in roots:
            raw.extend(pair_generate1(source_text, root, ps.source_id))
        for root in roots:
            raw.extend(pair_generate2(source_text, root, ps.source_id))
        for p in raw:
            key = (p.prev, p.next)
            if key in seen:
                stats.n_duplicates_removed += 1
                continue
            seen.add(key)
            out.append(p)
    stats.n_positive = len(out)
    return out


def build_pair_corpus(sets: list[PostSet], neg_per_pos: int = 5,
                      seed: int = 0,
                      stats: PairStats | None = None) -> list[SentencePair]:
    """Positives from both walks, then neg_per_pos adversarial pairs per
    positive; a pure function of (sets, neg_per_pos, seed)."""
    if neg_per_pos < 0:
        raise DataError(f"neg_per_pos must be >= 0, got {neg_per_pos}")
    stats = stats if stats is not None else PairStats()
    positives = generate_positives(sets, stats)
    if neg_per_pos == 0:
        return positives

    by_set: dict[str, list[SentencePair]] = {}
    for p in positives:
        by_set.setdefault(p.set_id, []).append(p)
    if len(by_set) < 2:
        raise DataError("adversarial sampling needs positives from at least "
                        "two post sets")

    rng = np.random.default_rng(seed)
    pools = {s: [q for q in positives if q.set_id != s] for s in by_set}
    negatives: list[SentencePair] = []
    for p in positives:
        pool = pools[p.set_id]
        for _ in range(neg_per_pos):
            other = pool[int(rng.integers(0, len(pool)))]
            negatives.append(SentencePair(prev=p.prev, next=other.next, label=0,
                                          origin="negative", set_id=p.set_id,
                                          next_set_id=other.set_id))
    stats.n_negative = len(negatives)
    return positives + negatives


def write_pairs(path, pairs: list[SentencePair], config: dict | None = None) -> None:
    write_jsonl(path, (p.to_dict() for p in pairs),
                header=make_header(PAIRS_FORMAT, config))


def read_pairs(path) -> tuple[dict, list[SentencePair]]:
    header, rows = read_jsonl(path, expect_format=PAIRS_FORMAT)
    pairs = []
    for i, row in enumerate(rows):
        try:
            label = int(row["label"])
            if label not in (0, 1):
                raise ValueError(f"label must be 0 or 1, got {label}")
            pairs.append(SentencePair(prev=str(row["prev"]), next=str(row["next"]),
                                      label=label, origin=str(row["origin"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}: pair row {i}: {exc}") from exc
    return header, pairs
