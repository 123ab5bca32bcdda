"""Readers for the two input files: sentence-pair corpus and text map.

Pair corpus ("sentence-pairs" JSONL): rows {prev, next, label, origin} where
label 1 marks a genuine context->continuation pair and label 0 an adversarial
pair whose continuation was drawn from a different post set. The expected
class balance is one positive per `expected_ratio` negatives (default 5).

Text map ("text-map" JSONL): rows {id, text} naming every node that needs a
feature row. A text map can also be derived from a "post-sets" file, which is
the graph package's documented thread format.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

from embedder.fileio import DataError, read_jsonl

PAIRS_FORMAT = "sentence-pairs"
TEXT_MAP_FORMAT = "text-map"
POST_SETS_FORMAT = "post-sets"


@dataclass(frozen=True)
class PairRecord:
    prev: str
    next: str
    label: int  # 1 = coherent continuation, 0 = adversarial

    @property
    def nsp_target(self) -> int:
        """Binary NSP-head target: 0 = genuine continuation, 1 = random.

        The head's class order is the reverse of the corpus labels, so the
        mapping is target = 1 - label.
        """
        return 1 - self.label


class RatioWarning(UserWarning):
    """The corpus departs from the expected negative:positive balance."""


def read_pair_corpus(path: str | Path, expected_ratio: float | None = 5.0) -> list[PairRecord]:
    """Load a sentence-pair corpus; warn when the class balance is off.

    expected_ratio is negatives per positive; pass None to skip the check.
    """
    _, rows = read_jsonl(path, expect_format=PAIRS_FORMAT)
    records: list[PairRecord] = []
    for i, row in enumerate(rows):
        try:
            label = int(row["label"])
            if label not in (0, 1):
                raise ValueError(f"label {label} not in {{0,1}}")
            records.append(PairRecord(prev=str(row["prev"]), next=str(row["next"]),
                                      label=label))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}: bad pair row {i}: {exc}") from exc
    if not records:
        raise DataError(f"{path}: empty pair corpus")
    if expected_ratio is not None:
        n_pos = sum(r.label for r in records)
        n_neg = len(records) - n_pos
        if n_pos == 0 or abs(n_neg / n_pos - expected_ratio) > 1e-9:
            warnings.warn(
                f"{path}: {n_neg} negatives for {n_pos} positives; expected "
                f"{expected_ratio:g} negatives per positive", RatioWarning,
                stacklevel=2)
    return records


def read_text_map(path: str | Path) -> list[tuple[str, str]]:
    """Load (node_id, text) rows, preserving file order; ids must be unique."""
    _, rows = read_jsonl(path, expect_format=TEXT_MAP_FORMAT)
    out: list[tuple[str, str]] = []
    seen: set[str] = set()
    for i, row in enumerate(rows):
        try:
            nid, text = str(row["id"]), str(row["text"])
        except (KeyError, TypeError) as exc:
            raise DataError(f"{path}: bad text-map row {i}: {exc}") from exc
        if nid in seen:
            raise DataError(f"{path}: duplicate node id {nid!r}")
        seen.add(nid)
        out.append((nid, text))
    if not out:
        raise DataError(f"{path}: empty text map")
    return out


def text_map_from_post_sets(path: str | Path) -> list[tuple[str, str]]:
    """Derive (node_id, text) rows from a thread ("post-sets") file.

    Emits the source post followed by its members, per set, in file order.
    Members without text (plain reposts) are kept with an empty string so
    every graph node gets a feature row.
    """
    _, rows = read_jsonl(path, expect_format=POST_SETS_FORMAT)
    out: list[tuple[str, str]] = []
    seen: set[str] = set()
    for i, row in enumerate(rows):
        try:
            entries = [(str(row["source_id"]), str(row.get("source_text", "")))]
            for m in row["members"]:
                entries.append((str(m["id"]), str(m.get("text", ""))))
        except (KeyError, TypeError) as exc:
            raise DataError(f"{path}: bad post-set row {i}: {exc}") from exc
        for nid, text in entries:
            if nid in seen:
                raise DataError(f"{path}: duplicate node id {nid!r}")
            seen.add(nid)
            out.append((nid, text))
    if not out:
        raise DataError(f"{path}: no post sets")
    return out
