"""File plumbing shared by this package's readers and writers.

The on-disk conventions (headered JSONL, atomic replace-on-write) match the
graph package's artifact formats byte for byte, but are implemented here
independently: the two packages interoperate only through files.
"""

from __future__ import annotations

import json
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, Iterator


class DataError(ValueError):
    """Input data is missing, malformed, or violates a documented contract."""


@contextmanager
def atomic_write(path: str | Path, binary: bool = False) -> Iterator:
    """Write to a temp file in the target directory, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb" if binary else "w") as handle:
            yield handle
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def make_header(fmt: str, config: dict | None = None, version: int = 1) -> dict:
    header = {"format": fmt, "version": version}
    if config is not None:
        header["config"] = config
    return header


def write_jsonl(path: str | Path, rows: Iterable[dict], header: dict | None = None) -> None:
    with atomic_write(path) as fh:
        if header is not None:
            fh.write(json.dumps(header, ensure_ascii=False) + "\n")
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_jsonl(path: str | Path, expect_format: str | None = None) -> tuple[dict | None, list[dict]]:
    """Read a JSONL file; returns (header, rows).

    When expect_format is given the first line must be a matching header.
    Otherwise a leading object with a "format" key is treated as a header.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    rows: list[dict] = []
    header: dict | None = None
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{n + 1}: invalid JSON: {exc}") from exc
            if n == 0 and isinstance(obj, dict) and "format" in obj:
                header = obj
                continue
            rows.append(obj)
    if expect_format is not None:
        if header is None or header.get("format") != expect_format:
            raise DataError(f"{path}: expected '{expect_format}' header, got {header!r}")
    return header, rows
