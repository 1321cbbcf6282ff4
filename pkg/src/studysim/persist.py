"""Atomic file writes, JSON/CSV emission, content hashing.

All outputs are written via temp-file-plus-rename so interrupted runs
never leave truncated artifacts, and all serialization is deterministic
(sorted JSON keys, shortest-repr floats) so identical runs are
byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

from studysim.errors import SnapshotError


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path: str | Path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_json(path: str | Path):
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


def format_value(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(format_value(v) for v in row) for row in rows)
    atomic_write_text(path, "\n".join(lines) + "\n")


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def check_snapshot(doc, expected_format: str, expected_version: int, path) -> None:
    if not isinstance(doc, dict) or doc.get("format") != expected_format:
        raise SnapshotError(f"{path}: not a {expected_format} snapshot")
    if doc.get("version") != expected_version:
        raise SnapshotError(
            f"{path}: snapshot version {doc.get('version')!r} unsupported "
            f"(expected {expected_version})"
        )
