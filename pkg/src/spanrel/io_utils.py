"""Atomic file writes, content digests, and machine-readable stderr logs."""

from __future__ import annotations

import hashlib
import json
import os
import sys
import tempfile
from pathlib import Path


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    """Write via a temp file in the same directory plus rename, so partially
    written outputs are never observed."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def dump_json(obj, sort_keys: bool = True) -> bytes:
    return json.dumps(obj, ensure_ascii=False, sort_keys=sort_keys, indent=1).encode("utf-8")


def atomic_write_json(path: str | Path, obj, sort_keys: bool = True) -> None:
    atomic_write_bytes(path, dump_json(obj, sort_keys=sort_keys))


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def log_event(event: str, **fields) -> None:
    """One JSON log record per line on stderr; data goes to files only."""
    record = {"event": event, **fields}
    print(json.dumps(record, ensure_ascii=False, sort_keys=True), file=sys.stderr)
