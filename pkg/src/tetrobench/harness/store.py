"""Atomic file writes and content hashing for the artifact store."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path


def write_bytes(path, data: bytes) -> Path:
    """Write to a temporary sibling and rename it over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def write_text(path, text: str) -> Path:
    return write_bytes(path, text.encode("utf-8"))


def canonical_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    return write_text(path, canonical_json(obj))


def read_json(path):
    return json.loads(Path(path).read_text())


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def digest(obj) -> str:
    """Hash of a JSON-serialisable description of a stage's inputs."""
    return sha256_bytes(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode())


STAMP = ".stamp.json"


def stamp_matches(directory, key: str) -> bool:
    """True when ``directory`` holds a completed stage for inputs hashing to ``key``.

    The stamp lists the stage's output files with their digests; any missing
    or altered file invalidates it.
    """
    directory = Path(directory)
    f = directory / STAMP
    if not f.is_file():
        return False
    try:
        stamp = read_json(f)
    except (OSError, ValueError):
        return False
    if stamp.get("key") != key:
        return False
    for name, expected in stamp.get("files", {}).items():
        target = directory / name
        if not target.is_file() or sha256_file(target) != expected:
            return False
    return True


def write_stamp(directory, key: str, files=()) -> None:
    """Record completion; ``files`` are paths relative to ``directory``."""
    directory = Path(directory)
    write_json(directory / STAMP, {
        "key": key,
        "files": {str(n): sha256_file(directory / n) for n in sorted(map(str, files))},
    })
