"""Line-delimited record persistence.

Every pipeline artifact is a file of one JSON object per line, each tagged
with a ``schema`` field so files can mix record types and remain
self-describing. Domain modules register a codec per type at import time;
this module stays free of domain imports.

Writes are atomic: content goes to a temp file in the destination directory
which is then renamed over the target, so readers never observe a partial
file.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Callable


class RecordError(Exception):
    """Raised on unserializable objects or malformed record lines."""


_ENCODERS: dict[type, tuple[str, Callable[[Any], dict]]] = {}
_DECODERS: dict[str, Callable[[dict], Any]] = {}


def register_record_type(
    schema: str,
    cls: type,
    encode: Callable[[Any], dict],
    decode: Callable[[dict], Any],
) -> None:
    """Register a codec for ``cls`` under the ``schema`` tag."""
    _ENCODERS[cls] = (schema, encode)
    _DECODERS[schema] = decode


def to_record(obj: Any) -> dict:
    entry = _ENCODERS.get(type(obj))
    if entry is None:
        raise RecordError(f"no record codec registered for {type(obj).__name__}")
    schema, encode = entry
    record = {"schema": schema}
    record.update(encode(obj))
    return record


def from_record(record: dict) -> Any:
    schema = record.get("schema")
    decode = _DECODERS.get(schema)
    if decode is None:
        raise RecordError(f"unknown record schema {schema!r}")
    return decode(record)


def dumps_record(obj: Any) -> str:
    return json.dumps(to_record(obj), sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def write_records(items: list, path: str | Path) -> int:
    """Write one record per line, atomically. Returns the line count."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for item in items:
        try:
            lines.append(dumps_record(item))
        except (RecordError, TypeError, ValueError) as exc:
            ident = getattr(item, "id", None) or getattr(item, "problem_id", repr(item)[:80])
            raise RecordError(f"cannot serialize record {ident}: {exc}") from exc
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            for line in lines:
                fh.write(line)
                fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return len(lines)


def read_records(path: str | Path) -> list:
    """Read all records from a line-delimited file."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            out.append(from_record(record))
    return out


def write_json(data: Any, path: str | Path) -> None:
    """Atomic pretty-printed JSON, stable key order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(data, fh, sort_keys=True, ensure_ascii=False, indent=2)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_json(path: str | Path) -> Any:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
