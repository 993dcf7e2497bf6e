"""On-disk vector store shared by frame embeddings and caption indices.

Binary layout, all integers little-endian:
    header:  magic "VEMB" | version u32 | dim u32 | count u64
    record:  id_len u32 | id bytes (UTF-8) | dim float32 values

A JSONL fallback is also accepted on load: one {"id": str, "vector": [..]}
object per line.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MAGIC = b"VEMB"
VERSION = 1

_HEADER = struct.Struct("<4sIIQ")
_ID_LEN = struct.Struct("<I")


class VectorStoreError(ValueError):
    """The vector file is corrupt or internally inconsistent."""


def save_vectors(path: str | Path, entries: Sequence[tuple[str, np.ndarray]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if entries:
        dim = int(np.asarray(entries[0][1]).shape[0])
    else:
        dim = 0
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, dim, len(entries)))
        for name, vector in entries:
            vector = np.asarray(vector, dtype=np.float32)
            if vector.ndim != 1 or vector.shape[0] != dim:
                raise VectorStoreError(
                    f"vector for {name!r} has shape {vector.shape}, expected ({dim},)"
                )
            encoded = name.encode("utf-8")
            fh.write(_ID_LEN.pack(len(encoded)))
            fh.write(encoded)
            fh.write(vector.tobytes())


def load_vectors(path: str | Path) -> tuple[int, list[tuple[str, np.ndarray]]]:
    """Load (dimension, entries); detects binary vs JSONL automatically."""
    path = Path(path)
    with path.open("rb") as fh:
        head = fh.read(4)
        if head != MAGIC:
            return _load_jsonl(path)
        rest = fh.read(_HEADER.size - 4)
        if len(rest) != _HEADER.size - 4:
            raise VectorStoreError(f"{path.name}: truncated header")
        _, version, dim, count = _HEADER.unpack(head + rest)
        if version != VERSION:
            raise VectorStoreError(f"{path.name}: unsupported version {version}")
        entries: list[tuple[str, np.ndarray]] = []
        record_bytes = 4 * dim
        for i in range(count):
            raw_len = fh.read(_ID_LEN.size)
            if len(raw_len) != _ID_LEN.size:
                raise VectorStoreError(f"{path.name}: truncated at record {i}")
            (id_len,) = _ID_LEN.unpack(raw_len)
            name = fh.read(id_len).decode("utf-8")
            data = fh.read(record_bytes)
            if len(data) != record_bytes:
                raise VectorStoreError(f"{path.name}: truncated vector for {name!r}")
            entries.append((name, np.frombuffer(data, dtype="<f4").astype(np.float32)))
        return dim, entries


def _load_jsonl(path: Path) -> tuple[int, list[tuple[str, np.ndarray]]]:
    entries: list[tuple[str, np.ndarray]] = []
    dim: int | None = None
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                name = record["id"]
                vector = np.asarray(record["vector"], dtype=np.float32)
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise VectorStoreError(f"{path.name}:{lineno}: bad record: {exc}") from None
            if vector.ndim != 1:
                raise VectorStoreError(f"{path.name}:{lineno}: vector must be flat")
            if dim is None:
                dim = int(vector.shape[0])
            elif vector.shape[0] != dim:
                raise VectorStoreError(
                    f"{path.name}:{lineno}: dimension {vector.shape[0]} != {dim}"
                )
            entries.append((str(name), vector))
    if dim is None:
        raise VectorStoreError(f"{path.name}: no vectors found")
    return dim, entries
