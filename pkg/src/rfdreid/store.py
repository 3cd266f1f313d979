"""Single-file embedding store.

Layout, byte-exact: one UTF-8 JSON header line (sorted keys, ``\\n``
terminated) followed by a contiguous row-major little-endian float32 blob of
shape (N, d). The header records the producing model's source tag ("B-F" or
"B-R"), the embedding dimension, the checkpoint hash and the ordered image
ids; the blob row order matches the id order. Stores are immutable: writing
the same inputs yields the same bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

_STORE_FORMAT = "rfdreid-feature-store"
_STORE_VERSION = 1


class StoreError(Exception):
    pass


class StoreCorruptError(StoreError):
    """Blob length disagrees with the header."""


class StoreVersionError(StoreError):
    """Header comes from an unknown format version."""


@dataclass
class StoreMetadata:
    source: str  # "B-F" | "B-R"
    dim: int
    image_ids: list[str]
    checkpoint_hash: str


def write_store(embeddings: np.ndarray, metadata: StoreMetadata, path) -> None:
    emb = np.asarray(embeddings, dtype="<f4")
    if emb.ndim != 2 or emb.size == 0:
        raise ValueError(f"embeddings must be a nonempty (N, d) array, got shape {emb.shape}")
    if len(metadata.image_ids) != emb.shape[0]:
        raise ValueError(
            f"{len(metadata.image_ids)} image ids for {emb.shape[0]} embedding rows"
        )
    if metadata.dim != emb.shape[1]:
        raise ValueError(f"metadata.dim {metadata.dim} != embedding dim {emb.shape[1]}")
    if len(set(metadata.image_ids)) != len(metadata.image_ids):
        dupes = sorted({i for i in metadata.image_ids if metadata.image_ids.count(i) > 1})
        raise ValueError(f"duplicate image ids: {dupes[:5]}")
    header = {
        "format": _STORE_FORMAT,
        "version": _STORE_VERSION,
        "source": metadata.source,
        "dim": int(emb.shape[1]),
        "count": int(emb.shape[0]),
        "checkpoint_hash": metadata.checkpoint_hash,
        "image_ids": list(metadata.image_ids),
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        f.write(np.ascontiguousarray(emb).tobytes())


def read_store(path) -> tuple[np.ndarray, StoreMetadata]:
    """Load embeddings in manifest order plus their metadata."""
    with open(path, "rb") as f:
        line = f.readline()
        blob = f.read()
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise StoreError(f"{path}: not a feature store ({e})") from None
    if header.get("format") != _STORE_FORMAT:
        raise StoreError(f"{path}: not a feature store")
    if header.get("version") != _STORE_VERSION:
        raise StoreVersionError(f"{path}: unsupported store version {header.get('version')}")
    n, d = header["count"], header["dim"]
    expected = n * d * 4
    if len(blob) != expected:
        raise StoreCorruptError(
            f"{path}: blob is {len(blob)} bytes, expected {expected} ({n} x {d} float32)"
        )
    emb = np.frombuffer(blob, dtype="<f4").reshape(n, d).copy()
    meta = StoreMetadata(
        source=header["source"],
        dim=d,
        image_ids=list(header["image_ids"]),
        checkpoint_hash=header["checkpoint_hash"],
    )
    return emb, meta
