"""Query/gallery distance matrices and their fusion.

The identity distance is the Euclidean distance between L2-normalized
identity embeddings (a monotone transform of cosine similarity, so rankings
agree with the dot-product view). The resolution term is the plain cosine
similarity between resolution embeddings. The fused matrix subtracts the
scaled resolution similarity from the identity distance; an ``inverted``
mode adds it instead, for ablations probing the sign's effect.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

ROLES = ("D_f", "D_r", "fused")
SIGNS = ("paper", "inverted")
DEFAULT_LAMBDA = 0.1


@dataclass
class DistanceMatrix:
    values: np.ndarray  # (Q, G)
    role: str
    query_ids: list[str]
    gallery_ids: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if self.values.shape != (len(self.query_ids), len(self.gallery_ids)):
            raise ValueError(
                f"values shape {self.values.shape} does not match "
                f"{len(self.query_ids)} queries x {len(self.gallery_ids)} gallery items"
            )
        if not np.isfinite(self.values).all():
            raise ValueError("distance matrix contains non-finite entries")


@dataclass(frozen=True)
class FusionConfig:
    lam: float = DEFAULT_LAMBDA
    sign: str = "paper"  # "paper" subtracts resolution similarity, "inverted" adds

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.sign not in SIGNS:
            raise ValueError(f"sign must be one of {SIGNS}")


def l2_normalize(vectors: np.ndarray) -> np.ndarray:
    vectors = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(vectors, axis=-1, keepdims=True)
    if (norms == 0).any():
        raise ValueError("cannot normalize a zero vector")
    return vectors / norms


def resolution_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two resolution embeddings, in [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"need two vectors of equal length, got {a.shape} and {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine is undefined for a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def cosine_similarity_matrix(query: np.ndarray, gallery: np.ndarray,
                             query_ids: list[str], gallery_ids: list[str]) -> DistanceMatrix:
    """Pairwise cosine similarities; the resolution matrix of a protocol."""
    q = l2_normalize(query)
    g = l2_normalize(gallery)
    if q.shape[1] != g.shape[1]:
        raise ValueError(f"embedding dims differ: {q.shape[1]} vs {g.shape[1]}")
    values = np.clip(q @ g.T, -1.0, 1.0)
    return DistanceMatrix(values=values, role="D_r", query_ids=query_ids, gallery_ids=gallery_ids)


def feature_distance_matrix(query: np.ndarray, gallery: np.ndarray,
                            query_ids: list[str], gallery_ids: list[str]) -> DistanceMatrix:
    """Euclidean distances between L2-normalized identity embeddings."""
    q = l2_normalize(query)
    g = l2_normalize(gallery)
    if q.shape[1] != g.shape[1]:
        raise ValueError(f"embedding dims differ: {q.shape[1]} vs {g.shape[1]}")
    diff = q[:, None, :] - g[None, :, :]
    values = np.linalg.norm(diff, axis=-1)
    return DistanceMatrix(values=values, role="D_f", query_ids=query_ids, gallery_ids=gallery_ids)


def fuse(d_f: DistanceMatrix, d_r: DistanceMatrix, config: FusionConfig = FusionConfig()) -> DistanceMatrix:
    """Fused matrix ``D_f -/+ lambda * D_r`` (entrywise)."""
    if d_f.values.shape != d_r.values.shape:
        raise ValueError(f"shape mismatch: {d_f.values.shape} vs {d_r.values.shape}")
    if d_f.query_ids != d_r.query_ids or d_f.gallery_ids != d_r.gallery_ids:
        raise ValueError("query/gallery id orderings differ between the two matrices")
    sign = -1.0 if config.sign == "paper" else 1.0
    values = d_f.values + sign * config.lam * d_r.values
    return DistanceMatrix(values=values, role="fused",
                          query_ids=d_f.query_ids, gallery_ids=d_f.gallery_ids)


# ---------------------------------------------------------------------------
# persistence: JSON header line + row-major little-endian float32 blob

_DM_FORMAT = "rfdreid-distance-matrix"
_DM_VERSION = 1


def save_distance_matrix(dm: DistanceMatrix, path, lam: float | None = None) -> None:
    blob = np.ascontiguousarray(dm.values, dtype="<f4").tobytes()
    header = {
        "format": _DM_FORMAT,
        "version": _DM_VERSION,
        "role": dm.role,
        "lambda": lam,
        "query_ids": dm.query_ids,
        "gallery_ids": dm.gallery_ids,
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        f.write(blob)


def load_distance_matrix(path) -> tuple[DistanceMatrix, dict]:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        blob = f.read()
    if header.get("format") != _DM_FORMAT or header.get("version") != _DM_VERSION:
        raise ValueError(f"{path}: not a distance-matrix file")
    q, g = len(header["query_ids"]), len(header["gallery_ids"])
    if len(blob) != q * g * 4:
        raise ValueError(f"{path}: blob is {len(blob)} bytes, expected {q * g * 4}")
    values = np.frombuffer(blob, dtype="<f4").reshape(q, g).astype(np.float64)
    dm = DistanceMatrix(values=values, role=header["role"],
                        query_ids=header["query_ids"], gallery_ids=header["gallery_ids"])
    return dm, header
