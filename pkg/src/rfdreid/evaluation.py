"""Retrieval protocols and CMC scoring.

Two gallery regimes are supported. ``single_reso`` degrades every query with
a random scale and ranks it against untouched originals. ``multi_reso``
keeps the degraded queries but mixes resolutions into the gallery: synthetic
pools degrade each gallery image with probability one half, while real pools
keep one randomly chosen image per identity (single-shot gallery).

Scoring follows the standard cross-camera convention: gallery items sharing
both identity and camera with the query are removed before ranking, ties
break on gallery order, and rank-k hits are averaged over queries and then
over splits.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backbone import ReidBackbone, embed_images
from .data import DatasetManifest, ImageRecord, degrade_all, degrade_mixed, load_inputs
from .matching import DistanceMatrix, FusionConfig, cosine_similarity_matrix, feature_distance_matrix, fuse

logger = logging.getLogger(__name__)

MODES = ("single_reso", "multi_reso")


@dataclass
class EvalProtocol:
    mode: str
    query: list[ImageRecord]
    gallery: list[ImageRecord]
    split_seed: int
    camera_rule: bool = True  # drop same-identity same-camera gallery items

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        q_ids = {r.image_id for r in self.query}
        g_ids = {r.image_id for r in self.gallery}
        if q_ids & g_ids:
            raise ValueError(f"query and gallery share images: {sorted(q_ids & g_ids)[:5]}")

    def valid_match_exists(self, q: ImageRecord) -> bool:
        for g in self.gallery:
            if g.identity != q.identity:
                continue
            if self.camera_rule and g.camera == q.camera:
                continue
            return True
        return False


def build_protocol(query_pool: DatasetManifest, gallery_pool: DatasetManifest, mode: str,
                   seed: int, out_dir, scales=(2, 3, 4), interpolation: str | None = None,
                   hr_prob: float = 0.5, camera_rule: bool = True) -> EvalProtocol:
    """Materialize a protocol from HR (or real) query/gallery pools.

    Degraded copies are written under ``out_dir``. Queries that end up with
    no valid gallery match are excluded and logged.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    interpolation = interpolation or query_pool.interpolation
    out_dir = Path(out_dir)
    real = query_pool.provenance == "real"

    if real and mode == "multi_reso":
        # real images already span resolutions; keep queries untouched
        query_records = list(query_pool.records)
        rng = np.random.default_rng([seed, 1])
        by_identity: dict[int, list[ImageRecord]] = {}
        for r in gallery_pool.records:
            by_identity.setdefault(r.identity, []).append(r)
        gallery_records = [
            pool[int(rng.integers(len(pool)))]
            for _, pool in sorted(by_identity.items())
        ]
    else:
        queries = degrade_all(query_pool, scales, interpolation, seed, out_dir / "queries")
        query_records = list(queries.records)
        if mode == "single_reso":
            gallery_records = list(gallery_pool.records)
        else:
            mixed = degrade_mixed(gallery_pool, scales, interpolation, seed,
                                  out_dir / "gallery", hr_prob=hr_prob)
            gallery_records = list(mixed.records)

    protocol = EvalProtocol(mode=mode, query=query_records, gallery=gallery_records,
                            split_seed=seed, camera_rule=camera_rule)
    kept = [q for q in protocol.query if protocol.valid_match_exists(q)]
    dropped = len(protocol.query) - len(kept)
    if dropped:
        logger.warning("%s protocol: excluded %d queries with no cross-camera match",
                       mode, dropped)
        protocol.query = kept
    if not protocol.query:
        raise ValueError("protocol has no usable queries")
    return protocol


@dataclass
class CMCResult:
    rank_hits: np.ndarray  # fraction of queries matched within top k, k = 1..K
    query_count: int

    def rank(self, k: int) -> float:
        if k < 1:
            raise ValueError("rank must be >= 1")
        return float(self.rank_hits[min(k, len(self.rank_hits)) - 1])

    @property
    def r1(self) -> float:
        return self.rank(1)

    @property
    def r5(self) -> float:
        return self.rank(5)

    @property
    def r10(self) -> float:
        return self.rank(10)


def cmc(distance: DistanceMatrix, protocol: EvalProtocol, max_rank: int = 10) -> CMCResult:
    """Cumulative matching characteristic over the protocol's queries."""
    if distance.query_ids != [r.image_id for r in protocol.query]:
        raise ValueError("distance matrix rows do not match protocol query order")
    if distance.gallery_ids != [r.image_id for r in protocol.gallery]:
        raise ValueError("distance matrix columns do not match protocol gallery order")
    g_identity = np.array([r.identity for r in protocol.gallery])
    g_camera = np.array([r.camera for r in protocol.gallery])
    hits = np.zeros(max_rank, dtype=np.float64)
    for qi, q in enumerate(protocol.query):
        order = np.argsort(distance.values[qi], kind="stable")  # ties keep gallery order
        if protocol.camera_rule:
            keep = ~((g_identity[order] == q.identity) & (g_camera[order] == q.camera))
            order = order[keep]
        match_positions = np.nonzero(g_identity[order] == q.identity)[0]
        if len(match_positions) == 0:
            raise ValueError(
                f"query {q.image_id} has no valid gallery match; protocol is malformed"
            )
        first = int(match_positions[0])
        if first < max_rank:
            hits[first:] += 1.0
        # a match beyond max_rank contributes to no recorded rank
    return CMCResult(rank_hits=hits / len(protocol.query), query_count=len(protocol.query))


def average_cmc(results: list[CMCResult]) -> CMCResult:
    if not results:
        raise ValueError("nothing to average")
    length = max(len(r.rank_hits) for r in results)
    padded = [np.pad(r.rank_hits, (0, length - len(r.rank_hits)), mode="edge")
              for r in results]
    return CMCResult(rank_hits=np.mean(padded, axis=0),
                     query_count=sum(r.query_count for r in results))


# ---------------------------------------------------------------------------
# end-to-end scoring of trained baselines


def extract_embeddings(model: ReidBackbone, records: list[ImageRecord],
                       batch_size: int = 32) -> np.ndarray:
    inputs = load_inputs(records, tuple(model.cfg.input_hw))
    return embed_images(model, inputs, batch_size=batch_size)


def score_protocol(protocol: EvalProtocol, bf_query: np.ndarray, bf_gallery: np.ndarray,
                   br_query: np.ndarray | None = None, br_gallery: np.ndarray | None = None,
                   fusion: FusionConfig = FusionConfig(), max_rank: int = 10,
                   ) -> dict[str, CMCResult]:
    """CMC for the identity baseline alone and, when resolution embeddings
    are given, for the fused distance."""
    q_ids = [r.image_id for r in protocol.query]
    g_ids = [r.image_id for r in protocol.gallery]
    d_f = feature_distance_matrix(bf_query, bf_gallery, q_ids, g_ids)
    out = {"B-F": cmc(d_f, protocol, max_rank)}
    if br_query is not None:
        if br_gallery is None:
            raise ValueError("resolution embeddings must cover both query and gallery")
        d_r = cosine_similarity_matrix(br_query, br_gallery, q_ids, g_ids)
        fused = fuse(d_f, d_r, fusion)
        out["B-F+RFD"] = cmc(fused, protocol, max_rank)
    return out


def evaluate_run(bf_model: ReidBackbone, br_model: ReidBackbone | None,
                 protocols: list[EvalProtocol], fusion: FusionConfig = FusionConfig(),
                 max_rank: int = 10, batch_size: int = 32) -> dict:
    """Score every split protocol and average; returns a report dict with
    one row per (protocol, method, split) plus aggregated means."""
    rows = []
    per_method: dict[tuple[str, str], list[CMCResult]] = {}
    for split_index, protocol in enumerate(protocols):
        bf_q = extract_embeddings(bf_model, protocol.query, batch_size)
        bf_g = extract_embeddings(bf_model, protocol.gallery, batch_size)
        br_q = br_g = None
        if br_model is not None:
            br_q = extract_embeddings(br_model, protocol.query, batch_size)
            br_g = extract_embeddings(br_model, protocol.gallery, batch_size)
        scores = score_protocol(protocol, bf_q, bf_g, br_q, br_g, fusion, max_rank)
        for method, result in scores.items():
            label = method if fusion.sign == "paper" or method == "B-F" else f"{method}[inverted]"
            rows.append({
                "protocol": protocol.mode,
                "method": label,
                "lambda": fusion.lam if method != "B-F" else 0.0,
                "split": split_index,
                "R1": result.r1, "R5": result.r5, "R10": result.r10,
            })
            per_method.setdefault((protocol.mode, label), []).append(result)
    aggregated = []
    for (mode, method), results in sorted(per_method.items()):
        mean = average_cmc(results)
        aggregated.append({
            "protocol": mode, "method": method, "splits": len(results),
            "R1": mean.r1, "R5": mean.r5, "R10": mean.r10,
        })
    return {"rows": rows, "aggregated": aggregated}


def write_report(report: dict, out_dir) -> tuple[Path, Path]:
    """Persist per-split rows as CSV and aggregated means as JSON."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "report.csv"
    with open(csv_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["protocol", "method", "lambda", "split",
                                               "R1", "R5", "R10"])
        writer.writeheader()
        for row in report["rows"]:
            writer.writerow(row)
    json_path = out_dir / "report.json"
    json_path.write_text(json.dumps(report["aggregated"], indent=2, sort_keys=True) + "\n")
    return csv_path, json_path
