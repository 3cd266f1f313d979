"""Multi-resolution dataset construction.

Builds identity-labeled image manifests, degrades images to synthesize
low-resolution copies, assigns true or pseudo resolution labels, and cuts
train/query/gallery splits. All operations are pure functions over record
lists; randomness is derived per image from ``(seed, image_id)`` so results
do not depend on iteration order.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .resample import INTERPOLATIONS, degrade

HR_LABEL = 0
HR_SCALE = 1


@dataclass(frozen=True)
class ImageRecord:
    """One image with its identity, camera and resolution bookkeeping."""

    image_id: str
    identity: int
    camera: int
    width: int
    height: int
    pixel_count: int  # width * height of the stored original, not the net input
    resolution_label: int
    degradation_scale: int  # 1 = untouched original
    path: str

    def validate(self, resolution_class_count: int) -> None:
        if self.identity < 0 or self.camera < 0:
            raise ValueError(f"{self.image_id}: identity and camera must be non-negative")
        if self.pixel_count != self.width * self.height:
            raise ValueError(f"{self.image_id}: pixel_count != width*height")
        if not 0 <= self.resolution_label < resolution_class_count:
            raise ValueError(
                f"{self.image_id}: resolution_label {self.resolution_label} outside "
                f"[0, {resolution_class_count})"
            )
        if self.degradation_scale < 1:
            raise ValueError(f"{self.image_id}: degradation_scale must be >= 1")


@dataclass
class DatasetManifest:
    records: list[ImageRecord]
    resolution_class_count: int
    identity_count: int
    provenance: str  # "synthetic" | "real"
    interpolation: str  # "bilinear" | "bicubic"

    def __post_init__(self):
        if self.provenance not in ("synthetic", "real"):
            raise ValueError(f"provenance must be 'synthetic' or 'real', got {self.provenance!r}")
        if self.interpolation not in INTERPOLATIONS:
            raise ValueError(f"unknown interpolation {self.interpolation!r}")

    def validate(self) -> None:
        ids = set()
        for r in self.records:
            r.validate(self.resolution_class_count)
            if r.image_id in ids:
                raise ValueError(f"duplicate image_id {r.image_id!r}")
            ids.add(r.image_id)
        if self.identity_count != len({r.identity for r in self.records}):
            raise ValueError("identity_count does not match the records")

    def identities(self) -> list[int]:
        return sorted({r.identity for r in self.records})

    def save(self, path: str | Path) -> None:
        """Write the manifest as JSON; image paths under the manifest's
        directory are stored relative to it so output trees are relocatable."""
        path = Path(path)
        base = path.parent.resolve()
        records = []
        for r in self.records:
            rec = dataclasses.asdict(r)
            p = Path(r.path)
            if p.is_absolute():
                try:
                    rec["path"] = p.resolve().relative_to(base).as_posix()
                except ValueError:
                    rec["path"] = p.as_posix()
            else:
                rec["path"] = p.as_posix()
            records.append(rec)
        doc = {
            "records": records,
            "resolution_class_count": self.resolution_class_count,
            "identity_count": self.identity_count,
            "provenance": self.provenance,
            "interpolation": self.interpolation,
        }
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        path = Path(path)
        doc = json.loads(path.read_text())
        base = path.parent
        records = []
        for rec in doc["records"]:
            p = Path(rec["path"])
            if not p.is_absolute():
                p = base / p
            records.append(ImageRecord(**{**rec, "path": str(p)}))
        return cls(
            records=records,
            resolution_class_count=doc["resolution_class_count"],
            identity_count=doc["identity_count"],
            provenance=doc["provenance"],
            interpolation=doc["interpolation"],
        )


def _image_rng(seed: int, image_id: str) -> np.random.Generator:
    """Per-image generator keyed by a stable hash of the image id, so
    serial and parallel synthesis agree."""
    digest = hashlib.sha256(image_id.encode("utf-8")).digest()
    return np.random.default_rng([seed, int.from_bytes(digest[:8], "little")])


def load_image(path: str | Path) -> np.ndarray:
    """Load an image as float64 RGB in [0, 1], shape (H, W, 3)."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_image(array: np.ndarray, path: str | Path) -> None:
    """Save a float [0, 1] RGB array as PNG."""
    arr = np.clip(np.asarray(array) * 255.0, 0, 255)
    Image.fromarray(np.rint(arr).astype(np.uint8), mode="RGB").save(path, format="PNG")


def load_inputs(records: list[ImageRecord], input_hw: tuple[int, int]) -> np.ndarray:
    """Load and resize record images to network-input size.

    Returns (N, H, W, 3) float32 in [0, 1], resized with the package's
    bilinear kernel so the preprocessing is identical in training and
    evaluation.
    """
    from .resample import resize

    batch = np.empty((len(records), *input_hw, 3), dtype=np.float32)
    for i, record in enumerate(records):
        batch[i] = resize(load_image(record.path), input_hw, "bilinear")
    return batch


# ---------------------------------------------------------------------------
# corpus loading


_NAME_RE = re.compile(r"^(\d+)_(\d+)_(\d+)$")
_IMAGE_EXTS = {".png", ".jpg", ".jpeg", ".bmp", ".webp"}


def load_corpus_dir(corpus_dir: str | Path, interpolation: str = "bicubic") -> DatasetManifest:
    """Index a directory of images named ``<identity>_<camera>_<seq>.<ext>``."""
    corpus_dir = Path(corpus_dir)
    records = []
    for p in sorted(corpus_dir.iterdir()):
        if p.suffix.lower() not in _IMAGE_EXTS:
            continue
        m = _NAME_RE.match(p.stem)
        if m is None:
            raise ValueError(f"{p.name!r} does not follow <identity>_<camera>_<seq>.<ext>")
        identity, camera, _seq = (int(g) for g in m.groups())
        with Image.open(p) as im:
            width, height = im.size
        records.append(
            ImageRecord(
                image_id=p.stem,
                identity=identity,
                camera=camera,
                width=width,
                height=height,
                pixel_count=width * height,
                resolution_label=HR_LABEL,
                degradation_scale=HR_SCALE,
                path=str(p),
            )
        )
    if not records:
        raise ValueError(f"no images found in {corpus_dir}")
    return DatasetManifest(
        records=records,
        resolution_class_count=1,
        identity_count=len({r.identity for r in records}),
        provenance="synthetic",
        interpolation=interpolation,
    )


def load_corpus_csv(csv_path: str | Path, interpolation: str = "bicubic",
                    provenance: str = "real") -> DatasetManifest:
    """Index a corpus from a CSV with header
    ``image_id,identity,camera,width,height,path``."""
    import csv as _csv

    csv_path = Path(csv_path)
    base = csv_path.parent
    records = []
    with open(csv_path, newline="") as f:
        reader = _csv.DictReader(f)
        required = {"image_id", "identity", "camera", "width", "height", "path"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"CSV must have columns {sorted(required)}")
        for row in reader:
            p = Path(row["path"])
            width, height = int(row["width"]), int(row["height"])
            records.append(
                ImageRecord(
                    image_id=row["image_id"],
                    identity=int(row["identity"]),
                    camera=int(row["camera"]),
                    width=width,
                    height=height,
                    pixel_count=width * height,
                    resolution_label=HR_LABEL,
                    degradation_scale=HR_SCALE,
                    path=str(p if p.is_absolute() else base / p),
                )
            )
    if not records:
        raise ValueError(f"no rows in {csv_path}")
    return DatasetManifest(
        records=records,
        resolution_class_count=1,
        identity_count=len({r.identity for r in records}),
        provenance=provenance,
        interpolation=interpolation,
    )


# ---------------------------------------------------------------------------
# degradation over manifests


def _scale_labels(scales: set[int] | list[int]) -> dict[int, int]:
    scales = sorted(set(int(s) for s in scales))
    if not scales:
        raise ValueError("empty scale set")
    if any(s < 2 for s in scales):
        raise ValueError(f"degradation scales must be >= 2, got {scales}")
    return {s: i + 1 for i, s in enumerate(scales)}  # HR keeps label 0


def _degraded_record(record: ImageRecord, scale: int, label: int,
                     interpolation: str, out_dir: Path) -> ImageRecord:
    image = load_image(record.path)
    low = degrade(image, scale, interpolation)
    out_path = out_dir / f"{record.image_id}_x{scale}.png"
    save_image(low, out_path)
    return dataclasses.replace(
        record,
        image_id=f"{record.image_id}_x{scale}",
        resolution_label=label,
        degradation_scale=scale,
        path=str(out_path),
    )


def _require_hr(manifest: DatasetManifest) -> None:
    bad = [r.image_id for r in manifest.records if r.degradation_scale != HR_SCALE]
    if bad:
        raise ValueError(f"manifest must contain only originals; already degraded: {bad[:5]}")


def build_mlr(manifest_hr: DatasetManifest, scales: set[int] | list[int],
              interpolation: str, rng_seed: int, out_dir: str | Path) -> DatasetManifest:
    """Create a multi-resolution training manifest.

    Every original is kept (resolution label 0) and additionally degraded
    once with a per-image uniformly random scale, preserving its identity
    label. Degraded images are written under ``out_dir``.
    """
    _require_hr(manifest_hr)
    labels = _scale_labels(scales)
    choices = sorted(labels)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = list(manifest_hr.records)
    for record in manifest_hr.records:
        rng = _image_rng(rng_seed, record.image_id)
        scale = int(rng.choice(choices))
        records.append(_degraded_record(record, scale, labels[scale], interpolation, out_dir))
    return DatasetManifest(
        records=records,
        resolution_class_count=1 + len(choices),
        identity_count=manifest_hr.identity_count,
        provenance="synthetic",
        interpolation=interpolation,
    )


def degrade_all(manifest_hr: DatasetManifest, scales: set[int] | list[int],
                interpolation: str, rng_seed: int, out_dir: str | Path) -> DatasetManifest:
    """Replace every original with one degraded copy (random scale).

    Used for the query side of synthetic protocols, where each probe is a
    randomly downsampled image.
    """
    _require_hr(manifest_hr)
    labels = _scale_labels(scales)
    choices = sorted(labels)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for record in manifest_hr.records:
        rng = _image_rng(rng_seed, record.image_id)
        scale = int(rng.choice(choices))
        records.append(_degraded_record(record, scale, labels[scale], interpolation, out_dir))
    return DatasetManifest(
        records=records,
        resolution_class_count=1 + len(choices),
        identity_count=manifest_hr.identity_count,
        provenance="synthetic",
        interpolation=interpolation,
    )


def degrade_mixed(manifest_hr: DatasetManifest, scales: set[int] | list[int],
                  interpolation: str, rng_seed: int, out_dir: str | Path,
                  hr_prob: float = 0.5) -> DatasetManifest:
    """Keep each original with probability ``hr_prob``, otherwise replace it
    with a degraded copy at a uniformly random scale.

    Used for multi-resolution gallery sets of synthetic protocols.
    """
    _require_hr(manifest_hr)
    if not 0.0 <= hr_prob <= 1.0:
        raise ValueError("hr_prob must be in [0, 1]")
    labels = _scale_labels(scales)
    choices = sorted(labels)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for record in manifest_hr.records:
        rng = _image_rng(rng_seed, record.image_id)
        if rng.random() < hr_prob:
            records.append(record)
        else:
            scale = int(rng.choice(choices))
            records.append(_degraded_record(record, scale, labels[scale], interpolation, out_dir))
    return DatasetManifest(
        records=records,
        resolution_class_count=1 + len(choices),
        identity_count=manifest_hr.identity_count,
        provenance="synthetic",
        interpolation=interpolation,
    )


# ---------------------------------------------------------------------------
# resolution pseudo labels


@dataclass(frozen=True)
class BinningRule:
    """Frozen pixel-count binning. Fit on a training set, then applied to any
    record; out-of-range counts clamp into the nearest bin."""

    bin_count: int
    method: str  # "width" | "frequency"
    lo: int
    hi: int
    edges: tuple[float, ...] = field(default=())  # interior boundaries (frequency only)

    def label(self, pixel_count: int) -> int:
        if self.method == "width":
            span = self.hi - self.lo
            if span <= 0:
                return 0
            # integer form of floor((p - lo) / (span/bins + eps)); exact at
            # boundaries, where counts belong to the lower bin
            ordinal = (pixel_count - self.lo) * self.bin_count - 1
            return int(np.clip(ordinal // span if ordinal >= 0 else 0, 0, self.bin_count - 1))
        return int(np.searchsorted(np.asarray(self.edges), pixel_count, side="left"))

    def apply(self, records: list[ImageRecord]) -> list[ImageRecord]:
        return [dataclasses.replace(r, resolution_label=self.label(r.pixel_count)) for r in records]


def fit_resolution_bins(pixel_counts: list[int], bin_count: int = 5,
                        method: str = "width") -> BinningRule:
    if not pixel_counts:
        raise ValueError("empty record list")
    if bin_count < 1:
        raise ValueError("bin_count must be >= 1")
    if any(p <= 0 for p in pixel_counts):
        raise ValueError("all pixel counts must be positive")
    lo, hi = min(pixel_counts), max(pixel_counts)
    if method == "width":
        return BinningRule(bin_count=bin_count, method="width", lo=lo, hi=hi)
    if method == "frequency":
        qs = np.quantile(np.sort(pixel_counts), np.arange(1, bin_count) / bin_count)
        return BinningRule(bin_count=bin_count, method="frequency", lo=lo, hi=hi,
                           edges=tuple(float(q) for q in qs))
    raise ValueError(f"unknown binning method {method!r}")


def pseudo_label_resolutions(records: list[ImageRecord], bin_count: int = 5,
                             method: str = "width") -> list[ImageRecord]:
    """Assign resolution labels by binning total pixel counts.

    Labels depend only on pixel_count: equal-width intervals over the
    observed range (default), or equal-frequency quantiles. Labels are
    monotone in pixel_count and independent of record order.
    """
    rule = fit_resolution_bins([r.pixel_count for r in records], bin_count, method)
    return rule.apply(records)


# ---------------------------------------------------------------------------
# splits


@dataclass
class Split:
    train: DatasetManifest
    query: DatasetManifest
    gallery: DatasetManifest


def _subset(manifest: DatasetManifest, records: list[ImageRecord],
            resolution_class_count: int | None = None) -> DatasetManifest:
    return DatasetManifest(
        records=records,
        resolution_class_count=resolution_class_count or manifest.resolution_class_count,
        identity_count=len({r.identity for r in records}),
        provenance=manifest.provenance,
        interpolation=manifest.interpolation,
    )


def make_splits(manifest: DatasetManifest, split_count: int = 10, rng_seed: int = 0,
                train_identity_count: int | None = None,
                discard_single_camera: bool = True) -> list[Split]:
    """Cut identity-disjoint train/test partitions with disjoint
    query/gallery image sets.

    Identities seen by a single camera are discarded first (they can never
    have a cross-camera match). Per test identity, one image per camera is
    promoted to the query set whenever the remaining gallery still offers a
    cross-camera match for every query of that identity.
    """
    if split_count < 1:
        raise ValueError("split_count must be >= 1")
    by_identity: dict[int, list[ImageRecord]] = {}
    for r in manifest.records:
        by_identity.setdefault(r.identity, []).append(r)
    identities = sorted(by_identity)
    if discard_single_camera:
        identities = [i for i in identities if len({r.camera for r in by_identity[i]}) >= 2]
    if train_identity_count is None:
        train_identity_count = len(identities) // 2
    if train_identity_count < 1 or train_identity_count >= len(identities):
        raise ValueError(
            f"cannot partition {len(identities)} usable identities into "
            f"{train_identity_count} train + rest test"
        )

    splits = []
    for s in range(split_count):
        rng = np.random.default_rng([rng_seed, s])
        order = list(rng.permutation(identities))
        train_ids = set(order[:train_identity_count])
        test_ids = [i for i in order[train_identity_count:]]

        train_records = [r for i in sorted(train_ids) for r in by_identity[i]]
        query_records: list[ImageRecord] = []
        gallery_records: list[ImageRecord] = []
        for identity in sorted(test_ids):
            pool = list(by_identity[identity])
            cameras = sorted({r.camera for r in pool})
            chosen: list[ImageRecord] = []
            for camera in cameras:
                cam_pool = [r for r in pool if r.camera == camera]
                candidate = cam_pool[int(rng.integers(len(cam_pool)))]
                remaining = [r for r in pool if r is not candidate]
                # every query must keep a cross-camera match in the gallery
                ok = all(any(g.camera != q.camera for g in remaining)
                         for q in chosen + [candidate])
                if ok:
                    chosen.append(candidate)
                    pool = remaining
            query_records.extend(chosen)
            gallery_records.extend(pool)

        splits.append(Split(
            train=_subset(manifest, train_records),
            query=_subset(manifest, query_records),
            gallery=_subset(manifest, gallery_records),
        ))
    return splits


# ---------------------------------------------------------------------------
# toy corpus


def _hsv_to_rgb(h: float, s: float, v: float) -> np.ndarray:
    i = int(h * 6.0) % 6
    f = h * 6.0 - int(h * 6.0)
    p, q, t = v * (1 - s), v * (1 - f * s), v * (1 - (1 - f) * s)
    rgb = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]
    return np.array(rgb)


def _toy_person(rng: np.random.Generator, identity_style: dict, hw: tuple[int, int],
                camera: int) -> np.ndarray:
    h, w = hw
    img = np.full((h, w, 3), 0.35, dtype=np.float64)
    tint = np.zeros(3)
    tint[camera % 3] = 0.08
    img += tint
    img += rng.normal(0.0, 0.02, size=(h, w, 3))

    shift = int(round(rng.uniform(-0.1, 0.1) * w))
    build = identity_style["build"] * rng.uniform(0.92, 1.08)
    half = max(2, int(build * w / 2))
    c0, c1 = max(0, w // 2 + shift - half), min(w, w // 2 + shift + half)
    brightness = rng.uniform(0.85, 1.15)

    head_end = int(0.18 * h)
    torso_end = int(0.55 * h)
    legs_end = int(0.92 * h)
    img[0:head_end, c0:c1] = identity_style["skin"] * brightness
    img[head_end:torso_end, c0:c1] = identity_style["shirt"] * brightness
    img[torso_end:legs_end, c0:c1] = identity_style["pants"] * brightness
    img[legs_end:h, c0:c1] = 0.1

    # pixel-level texture is the resolution cue: a one-pixel checker plus
    # noise survives only in undegraded images
    yy, xx = np.indices((h, w))
    img += (((yy + xx) % 2)[..., None] - 0.5) * 0.08
    img += rng.normal(0.0, 0.06, size=(h, w, 3))
    return np.clip(img, 0.0, 1.0)


def make_toy_corpus(out_dir: str | Path, identities: int = 24, images_per_identity: int = 8,
                    cameras: int = 2, hw: tuple[int, int] = (128, 48), seed: int = 0,
                    size_jitter: float = 0.0) -> DatasetManifest:
    """Generate a small corpus of synthetic person crops.

    Identity appearance is a color scheme (shirt/pants/skin plus build), and
    each image varies pose proxies (shift, brightness, noise) and camera
    tint. ``size_jitter > 0`` varies stored image sizes, which gives the
    pseudo-labeling pipeline a realistic pixel-count spread.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    styles = []
    style_rng = np.random.default_rng(seed)
    for i in range(identities):
        styles.append({
            "shirt": _hsv_to_rgb(i / identities, 0.9, 0.9),
            "pants": _hsv_to_rgb((i * 0.37 + 0.5) % 1.0, 0.8, 0.65),
            "skin": np.array([0.85, 0.7, 0.55]) * style_rng.uniform(0.8, 1.1),
            "build": style_rng.uniform(0.45, 0.8),
        })
    records = []
    for i in range(identities):
        for j in range(images_per_identity):
            camera = j % cameras
            image_id = f"{i:04d}_{camera}_{j:04d}"
            rng = _image_rng(seed, image_id)
            h, w = hw
            if size_jitter > 0:
                f = rng.uniform(1.0 - size_jitter, 1.0 + size_jitter)
                h, w = max(16, int(round(h * f))), max(8, int(round(w * f)))
            img = _toy_person(rng, styles[i], (h, w), camera)
            path = out_dir / f"{image_id}.png"
            save_image(img, path)
            records.append(
                ImageRecord(
                    image_id=image_id,
                    identity=i,
                    camera=camera,
                    width=w,
                    height=h,
                    pixel_count=w * h,
                    resolution_label=HR_LABEL,
                    degradation_scale=HR_SCALE,
                    path=str(path),
                )
            )
    return DatasetManifest(
        records=records,
        resolution_class_count=1,
        identity_count=identities,
        provenance="synthetic",
        interpolation="bicubic",
    )
