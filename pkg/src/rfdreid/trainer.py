"""Training loops for the identity baseline (B-F) and the resolution
baseline (B-R).

Both baselines share one recipe: Adam (first-moment 0.9), weight decay,
summed multi-head cross entropy plus batch-hard triplet loss, a step
learning-rate drop (divide by 10 at half the iterations), random horizontal
flips and random erasing. They differ only in the batch layout and the
label: B-F trains on person identities with P x K batches, B-R trains on
resolution labels with (classes x 16) batches. Runs are bit-reproducible
given the seed when data loading is single-worker (the default and only
mode here).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .backbone import BackboneConfig, ReidBackbone, build_model
from .data import DatasetManifest, load_inputs
from .losses import DEFAULT_MARGIN, PKSampler, batch_hard_triplet, id_loss


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-4
    weight_decay: float = 5e-4
    adam_betas: tuple[float, float] = (0.9, 0.999)
    iterations_per_identity: int = 500  # total = this x identity count
    total_iterations: int | None = None  # explicit override for toy runs
    margin: float = DEFAULT_MARGIN
    p_identities: int = 8
    k_images: int = 4
    br_images_per_class: int = 16
    flip_prob: float = 0.5
    erase_prob: float = 0.5
    erase_area: tuple[float, float] = (0.02, 0.4)
    erase_aspect: tuple[float, float] = (0.3, 3.3)

    def resolve_iterations(self, identity_count: int) -> int:
        if self.total_iterations is not None:
            if self.total_iterations < 0:
                raise ValueError("total_iterations must be >= 0")
            return self.total_iterations
        return self.iterations_per_identity * identity_count

    def lr_at(self, iteration: int, total: int) -> float:
        return self.learning_rate if iteration < math.ceil(total / 2) else self.learning_rate / 10.0


@dataclass
class TrainReport:
    seed: int
    source: str
    rows: list[dict] = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=["iteration", "id_loss", "triplet_loss",
                                                   "total", "lr"])
            writer.writeheader()
            for row in self.rows:
                writer.writerow(row)


def _augment(x: torch.Tensor, cfg: TrainConfig, gen: torch.Generator) -> torch.Tensor:
    """Random horizontal flip and random erasing, in [0, 1] pixel space.

    Erased patches are filled with the per-image channel mean: a flat fill
    keeps the erasure from injecting high-frequency texture, which would
    leak a fake sharpness cue into resolution-label training.
    """
    n, _, h, w = x.shape
    flip = torch.rand(n, generator=gen) < cfg.flip_prob
    if flip.any():
        x[flip] = x[flip].flip(-1)
    erase = torch.rand(n, generator=gen) < cfg.erase_prob
    for i in torch.nonzero(erase).flatten().tolist():
        area = float(torch.empty(1).uniform_(*cfg.erase_area, generator=gen)) * h * w
        log_aspect = (math.log(cfg.erase_aspect[0]), math.log(cfg.erase_aspect[1]))
        aspect = math.exp(float(torch.empty(1).uniform_(*log_aspect, generator=gen)))
        eh = min(h, max(1, int(round(math.sqrt(area * aspect)))))
        ew = min(w, max(1, int(round(math.sqrt(area / aspect)))))
        top = int(torch.randint(0, h - eh + 1, (1,), generator=gen))
        left = int(torch.randint(0, w - ew + 1, (1,), generator=gen))
        x[i, :, top:top + eh, left:left + ew] = x[i].mean(dim=(1, 2), keepdim=True)
    return x


def _train(records, labels: list[int], class_count: int, backbone_cfg: BackboneConfig,
           cfg: TrainConfig, seed: int, source: str, p: int, k: int,
           identity_count: int) -> tuple[ReidBackbone, TrainReport]:
    torch.use_deterministic_algorithms(True)
    model = build_model(backbone_cfg, source=source, seed=seed)
    torch.manual_seed(seed)  # dropout stream
    aug_gen = torch.Generator().manual_seed(seed + 1)
    sampler = PKSampler(labels, p, k, seed=seed + 2)
    images = load_inputs(records, tuple(backbone_cfg.input_hw))
    labels_arr = np.asarray(labels, dtype=np.int64)

    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate,
                                 betas=cfg.adam_betas, weight_decay=cfg.weight_decay)
    total = cfg.resolve_iterations(identity_count)
    report = TrainReport(seed=seed, source=source)
    model.train()
    for t in range(total):
        lr = cfg.lr_at(t, total)
        for group in optimizer.param_groups:
            group["lr"] = lr
        idx = sampler.next_batch()
        x = torch.from_numpy(images[idx].transpose(0, 3, 1, 2)).contiguous()
        x = _augment(x, cfg, aug_gen)
        y = torch.from_numpy(labels_arr[idx])
        out = model(x)
        loss_id = id_loss(out.class_logits, y)
        loss_tri = batch_hard_triplet(out.embeddings, y, cfg.margin)
        loss = loss_id + loss_tri
        if not torch.isfinite(loss):
            raise RuntimeError(f"non-finite loss at iteration {t + 1}")
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        report.rows.append({
            "iteration": t + 1,
            "id_loss": loss_id.item(),
            "triplet_loss": loss_tri.item(),
            "total": loss.item(),
            "lr": lr,
        })
    model.eval()
    return model, report


def _check_min_images(manifest: DatasetManifest) -> None:
    counts: dict[int, int] = {}
    for r in manifest.records:
        counts[r.identity] = counts.get(r.identity, 0) + 1
    starved = sorted(i for i, c in counts.items() if c < 2)
    if starved:
        raise ValueError(f"training needs >= 2 images per identity; short: {starved[:5]}")


def train_bf(manifest: DatasetManifest, backbone_cfg: BackboneConfig | None = None,
             cfg: TrainConfig = TrainConfig(), seed: int = 0,
             **backbone_kwargs) -> tuple[ReidBackbone, TrainReport]:
    """Train the identity baseline on all resolutions of the manifest."""
    _check_min_images(manifest)
    identities = manifest.identities()
    index = {identity: i for i, identity in enumerate(identities)}
    labels = [index[r.identity] for r in manifest.records]
    if backbone_cfg is None:
        backbone_cfg = BackboneConfig(num_classes=len(identities), **backbone_kwargs)
    elif backbone_cfg.num_classes != len(identities):
        raise ValueError(
            f"backbone declares {backbone_cfg.num_classes} classes, manifest has "
            f"{len(identities)} identities"
        )
    return _train(manifest.records, labels, len(identities), backbone_cfg, cfg, seed,
                  source="B-F", p=cfg.p_identities, k=cfg.k_images,
                  identity_count=manifest.identity_count)


def train_br(manifest: DatasetManifest, backbone_cfg: BackboneConfig | None = None,
             cfg: TrainConfig = TrainConfig(), seed: int = 0,
             **backbone_kwargs) -> tuple[ReidBackbone, TrainReport]:
    """Train the resolution baseline; classes are the manifest's resolution
    labels and each batch holds (present classes) x 16 images."""
    r = manifest.resolution_class_count
    if r < 2:
        raise ValueError(f"resolution training needs >= 2 classes, manifest has {r}")
    labels = [rec.resolution_label for rec in manifest.records]
    present = sorted(set(labels))
    if len(present) < 2:
        raise ValueError("manifest contains a single resolution label; nothing to distinguish")
    if backbone_cfg is None:
        backbone_cfg = BackboneConfig(num_classes=r, **backbone_kwargs)
    elif backbone_cfg.num_classes != r:
        raise ValueError(
            f"backbone declares {backbone_cfg.num_classes} classes, manifest has {r} resolutions"
        )
    return _train(manifest.records, labels, r, backbone_cfg, cfg, seed,
                  source="B-R", p=len(present), k=cfg.br_images_per_class,
                  identity_count=manifest.identity_count)


def classification_accuracy(model: ReidBackbone, manifest: DatasetManifest,
                            labels: list[int], batch_size: int = 32) -> float:
    """Top-1 accuracy of the summed classification heads over the manifest."""
    if len(labels) != len(manifest.records):
        raise ValueError("labels must align with manifest records")
    inputs = load_inputs(manifest.records, tuple(model.cfg.input_hw))
    model.eval()
    correct = 0
    with torch.no_grad():
        for start in range(0, len(inputs), batch_size):
            chunk = inputs[start:start + batch_size].transpose(0, 3, 1, 2)
            out = model(torch.from_numpy(np.ascontiguousarray(chunk)))
            logits = torch.stack(out.class_logits).sum(dim=0)
            pred = logits.argmax(dim=1).numpy()
            correct += int((pred == np.asarray(labels[start:start + batch_size])).sum())
    return correct / len(labels)
