"""Multi-branch classification and batch-hard triplet losses, plus the
identity-balanced batch sampler both of them assume.

The classification loss sums softmax cross entropy over every head. The
triplet loss works per branch: within a batch of P labels x K samples each,
every sample anchors one triplet built from its farthest same-label and
nearest different-label neighbours; the hinge ``max(d_pos - d_neg + margin, 0)``
is averaged over anchors and summed over branches, so its magnitude does not
depend on batch size.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

DEFAULT_MARGIN = 0.3


def id_loss(class_logits: list[torch.Tensor] | torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Sum of per-head cross entropies, -log p_head(target)."""
    if isinstance(class_logits, torch.Tensor):
        class_logits = [class_logits]
    if not class_logits:
        raise ValueError("need at least one classification head")
    targets = targets.long()
    for logits in class_logits:
        if targets.min() < 0 or targets.max() >= logits.shape[-1]:
            raise ValueError(
                f"target outside [0, {logits.shape[-1]}) for a head of that width"
            )
    total = class_logits[0].new_zeros(())
    for logits in class_logits:
        total = total + F.cross_entropy(logits, targets)
    return total


def pairwise_distances(embeddings: torch.Tensor) -> torch.Tensor:
    """Euclidean distance matrix between rows, computed via differences
    (not the dot-product trick) to stay accurate near zero."""
    diff = embeddings.unsqueeze(1) - embeddings.unsqueeze(0)
    return diff.norm(dim=-1)


def _validate_batch_labels(labels: torch.Tensor) -> None:
    uniques, counts = labels.unique(return_counts=True)
    if len(uniques) < 2:
        raise ValueError("a triplet batch needs at least 2 distinct labels for negatives")
    if (counts < 2).any():
        raise ValueError("every label in a triplet batch needs at least 2 samples")


def batch_hard_triplet(embeddings: list[torch.Tensor] | torch.Tensor, labels: torch.Tensor,
                       margin: float = DEFAULT_MARGIN) -> torch.Tensor:
    """Hard-mined triplet loss summed over branches.

    Per anchor, the positive is the farthest same-label sample (self
    excluded) and the negative the nearest other-label sample; ties resolve
    to the lowest index.
    """
    if margin < 0:
        raise ValueError("margin must be >= 0")
    if isinstance(embeddings, torch.Tensor):
        embeddings = [embeddings]
    labels = labels.long()
    _validate_batch_labels(labels)
    same = labels.unsqueeze(0) == labels.unsqueeze(1)
    eye = torch.eye(len(labels), dtype=torch.bool, device=labels.device)
    pos_mask = same & ~eye
    neg_mask = ~same
    total = embeddings[0].new_zeros(())
    for emb in embeddings:
        if emb.shape[0] != len(labels):
            raise ValueError("embeddings and labels disagree on batch size")
        dist = pairwise_distances(emb)
        d_pos = dist.masked_fill(~pos_mask, float("-inf")).max(dim=1).values
        d_neg = dist.masked_fill(~neg_mask, float("inf")).min(dim=1).values
        total = total + F.relu(d_pos - d_neg + margin).mean()
    return total


class PKSampler:
    """Streams P-identity x K-image batches from a label list.

    Identities are drawn without replacement per batch; an identity with
    fewer than K images is padded by resampling its own images with
    replacement. One seeded generator drives the whole run.
    """

    def __init__(self, labels: list[int], p: int, k: int, seed: int = 0):
        if p < 2:
            raise ValueError("need P >= 2 identities per batch for a metric loss")
        if k < 2:
            raise ValueError("need K >= 2 images per identity for positives")
        self.index_by_label: dict[int, list[int]] = {}
        for idx, label in enumerate(labels):
            self.index_by_label.setdefault(int(label), []).append(idx)
        if len(self.index_by_label) < p:
            raise ValueError(
                f"only {len(self.index_by_label)} labels available, batch needs {p}"
            )
        self.p, self.k = p, k
        self.labels = sorted(self.index_by_label)
        self.rng = np.random.default_rng(seed)

    def next_batch(self) -> list[int]:
        chosen = self.rng.choice(len(self.labels), size=self.p, replace=False)
        batch: list[int] = []
        for label_idx in chosen:
            pool = self.index_by_label[self.labels[int(label_idx)]]
            if len(pool) >= self.k:
                picks = self.rng.choice(len(pool), size=self.k, replace=False)
            else:
                picks = self.rng.choice(len(pool), size=self.k, replace=True)
            batch.extend(pool[int(i)] for i in picks)
        return batch


def sample_pk(labels: list[int], p: int, k: int, rng_seed: int = 0) -> list[int]:
    """One P x K batch of indices into ``labels``; deterministic per seed."""
    return PKSampler(labels, p, k, seed=rng_seed).next_batch()
