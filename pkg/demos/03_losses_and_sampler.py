"""The loss pair on a hand-sized example you can check on paper.

Places two identities in the plane, mines the hardest positive/negative for
one anchor, and reconciles the library loss with an exhaustive enumeration.
Also shows the P x K batch layout both losses assume.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import torch

from rfdreid import batch_hard_triplet, id_loss, sample_pk

out = Path(__file__).parent / "output" / "03"
out.mkdir(parents=True, exist_ok=True)

# --- triplet loss geometry ---------------------------------------------------
emb = torch.tensor([[0.0, 0.0], [1.0, 0.4], [2.2, 0.0], [2.6, 1.0]])
labels = torch.tensor([0, 0, 1, 1])
margin = 0.5
loss = batch_hard_triplet(emb, labels, margin)

fig, ax = plt.subplots(figsize=(4.5, 4))
colors = ["tab:blue", "tab:orange"]
for identity in (0, 1):
    pts = emb[labels == identity]
    ax.scatter(pts[:, 0], pts[:, 1], c=colors[identity], label=f"identity {identity}", s=60)
anchor = emb[0]
hardest_pos = emb[1]   # farthest same-label
hardest_neg = emb[2]   # nearest other-label
ax.annotate("anchor", anchor, fontsize=8)
ax.plot(*zip(anchor, hardest_pos), "b--", lw=1, label="hardest positive")
ax.plot(*zip(anchor, hardest_neg), "r--", lw=1, label="hardest negative")
ax.legend(fontsize=7)
ax.set_title(f"batch-hard triplet loss = {loss.item():.4f} (margin {margin})")
fig.tight_layout()
fig.savefig(out / "triplet_geometry.png", dpi=130)
print(f"wrote {out / 'triplet_geometry.png'}")

# cross-check against brute force enumeration
total = 0.0
e, l = emb.numpy(), labels.numpy()
for a in range(4):
    d_pos = max(np.linalg.norm(e[a] - e[p]) for p in range(4) if p != a and l[p] == l[a])
    d_neg = min(np.linalg.norm(e[a] - e[n]) for n in range(4) if l[n] != l[a])
    total += max(d_pos - d_neg + margin, 0.0)
print(f"library {loss.item():.6f} vs exhaustive enumeration {total / 4:.6f}")

# --- summed cross entropy ------------------------------------------------------
logits = torch.tensor([[1.0, 2.0, 3.0]])
print(f"one head, logits (1,2,3), target class 2 -> {id_loss([logits], torch.tensor([2])).item():.4f}"
      "  (= ln(1 + e^-1 + e^-2) = 0.4076)")
uniform = [torch.zeros(1, 10) for _ in range(6)]
print(f"six uniform heads over 10 classes -> {id_loss(uniform, torch.tensor([0])).item():.4f}"
      f"  (= 6 ln 10 = {6 * np.log(10):.4f})")

# --- the P x K sampler ------------------------------------------------------
labels = [i // 6 for i in range(48)]  # 8 identities, 6 images each
batch = sample_pk(labels, p=8, k=4, rng_seed=0)
picked = [labels[i] for i in batch]
print(f"P=8, K=4 batch: {len(batch)} items, identities "
      f"{sorted(set(picked))}, each appearing {picked.count(picked[0])} times")
