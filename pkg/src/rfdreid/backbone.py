"""Compact convolutional re-id backbone with channel attention.

The network is a four-stage residual trunk whose final stage is cloned three
times into one global and two part-based branches. A channel-attention gate
(squeeze by global average pooling, excite through a bottleneck pair of 1x1
projections and a sigmoid) follows every stage. The same architecture is
instantiated twice in a pipeline: once for identity embeddings and once for
resolution embeddings; the two models never share weights.

Inputs are RGB tensors in [0, 1] of the configured size; normalization to
[-1, 1] happens inside ``forward``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

SOURCES = ("B-F", "B-R")


@dataclass(frozen=True)
class BackboneConfig:
    num_classes: int
    stage_widths: tuple[int, int, int, int] = (16, 32, 64, 128)
    input_hw: tuple[int, int] = (384, 128)
    embed_dim: int = 128  # per-branch embedding width
    reduction_ratio: int = 16
    last_stride: int = 1  # stride of the cloned final stage; 2 halves the map
    parts: tuple[int, ...] = (2, 3)
    dropout: float = 0.5

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if self.last_stride not in (1, 2):
            raise ValueError("last_stride must be 1 or 2")
        for w in self.stage_widths:
            if w % self.reduction_ratio != 0:
                raise ValueError(
                    f"reduction_ratio {self.reduction_ratio} must divide stage width {w}"
                )

    @property
    def embedding_dim(self) -> int:
        return self.embed_dim * (1 + len(self.parts))


@dataclass
class BranchOutputs:
    """Per-branch embeddings (one per branch) and classification logits
    (one per head: global + every local part)."""

    embeddings: list[torch.Tensor]
    class_logits: list[torch.Tensor]

    @property
    def branch_count_tri(self) -> int:
        return len(self.embeddings)

    @property
    def branch_count_id(self) -> int:
        return len(self.class_logits)


def global_average_pool(u: torch.Tensor) -> torch.Tensor:
    """Squeeze (..., C, H, W) to per-channel means (..., C)."""
    if u.ndim < 3:
        raise ValueError(f"expected (..., C, H, W), got shape {tuple(u.shape)}")
    if u.shape[-1] < 1 or u.shape[-2] < 1:
        raise ValueError("empty spatial extent")
    return u.mean(dim=(-2, -1))


def channel_gate(z: torch.Tensor, w_reduce: torch.Tensor, w_expand: torch.Tensor) -> torch.Tensor:
    """Excitation gate ``sigmoid(w_expand @ relu(w_reduce @ z))`` in (0, 1)."""
    c = z.shape[-1]
    if w_reduce.ndim != 2 or w_expand.ndim != 2:
        raise ValueError("projection weights must be 2-D")
    if w_reduce.shape[1] != c or w_expand.shape[0] != c or w_expand.shape[1] != w_reduce.shape[0]:
        raise ValueError(
            f"shape mismatch: z has {c} channels, weights are "
            f"{tuple(w_reduce.shape)} and {tuple(w_expand.shape)}"
        )
    hidden = F.relu(z @ w_reduce.t())
    return torch.sigmoid(hidden @ w_expand.t())


class ChannelAttention(nn.Module):
    """Rescales each channel of a feature map by its learned gate.

    ``bypass=True`` turns the module into an identity, used by the ablation
    that checks the gated network against an attention-free one.
    """

    def __init__(self, channels: int, reduction_ratio: int = 16):
        super().__init__()
        if channels % reduction_ratio != 0:
            raise ValueError(f"reduction_ratio {reduction_ratio} must divide {channels} channels")
        reduced = channels // reduction_ratio
        self.reduce = nn.Conv2d(channels, reduced, kernel_size=1, bias=False)
        self.expand = nn.Conv2d(reduced, channels, kernel_size=1, bias=False)
        self.bypass = False

    def gates(self, u: torch.Tensor) -> torch.Tensor:
        z = global_average_pool(u)
        return channel_gate(z, self.reduce.weight.flatten(1), self.expand.weight.flatten(1))

    def forward(self, u: torch.Tensor) -> torch.Tensor:
        if self.bypass:
            return u
        n = self.gates(u)
        return u * n.unsqueeze(-1).unsqueeze(-1)


class BasicBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, 1, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_ch)
        if stride != 1 or in_ch != out_ch:
            self.downsample = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride, bias=False),
                nn.BatchNorm2d(out_ch),
            )
        else:
            self.downsample = None

    def forward(self, x):
        residual = self.downsample(x) if self.downsample is not None else x
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return F.relu(out + residual)


class _EmbeddingHead(nn.Module):
    """Pooled feature -> embedding (linear + BN)."""

    def __init__(self, in_ch: int, embed_dim: int):
        super().__init__()
        self.fc = nn.Linear(in_ch, embed_dim)
        self.bn = nn.BatchNorm1d(embed_dim)

    def forward(self, x):
        return self.bn(self.fc(x))


class _Branch(nn.Module):
    """One clone of the final stage with its attention gate and heads.

    ``parts = 0`` is the global branch: a single embedding with a classifier.
    ``parts = p`` adds p horizontal strips, each with its own embedding and
    classifier; the branch-level (whole map) embedding feeds the metric loss
    and the final descriptor.
    """

    def __init__(self, cfg: BackboneConfig, in_ch: int, parts: int):
        super().__init__()
        w4 = cfg.stage_widths[3]
        self.parts = parts
        self.stage = BasicBlock(in_ch, w4, stride=cfg.last_stride)
        self.attention = ChannelAttention(w4, cfg.reduction_ratio)
        self.embed_head = _EmbeddingHead(w4, cfg.embed_dim)
        self.dropout = nn.Dropout(cfg.dropout)
        if parts == 0:
            self.classifier = nn.Linear(cfg.embed_dim, cfg.num_classes)
        else:
            self.part_heads = nn.ModuleList(
                _EmbeddingHead(w4, cfg.embed_dim) for _ in range(parts)
            )
            self.part_classifiers = nn.ModuleList(
                nn.Linear(cfg.embed_dim, cfg.num_classes) for _ in range(parts)
            )

    def forward(self, x) -> tuple[torch.Tensor, list[torch.Tensor]]:
        x = self.attention(self.stage(x))
        embedding = self.embed_head(global_average_pool(x))
        logits = []
        if self.parts == 0:
            logits.append(self.classifier(self.dropout(embedding)))
        else:
            strips = F.adaptive_avg_pool2d(x, (self.parts, 1))
            for i in range(self.parts):
                part = self.part_heads[i](strips[:, :, i, 0])
                logits.append(self.part_classifiers[i](self.dropout(part)))
        return embedding, logits


class ReidBackbone(nn.Module):
    def __init__(self, cfg: BackboneConfig, source: str = "B-F"):
        super().__init__()
        if source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}")
        self.cfg = cfg
        self.source = source
        w1, w2, w3, _ = cfg.stage_widths
        self.stem = nn.Sequential(
            nn.Conv2d(3, w1, 3, 2, 1, bias=False),
            nn.BatchNorm2d(w1),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(3, 2, 1),
        )
        self.stage1 = BasicBlock(w1, w1, stride=1)
        self.att1 = ChannelAttention(w1, cfg.reduction_ratio)
        self.stage2 = BasicBlock(w1, w2, stride=2)
        self.att2 = ChannelAttention(w2, cfg.reduction_ratio)
        self.stage3 = BasicBlock(w2, w3, stride=2)
        self.att3 = ChannelAttention(w3, cfg.reduction_ratio)
        self.branches = nn.ModuleList(
            _Branch(cfg, w3, p) for p in (0, *cfg.parts)
        )
        self.apply(_init_weights)
        for branch in self.branches:
            heads = [branch.classifier] if branch.parts == 0 else list(branch.part_classifiers)
            for head in heads:
                nn.init.normal_(head.weight, std=0.001)
                nn.init.constant_(head.bias, 0.0)

    def set_attention_bypass(self, bypass: bool) -> None:
        for m in self.modules():
            if isinstance(m, ChannelAttention):
                m.bypass = bypass

    def trunk(self, x: torch.Tensor) -> torch.Tensor:
        x = self.stem(x)
        x = self.att1(self.stage1(x))
        x = self.att2(self.stage2(x))
        x = self.att3(self.stage3(x))
        return x

    def forward(self, x: torch.Tensor) -> BranchOutputs:
        if x.ndim != 4 or x.shape[1] != 3:
            raise ValueError(f"expected (N, 3, H, W) input, got shape {tuple(x.shape)}")
        if tuple(x.shape[2:]) != tuple(self.cfg.input_hw):
            raise ValueError(
                f"input size {tuple(x.shape[2:])} does not match configured {self.cfg.input_hw}"
            )
        x = (x - 0.5) / 0.5
        x = self.trunk(x)
        embeddings, logits = [], []
        for branch in self.branches:
            emb, branch_logits = branch(x)
            embeddings.append(emb)
            logits.extend(branch_logits)
        return BranchOutputs(embeddings=embeddings, class_logits=logits)

    def embed(self, x: torch.Tensor) -> torch.Tensor:
        """Concatenated branch embeddings, dimension ``cfg.embedding_dim``."""
        out = self.forward(x)
        return torch.cat(out.embeddings, dim=1)


def _init_weights(m: nn.Module) -> None:
    if isinstance(m, nn.Conv2d):
        nn.init.kaiming_normal_(m.weight, mode="fan_out", nonlinearity="relu")
    elif isinstance(m, (nn.BatchNorm2d, nn.BatchNorm1d)):
        nn.init.constant_(m.weight, 1.0)
        nn.init.constant_(m.bias, 0.0)
    elif isinstance(m, nn.Linear):
        nn.init.kaiming_normal_(m.weight, mode="fan_out")
        nn.init.constant_(m.bias, 0.0)


def build_model(cfg: BackboneConfig, source: str = "B-F", seed: int = 0) -> ReidBackbone:
    """Construct a backbone with a deterministic initialization."""
    torch.manual_seed(seed)
    return ReidBackbone(cfg, source=source)


# ---------------------------------------------------------------------------
# checkpoint container: one JSON header line + raw little-endian float32 blob


class CheckpointError(Exception):
    pass


_CKPT_FORMAT = "rfdreid-checkpoint"
_CKPT_VERSION = 1


def save_checkpoint(model: ReidBackbone, path) -> None:
    state = model.state_dict()
    tensors = []
    chunks = []
    for name in sorted(state):
        t = state[name]
        tensors.append({
            "name": name,
            "shape": list(t.shape),
            "dtype": str(t.dtype).removeprefix("torch."),
        })
        arr = t.detach().cpu().numpy().astype("<f4")  # counts are exact in f32
        chunks.append(arr.tobytes())
    blob = b"".join(chunks)
    header = {
        "format": _CKPT_FORMAT,
        "version": _CKPT_VERSION,
        "source": model.source,
        "class_count": model.cfg.num_classes,
        "embedding_dim": model.cfg.embedding_dim,
        "config": dataclasses.asdict(model.cfg),
        "tensors": tensors,
        "blob_bytes": len(blob),
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        f.write(blob)


def read_checkpoint_header(path) -> dict:
    with open(path, "rb") as f:
        line = f.readline()
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: not a checkpoint file ({e})") from None
    if header.get("format") != _CKPT_FORMAT:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if header.get("version") != _CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')}")
    return header


def load_checkpoint(path) -> tuple[ReidBackbone, dict]:
    header = read_checkpoint_header(path)
    with open(path, "rb") as f:
        f.readline()
        blob = f.read()
    if len(blob) != header["blob_bytes"]:
        raise CheckpointError(
            f"{path}: blob is {len(blob)} bytes, header declares {header['blob_bytes']}"
        )
    cfg_doc = dict(header["config"])
    cfg_doc["stage_widths"] = tuple(cfg_doc["stage_widths"])
    cfg_doc["input_hw"] = tuple(cfg_doc["input_hw"])
    cfg_doc["parts"] = tuple(cfg_doc["parts"])
    cfg = BackboneConfig(**cfg_doc)
    model = ReidBackbone(cfg, source=header["source"])
    state = {}
    offset = 0
    for spec in header["tensors"]:
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        raw = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        offset += count * 4
        t = torch.from_numpy(raw.copy()).reshape(spec["shape"])
        state[spec["name"]] = t.to(getattr(torch, spec["dtype"]))
    model.load_state_dict(state)
    model.eval()
    return model, header


def checkpoint_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def embed_images(model: ReidBackbone, images: np.ndarray, batch_size: int = 32) -> np.ndarray:
    """Embed (N, H, W, 3) float images in [0, 1]; returns (N, d) float32.

    Runs in eval mode without gradients; batching does not change results.
    """
    model.eval()
    outputs = []
    with torch.no_grad():
        for start in range(0, len(images), batch_size):
            chunk = np.ascontiguousarray(images[start:start + batch_size].transpose(0, 3, 1, 2))
            x = torch.from_numpy(chunk).float()
            outputs.append(model.embed(x).numpy())
    return np.concatenate(outputs, axis=0).astype(np.float32)
