"""Static figures for evaluation reports: CMC curves, per-split rank-1 bars,
and per-query ranked strips with the true match outlined."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .data import load_image
from .evaluation import EvalProtocol
from .matching import DistanceMatrix
from .resample import resize


def plot_report(report_dir: Path, out_dir: Path) -> list[Path]:
    report_dir, out_dir = Path(report_dir), Path(out_dir)
    made = []

    json_path = report_dir / "report.json"
    if json_path.exists():
        aggregated = json.loads(json_path.read_text())
        with_curves = [a for a in aggregated if a.get("cmc")]
        if with_curves:
            fig, ax = plt.subplots(figsize=(6, 4))
            for agg in with_curves:
                curve = np.asarray(agg["cmc"])
                label = f"{agg['protocol']} {agg['method']}"
                if agg.get("lambda"):
                    label += f" (lambda={agg['lambda']:g})"
                ax.plot(np.arange(1, len(curve) + 1), curve, marker="o", label=label)
            ax.set_xlabel("rank k")
            ax.set_ylabel("matching rate")
            ax.set_ylim(0, 1.02)
            ax.grid(alpha=0.3)
            ax.legend(fontsize=7)
            fig.tight_layout()
            path = out_dir / "cmc_curves.png"
            fig.savefig(path, dpi=130)
            plt.close(fig)
            made.append(path)

    csv_path = report_dir / "report.csv"
    if csv_path.exists():
        with open(csv_path, newline="") as f:
            rows = list(csv.DictReader(f))
        methods = sorted({r["method"] for r in rows})
        splits = sorted({int(r["split"]) for r in rows})
        fig, ax = plt.subplots(figsize=(7, 4))
        width = 0.8 / max(len(methods), 1)
        for mi, method in enumerate(methods):
            r1 = {int(r["split"]): float(r["R1"]) for r in rows if r["method"] == method}
            xs = np.arange(len(splits)) + mi * width
            ax.bar(xs, [r1.get(s, np.nan) for s in splits], width=width, label=method)
        ax.set_xticks(np.arange(len(splits)) + 0.4 - width / 2)
        ax.set_xticklabels([str(s) for s in splits])
        ax.set_xlabel("split")
        ax.set_ylabel("rank-1")
        ax.set_ylim(0, 1.02)
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = out_dir / "split_bars.png"
        fig.savefig(path, dpi=130)
        plt.close(fig)
        made.append(path)

    return made


def plot_ranked_strips(protocol: EvalProtocol, distance: DistanceMatrix, out_dir: Path,
                       n_queries: int = 4, top_k: int = 10,
                       thumb_hw: tuple[int, int] = (96, 36)) -> list[Path]:
    """For each of the first queries, render the query next to its top
    matches; correct-identity matches get a green outline."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    made = []
    gallery = protocol.gallery
    g_identity = np.array([r.identity for r in gallery])
    g_camera = np.array([r.camera for r in gallery])
    for qi, q in enumerate(protocol.query[:n_queries]):
        order = np.argsort(distance.values[qi], kind="stable")
        if protocol.camera_rule:
            keep = ~((g_identity[order] == q.identity) & (g_camera[order] == q.camera))
            order = order[keep]
        top = order[:top_k]
        fig, axes = plt.subplots(1, len(top) + 1, figsize=(1.1 * (len(top) + 1), 2.4))
        axes[0].imshow(resize(load_image(q.path), thumb_hw))
        axes[0].set_title("query", fontsize=7)
        for ax, gi in zip(axes[1:], top):
            rec = gallery[int(gi)]
            ax.imshow(resize(load_image(rec.path), thumb_hw))
            ax.set_title(f"d={distance.values[qi, gi]:.2f}", fontsize=6)
            if rec.identity == q.identity:
                for spine in ax.spines.values():
                    spine.set_edgecolor("lime")
                    spine.set_linewidth(3)
        for ax in axes:
            ax.set_xticks([])
            ax.set_yticks([])
        fig.tight_layout()
        path = out_dir / f"strip_{qi:02d}_{q.image_id}.png"
        fig.savefig(path, dpi=130)
        plt.close(fig)
        made.append(path)
    return made
