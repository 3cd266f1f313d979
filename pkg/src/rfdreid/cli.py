"""Command-line pipeline: synth, pseudo-label, train, extract, eval, sweep, plot.

Every command echoes its effective configuration to a JSON sidecar; running
the same verb with ``--config <sidecar>`` reproduces the outputs bit for bit
(flags given on the command line override the file). Exit codes: 0 success,
1 usage error, 2 data/validation error, 3 internal error; stderr carries a
single ``rfdreid: <category>: <reason>`` line on failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import backbone as bb
from . import data as dt
from . import evaluation as ev
from . import matching as mt
from . import store as st
from . import trainer as tr


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); the contract says 1
        raise UsageError(message)


def _split_seed(seed: int, split_index: int) -> int:
    return int(np.random.SeedSequence([seed, split_index]).generate_state(1)[0])


def _echo_config(args: argparse.Namespace, path: Path) -> None:
    doc = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _parse_scales(text: str) -> list[int]:
    try:
        scales = [int(s) for s in text.split(",") if s]
    except ValueError:
        raise UsageError(f"bad scale list {text!r}") from None
    if not scales:
        raise UsageError("scale list is empty")
    return scales


def _parse_hw(text: str) -> tuple[int, int]:
    try:
        h, w = (int(t) for t in text.lower().split("x"))
        return h, w
    except ValueError:
        raise UsageError(f"bad size {text!r}, expected HxW like 384x128") from None


def _parse_widths(text: str) -> tuple[int, int, int, int]:
    parts = tuple(int(t) for t in text.split(","))
    if len(parts) != 4:
        raise UsageError("stage widths need exactly 4 comma-separated integers")
    return parts


# ---------------------------------------------------------------------------
# synth


def _protocol_files(split_dir: Path, gallery_mode: str) -> tuple[Path, Path]:
    return (split_dir / f"query_{gallery_mode}.json",
            split_dir / f"gallery_{gallery_mode}.json")


def cmd_synth(args) -> int:
    if sum(x is not None for x in (args.corpus, args.csv, args.manifest)) != 1:
        raise UsageError("give exactly one of --corpus, --csv, --manifest")
    if args.corpus:
        manifest = dt.load_corpus_dir(args.corpus, interpolation=args.interp)
    elif args.csv:
        manifest = dt.load_corpus_csv(args.csv, interpolation=args.interp,
                                      provenance=args.provenance)
    else:
        manifest = dt.DatasetManifest.load(args.manifest)
    manifest.validate()
    scales = _parse_scales(args.scales)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    splits = dt.make_splits(manifest, split_count=args.splits, rng_seed=args.seed,
                            train_identity_count=args.train_identities)
    for s, split in enumerate(splits):
        split_dir = out / f"split_{s:02d}"
        split_dir.mkdir(parents=True, exist_ok=True)
        seed_s = _split_seed(args.seed, s)
        if manifest.provenance == "synthetic":
            train = dt.build_mlr(split.train, scales, args.interp, seed_s,
                                 split_dir / "images" / "train")
            query_pool, gallery_pool = split.query, split.gallery
        else:
            rule = dt.fit_resolution_bins([r.pixel_count for r in split.train.records],
                                          bin_count=args.bins, method=args.bin_method)
            def relabel(m):
                return dt.DatasetManifest(
                    records=rule.apply(m.records), resolution_class_count=args.bins,
                    identity_count=m.identity_count, provenance="real",
                    interpolation=m.interpolation)
            train = relabel(split.train)
            query_pool, gallery_pool = relabel(split.query), relabel(split.gallery)
        train.save(split_dir / "train.json")

        for mode, tag in (("single_reso", "single"), ("multi_reso", "multi")):
            protocol = ev.build_protocol(query_pool, gallery_pool, mode, seed_s,
                                         split_dir / "images", scales=scales,
                                         interpolation=args.interp, hr_prob=args.hr_prob)
            qm = dt.DatasetManifest(
                records=protocol.query,
                resolution_class_count=max(train.resolution_class_count,
                                           1 + len(scales)),
                identity_count=len({r.identity for r in protocol.query}),
                provenance=manifest.provenance, interpolation=args.interp)
            gm = dt.DatasetManifest(
                records=protocol.gallery,
                resolution_class_count=max(train.resolution_class_count,
                                           1 + len(scales)),
                identity_count=len({r.identity for r in protocol.gallery}),
                provenance=manifest.provenance, interpolation=args.interp)
            q_path, g_path = _protocol_files(split_dir, tag)
            qm.save(q_path)
            gm.save(g_path)
        (split_dir / "split.json").write_text(json.dumps(
            {"index": s, "seed": seed_s}, indent=2, sort_keys=True) + "\n")
    _echo_config(args, out / "effective_config.json")
    print(f"wrote {len(splits)} split(s) under {out}")
    return 0


# ---------------------------------------------------------------------------
# pseudo-label


def cmd_pseudo_label(args) -> int:
    if (args.csv is None) == (args.manifest is None):
        raise UsageError("give exactly one of --csv, --manifest")
    if args.csv:
        manifest = dt.load_corpus_csv(args.csv, provenance="real")
    else:
        manifest = dt.DatasetManifest.load(args.manifest)
    records = dt.pseudo_label_resolutions(manifest.records, bin_count=args.bins,
                                          method=args.bin_method)
    out_manifest = dt.DatasetManifest(
        records=records, resolution_class_count=args.bins,
        identity_count=manifest.identity_count, provenance="real",
        interpolation=manifest.interpolation)
    out = Path(args.out)
    out_manifest.save(out)
    _echo_config(args, out.with_suffix(out.suffix + ".config.json"))
    print(f"labeled {len(records)} records into {args.bins} resolution classes -> {out}")
    return 0


# ---------------------------------------------------------------------------
# train


def _backbone_config(args, num_classes: int) -> bb.BackboneConfig:
    return bb.BackboneConfig(
        num_classes=num_classes,
        stage_widths=_parse_widths(args.stage_widths),
        input_hw=_parse_hw(args.input_size),
        embed_dim=args.embed_dim,
        reduction_ratio=args.reduction,
        last_stride=args.last_stride,
        dropout=args.dropout,
    )


def cmd_train(args) -> int:
    manifest = dt.DatasetManifest.load(args.manifest)
    manifest.validate()
    cfg = tr.TrainConfig(
        learning_rate=args.lr,
        weight_decay=args.weight_decay,
        iterations_per_identity=args.iterations_per_identity,
        total_iterations=args.total_iterations,
        margin=args.margin,
        p_identities=args.p, k_images=args.k,
        br_images_per_class=args.br_k,
        flip_prob=args.flip_prob, erase_prob=args.erase_prob,
    )
    if args.baseline == "bf":
        backbone_cfg = _backbone_config(args, len(manifest.identities()))
        model, report = tr.train_bf(manifest, backbone_cfg, cfg, seed=args.seed)
    else:
        backbone_cfg = _backbone_config(args, manifest.resolution_class_count)
        model, report = tr.train_br(manifest, backbone_cfg, cfg, seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    bb.save_checkpoint(model, out)
    report.to_csv(out.with_suffix(out.suffix + ".report.csv"))
    _echo_config(args, out.with_suffix(out.suffix + ".config.json"))
    print(f"trained {args.baseline} for {len(report.rows)} iterations -> {out}")
    return 0


# ---------------------------------------------------------------------------
# extract


def cmd_extract(args) -> int:
    model, header = bb.load_checkpoint(args.checkpoint)
    manifest = dt.DatasetManifest.load(args.manifest)
    embeddings = ev.extract_embeddings(model, manifest.records, batch_size=args.batch_size)
    meta = st.StoreMetadata(
        source=header["source"],
        dim=embeddings.shape[1],
        image_ids=[r.image_id for r in manifest.records],
        checkpoint_hash=bb.checkpoint_hash(args.checkpoint),
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    st.write_store(embeddings, meta, out)
    _echo_config(args, out.with_suffix(out.suffix + ".config.json"))
    print(f"extracted {embeddings.shape[0]} embeddings of dim {embeddings.shape[1]} -> {out}")
    return 0


# ---------------------------------------------------------------------------
# eval / sweep


def _store_rows(store_path: Path, records, expected_source: str) -> np.ndarray:
    embeddings, meta = st.read_store(store_path)
    if meta.source != expected_source:
        raise ValueError(
            f"{store_path}: store holds {meta.source} embeddings, expected {expected_source}"
        )
    index = {image_id: i for i, image_id in enumerate(meta.image_ids)}
    missing = [r.image_id for r in records if r.image_id not in index]
    if missing:
        raise ValueError(f"{store_path}: missing embeddings for {missing[:5]}")
    return embeddings[[index[r.image_id] for r in records]]


def _load_protocol(split_dir: Path, gallery_mode: str, camera_rule: bool = True) -> ev.EvalProtocol:
    q_path, g_path = _protocol_files(split_dir, gallery_mode)
    meta_path = split_dir / "split.json"
    seed = json.loads(meta_path.read_text())["seed"] if meta_path.exists() else 0
    mode = "single_reso" if gallery_mode == "single" else "multi_reso"
    query = dt.DatasetManifest.load(q_path)
    gallery = dt.DatasetManifest.load(g_path)
    return ev.EvalProtocol(mode=mode, query=query.records, gallery=gallery.records,
                           split_seed=seed, camera_rule=camera_rule)


def _store_path(stores: Path, split_dir: Path, manifest_stem: str, source_tag: str) -> Path:
    return stores / f"{split_dir.name}_{manifest_stem}_{source_tag}.feat"


def _eval_rows(args, fusion: mt.FusionConfig) -> dict:
    data_dir = Path(args.data)
    stores = Path(args.stores)
    split_dirs = sorted(d for d in data_dir.glob("split_*") if d.is_dir())
    if not split_dirs:
        raise ValueError(f"no split_* directories under {data_dir}")
    rows = []
    per_method: dict[tuple[str, str, float], list[ev.CMCResult]] = {}
    for split_dir in split_dirs:
        protocol = _load_protocol(split_dir, args.gallery)
        q_stem, g_stem = f"query_{args.gallery}", f"gallery_{args.gallery}"
        bf_q = _store_rows(_store_path(stores, split_dir, q_stem, "bf"), protocol.query, "B-F")
        bf_g = _store_rows(_store_path(stores, split_dir, g_stem, "bf"), protocol.gallery, "B-F")
        br_q = br_g = None
        if args.rfd:
            br_q = _store_rows(_store_path(stores, split_dir, q_stem, "br"), protocol.query, "B-R")
            br_g = _store_rows(_store_path(stores, split_dir, g_stem, "br"), protocol.gallery, "B-R")
        scores = ev.score_protocol(protocol, bf_q, bf_g, br_q, br_g, fusion,
                                   max_rank=args.max_rank)
        split_index = int(split_dir.name.split("_")[-1])
        for method, result in scores.items():
            label = method if method == "B-F" or fusion.sign == "paper" else "B-F+RFD[inverted]"
            lam = fusion.lam if method != "B-F" else 0.0
            rows.append({"protocol": protocol.mode, "method": label, "lambda": lam,
                         "split": split_index,
                         "R1": result.r1, "R5": result.r5, "R10": result.r10})
            per_method.setdefault((protocol.mode, label, lam), []).append(result)
    aggregated = []
    for (mode, method, lam), results in sorted(per_method.items()):
        mean = ev.average_cmc(results)
        aggregated.append({"protocol": mode, "method": method, "lambda": lam,
                           "splits": len(results), "R1": mean.r1, "R5": mean.r5,
                           "R10": mean.r10, "cmc": mean.rank_hits.tolist()})
    return {"rows": rows, "aggregated": aggregated}


def cmd_eval(args) -> int:
    fusion = mt.FusionConfig(lam=args.lam, sign=args.sign)
    report = _eval_rows(args, fusion)
    out = Path(args.out)
    csv_path, json_path = ev.write_report(report, out)
    _echo_config(args, out / "effective_config.json")
    for agg in report["aggregated"]:
        print(f"{agg['protocol']:12s} {agg['method']:20s} lambda={agg['lambda']:<5g} "
              f"R1={agg['R1']:.4f} R5={agg['R5']:.4f} R10={agg['R10']:.4f}")
    print(f"report -> {csv_path}, {json_path}")
    return 0


def cmd_sweep(args) -> int:
    lambdas = [float(t) for t in args.lambdas.split(",") if t]
    if not lambdas:
        raise UsageError("empty lambda grid")
    signs = [s.strip() for s in args.signs.split(",") if s.strip()]
    combined = {"rows": [], "aggregated": []}
    seen_baseline = False
    for lam in lambdas:
        for sign in signs:
            fusion = mt.FusionConfig(lam=lam, sign=sign)
            args.rfd = True
            report = _eval_rows(args, fusion)
            for row in report["rows"]:
                if row["method"] == "B-F" and seen_baseline:
                    continue
                method = row["method"] if row["method"] == "B-F" else f"B-F+RFD@{sign}"
                combined["rows"].append({**row, "method": method})
            for agg in report["aggregated"]:
                if agg["method"] == "B-F" and seen_baseline:
                    continue
                method = agg["method"] if agg["method"] == "B-F" else f"B-F+RFD@{sign}"
                combined["aggregated"].append({**agg, "method": method})
            seen_baseline = True
    out = Path(args.out)
    csv_path, json_path = ev.write_report(combined, out)
    _echo_config(args, out / "effective_config.json")
    print(f"swept {len(lambdas)} lambdas x {len(signs)} signs -> {csv_path}")
    return 0


# ---------------------------------------------------------------------------
# plot


def cmd_plot(args) -> int:
    from . import plotting

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report_dir = Path(args.report)
    made = plotting.plot_report(report_dir, out)
    if args.data and args.stores:
        split_dir = Path(args.data) / f"split_{args.split:02d}"
        protocol = _load_protocol(split_dir, args.gallery)
        stores = Path(args.stores)
        q_stem, g_stem = f"query_{args.gallery}", f"gallery_{args.gallery}"
        bf_q = _store_rows(_store_path(stores, split_dir, q_stem, "bf"), protocol.query, "B-F")
        bf_g = _store_rows(_store_path(stores, split_dir, g_stem, "bf"), protocol.gallery, "B-F")
        d = mt.feature_distance_matrix(bf_q, bf_g,
                                       [r.image_id for r in protocol.query],
                                       [r.image_id for r in protocol.gallery])
        made += plotting.plot_ranked_strips(protocol, d, out, n_queries=args.strips)
    _echo_config(args, out / "effective_config.json")
    print(f"wrote {len(made)} figure(s) under {out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> _Parser:
    parser = _Parser(prog="rfdreid", description=__doc__)
    verb_parsers: dict[str, argparse.ArgumentParser] = {}
    parser.verb_parsers = verb_parsers
    subparsers = parser.add_subparsers(dest="verb", required=True)

    def add_verb(name: str, **kwargs) -> argparse.ArgumentParser:
        verb_parsers[name] = subparsers.add_parser(name, **kwargs)
        return verb_parsers[name]

    def common(p):
        p.add_argument("--config", default=None,
                       help="JSON sidecar from a previous run; flags override it")
        p.add_argument("--seed", type=int, default=0)

    p = add_verb("synth", help="corpus -> multi-resolution split manifests")
    common(p)
    p.add_argument("--corpus", default=None, help="directory of <identity>_<camera>_<seq>.<ext>")
    p.add_argument("--csv", default=None, help="CSV index image_id,identity,camera,width,height,path")
    p.add_argument("--manifest", default=None, help="existing manifest JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--scales", default="2,3,4")
    p.add_argument("--interp", default="bicubic", choices=("bilinear", "bicubic"))
    p.add_argument("--splits", type=int, default=1)
    p.add_argument("--train-identities", type=int, default=None)
    p.add_argument("--hr-prob", type=float, default=0.5,
                   help="probability a multi-reso gallery image stays at full resolution")
    p.add_argument("--provenance", default="synthetic", choices=("synthetic", "real"))
    p.add_argument("--bins", type=int, default=5)
    p.add_argument("--bin-method", default="width", choices=("width", "frequency"))
    p.set_defaults(func=cmd_synth)

    p = add_verb("pseudo-label", help="manifest -> pseudo resolution labels")
    common(p)
    p.add_argument("--csv", default=None)
    p.add_argument("--manifest", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--bins", type=int, default=5)
    p.add_argument("--bin-method", default="width", choices=("width", "frequency"))
    p.set_defaults(func=cmd_pseudo_label)

    p = add_verb("train", help="manifest -> checkpoint + loss report")
    common(p)
    p.add_argument("--baseline", required=True, choices=("bf", "br"))
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--weight-decay", type=float, default=5e-4)
    p.add_argument("--iterations-per-identity", type=int, default=500)
    p.add_argument("--total-iterations", type=int, default=None)
    p.add_argument("--margin", type=float, default=0.3)
    p.add_argument("--p", type=int, default=8, help="identities per batch (bf)")
    p.add_argument("--k", type=int, default=4, help="images per identity (bf)")
    p.add_argument("--br-k", type=int, default=16, help="images per class (br)")
    p.add_argument("--flip-prob", type=float, default=0.5)
    p.add_argument("--erase-prob", type=float, default=0.5)
    p.add_argument("--input-size", default="384x128")
    p.add_argument("--stage-widths", default="16,32,64,128")
    p.add_argument("--embed-dim", type=int, default=128)
    p.add_argument("--reduction", type=int, default=16)
    p.add_argument("--last-stride", type=int, default=1, choices=(1, 2))
    p.add_argument("--dropout", type=float, default=0.5)
    p.set_defaults(func=cmd_train)

    p = add_verb("extract", help="checkpoint + manifest -> feature store")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, default=32)
    p.set_defaults(func=cmd_extract)

    def eval_common(p):
        common(p)
        p.add_argument("--data", required=True, help="synth output directory")
        p.add_argument("--stores", required=True, help="directory of extracted stores")
        p.add_argument("--gallery", required=True, choices=("single", "multi"))
        p.add_argument("--max-rank", type=int, default=10)
        p.add_argument("--out", required=True)

    p = add_verb("eval", help="stores -> CMC report (CSV + JSON)")
    eval_common(p)
    p.add_argument("--rfd", action="store_true", help="fuse in resolution similarity")
    p.add_argument("--lambda", dest="lam", type=float, default=0.1)
    p.add_argument("--sign", default="paper", choices=("paper", "inverted"))
    p.set_defaults(func=cmd_eval)

    p = add_verb("sweep", help="lambda grid -> combined report")
    eval_common(p)
    p.add_argument("--lambdas", default="0,0.05,0.1,0.2")
    p.add_argument("--signs", default="paper,inverted")
    p.set_defaults(func=cmd_sweep)

    p = add_verb("plot", help="report -> CMC curves, split bars, ranked strips")
    common(p)
    p.add_argument("--report", required=True, help="eval/sweep output directory")
    p.add_argument("--out", required=True)
    p.add_argument("--data", default=None)
    p.add_argument("--stores", default=None)
    p.add_argument("--gallery", default="multi", choices=("single", "multi"))
    p.add_argument("--split", type=int, default=0)
    p.add_argument("--strips", type=int, default=4, help="ranked strips to render")
    p.set_defaults(func=cmd_plot)

    return parser


def _scan_config(argv: list[str]) -> str | None:
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if token.startswith("--config="):
            return token.split("=", 1)[1]
    return None


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    try:
        config_path = _scan_config(argv)
        verb = argv[0] if argv and not argv[0].startswith("-") else None
        if config_path and verb in parser.verb_parsers:
            stored = json.loads(Path(config_path).read_text())
            stored.pop("verb", None)
            subparser = parser.verb_parsers[verb]
            known = {a.dest for a in subparser._actions}
            subparser.set_defaults(**{k: v for k, v in stored.items() if k in known})
            for action in subparser._actions:
                if action.dest in stored:
                    action.required = False
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"rfdreid: usage-error: {e}", file=sys.stderr)
        return 1
    except (ValueError, FileNotFoundError, KeyError, json.JSONDecodeError,
            st.StoreError, bb.CheckpointError) as e:
        print(f"rfdreid: data-error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # pragma: no cover - defensive
        print(f"rfdreid: internal-error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
