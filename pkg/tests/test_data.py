import dataclasses
import json

import numpy as np
import pytest

from rfdreid.data import (
    DatasetManifest,
    ImageRecord,
    build_mlr,
    degrade_all,
    degrade_mixed,
    fit_resolution_bins,
    load_corpus_csv,
    load_corpus_dir,
    make_splits,
    make_toy_corpus,
    pseudo_label_resolutions,
)


def record(image_id="r0", identity=0, camera=0, width=10, height=10, label=0,
           scale=1, path="x.png"):
    return ImageRecord(image_id=image_id, identity=identity, camera=camera,
                       width=width, height=height, pixel_count=width * height,
                       resolution_label=label, degradation_scale=scale, path=path)


# ---------------------------------------------------------------------------
# manifests and corpora


def test_toy_corpus_layout(toy_corpus):
    assert toy_corpus.identity_count == 8
    assert len(toy_corpus.records) == 96
    assert all(r.degradation_scale == 1 and r.resolution_label == 0
               for r in toy_corpus.records)
    cameras = {r.identity: set() for r in toy_corpus.records}
    for r in toy_corpus.records:
        cameras[r.identity].add(r.camera)
    assert all(len(c) == 2 for c in cameras.values())
    toy_corpus.validate()


def test_corpus_dir_roundtrip(toy_corpus):
    root = toy_corpus.records[0].path.rsplit("/", 1)[0]
    loaded = load_corpus_dir(root)
    assert len(loaded.records) == len(toy_corpus.records)
    assert loaded.identities() == toy_corpus.identities()
    first = loaded.records[0]
    assert first.pixel_count == first.width * first.height


def test_corpus_csv(tmp_path, toy_corpus):
    csv_path = tmp_path / "index.csv"
    lines = ["image_id,identity,camera,width,height,path"]
    for r in toy_corpus.records[:10]:
        lines.append(f"{r.image_id},{r.identity},{r.camera},{r.width},{r.height},{r.path}")
    csv_path.write_text("\n".join(lines) + "\n")
    loaded = load_corpus_csv(csv_path)
    assert len(loaded.records) == 10
    assert loaded.provenance == "real"


def test_manifest_save_load_roundtrip(tmp_path, toy_corpus):
    path = tmp_path / "manifest.json"
    toy_corpus.save(path)
    loaded = DatasetManifest.load(path)
    assert loaded.identity_count == toy_corpus.identity_count
    assert [r.image_id for r in loaded.records] == [r.image_id for r in toy_corpus.records]
    # paths resolve to readable files
    from rfdreid.data import load_image
    load_image(loaded.records[0].path)


def test_manifest_rejects_duplicate_ids():
    m = DatasetManifest(records=[record(), record()], resolution_class_count=1,
                        identity_count=1, provenance="synthetic", interpolation="bilinear")
    with pytest.raises(ValueError, match="duplicate"):
        m.validate()


# ---------------------------------------------------------------------------
# build_mlr and friends


def test_build_mlr_labels_and_counts(tmp_path, toy_corpus):
    out = build_mlr(toy_corpus, {2, 3, 4}, "bilinear", rng_seed=5, out_dir=tmp_path / "lr")
    hr = [r for r in out.records if r.degradation_scale == 1]
    lr = [r for r in out.records if r.degradation_scale > 1]
    assert len(hr) == len(toy_corpus.records)
    assert len(lr) == len(toy_corpus.records)
    assert all(r.resolution_label == 0 for r in hr)
    assert {r.resolution_label for r in lr} == {1, 2, 3}
    assert {r.degradation_scale for r in lr} == {2, 3, 4}
    by_scale = {r.degradation_scale: r.resolution_label for r in lr}
    assert by_scale == {2: 1, 3: 2, 4: 3}
    assert out.resolution_class_count == 4
    # identities preserved on the degraded copies
    originals = {r.image_id: r for r in toy_corpus.records}
    for r in lr:
        base = r.image_id.rsplit("_x", 1)[0]
        assert originals[base].identity == r.identity
    out.validate()


def test_build_mlr_single_scale(tmp_path, toy_corpus):
    out = build_mlr(toy_corpus, {2}, "bilinear", rng_seed=5, out_dir=tmp_path / "lr")
    lr = [r for r in out.records if r.degradation_scale > 1]
    assert all(r.resolution_label == 1 for r in lr)
    assert out.resolution_class_count == 2


def test_build_mlr_deterministic(tmp_path, toy_corpus):
    a = build_mlr(toy_corpus, {2, 3, 4}, "bilinear", 5, tmp_path / "a")
    b = build_mlr(toy_corpus, {2, 3, 4}, "bilinear", 5, tmp_path / "b")
    a_doc = [dataclasses.replace(r, path="") for r in a.records]
    b_doc = [dataclasses.replace(r, path="") for r in b.records]
    assert a_doc == b_doc
    # saved manifests byte-identical (relative paths)
    a.save(tmp_path / "a" / "m.json")
    b.save(tmp_path / "b" / "m.json")
    assert (tmp_path / "a" / "m.json").read_bytes() == (tmp_path / "b" / "m.json").read_bytes()
    # image bytes identical too
    for ra, rb in zip(a.records, b.records):
        if ra.degradation_scale > 1:
            with open(ra.path, "rb") as fa, open(rb.path, "rb") as fb:
                assert fa.read() == fb.read()


def test_build_mlr_order_independent(tmp_path, toy_corpus):
    shuffled = DatasetManifest(
        records=list(reversed(toy_corpus.records)),
        resolution_class_count=1, identity_count=toy_corpus.identity_count,
        provenance="synthetic", interpolation="bicubic")
    a = build_mlr(toy_corpus, {2, 3, 4}, "bilinear", 5, tmp_path / "a")
    b = build_mlr(shuffled, {2, 3, 4}, "bilinear", 5, tmp_path / "b")
    scale_a = {r.image_id: r.degradation_scale for r in a.records}
    scale_b = {r.image_id: r.degradation_scale for r in b.records}
    assert scale_a == scale_b


def test_build_mlr_rejects_empty_scales(tmp_path, toy_corpus):
    with pytest.raises(ValueError, match="empty"):
        build_mlr(toy_corpus, set(), "bilinear", 0, tmp_path)


def test_build_mlr_rejects_degraded_input(tmp_path, toy_corpus):
    out = build_mlr(toy_corpus, {2}, "bilinear", 0, tmp_path / "lr")
    with pytest.raises(ValueError, match="originals"):
        build_mlr(out, {2}, "bilinear", 0, tmp_path / "lr2")


def test_degrade_all_replaces_every_record(tmp_path, toy_corpus):
    out = degrade_all(toy_corpus, {2, 3, 4}, "bilinear", 9, tmp_path / "q")
    assert len(out.records) == len(toy_corpus.records)
    assert all(r.degradation_scale in (2, 3, 4) for r in out.records)


def test_degrade_mixed_is_a_mixture(tmp_path, toy_corpus):
    out = degrade_mixed(toy_corpus, {2, 3, 4}, "bilinear", 9, tmp_path / "g", hr_prob=0.5)
    scales = [r.degradation_scale for r in out.records]
    assert len(out.records) == len(toy_corpus.records)
    assert scales.count(1) > 0 and any(s > 1 for s in scales)


# ---------------------------------------------------------------------------
# pseudo labels


def test_pseudo_labels_degenerate_single_size():
    records = [record(image_id=f"r{i}", width=10, height=10) for i in range(6)]
    labeled = pseudo_label_resolutions(records, bin_count=5)
    assert [r.resolution_label for r in labeled] == [0] * 6


def test_pseudo_labels_spec_example():
    sizes = [(10, 10), (5, 25), (10, 15), (7, 25), (10, 20)]  # 100,125,150,175,200
    records = [record(image_id=f"r{i}", width=w, height=h) for i, (w, h) in enumerate(sizes)]
    labeled = pseudo_label_resolutions(records, bin_count=5)
    assert [r.resolution_label for r in labeled] == [0, 1, 2, 3, 4]


def _oracle_label(p, lo, hi, bins):
    if hi == lo:
        return 0
    width = (hi - lo) / bins + (hi - lo) * 1e-9
    return min(int((p - lo) / width), bins - 1)


def test_pseudo_labels_match_equal_width_oracle(rng):
    for _ in range(200):
        n = int(rng.integers(2, 30))
        counts = rng.integers(1, 10 ** 6, size=n).tolist()
        bins = int(rng.integers(2, 9))
        rule = fit_resolution_bins(counts, bins)
        lo, hi = min(counts), max(counts)
        for p in counts:
            assert rule.label(p) == _oracle_label(p, lo, hi, bins)


def test_pseudo_labels_monotone_and_permutation_equivariant(rng):
    counts = rng.integers(1, 50_000, size=40).tolist()
    records = [record(image_id=f"r{i}", width=1, height=c) for i, c in enumerate(counts)]
    labeled = pseudo_label_resolutions(records, bin_count=5)
    by_id = {r.image_id: r.resolution_label for r in labeled}
    # permutation equivariance
    perm = [records[i] for i in rng.permutation(len(records))]
    for r in pseudo_label_resolutions(perm, bin_count=5):
        assert by_id[r.image_id] == r.resolution_label
    # monotone in pixel_count
    pairs = sorted((r.pixel_count, by_id[r.image_id]) for r in records)
    labels = [label for _, label in pairs]
    assert labels == sorted(labels)


def test_pseudo_labels_cover_all_bins_on_wide_spread(jittered_corpus):
    labeled = pseudo_label_resolutions(jittered_corpus.records, bin_count=5)
    counts = [r.pixel_count for r in jittered_corpus.records]
    lo, hi = min(counts), max(counts)
    expected = {_oracle_label(p, lo, hi, 5) for p in counts}
    assert {r.resolution_label for r in labeled} == expected
    # the jitter is wide enough to hit every bin used by the oracle
    assert len(expected) == 5


def test_pseudo_labels_frozen_rule_clamps():
    rule = fit_resolution_bins([100, 200], bin_count=5)
    assert rule.label(50) == 0
    assert rule.label(1000) == 4


def test_pseudo_labels_frequency_method():
    counts = [1, 2, 3, 4, 100, 200, 300, 400]
    rule = fit_resolution_bins(counts, bin_count=2, method="frequency")
    labels = [rule.label(c) for c in counts]
    assert labels == [0, 0, 0, 0, 1, 1, 1, 1]


def test_pseudo_labels_errors():
    with pytest.raises(ValueError, match="empty"):
        pseudo_label_resolutions([], bin_count=5)
    with pytest.raises(ValueError, match="positive"):
        fit_resolution_bins([0, 5], 5)


# ---------------------------------------------------------------------------
# splits


def test_make_splits_half_half(toy_corpus):
    splits = make_splits(toy_corpus, split_count=3, rng_seed=7)
    assert len(splits) == 3
    for split in splits:
        train_ids = {r.identity for r in split.train.records}
        test_ids = ({r.identity for r in split.query.records}
                    | {r.identity for r in split.gallery.records})
        assert len(train_ids) == 4
        assert len(test_ids) == 4
        assert not train_ids & test_ids
        q_imgs = {r.image_id for r in split.query.records}
        g_imgs = {r.image_id for r in split.gallery.records}
        assert not q_imgs & g_imgs
        # every query keeps a cross-camera match in the gallery
        for q in split.query.records:
            assert any(g.identity == q.identity and g.camera != q.camera
                       for g in split.gallery.records)


def test_make_splits_deterministic(toy_corpus):
    a = make_splits(toy_corpus, split_count=1, rng_seed=3)[0]
    b = make_splits(toy_corpus, split_count=1, rng_seed=3)[0]
    assert [r.image_id for r in a.train.records] == [r.image_id for r in b.train.records]
    assert [r.image_id for r in a.query.records] == [r.image_id for r in b.query.records]
    assert [r.image_id for r in a.gallery.records] == [r.image_id for r in b.gallery.records]


def test_make_splits_discards_single_camera_identities():
    records = []
    for i in range(6):
        for j in range(4):
            records.append(record(image_id=f"{i}_{j}", identity=i,
                                  camera=j % 2, path="x"))
    # identity 5 only ever appears in camera 0
    records = [r if r.identity != 5 else dataclasses.replace(r, camera=0)
               for r in records]
    manifest = DatasetManifest(records=records, resolution_class_count=1,
                               identity_count=6, provenance="synthetic",
                               interpolation="bilinear")
    splits = make_splits(manifest, split_count=4, rng_seed=0)
    for split in splits:
        seen = ({r.identity for r in split.query.records}
                | {r.identity for r in split.gallery.records})
        assert 5 not in seen


def test_make_splits_rejects_impossible_partition(toy_corpus):
    with pytest.raises(ValueError, match="partition"):
        make_splits(toy_corpus, split_count=1, rng_seed=0, train_identity_count=8)


def test_jittered_corpus_sizes_vary(jittered_corpus):
    sizes = {r.pixel_count for r in jittered_corpus.records}
    assert len(sizes) > 10
