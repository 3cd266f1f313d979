import numpy as np
import pytest

from rfdreid.store import (
    StoreCorruptError,
    StoreError,
    StoreMetadata,
    StoreVersionError,
    read_store,
    write_store,
)


def meta(n=3, dim=4, source="B-F"):
    return StoreMetadata(source=source, dim=dim,
                         image_ids=[f"img{i}" for i in range(n)],
                         checkpoint_hash="ab" * 32)


def test_blob_size_is_n_by_d_floats(tmp_path):
    path = tmp_path / "s.feat"
    write_store(np.zeros((3, 4), dtype=np.float32), meta(), path)
    raw = path.read_bytes()
    header, _, blob = raw.partition(b"\n")
    assert len(blob) == 3 * 4 * 4


def test_roundtrip_bit_exact(tmp_path, rng):
    emb = rng.standard_normal((5, 7)).astype(np.float32)
    m = meta(5, 7, source="B-R")
    path = tmp_path / "s.feat"
    write_store(emb, m, path)
    loaded, loaded_meta = read_store(path)
    assert np.array_equal(loaded, emb)
    assert loaded_meta.source == "B-R"
    assert loaded_meta.image_ids == m.image_ids
    assert loaded_meta.dim == 7
    assert loaded_meta.checkpoint_hash == m.checkpoint_hash


def test_write_is_byte_deterministic(tmp_path, rng):
    emb = rng.standard_normal((4, 3)).astype(np.float32)
    write_store(emb, meta(4, 3), tmp_path / "a")
    write_store(emb, meta(4, 3), tmp_path / "b")
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_duplicate_ids_rejected(tmp_path):
    m = meta(3, 4)
    m.image_ids[2] = m.image_ids[0]
    with pytest.raises(ValueError, match="duplicate"):
        write_store(np.zeros((3, 4), dtype=np.float32), m, tmp_path / "s")


def test_dim_mismatch_rejected(tmp_path):
    m = meta(3, 5)
    with pytest.raises(ValueError, match="dim"):
        write_store(np.zeros((3, 4), dtype=np.float32), m, tmp_path / "s")


def test_count_mismatch_rejected(tmp_path):
    with pytest.raises(ValueError, match="ids"):
        write_store(np.zeros((2, 4), dtype=np.float32), meta(3, 4), tmp_path / "s")


def test_empty_rejected(tmp_path):
    with pytest.raises(ValueError, match="nonempty"):
        write_store(np.zeros((0, 4), dtype=np.float32), meta(0, 4), tmp_path / "s")


def test_truncated_blob_reports_expected_and_actual(tmp_path):
    path = tmp_path / "s.feat"
    write_store(np.zeros((3, 4), dtype=np.float32), meta(), path)
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(StoreCorruptError, match=r"44 bytes.*48"):
        read_store(path)


def test_unknown_version_rejected(tmp_path):
    path = tmp_path / "s.feat"
    write_store(np.zeros((1, 2), dtype=np.float32), meta(1, 2), path)
    raw = path.read_bytes()
    head, _, blob = raw.partition(b"\n")
    doc = head.replace(b'"version": 1', b'"version": 99')
    path.write_bytes(doc + b"\n" + blob)
    with pytest.raises(StoreVersionError):
        read_store(path)


def test_non_store_file_rejected(tmp_path):
    path = tmp_path / "junk"
    path.write_bytes(b"\x89PNG not a store\n123")
    with pytest.raises(StoreError):
        read_store(path)
