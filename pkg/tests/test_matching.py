import numpy as np
import pytest

from rfdreid.matching import (
    DistanceMatrix,
    FusionConfig,
    cosine_similarity_matrix,
    feature_distance_matrix,
    fuse,
    load_distance_matrix,
    resolution_similarity,
    save_distance_matrix,
)


def ids(prefix, n):
    return [f"{prefix}{i}" for i in range(n)]


# ---------------------------------------------------------------------------
# resolution similarity (cosine)


def test_cosine_identical_vectors():
    v = np.array([0.3, -1.2, 4.0])
    assert resolution_similarity(v, v) == pytest.approx(1.0)


def test_cosine_orthogonal_vectors():
    assert resolution_similarity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0


def test_cosine_hand_example():
    a, b = np.array([1.0, 2, 2]), np.array([2.0, 1, 2])
    assert resolution_similarity(a, b) == pytest.approx(8 / 9, rel=1e-12)


def test_cosine_scale_invariance_and_symmetry(rng):
    for _ in range(100):
        u = rng.standard_normal(5)
        v = rng.standard_normal(5)
        a, b = rng.uniform(0.1, 10, size=2)
        s = resolution_similarity(u, v)
        assert resolution_similarity(a * u, b * v) == pytest.approx(s, rel=1e-9)
        assert resolution_similarity(v, u) == pytest.approx(s, rel=1e-12)
        assert -1.0 <= s <= 1.0


def test_cosine_zero_vector_rejected():
    with pytest.raises(ValueError, match="zero"):
        resolution_similarity(np.zeros(3), np.ones(3))


def test_cosine_matrix_matches_pairwise_scalar(rng):
    q = rng.standard_normal((3, 4))
    g = rng.standard_normal((5, 4))
    dm = cosine_similarity_matrix(q, g, ids("q", 3), ids("g", 5))
    assert dm.role == "D_r"
    for i in range(3):
        for j in range(5):
            assert dm.values[i, j] == pytest.approx(resolution_similarity(q[i], g[j]), rel=1e-9)


# ---------------------------------------------------------------------------
# identity feature distance


def test_feature_distance_identical_embedding_is_zero():
    e = np.array([[1.0, 2.0, 3.0]])
    dm = feature_distance_matrix(e, e, ids("q", 1), ids("g", 1))
    assert dm.values[0, 0] == pytest.approx(0.0, abs=1e-12)


def test_feature_distance_antipodal_is_two():
    q = np.array([[2.0, 0.0]])
    g = np.array([[-5.0, 0.0]])
    dm = feature_distance_matrix(q, g, ids("q", 1), ids("g", 1))
    assert dm.values[0, 0] == pytest.approx(2.0, rel=1e-12)


def test_feature_distance_matches_double_loop_oracle(rng):
    q = rng.standard_normal((3, 2))
    g = rng.standard_normal((4, 2))
    dm = feature_distance_matrix(q, g, ids("q", 3), ids("g", 4))
    qn = q / np.linalg.norm(q, axis=1, keepdims=True)
    gn = g / np.linalg.norm(g, axis=1, keepdims=True)
    for i in range(3):
        for j in range(4):
            expected = np.sqrt(sum((qn[i, d] - gn[j, d]) ** 2 for d in range(2)))
            assert dm.values[i, j] == pytest.approx(expected, rel=1e-6)
    assert (dm.values >= 0).all()


def test_feature_distance_squared_equals_two_minus_two_cos(rng):
    q = rng.standard_normal((6, 8))
    g = rng.standard_normal((7, 8))
    d = feature_distance_matrix(q, g, ids("q", 6), ids("g", 7))
    c = cosine_similarity_matrix(q, g, ids("q", 6), ids("g", 7))
    np.testing.assert_allclose(d.values ** 2, 2 - 2 * c.values, atol=1e-5)


def test_feature_distance_symmetric_on_same_set(rng):
    e = rng.standard_normal((5, 3))
    dm = feature_distance_matrix(e, e, ids("x", 5), ids("x", 5))
    np.testing.assert_allclose(dm.values, dm.values.T, atol=1e-12)


def test_feature_distance_dim_mismatch():
    with pytest.raises(ValueError, match="dims differ"):
        feature_distance_matrix(np.ones((2, 3)), np.ones((2, 4)), ids("q", 2), ids("g", 2))


# ---------------------------------------------------------------------------
# fusion


def _pair(rng, q=2, g=2):
    df = feature_distance_matrix(rng.standard_normal((q, 4)), rng.standard_normal((g, 4)),
                                 ids("q", q), ids("g", g))
    dr = cosine_similarity_matrix(rng.standard_normal((q, 4)), rng.standard_normal((g, 4)),
                                  ids("q", q), ids("g", g))
    return df, dr


def test_fuse_lambda_zero_is_identity(rng):
    df, dr = _pair(rng)
    fused = fuse(df, dr, FusionConfig(lam=0.0))
    np.testing.assert_array_equal(fused.values, df.values)


def test_fuse_paper_sign_example():
    df = DistanceMatrix(np.array([[1.0]]), "D_f", ["q0"], ["g0"])
    dr = DistanceMatrix(np.array([[1.0]]), "D_r", ["q0"], ["g0"])
    assert fuse(df, dr, FusionConfig(lam=0.1)).values[0, 0] == pytest.approx(0.9)
    assert fuse(df, dr, FusionConfig(lam=0.1, sign="inverted")).values[0, 0] == pytest.approx(1.1)


def test_fuse_full_2x2_entrywise(rng):
    df, dr = _pair(rng)
    fused = fuse(df, dr, FusionConfig(lam=0.25))
    for i in range(2):
        for j in range(2):
            assert fused.values[i, j] == pytest.approx(
                df.values[i, j] - 0.25 * dr.values[i, j], rel=1e-12)


def test_fuse_linear_in_lambda(rng):
    df, dr = _pair(rng, 3, 4)
    l1, l2 = 0.07, 0.21
    a = fuse(df, dr, FusionConfig(lam=l1)).values
    b = fuse(df, dr, FusionConfig(lam=l2)).values
    c = fuse(df, dr, FusionConfig(lam=l1 + l2)).values
    np.testing.assert_allclose(a + b - df.values, c, atol=1e-12)


def test_fuse_increasing_similarity_decreases_distance(rng):
    df, dr = _pair(rng, 1, 3)
    bumped_values = dr.values.copy()
    bumped_values[0, 1] = min(1.0, bumped_values[0, 1] + 0.3)
    assert bumped_values[0, 1] > dr.values[0, 1]
    bumped = DistanceMatrix(bumped_values, "D_r", dr.query_ids, dr.gallery_ids)
    before = fuse(df, dr, FusionConfig(lam=0.1)).values
    after = fuse(df, bumped, FusionConfig(lam=0.1)).values
    assert after[0, 1] < before[0, 1]
    assert after[0, 0] == before[0, 0] and after[0, 2] == before[0, 2]


def test_fuse_rejects_mismatched_ids(rng):
    df, dr = _pair(rng)
    swapped = DistanceMatrix(dr.values, "D_r", dr.query_ids, list(reversed(dr.gallery_ids)))
    with pytest.raises(ValueError, match="orderings"):
        fuse(df, swapped)


def test_fusion_config_validation():
    with pytest.raises(ValueError):
        FusionConfig(lam=-0.1)
    with pytest.raises(ValueError):
        FusionConfig(sign="minus")


# ---------------------------------------------------------------------------
# persistence


def test_distance_matrix_roundtrip(tmp_path, rng):
    df, _ = _pair(rng, 3, 5)
    path = tmp_path / "d.dmx"
    save_distance_matrix(df, path, lam=0.1)
    loaded, header = load_distance_matrix(path)
    assert header["lambda"] == 0.1
    assert loaded.role == "D_f"
    assert loaded.query_ids == df.query_ids
    np.testing.assert_allclose(loaded.values, df.values, rtol=1e-6)


def test_distance_matrix_requires_finite():
    with pytest.raises(ValueError, match="finite"):
        DistanceMatrix(np.array([[np.inf]]), "D_f", ["q"], ["g"])
