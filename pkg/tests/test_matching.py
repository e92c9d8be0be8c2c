import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ampiifd.detector import KeyPoint
from ampiifd.errors import ConfigError, NoModelError
from ampiifd.matching import (MatchPair, MatchParams, bbf_query, bilateral_match, build_index,
                              orientation_difference, orientation_filter, ransac, ransac_points,
                              write_matches)
from ampiifd.transform import estimate


def unit_vectors(rng, n, d=128):
    v = rng.normal(size=(n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def brute_knn2(data, q):
    d = np.sqrt(((data - q) ** 2).sum(axis=1))
    order = np.argsort(d, kind="stable")[:2]
    return order, d[order]


def test_params_invariants():
    for bad in (dict(bin_width=7.0), dict(bin_width=0), dict(ransac_threshold=0),
                dict(bbf_max_checks=0), dict(ransac_iterations=0), dict(ratio_threshold=-1)):
        with pytest.raises(ConfigError):
            MatchParams(**bad)


def test_single_descriptor_index(rng):
    v = unit_vectors(rng, 1)
    idx = build_index(v)
    assert idx.n_leaves == 1
    nb = bbf_query(idx, v[0])
    assert nb.nearest == 0 and nb.nearest_distance == 0 and nb.second == -1


def test_index_contains_everything(rng):
    v = unit_vectors(rng, 300)
    idx = build_index(v)
    assert sorted(idx.perm.tolist()) == list(range(300))
    assert all(idx.end[i] - idx.start[i] <= 16 for i in range(len(idx.split_dim)) if idx.split_dim[i] < 0)


def test_self_query(rng):
    v = unit_vectors(rng, 100)
    idx = build_index(v)
    got, dist, _ = idx.query2(v, idx.n_leaves)
    np.testing.assert_array_equal(got[:, 0], np.arange(100))
    assert not dist[:, 0].any()


def test_duplicates(rng):
    v = unit_vectors(rng, 50)
    v[17] = v[3]
    nb = bbf_query(build_index(v), v[3], 1000)
    assert {nb.nearest, nb.second} == {3, 17}
    assert nb.nearest_distance == 0 and nb.second_distance == 0


def test_bbf_exhaustive_oracle(rng):
    data = unit_vectors(rng, 500)
    queries = unit_vectors(rng, 100)
    idx = build_index(data)
    got, dist, _ = idx.query2(queries, idx.n_leaves)
    for q in range(100):
        order, d = brute_knn2(data, queries[q])
        np.testing.assert_array_equal(got[q], order)
        np.testing.assert_allclose(dist[q], d, rtol=0, atol=1e-12)


def test_bbf_limited_checks_lower_bounded(rng):
    centers = unit_vectors(rng, 5)
    data = np.repeat(centers, 40, axis=0) + 0.05 * rng.normal(size=(200, 128))
    queries = centers + 0.05 * rng.normal(size=(5, 128))
    idx = build_index(data)
    got, dist, checks = idx.query2(queries, 1)
    for q in range(5):
        _, d = brute_knn2(data, queries[q])
        assert got[q, 0] >= 0 and got[q, 1] >= 0
        assert dist[q, 0] >= d[0] - 1e-12 and dist[q, 1] >= d[1] - 1e-12
        np.testing.assert_allclose(dist[q], np.linalg.norm(data[got[q]] - queries[q], axis=1), atol=1e-12)
    assert (checks <= 1).all()


def test_identity_matching(rng):
    v = unit_vectors(rng, 40)
    matches = bilateral_match(v, v)
    assert [(m.ref_index, m.sen_index) for m in matches] == [(i, i) for i in range(40)]
    assert all(m.distance == 0 for m in matches)


def test_mutuality_excludes():
    a, b, c = np.zeros(128), np.zeros(128), np.zeros(128)
    b[0], c[0] = 2.0, 2.5
    matches = bilateral_match(np.array([a, c]), np.array([b]))
    assert [(m.ref_index, m.sen_index) for m in matches] == [(1, 0)]


def test_far_clusters():
    ref = np.zeros((2, 128))
    ref[1, 0] = 100.0
    sen = ref.copy()
    sen[:, 1] = 0.1
    matches = bilateral_match(ref, sen)
    assert sorted((m.ref_index, m.sen_index) for m in matches) == [(0, 0), (1, 1)]


def test_ratio_test_toggle():
    ref = np.zeros((1, 128))
    sen = np.zeros((2, 128))
    sen[0, 0], sen[1, 0] = 1.0, -1.05
    assert bilateral_match(ref, sen) == []
    loose = bilateral_match(ref, sen, MatchParams(ratio_threshold=None))
    assert [(m.ref_index, m.sen_index) for m in loose] == [(0, 0)]


def test_mutuality_property(rng):
    ref, sen = unit_vectors(rng, 120), unit_vectors(rng, 90)
    params = MatchParams(bbf_max_checks=10 ** 6, ratio_threshold=None)
    d = np.linalg.norm(ref[:, None] - sen[None], axis=2)
    for m in bilateral_match(ref, sen, params):
        assert np.argmin(d[m.ref_index]) == m.sen_index
        assert np.argmin(d[:, m.sen_index]) == m.ref_index
        assert m.distance == pytest.approx(d[m.ref_index, m.sen_index], abs=1e-12)


def test_delta_phi_from_orientations():
    ref, sen = np.eye(3, 128), np.eye(3, 128)
    m = bilateral_match(ref, sen, orient_ref=[0.1, 0.5, 3.0], orient_sen=[0.3, 0.5, 0.2])
    dphi = [x.delta_phi for x in m]
    np.testing.assert_allclose(dphi, np.mod(np.degrees([0.1 - 0.3, 0.0, 3.0 - 0.2]), 360))
    assert all(0 <= x < 360 for x in dphi)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, np.pi - 1e-9), st.floats(0, np.pi - 1e-9), st.floats(-10, 10))
def test_delta_phi_common_shift(a, b, theta):
    base = float(orientation_difference(a, b))
    shifted = float(orientation_difference(a + theta, b + theta))
    circ = abs((base - shifted + 180) % 360 - 180)
    assert 0 <= shifted < 360 and circ < 1e-9


def mp(i, dphi):
    return MatchPair(i, i, 0.0, dphi)


def test_orientation_filter_planted():
    rng = np.random.default_rng(5)
    inliers = [mp(i, 30 + rng.uniform(-1, 1)) for i in range(20)]
    outliers = [mp(20, 100.0), mp(21, 200.0), mp(22, 300.0)]
    kept = orientation_filter(inliers + outliers)
    assert kept == inliers


def test_orientation_filter_small_cases():
    assert orientation_filter([mp(0, 123.0)]) == [mp(0, 123.0)]
    both = [mp(0, 4.9), mp(1, 5.1)]
    assert orientation_filter(both) == both
    assert len(orientation_filter(both, MatchParams(include_adjacent_bins=False))) == 1
    with pytest.raises(ValueError):
        orientation_filter([])


def test_orientation_filter_wraps_around():
    ms = [mp(0, 359.0), mp(1, 358.0), mp(2, 1.0), mp(3, 180.0)]
    assert orientation_filter(ms) == ms[:3]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 359.999), min_size=1, max_size=40))
def test_orientation_filter_never_grows(values):
    ms = [mp(i, v) for i, v in enumerate(values)]
    kept = orientation_filter(ms)
    assert 1 <= len(kept) <= len(ms)


def planted_affine(rng, n=100, outlier_frac=0.4, noise=0.0):
    A = np.array([[1.1, 0.2, 14.0], [-0.15, 0.95, -7.0], [0, 0, 1]])
    src = rng.uniform(0, 500, (n, 2))
    dst = src @ A[:2, :2].T + A[:2, 2] + noise * rng.normal(size=(n, 2))
    n_out = int(round(outlier_frac * n))
    out_idx = rng.choice(n, n_out, replace=False)
    dst[out_idx] = rng.uniform(0, 500, (n_out, 2))
    truth = np.ones(n, bool)
    truth[out_idx] = False
    # a random point rarely lands inside the threshold by chance; drop such draws
    err = np.hypot(*(src @ A[:2, :2].T + A[:2, 2] - dst).T)
    truth |= err < 3.0
    return A, src, dst, truth


def as_matches(src, dst):
    kp_sen = [KeyPoint(float(x), float(y), 0, 0, 0.0, 1.6, 1.6, 1.0) for x, y in src]
    kp_ref = [KeyPoint(float(x), float(y), 0, 0, 0.0, 1.6, 1.6, 1.0) for x, y in dst]
    return [MatchPair(i, i, 0.0, 0.0) for i in range(len(src))], kp_ref, kp_sen


def test_ransac_exact_no_outliers(rng):
    A, src, dst, _ = planted_affine(rng, 50, 0.0)
    matches, kr, ks = as_matches(src, dst)
    inl, model = ransac(matches, kr, ks, "affine")
    assert len(inl) == 50
    np.testing.assert_allclose(model.matrix, A, atol=1e-9)


def test_ransac_plant_and_recover(rng):
    A, src, dst, truth = planted_affine(rng, 100, 0.4, noise=0.3)
    mask, model = ransac_points(src, dst, "affine", MatchParams())
    np.testing.assert_array_equal(mask, truth)
    refit = estimate("affine", src[truth], dst[truth])
    np.testing.assert_allclose(model.matrix, refit.matrix, atol=1e-6)
    mask2, model2 = ransac_points(src, dst, "affine", MatchParams())
    assert np.array_equal(mask, mask2) and np.array_equal(model.matrix, model2.matrix)


def test_ransac_too_few():
    matches, kr, ks = as_matches(np.array([[1.0, 2.0]]), np.array([[3.0, 4.0]]))
    with pytest.raises(NoModelError, match="too few matches"):
        ransac(matches, kr, ks, "similarity")


def test_ransac_no_consensus(rng):
    # collinear points admit no affine fit
    src = np.column_stack([np.arange(10.0), np.arange(10.0)])
    with pytest.raises(NoModelError, match="no model with sufficient inliers"):
        ransac_points(src, src, "affine", MatchParams(ransac_iterations=50))


def test_write_matches(tmp_path):
    matches, kr, ks = as_matches(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[5.0, 6.0], [7.0, 8.5]]))
    path = tmp_path / "m.txt"
    write_matches(path, {"initial": matches, "oriented": matches[:1], "ransac": []}, kr, ks)
    lines = path.read_text().splitlines()
    assert len(lines) == 3
    assert lines[1].split() == ["7.0", "8.5", "3.0", "4.0", "0.0", "0.0", "initial"]
    assert lines[2].endswith("oriented")
