import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ampiifd.descriptor import (DescriptorParams, RegionSamples, assemble_piifd, build_histograms,
                                describe, main_orientation, read_descriptors, region_side,
                                sample_region, write_descriptors)
from ampiifd.detector import KeyPoint, detect
from ampiifd.errors import ConfigError, UndescribableError
from ampiifd.image import gaussian_smooth, gradient
from ampiifd.scale_space import EvolutionLevel, ScaleSpaceParams, build_scale_space

from conftest import blob_field

RAW = DescriptorParams(clamp=False)


def make_level(img, sigma=1.6):
    img = np.asarray(img, dtype=np.float64)
    return EvolutionLevel(0, 0, sigma, sigma ** 2 / 2, img, gradient(img))


def kp_at(x, y, mu=1.6):
    return KeyPoint(x, y, 0, 0, 0.0, 1.6, mu, 1.0)


def piifd_oracle(h, c=1.0, clamp=False):
    """Straight-line combination, coded independently of the library."""
    rows = []
    for i in range(4):
        row = []
        for j in range(4):
            for b in range(8):
                here, mirror = h[i][j][b], h[3 - i][3 - j][b]
                row.append(here + mirror if i < 2 else c * abs(here - mirror))
        rows.extend(row)
    v = np.array(rows)
    v = v / math.sqrt(sum(x * x for x in rows))
    if clamp:
        v = np.minimum(v, 0.2)
        v = v / np.linalg.norm(v)
    return v


def test_params_invariants():
    for bad in (dict(combine_scale=0), dict(min_region=3), dict(grid_cells=5), dict(folded_bins=16)):
        with pytest.raises(ConfigError):
            DescriptorParams(**bad)


def test_orientation_vertical_edge():
    img = gaussian_smooth((np.arange(64)[None, :] >= 32).astype(float).repeat(64, 0), 2.0)
    theta = main_orientation(make_level(img), kp_at(32, 32, 3.0))
    assert theta == pytest.approx(0.0, abs=1e-9) or theta == pytest.approx(math.pi, abs=1e-9)


def test_orientation_rotated_edge():
    y, x = np.mgrid[0:64, 0:64].astype(float)
    d = (x - 32) * math.cos(math.pi / 4) + (y - 32) * math.sin(math.pi / 4)
    img = 1.0 / (1.0 + np.exp(-d / 1.5))
    theta = main_orientation(make_level(img), kp_at(32, 32, 3.0))
    assert abs(theta - math.pi / 4) < 0.05


def test_orientation_constant_undescribable():
    with pytest.raises(UndescribableError):
        main_orientation(make_level(np.full((32, 32), 0.5)), kp_at(16, 16))


def test_region_side():
    assert region_side(1.6, DescriptorParams()) == 10
    assert region_side(0.5, DescriptorParams()) == 8
    assert region_side(10.0, DescriptorParams()) == 60


def test_sample_axis_aligned(rng):
    img = rng.random((101, 101))
    level = make_level(img)
    s = sample_region(level, kp_at(50.5, 50.5), 0.0)
    assert s.side == 10 and len(s.u) == 100
    offs = np.arange(10) - 4.5
    np.testing.assert_array_equal(s.u.reshape(10, 10), np.tile(offs, (10, 1)))
    np.testing.assert_array_equal(s.v.reshape(10, 10), np.tile(offs[:, None], (1, 10)))
    # integer sample positions read the gradient field directly
    np.testing.assert_allclose(s.gu.reshape(10, 10), level.grad.gx[46:56, 46:56], atol=1e-15)
    np.testing.assert_allclose(s.gv.reshape(10, 10), level.grad.gy[46:56, 46:56], atol=1e-15)
    assert set(np.unique(s.cell_row)) == {0, 1, 2, 3}


def test_sample_near_border_undescribable(rng):
    level = make_level(rng.random((100, 100)))
    with pytest.raises(UndescribableError):
        sample_region(level, kp_at(2, 2, 40 / 6), 0.3)


def samples(angles_deg, mags, cells=((1, 1),)):
    a = np.radians(np.asarray(angles_deg, dtype=float))
    m = np.asarray(mags, dtype=float)
    n = len(a)
    rows = np.array([cells[i % len(cells)][0] for i in range(n)])
    cols = np.array([cells[i % len(cells)][1] for i in range(n)])
    return RegionSamples(rows, cols, np.zeros(n), np.zeros(n), m * np.cos(a), m * np.sin(a), 8)


def test_histogram_linear_split():
    grid = build_histograms(samples([10.0], [2.0]))
    expect = np.zeros((4, 4, 8))
    expect[1, 1, 0] = 2.0 * (1 - 10 / 22.5)
    expect[1, 1, 1] = 2.0 * (10 / 22.5)
    np.testing.assert_allclose(grid, expect, atol=1e-12)


def test_histogram_fold():
    pair = build_histograms(samples([37.0, 217.0], [1.5, 1.5]))
    single = build_histograms(samples([37.0], [3.0]))
    np.testing.assert_allclose(pair, single, atol=1e-14)
    empty = build_histograms(samples([], []))
    assert not empty.any()


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 40, elements=st.floats(-1, 1)),
       arrays(np.float64, 40, elements=st.floats(-1, 1)))
def test_histogram_gradient_reversal_bitwise(gu, gv):
    rng = np.random.default_rng(0)
    rows, cols = rng.integers(0, 4, 40), rng.integers(0, 4, 40)
    u, v = rng.uniform(-5, 5, 40), rng.uniform(-5, 5, 40)
    a = build_histograms(RegionSamples(rows, cols, u, v, gu, gv, 10))
    b = build_histograms(RegionSamples(rows, cols, u, v, -gu, -gv, 10))
    assert np.array_equal(a, b)


def test_assemble_symmetric_grid():
    rng = np.random.default_rng(3)
    g = rng.random((4, 4, 8))
    g = g + g[::-1, ::-1]
    vec = assemble_piifd(g, RAW).reshape(4, 4, 8)
    assert not vec[2:].any()


def test_assemble_single_cell_oracle():
    g = np.zeros((4, 4, 8))
    g[1, 1] = np.arange(1, 9)
    np.testing.assert_allclose(assemble_piifd(g, RAW), piifd_oracle(g), atol=1e-15)
    g[0, 3, 2] = 5.0
    np.testing.assert_allclose(assemble_piifd(g, DescriptorParams(combine_scale=2.5, clamp=False)),
                               piifd_oracle(g, 2.5), atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 4, 8), elements=st.floats(0, 10)).filter(lambda a: a.sum() > 1e-3),
       st.booleans())
def test_assemble_oracle_and_norm(grid, clamp):
    vec = assemble_piifd(grid, DescriptorParams(clamp=clamp))
    assert abs(np.linalg.norm(vec) - 1) < 1e-9
    np.testing.assert_allclose(vec, piifd_oracle(grid, clamp=clamp), atol=1e-12)
    # the half-turn of the grid yields the same descriptor
    assert np.array_equal(assemble_piifd(grid[::-1, ::-1], DescriptorParams(clamp=clamp)), vec)


def test_assemble_zero_grid():
    with pytest.raises(UndescribableError):
        assemble_piifd(np.zeros((4, 4, 8)))
    with pytest.raises(ValueError):
        assemble_piifd(np.ones((4, 4, 4)))


@pytest.fixture(scope="module")
def blob_features():
    img = blob_field(128, seed=11, count=40)
    space = build_scale_space(img)
    return img, space, detect(space)


def test_describe_empty(blob_features):
    kept, desc = describe(blob_features[1], [])
    assert kept == [] and desc.shape == (0, 128)


def test_describe_invariants(blob_features):
    _, space, kps = blob_features
    kept, desc = describe(space, kps)
    assert len(kept) == len(desc) > 0
    np.testing.assert_allclose(np.linalg.norm(desc, axis=1), 1.0, atol=1e-9)
    assert all(0 <= k.orientation < math.pi for k in kept)


def test_describe_inversion_colocated(blob_features):
    img, space, kps = blob_features
    kept_a, desc_a = describe(space, kps)
    inv_space = build_scale_space(1.0 - img)
    kept_b, desc_b = describe(inv_space, detect(inv_space))
    pairs = []
    for i, a in enumerate(kept_a):
        d = [math.hypot(a.x - b.x, a.y - b.y) for b in kept_b]
        j = int(np.argmin(d))
        if d[j] <= 1.0:
            pairs.append(float(desc_a[i] @ desc_b[j]))
    assert len(pairs) >= 10
    assert np.mean(np.array(pairs) > 0.9) >= 0.8


def test_descriptor_dump_roundtrip(tmp_path, blob_features):
    _, space, kps = blob_features
    kept, desc = describe(space, kps[:5])
    path = tmp_path / "d.bin"
    write_descriptors(kept, desc, path)
    raw = path.read_bytes()
    assert raw[:4] == b"AMPD" and len(raw) == 12 + len(kept) * (64 + 512)
    fields, vecs = read_descriptors(path)
    np.testing.assert_allclose(vecs, desc, atol=1e-7)
    assert fields[0, 0] == kept[0].x and fields[0, 4] == kept[0].orientation
