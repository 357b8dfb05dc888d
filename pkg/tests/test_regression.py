import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from detaildepth import (
    DepthBinning,
    DepthGrid,
    NotNormalizedError,
    OutOfRangeError,
    VolumeHeatmap,
    integral_depthmap,
    integral_joint,
)
from detaildepth.regression import (
    DEFAULT_JOINTS,
    DEFAULT_PARTS,
    encode_depth_soft,
    integral_joints,
    softmax_normalize,
)

B = DepthBinning()


def test_published_defaults():
    assert (B.z_min, B.z_max, B.bins) == (-0.6, 0.6, 19)
    assert DEFAULT_JOINTS == 16 and DEFAULT_PARTS == 14


def test_centres():
    c = B.centers()
    np.testing.assert_allclose(c, -0.6 + (np.arange(19) + 0.5) * 1.2 / 19, atol=1e-15)
    assert c[9] == 0.0
    np.testing.assert_array_equal(c, -c[::-1])


@pytest.mark.parametrize("kw", [dict(z_min=0.6, z_max=-0.6), dict(bins=0)])
def test_binning_validation(kw):
    with pytest.raises(ValueError):
        DepthBinning(**kw)


def test_heatmap_validation():
    with pytest.raises(ValueError):
        VolumeHeatmap(-np.ones((2, 2, 3)))
    with pytest.raises(ValueError):
        VolumeHeatmap(np.full((2, 2, 3), np.inf), raw=True)
    hm = VolumeHeatmap(np.ones((2, 3, 4)))
    assert (hm.channels, hm.height, hm.width, hm.depth_bins) == (1, 2, 3, 4)


def test_softmax_examples():
    flat = softmax_normalize(VolumeHeatmap(np.zeros((1, 2, 2, 3)), raw=True))
    np.testing.assert_allclose(flat.values, 1 / 12)
    spike = np.zeros((1, 2, 2, 3))
    spike[0, 1, 0, 2] = 1000.0
    assert softmax_normalize(VolumeHeatmap(spike, raw=True)).values[0, 1, 0, 2] >= 1 - 1e-9
    pair = softmax_normalize(VolumeHeatmap(np.array([[[[0.0, np.log(2.0)]]]]), raw=True))
    np.testing.assert_allclose(pair.values.ravel(), [1 / 3, 2 / 3], rtol=1e-15)


def test_one_hot_joint():
    p = np.zeros((32, 32, 19))
    p[10, 20, 9] = 1.0
    assert integral_joint(p) == (20.0, 10.0, 0.0)


def test_uniform_bins_give_zero():
    p = np.zeros((4, 4, 19))
    p[1, 2, :] = 1 / 19
    _, _, z = integral_joint(p, tol=1e-12)
    assert z == 0.0
    hm = VolumeHeatmap(np.full((5, 6, 19), 1 / 19))
    assert np.all(integral_depthmap(hm).values == 0.0)


def test_two_bin_mixture():
    p = np.zeros((2, 2, 19))
    p[0, 0, 0] = 0.25
    p[1, 1, 18] = 0.75
    w = 1.2 / 19
    x, y, z = integral_joint(p)
    assert z == pytest.approx(0.25 * (-0.6 + 0.5 * w) + 0.75 * (0.6 - 0.5 * w), abs=1e-15)
    assert (x, y) == (0.75, 0.75)
    brute = sum(p[r, c, k] * B.centers()[k] for r in range(2) for c in range(2) for k in range(19))
    assert z == pytest.approx(brute, abs=1e-15)


def test_unnormalised_joint_rejected():
    with pytest.raises(NotNormalizedError):
        integral_joint(np.full((2, 2, 19), 0.1))


def test_integral_joints_stack(rng):
    raw = VolumeHeatmap(rng.standard_normal((3, 8, 8, 19)), raw=True)
    hm = softmax_normalize(raw)
    out = integral_joints(hm)
    assert out.shape == (3, 3)
    for k in range(3):
        np.testing.assert_allclose(out[k], integral_joint(hm.channel(k)))


@pytest.mark.parametrize("k", range(19))
def test_one_hot_depthmap(k):
    v = np.zeros((3, 4, 19))
    v[..., k] = 1.0
    out = integral_depthmap(VolumeHeatmap(v))
    assert np.all(out.values == B.centers()[k])


def test_depthmap_matches_brute_force(rng):
    hm = softmax_normalize(VolumeHeatmap(rng.standard_normal((1, 6, 5, 19)), raw=True))
    # normalise per pixel, not per channel
    v = hm.values[0] / hm.values[0].sum(axis=2, keepdims=True)
    out = integral_depthmap(VolumeHeatmap(v))
    c = B.centers()
    for r in range(6):
        for col in range(5):
            assert out.values[r, col] == pytest.approx(sum(v[r, col, k] * c[k] for k in range(19)), abs=1e-12)


def test_encode_examples():
    c = B.centers()
    hm = encode_depth_soft(DepthGrid(np.array([[c[4], 0.5 * (c[6] + c[7])]])))
    v = hm.values[0, 0]
    np.testing.assert_array_equal(v[0], np.eye(19)[4])
    np.testing.assert_allclose(v[1, 6:8], [0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(v.sum(axis=1), 1.0)


def test_encode_out_of_range_names_pixel():
    g = DepthGrid(np.array([[0.0, 0.1], [0.7, 0.0]]))
    with pytest.raises(OutOfRangeError, match=r"\(1, 0\)"):
        encode_depth_soft(g)


def test_encode_masked_pixels_stay_normalised():
    g = DepthGrid(np.array([[0.3, 50.0]]), np.array([[True, False]]))
    hm = encode_depth_soft(g)
    np.testing.assert_allclose(hm.values[0].sum(axis=2), 1.0)


def test_round_trip_seeded(rng):
    c = B.centers()
    for _ in range(10):
        g = DepthGrid(rng.uniform(c[0], c[-1], size=(32, 32)))
        back = integral_depthmap(encode_depth_soft(g))
        assert np.max(np.abs(back.values - g.values)) < 1e-6


def test_round_trip_clamps_outside_centre_range():
    c = B.centers()
    g = DepthGrid(np.array([[-0.6, 0.6, c[0] - 0.01]]))
    back = integral_depthmap(encode_depth_soft(g)).values[0]
    np.testing.assert_allclose(back, [c[0], c[-1], c[0]])


@given(st.lists(st.floats(-0.55, 0.55), min_size=1, max_size=30))
def test_round_trip_property(vals):
    c = B.centers()
    g = DepthGrid(np.array([vals]))
    back = integral_depthmap(encode_depth_soft(g)).values[0]
    np.testing.assert_allclose(back, np.clip(vals, c[0], c[-1]), atol=1e-6)


@given(st.integers(0, 10_000), st.floats(-50, 50))
def test_softmax_shift_invariance(seed, shift):
    v = np.random.default_rng(seed).standard_normal((2, 3, 3, 5))
    a = softmax_normalize(VolumeHeatmap(v, raw=True)).values
    b = softmax_normalize(VolumeHeatmap(v + shift, raw=True)).values
    np.testing.assert_allclose(a, b, atol=1e-9)
    np.testing.assert_allclose(a.reshape(2, -1).sum(axis=1), 1.0, atol=1e-12)


@given(st.integers(0, 10_000), st.floats(0.0, 1.0))
def test_expectation_is_linear(seed, t):
    r = np.random.default_rng(seed)
    p = softmax_normalize(VolumeHeatmap(r.standard_normal((1, 4, 5, 19)), raw=True)).values[0]
    q = softmax_normalize(VolumeHeatmap(r.standard_normal((1, 4, 5, 19)), raw=True)).values[0]
    mix = integral_joint(t * p + (1 - t) * q)
    lin = t * np.array(integral_joint(p)) + (1 - t) * np.array(integral_joint(q))
    np.testing.assert_allclose(mix, lin, atol=1e-9)
