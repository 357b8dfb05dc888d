import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from detaildepth import (
    BilateralParams,
    CameraModel,
    DepthGrid,
    EmptyInputError,
    SurfaceSpec,
    center_median,
    decompose,
    generate,
)
from detaildepth.decompose import bilateral_base, laplacian_rms

from conftest import random_masked_grid


def brute_bilateral(values, mask, sigma_space, sigma_depth, radius):
    h, w = values.shape
    out = np.full((h, w), np.nan)
    for r in range(h):
        for c in range(w):
            if not mask[r, c]:
                continue
            num = den = 0.0
            for rr in range(max(0, r - radius), min(h, r + radius + 1)):
                for cc in range(max(0, c - radius), min(w, c + radius + 1)):
                    if not mask[rr, cc]:
                        continue
                    ds2 = (rr - r) ** 2 + (cc - c) ** 2
                    wgt = np.exp(-ds2 / (2 * sigma_space ** 2)) * np.exp(
                        -(values[rr, cc] - values[r, c]) ** 2 / (2 * sigma_depth ** 2))
                    num += wgt * values[rr, cc]
                    den += wgt
            out[r, c] = num / den
    return out


@pytest.mark.parametrize(("vals", "expected"), [
    ([1.0, 2.0, 3.0], [-1.0, 0.0, 1.0]),
    ([0.3, 0.7, 0.7, 0.9], [-0.4, 0.0, 0.0, 0.2]),
    ([5.0, 5.0], [0.0, 0.0]),
])
def test_center_median_examples(vals, expected):
    out = center_median(DepthGrid(np.array([vals])))
    np.testing.assert_allclose(out.values[0], expected, atol=1e-15)


def test_center_median_empty():
    with pytest.raises(EmptyInputError):
        center_median(DepthGrid(np.ones((2, 2)), np.zeros((2, 2), bool)))


def test_bilateral_matches_brute_force(backend):
    g = random_masked_grid(3, shape=(12, 10))
    p = BilateralParams(0.2, 3.0, kernel_radius=4)
    out = bilateral_base(g, p)
    ref = brute_bilateral(g.values, g.mask, 3.0, 0.2, 4)
    np.testing.assert_allclose(out.values[g.mask], ref[g.mask], rtol=1e-12)
    assert np.all(np.isnan(out.values[~g.mask]))


def test_bilateral_constant_and_single_pixel(backend):
    g = DepthGrid(np.full((9, 7), 1.7))
    np.testing.assert_array_equal(bilateral_base(g).values, g.values)
    m = np.zeros((5, 5), bool)
    m[2, 3] = True
    single = DepthGrid(np.arange(25.0).reshape(5, 5), m)
    assert bilateral_base(single).values[2, 3] == 13.0


def test_bilateral_preserves_step_edge(backend):
    v = np.full((16, 16), 1.0)
    v[:, 8:] = 1.5
    out = bilateral_base(DepthGrid(v), BilateralParams(0.10, 75.0)).values
    step = out[:, 8] - out[:, 7]
    assert np.all(np.abs(step - 0.5) <= 0.005)
    ref = brute_bilateral(v, np.ones_like(v, bool), 75.0, 0.10, 16)
    np.testing.assert_allclose(out, ref, rtol=1e-12)


def test_default_radius():
    g = DepthGrid(np.zeros((20, 30)))
    assert BilateralParams().radius_for(g) == 30
    assert BilateralParams(sigma_space=2.2).radius_for(g) == 5
    assert BilateralParams(kernel_radius=3).radius_for(g) == 3


@pytest.mark.parametrize("kw", [dict(sigma_depth=0), dict(sigma_space=-1), dict(kernel_radius=0)])
def test_bilateral_params_validation(kw):
    with pytest.raises(ValueError):
        BilateralParams(**kw)


def test_constant_map_gives_zero_parts():
    parts = decompose(DepthGrid(np.full((8, 8), 3.25)))
    assert np.all(parts.base.values == 0.0)
    assert np.all(parts.detail.values == 0.0)


@pytest.mark.parametrize("seed", range(20))
def test_reconstruction_is_exact(seed):
    g = random_masked_grid(seed)
    parts = decompose(g, BilateralParams(0.10, 4.0))
    c = center_median(g)
    recon = parts.base.values + parts.detail.values
    np.testing.assert_array_equal(recon[g.mask], c.values[g.mask])
    np.testing.assert_array_equal(parts.base.mask, g.mask)
    np.testing.assert_array_equal(parts.detail.mask, g.mask)
    v = c.valid_values()
    assert np.partition(v, (v.size - 1) // 2)[(v.size - 1) // 2] == 0.0


def test_snapping_moves_base_by_less_than_an_ulp():
    g = random_masked_grid(11, shape=(40, 40))
    c = center_median(g)
    raw = bilateral_base(c, BilateralParams(0.1, 5.0)).values
    snapped = decompose(g, BilateralParams(0.1, 5.0)).base.values
    m = g.mask
    bound = np.spacing(np.abs(c.values[m]) + np.abs(raw[m]))
    assert np.all(np.abs(raw[m] - snapped[m]) <= bound)


@pytest.mark.parametrize("c", [0.5, -0.25, 1.0, 3.0, 2.0 ** -30])
def test_snapping_keeps_dyadic_values_close(c):
    g = DepthGrid(np.array([[0.0, 0.0, c, 0.0, 0.0]]))
    p = BilateralParams(1.0, 2.0)
    raw = bilateral_base(center_median(g), p).values[0, 2]
    parts = decompose(g, p)
    assert abs(parts.base.values[0, 2] - raw) <= np.spacing(abs(c) + abs(raw))
    assert parts.base.values[0, 2] + parts.detail.values[0, 2] == c


def test_sine_detail_keeps_most_of_the_wrinkle():
    spec = SurfaceSpec("sine", width=64, height=32, amplitude=0.02, period=8)
    g, _ = generate(spec, CameraModel.orthographic(0.005))
    detail = decompose(g, BilateralParams(0.10, 75.0)).detail.valid_values()
    sine_rms = 0.02 / np.sqrt(2)
    assert np.sqrt(np.mean(detail ** 2)) >= 0.8 * sine_rms


def test_masked_values_do_not_leak():
    g = random_masked_grid(5)
    other = g.filled(0.0)
    other[~g.mask] = 123.0
    a = decompose(g, BilateralParams(0.1, 3.0))
    b = decompose(DepthGrid(other, g.mask), BilateralParams(0.1, 3.0))
    np.testing.assert_array_equal(a.base.filled(0), b.base.filled(0))
    np.testing.assert_array_equal(a.detail.filled(0), b.detail.filled(0))


@given(st.integers(0, 10_000), st.floats(-5.0, 5.0))
def test_filter_commutes_with_constant_shift(seed, shift):
    g = random_masked_grid(seed, shape=(8, 9))
    p = BilateralParams(0.1, 3.0)
    a = bilateral_base(g, p).values
    b = bilateral_base(g.with_values(g.values + shift), p).values
    np.testing.assert_allclose(b[g.mask] - shift, a[g.mask], atol=1e-11)


@given(st.integers(0, 10_000))
def test_base_is_smoother_than_input(seed):
    g = random_masked_grid(seed, shape=(10, 10), p_valid=1.0)
    base = bilateral_base(g, BilateralParams(0.5, 2.0))
    assert laplacian_rms(base) < laplacian_rms(g)


@given(st.integers(0, 10_000))
def test_reconstruction_property(seed):
    g = random_masked_grid(seed, shape=(7, 11), p_valid=0.6)
    parts = decompose(g, BilateralParams(0.05, 2.0))
    c = center_median(g).values
    np.testing.assert_array_equal(parts.reconstruct()[g.mask], c[g.mask])
