import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ifenn.mesh import build_mesh, gauss_grid
from ifenn.pixels import (
    ConditioningConfig, PixelGrid, cap_field, enforce_irreversibility, format_grid_text,
    gaussian_kernel, gaussian_smooth, gp_to_pixels, parse_grid_text, pixels_to_gp,
)

vals = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def test_constant_field_maps_to_constant_pixels():
    g = gauss_grid(build_mesh(1.5, 1.0, 3, 2))
    pix = gp_to_pixels(np.full(g.px * g.py, 7.5), g)
    assert pix.values.shape == (4, 6) and np.all(pix.values == 7.5)
    assert pix.h_px == pytest.approx(0.25)


def test_single_element_ordering():
    g = gauss_grid(build_mesh(1.0, 1.0, 1, 1))
    order = np.lexsort((g.gp_coords[:, 0], g.gp_coords[:, 1]))  # sort by y then x
    values = np.empty(4)
    values[order] = [1.0, 2.0, 3.0, 4.0]
    assert gp_to_pixels(values, g).values.tolist() == [[1.0, 2.0], [3.0, 4.0]]


@settings(max_examples=30, deadline=None)
@given(nx=st.integers(1, 6), ny=st.integers(1, 6), data=st.data())
def test_round_trips_are_exact(nx, ny, data):
    g = gauss_grid(build_mesh(0.1 * nx, 0.1 * ny, nx, ny))
    gp = data.draw(arrays(np.float64, (nx * ny, 4), elements=vals))
    assert np.array_equal(pixels_to_gp(gp_to_pixels(gp, g), g), gp)
    pix = data.draw(arrays(np.float64, g.shape, elements=vals))
    assert np.array_equal(gp_to_pixels(pixels_to_gp(pix, g), g).values, pix)


def test_checkerboard_and_ones_survive():
    g = gauss_grid(build_mesh(1.0, 1.0, 4, 4))
    board = (np.indices(g.shape).sum(axis=0) % 2).astype(float)
    assert np.array_equal(gp_to_pixels(pixels_to_gp(board, g), g).values, board)
    assert np.all(pixels_to_gp(np.ones(g.shape), g) == 1.0)


def test_size_mismatches_rejected():
    g = gauss_grid(build_mesh(1.0, 1.0, 2, 2))
    with pytest.raises(ValueError):
        gp_to_pixels(np.zeros(15), g)
    with pytest.raises(ValueError):
        pixels_to_gp(np.zeros((4, 5)), g)
    with pytest.raises(ValueError):
        enforce_irreversibility(PixelGrid(np.zeros((2, 2)), 1.0), PixelGrid(np.zeros((2, 3)), 1.0))


def test_cap_examples():
    pix = PixelGrid(np.array([[-1.0, 0.5e5, 2e5]]), 1.0)
    capped = cap_field(pix, 1e5)
    assert capped.values.tolist() == [[0.0, 0.5e5, 1e5]]
    assert np.array_equal(cap_field(capped, 1e5).values, capped.values)
    low = PixelGrid(np.array([[1.0, 2.0]]), 1.0)
    assert np.array_equal(cap_field(low, 1e5).values, low.values)


def test_gaussian_kernel_normalized_and_impulse_response():
    k = gaussian_kernel(5, 2.0)
    assert k.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(k, k.T) and np.allclose(k, k[::-1])
    imp = np.zeros((11, 11))
    imp[5, 5] = 1.0
    out = gaussian_smooth(PixelGrid(imp, 1.0)).values
    assert np.allclose(out[3:8, 3:8], k, atol=1e-16)
    assert np.allclose(np.delete(out.ravel(), np.ravel_multi_index(np.indices((5, 5)).reshape(2, -1) + 3, out.shape)), 0)


def test_smoothing_preserves_constants_including_edges():
    pix = PixelGrid(np.full((7, 9), 0.37), 1.0)
    assert np.allclose(gaussian_smooth(pix).values, 0.37, rtol=0, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 12)), elements=st.floats(0, 1)))
def test_smoothing_stays_within_bounds(a):
    out = gaussian_smooth(PixelGrid(a, 1.0)).values
    assert out.shape == a.shape
    assert out.max() <= a.max() + 1e-12 and out.min() >= a.min() - 1e-12


def test_smoothing_lowers_narrow_crack_peak():
    band = np.zeros((40, 40))
    band[19:21, :] = 1.0
    peak = gaussian_smooth(PixelGrid(band, 1.0)).values.max()
    assert peak < 1.0


def test_irreversibility_examples():
    prev = PixelGrid(np.array([[0.2]]), 1.0)
    cur = PixelGrid(np.array([[0.1]]), 1.0)
    assert enforce_irreversibility(cur, prev).values.tolist() == [[0.2]]
    zero = PixelGrid(np.zeros((3, 3)), 1.0)
    c = PixelGrid(np.arange(9.0).reshape(3, 3) / 9, 1.0)
    assert np.array_equal(enforce_irreversibility(c, zero).values, c.values)
    once = enforce_irreversibility(c, prev.replace(np.full((3, 3), 0.5)))
    assert np.array_equal(enforce_irreversibility(once, prev.replace(np.full((3, 3), 0.5))).values, once.values)


@settings(max_examples=50, deadline=None)
@given(data=st.data())
def test_cap_and_irreversibility_commute(data):
    shape = data.draw(st.tuples(st.integers(1, 6), st.integers(1, 6)))
    cur = PixelGrid(data.draw(arrays(np.float64, shape, elements=vals)), 1.0)
    prev = cap_field(PixelGrid(data.draw(arrays(np.float64, shape, elements=vals)), 1.0), 1e5)
    a = cap_field(enforce_irreversibility(cur, prev), 1e5)
    b = enforce_irreversibility(cap_field(cur, 1e5), prev)
    assert np.array_equal(a.values, b.values)


def test_conditioning_validation():
    with pytest.raises(ValueError):
        ConditioningConfig(h_cap=0)
    with pytest.raises(ValueError):
        ConditioningConfig(smooth_kernel_size=4)
    with pytest.raises(ValueError):
        ConditioningConfig(smooth_sigma=0)


def test_text_grid_round_trip(rng):
    pix = PixelGrid(rng.normal(size=(3, 4)), 0.0025)
    grid, header = parse_grid_text(format_grid_text(pix, ["field H", "increment 3"]))
    assert np.array_equal(grid.values, pix.values) and grid.h_px == pix.h_px
    assert header == {"field": "H", "increment": "3"}


def test_text_grid_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        parse_grid_text("2 2 1.0\n1 2\n")
    with pytest.raises(ValueError):
        parse_grid_text("1 3 1.0\n1 2\n")
