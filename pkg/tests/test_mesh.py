import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ifenn.mesh import MeshError, NotchSpec, build_mesh, gauss_grid, induced_history_mask, shape_functions


def test_smallest_grid_counts():
    m = build_mesh(1.0, 1.0, 2, 2)
    assert m.n_nodes == 9 and m.n_elem == 4
    assert all(len(m.boundary_sets[n]) == 3 for n in ("bottom", "top", "left", "right"))


def test_snt1_and_adnt_element_counts():
    snt = build_mesh(1.0, 1.0, 200, 200, [NotchSpec((0.0, 0.5), (0.3, 0.5))])
    assert snt.n_elem == 40000
    adnt = build_mesh(1.2, 0.8, 240, 160)
    assert adnt.n_elem == 38400
    assert adnt.elem_size == pytest.approx(0.005, rel=1e-12)


def test_non_square_elements_rejected():
    with pytest.raises(MeshError, match="square"):
        build_mesh(1.0, 1.0, 10, 11)


def test_notch_off_grid_rejected():
    # y = 0.525 sits exactly halfway between grid lines of a 0.05 mesh
    with pytest.raises(MeshError):
        build_mesh(1.0, 1.0, 20, 20, [NotchSpec((0.0, 0.525), (0.3, 0.525))])


def test_connectivity_is_counter_clockwise():
    m = build_mesh(1.0, 1.0, 3, 3)
    xy = m.node_coords[m.elem_connectivity]
    # shoelace area positive for every element
    x, y = xy[..., 0], xy[..., 1]
    area = 0.5 * np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1)
    assert np.allclose(area, m.elem_size**2)


def test_seam_disconnects_elements_across_notch():
    m = build_mesh(1.0, 1.0, 10, 10, [NotchSpec((0.0, 0.5), (0.3, 0.5))])
    assert m.n_nodes == 11 * 11 + 3  # mouth node and two interior nodes; tip shared
    h = m.elem_size
    conn = m.elem_connectivity
    tip = np.flatnonzero(np.all(np.isclose(m.node_coords, [0.3, 0.5]), axis=1))
    assert len(tip) == 1
    for i in range(3):
        below = conn[4 * 10 + i]
        above = conn[5 * 10 + i]
        shared = set(below[[2, 3]]) & set(above[[0, 1]])
        # only the undivided tip node may be common
        assert shared <= {tip[0]}
        if i < 2:
            assert not shared
    # the element pair past the tip is still fully connected
    assert tip[0] in conn[4 * 10 + 3] and tip[0] in conn[5 * 10 + 3]
    assert np.isclose(h, 0.1)


def test_every_element_has_four_distinct_nodes():
    m = build_mesh(1.0, 1.0, 8, 8, [NotchSpec((0.0, 0.5), (0.5, 0.5)), NotchSpec((0.75, 0.0), (0.75, 0.25))])
    assert all(len(set(e)) == 4 for e in m.elem_connectivity)


def test_boundary_sets_cover_boundary_and_touch_only_at_corners():
    m = build_mesh(2.0, 1.0, 6, 3)
    xy = m.node_coords
    on_edge = np.flatnonzero((xy[:, 0] == 0) | (xy[:, 0] == 2.0) | (xy[:, 1] == 0) | (xy[:, 1] == 1.0))
    union = set().union(*[set(v.tolist()) for v in m.boundary_sets.values()])
    assert set(on_edge.tolist()) <= union
    b, t, l, r = (set(m.boundary_sets[k].tolist()) for k in ("bottom", "top", "left", "right"))
    assert not b & t and not l & r
    assert len(b & l) == len(b & r) == len(t & l) == len(t & r) == 1


def test_gauss_grid_sizes():
    assert gauss_grid(build_mesh(1.0, 1.0, 200, 200)).shape == (400, 400)
    assert gauss_grid(build_mesh(1.0, 1.0, 248, 248)).shape == (496, 496)


def test_single_element_gauss_coordinates():
    m = build_mesh(1.0, 1.0, 1, 1)
    g = gauss_grid(m)
    assert g.shape == (2, 2)
    a = 0.5 / math.sqrt(3.0)
    xs = sorted(set(np.round(g.gp_coords[:, 0], 14)))
    assert np.allclose(xs, [0.5 - a, 0.5 + a])


@settings(max_examples=25, deadline=None)
@given(nx=st.integers(1, 12), ny=st.integers(1, 12))
def test_gauss_grid_is_row_major_bijection(nx, ny):
    m = build_mesh(nx * 0.1, ny * 0.1, nx, ny)
    g = gauss_grid(m)
    assert g.px * g.py == m.n_gp
    assert sorted(g.pixel_to_gp.tolist()) == list(range(m.n_gp))
    pts = g.gp_coords[g.pixel_to_gp].reshape(g.py, g.px, 2)
    # row 0 at minimum y; x increases along a row, y along a column
    assert np.all(np.diff(pts[..., 0], axis=1) > 0)
    assert np.all(np.diff(pts[..., 1], axis=0) > 0)
    assert np.allclose(g.h_px, m.elem_size / 2)


def test_refinement_doubles_pixels_and_keeps_boundaries():
    a, b = build_mesh(1.0, 1.0, 5, 5), build_mesh(1.0, 1.0, 10, 10)
    ga, gb = gauss_grid(a), gauss_grid(b)
    assert (gb.px, gb.py) == (2 * ga.px, 2 * ga.py)
    for name in ("bottom", "top", "left", "right"):
        ca = a.node_coords[a.boundary_sets[name]]
        cb = b.node_coords[b.boundary_sets[name]]
        assert {tuple(p) for p in np.round(ca, 12)} <= {tuple(p) for p in np.round(cb, 12)}


def test_shape_functions_partition_of_unity():
    N, dN, w = shape_functions(0.25)
    assert np.allclose(N.sum(axis=1), 1.0)
    assert np.allclose(dN.sum(axis=2), 0.0)
    assert np.isclose(w.sum(), 0.25**2)


def test_induced_history_marks_band_around_notch():
    m = build_mesh(1.0, 1.0, 20, 20, [NotchSpec((0.0, 0.5), (0.3, 0.5), representation="induced-history")])
    assert m.n_nodes == 21 * 21  # no seam for this representation
    mask = induced_history_mask(m)
    g = gauss_grid(m)
    xy = g.gp_coords.reshape(-1, 4, 2)[mask]
    assert mask.any()
    assert np.all(np.abs(xy[:, 1] - 0.5) < m.elem_size)
    assert np.all(xy[:, 0] < 0.3 + m.elem_size)


def test_summary_lists_notch():
    m = build_mesh(1.0, 1.0, 10, 10, [NotchSpec((0.0, 0.5), (0.3, 0.5))])
    s = m.summary()
    assert "elements 10 x 10 = 100" in s and "notch horizontal seam" in s
