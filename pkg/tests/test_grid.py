import numpy as np
import pytest

from defectrecon.grid import (GridError, SIDES, build_grid, check_sides,
                              boundary_side_edges, grid_with_nodes, p0_project,
                              side_offsets)


def test_counts_and_node_ordering():
    g = build_grid(3, 2, width=1.5, height=1.0)
    assert g.n_nodes == 4 * 3
    assert g.n_cells == 2 * 3 * 2
    # row-major from the bottom-left corner
    for iy in range(3):
        for ix in range(4):
            nid = g.node_id(ix, iy)
            assert nid == iy * 4 + ix
            assert np.allclose(g.nodes[nid], [ix * 0.5, iy * 0.5])


def test_cells_are_ccw_and_cover_domain():
    g = build_grid(5, 4, width=2.0, height=1.0)
    p = g.nodes[g.cells]
    cross = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
             - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    assert np.all(cross > 0)
    assert np.allclose(g.tri_area, g.hx * g.hy / 2.0, rtol=1e-12)
    assert g.tri_area.sum() == pytest.approx(2.0, rel=1e-14)


def test_hat_gradients_sum_to_zero_bitwise():
    g = build_grid(7, 5)
    total = g.tri_grads.sum(axis=1)
    assert np.all(total == 0.0)


def test_hat_gradients_reproduce_linear_fields():
    # a P1 interpolant of an affine field has that field's exact gradient
    g = build_grid(4, 6, width=1.25, height=0.75)
    for coef in ((1.0, 0.0), (0.0, 1.0), (2.0, -3.0)):
        nodal = coef[0] * g.nodes[:, 0] + coef[1] * g.nodes[:, 1]
        grads = np.einsum("ta,tad->td", nodal[g.cells], g.tri_grads)
        assert np.allclose(grads, coef, atol=1e-13)


def test_lumped_mass():
    g = build_grid(4, 4)
    assert g.lumped_mass.sum() == pytest.approx(1.0, rel=1e-14)
    # interior node: 6 incident triangles, each contributing area/3
    nid = g.node_id(2, 2)
    assert g.lumped_mass[nid] == pytest.approx(6 * g.tri_area[0] / 3, rel=1e-14)
    # the fixed diagonal runs bottom-left to top-right, so those two
    # corners sit in 2 triangles and the other two corners in 1
    area3 = g.tri_area[0] / 3
    assert g.lumped_mass[g.node_id(0, 0)] == pytest.approx(2 * area3, rel=1e-14)
    assert g.lumped_mass[g.node_id(4, 4)] == pytest.approx(2 * area3, rel=1e-14)
    assert g.lumped_mass[g.node_id(4, 0)] == pytest.approx(area3, rel=1e-14)
    assert g.lumped_mass[g.node_id(0, 4)] == pytest.approx(area3, rel=1e-14)


def test_boundary_sides_and_arclengths():
    g = build_grid(3, 2, width=3.0, height=1.0)
    assert len(g.side_nodes("bottom")) == 4
    assert len(g.side_nodes("right")) == 3
    assert set(g.boundary_nodes.tolist()) == {
        nid for s in SIDES for nid in g.side_nodes(s)}
    assert len(g.boundary_nodes) == 2 * (3 + 2)
    for s, length in (("bottom", 3.0), ("top", 3.0), ("left", 1.0),
                      ("right", 1.0)):
        assert g.side_length(s) == length
        arc = g.side_arclengths(s)
        assert arc[0] == 0.0 and arc[-1] == length
        assert np.all(np.diff(arc) > 0)
    # edge lengths sum to the perimeter
    assert g.bedge_len.sum() == pytest.approx(8.0, rel=1e-14)


def test_side_nodes_follow_coordinates():
    g = build_grid(4, 3, width=2.0, height=1.5)
    ids = g.side_nodes("top")
    assert np.all(g.nodes[ids, 1] == 1.5)
    assert np.all(np.diff(g.nodes[ids, 0]) > 0)
    ids = g.side_nodes("left")
    assert np.all(g.nodes[ids, 0] == 0.0)
    assert np.all(np.diff(g.nodes[ids, 1]) > 0)


def test_side_offsets_layout():
    off = side_offsets(2.0, 1.0)
    assert off == {"bottom": 0.0, "right": 2.0, "top": 3.0, "left": 5.0}


def test_check_sides():
    assert check_sides(["top", "bottom"]) == ("bottom", "top")
    assert check_sides(SIDES) == SIDES
    with pytest.raises(GridError):
        check_sides([])
    with pytest.raises(GridError):
        check_sides(["bottom", "bottom"])
    with pytest.raises(GridError):
        check_sides(["north"])


def test_boundary_side_edges():
    g = build_grid(3, 2)
    edges = boundary_side_edges(g, ["bottom"])
    assert len(edges) == 3
    for i, j, label in edges:
        assert label == "bottom"
        assert g.nodes[i, 1] == 0.0 and g.nodes[j, 1] == 0.0
    assert len(boundary_side_edges(g, SIDES)) == 2 * (3 + 2)


def test_build_grid_validation():
    with pytest.raises(GridError):
        build_grid(0, 3)
    with pytest.raises(GridError):
        build_grid(3, 3, width=-1.0)
    with pytest.raises(GridError):
        build_grid(3, 3, height=0.0)


def test_grid_with_nodes_jitter():
    g = build_grid(4, 4)
    rng = np.random.default_rng(0)
    moved = g.nodes.copy()
    interior = np.setdiff1d(np.arange(g.n_nodes), g.boundary_nodes)
    moved[interior] += rng.uniform(-0.05, 0.05, (len(interior), 2))
    gj = grid_with_nodes(g, moved)
    assert np.all(gj.tri_area > 0)
    assert gj.tri_area.sum() == pytest.approx(1.0, rel=1e-12)
    assert np.all(gj.tri_grads.sum(axis=1) == 0.0)
    # boundary structure is inherited
    assert np.array_equal(gj.boundary_nodes, g.boundary_nodes)


def test_grid_with_nodes_rejects_boundary_motion():
    g = build_grid(3, 3)
    moved = g.nodes.copy()
    moved[g.side_nodes("bottom")[1]] += [0.0, 0.01]
    with pytest.raises(GridError):
        grid_with_nodes(g, moved)


def test_grid_with_nodes_rejects_degenerate_cells():
    g = build_grid(3, 3)
    moved = g.nodes.copy()
    interior = g.node_id(1, 1)
    moved[interior] = g.nodes[g.node_id(2, 2)]  # collapse a diagonal
    with pytest.raises(GridError):
        grid_with_nodes(g, moved)


def test_p0_project():
    g = build_grid(3, 4)
    nodal = 2.0 * g.nodes[:, 0] - g.nodes[:, 1] + 0.5
    cellwise = p0_project(g, nodal)
    centroids = g.nodes[g.cells].mean(axis=1)
    expected = 2.0 * centroids[:, 0] - centroids[:, 1] + 0.5
    assert np.allclose(cellwise, expected, atol=1e-14)
    with pytest.raises(GridError):
        p0_project(g, nodal[:-1])


def test_arrays_read_only():
    g = build_grid(3, 3)
    for arr in (g.nodes, g.cells, g.tri_area, g.tri_grads, g.lumped_mass):
        with pytest.raises(ValueError):
            arr[0] = 0
