"""Structured triangulations of a rectangle, with P1/P0 field helpers.

The grid is a regular nx-by-ny subdivision of [0, width] x [0, height];
every cell is split along its lower-left to upper-right diagonal.  Node
numbering is row-major from the bottom-left corner, so node (ix, iy) has
index iy*(nx+1) + ix.  Nodal fields are plain float arrays of length
``grid.n_nodes``; cell fields have length ``grid.n_cells``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

SIDES = ("bottom", "right", "top", "left")


class GridError(ValueError):
    """Invalid grid construction arguments or malformed node geometry."""


@dataclass(frozen=True, eq=False)
class Grid:
    """Conforming triangulation of a rectangle.

    Attributes
    ----------
    nx, ny : int
        Number of cells per axis (each cell holds two triangles).
    width, height : float
        Rectangle extents; the domain is [0, width] x [0, height].
    nodes : (n_nodes, 2) float array
        Vertex coordinates, row-major from the bottom-left.
    cells : (n_cells, 3) int array
        Vertex indices of each triangle, counterclockwise.
    tri_area : (n_cells,) float array
    tri_grads : (n_cells, 3, 2) float array
        Gradients of the three nodal hat functions on each triangle.
    lumped_mass : (n_nodes,) float array
        Row-sum (vertex) mass, sum of |T|/3 over incident triangles.
    bedge_nodes : (n_bedges, 2) int array
        Boundary edges grouped by side in SIDES order, each side ordered
        by arclength; within an edge the first node comes first.
    bedge_side : (n_bedges,) int array, index into SIDES.
    bedge_len : (n_bedges,) float array
    """

    nx: int
    ny: int
    width: float
    height: float
    nodes: np.ndarray
    cells: np.ndarray
    tri_area: np.ndarray
    tri_grads: np.ndarray
    lumped_mass: np.ndarray
    bedge_nodes: np.ndarray
    bedge_side: np.ndarray
    bedge_len: np.ndarray

    @property
    def n_nodes(self):
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_cells(self):
        return 2 * self.nx * self.ny

    @property
    def hx(self):
        return self.width / self.nx

    @property
    def hy(self):
        return self.height / self.ny

    @cached_property
    def boundary_edges(self):
        """Boundary edges as (node_i, node_j, side_label) tuples."""
        return [
            (int(a), int(b), SIDES[s])
            for (a, b), s in zip(self.bedge_nodes, self.bedge_side)
        ]

    @cached_property
    def boundary_nodes(self):
        """Sorted indices of all boundary nodes."""
        return np.unique(self.bedge_nodes)

    def node_id(self, ix, iy):
        return iy * (self.nx + 1) + ix

    def side_nodes(self, side):
        """Node indices along one side, ordered by arclength."""
        nx, ny = self.nx, self.ny
        if side == "bottom":
            return np.arange(nx + 1)
        if side == "right":
            return nx + np.arange(ny + 1) * (nx + 1)
        if side == "top":
            return ny * (nx + 1) + np.arange(nx + 1)
        if side == "left":
            return np.arange(ny + 1) * (nx + 1)
        raise GridError(f"unknown side label {side!r}")

    def side_length(self, side):
        if side not in SIDES:
            raise GridError(f"unknown side label {side!r}")
        return self.width if side in ("bottom", "top") else self.height

    def side_arclengths(self, side):
        """Arclength (local to the side, from its canonical start) of the
        nodes returned by side_nodes."""
        ids = self.side_nodes(side)
        if side in ("bottom", "top"):
            return self.nodes[ids, 0].copy()
        return self.nodes[ids, 1].copy()


def _geometry(nodes, cells):
    p0 = nodes[cells[:, 0]]
    p1 = nodes[cells[:, 1]]
    p2 = nodes[cells[:, 2]]
    e01 = p1 - p0
    e02 = p2 - p0
    twice_area = e01[:, 0] * e02[:, 1] - e01[:, 1] * e02[:, 0]
    if np.any(twice_area <= 0):
        raise GridError("triangulation has a non-positive triangle area")
    area = 0.5 * twice_area
    grads = np.empty((len(cells), 3, 2))
    # grad of hat_a is the rotated opposite edge over twice the area; the
    # third gradient is taken as minus the other two so each triangle's
    # gradients sum to exactly zero (assembled row sums then vanish
    # bitwise, keeping constants exactly in the stiffness kernel).
    e12 = p2 - p1
    grads[:, 0, 0] = -e12[:, 1] / twice_area
    grads[:, 0, 1] = e12[:, 0] / twice_area
    grads[:, 1, 0] = e02[:, 1] / twice_area
    grads[:, 1, 1] = -e02[:, 0] / twice_area
    grads[:, 2, :] = -(grads[:, 0, :] + grads[:, 1, :])
    return area, grads


def build_grid(nx, ny, width=1.0, height=1.0):
    """Build the structured triangulation.

    Each of the nx*ny rectangular cells is split into a lower triangle
    (n00, n10, n11) and an upper triangle (n00, n11, n01), both
    counterclockwise.
    """
    if not (isinstance(nx, (int, np.integer)) and isinstance(ny, (int, np.integer))):
        raise GridError("nx and ny must be integers")
    if nx < 1 or ny < 1:
        raise GridError(f"nx and ny must be >= 1, got nx={nx}, ny={ny}")
    width = float(width)
    height = float(height)
    if not (np.isfinite(width) and np.isfinite(height)) or width <= 0 or height <= 0:
        raise GridError(f"width and height must be positive, got {width}, {height}")

    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    xg, yg = np.meshgrid(xs, ys)
    nodes = np.column_stack([xg.ravel(), yg.ravel()])

    iy, ix = np.divmod(np.arange(nx * ny), nx)
    n00 = iy * (nx + 1) + ix
    n10 = n00 + 1
    n01 = n00 + (nx + 1)
    n11 = n01 + 1
    cells = np.empty((2 * nx * ny, 3), dtype=np.int64)
    cells[0::2, 0] = n00
    cells[0::2, 1] = n10
    cells[0::2, 2] = n11
    cells[1::2, 0] = n00
    cells[1::2, 1] = n11
    cells[1::2, 2] = n01

    return _finish_grid(nx, ny, width, height, nodes, cells)


def _boundary_structure(nx, ny):
    segs = []
    bottom = np.arange(nx + 1)
    right = nx + np.arange(ny + 1) * (nx + 1)
    top = ny * (nx + 1) + np.arange(nx + 1)
    left = np.arange(ny + 1) * (nx + 1)
    for s, ids in enumerate((bottom, right, top, left)):
        e = np.column_stack([ids[:-1], ids[1:]])
        segs.append((e, np.full(len(e), s, dtype=np.int8)))
    bedge_nodes = np.concatenate([e for e, _ in segs])
    bedge_side = np.concatenate([s for _, s in segs])
    return bedge_nodes, bedge_side


def _finish_grid(nx, ny, width, height, nodes, cells):
    area, grads = _geometry(nodes, cells)
    lumped = np.bincount(cells.ravel(), weights=np.repeat(area / 3.0, 3),
                         minlength=len(nodes))
    bedge_nodes, bedge_side = _boundary_structure(nx, ny)
    d = nodes[bedge_nodes[:, 1]] - nodes[bedge_nodes[:, 0]]
    bedge_len = np.hypot(d[:, 0], d[:, 1])
    for arr in (nodes, cells, area, grads, lumped, bedge_nodes, bedge_side, bedge_len):
        arr.setflags(write=False)
    return Grid(int(nx), int(ny), width, height, nodes, cells, area, grads,
                lumped, bedge_nodes, bedge_side, bedge_len)


def grid_with_nodes(grid, nodes):
    """Same connectivity as ``grid`` with moved interior nodes.

    Boundary nodes must keep their original positions (side arclengths and
    edge structure are reused).  Raises GridError if a triangle flips.
    """
    nodes = np.asarray(nodes, dtype=float)
    if nodes.shape != grid.nodes.shape:
        raise GridError("node array shape mismatch")
    bnd = grid.boundary_nodes
    if not np.array_equal(nodes[bnd], grid.nodes[bnd]):
        raise GridError("boundary nodes must not move")
    return _finish_grid(grid.nx, grid.ny, grid.width, grid.height,
                        nodes.copy(), grid.cells)


def p0_project(grid, nodal):
    """L2 projection of a P1 nodal field onto piecewise constants.

    On a triangle the projection is the mean of the three vertex values.
    """
    nodal = np.asarray(nodal, dtype=float)
    if nodal.shape != (grid.n_nodes,):
        raise GridError(f"nodal field must have shape ({grid.n_nodes},)")
    return nodal[grid.cells].mean(axis=1)


def side_offsets(width, height):
    """Start arclength of each side in the global boundary coordinate.

    Sides are laid out in canonical order (bottom, right, top, left);
    within a side the local coordinate increases with x (bottom/top) or
    with y (right/left).
    """
    return {"bottom": 0.0, "right": width, "top": width + height,
            "left": 2.0 * width + height}


def check_sides(sides):
    """Normalize a side-label collection to a canonical tuple."""
    sides = tuple(sides)
    if len(sides) == 0:
        raise GridError("side set must be non-empty")
    for s in sides:
        if s not in SIDES:
            raise GridError(f"unknown side label {s!r}")
    if len(set(sides)) != len(sides):
        raise GridError(f"duplicate side label in {sides!r}")
    return tuple(s for s in SIDES if s in sides)


def boundary_side_edges(grid, sides):
    """Boundary edges lying on the requested sides.

    Returns (node_i, node_j, side_label) tuples in canonical side order,
    arclength-ordered within each side.
    """
    sides = check_sides(sides)
    want = {SIDES.index(s) for s in sides}
    return [e for e, s in zip(grid.boundary_edges, grid.bedge_side) if s in want]
