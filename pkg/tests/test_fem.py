from fractions import Fraction

import numpy as np
import pytest
import scipy.sparse as sp
import sympy

from defectrecon import fem
from defectrecon.grid import SIDES, build_grid, grid_with_nodes


def sympy_local_stiffness(p0, p1, p2):
    """Local P1 stiffness by symbolic integration, independent of the package.

    Basis lam_a is affine with lam_a(p_b) = delta_ab; the entry is the
    integral over the triangle of grad lam_a . grad lam_b.
    """
    x, y = sympy.symbols("x y")
    pts = [tuple(map(sympy.nsimplify, p)) for p in (p0, p1, p2)]
    V = sympy.Matrix([[1, px, py] for px, py in pts])
    lams = []
    for a in range(3):
        e = sympy.Matrix([1 if i == a else 0 for i in range(3)])
        c = V.solve(e)
        lams.append(c[0] + c[1] * x + c[2] * y)
    area = sympy.Rational(1, 2) * abs(V.det())
    K = sympy.zeros(3, 3)
    for a in range(3):
        ga = (sympy.diff(lams[a], x), sympy.diff(lams[a], y))
        for b in range(3):
            gb = (sympy.diff(lams[b], x), sympy.diff(lams[b], y))
            K[a, b] = area * (ga[0] * gb[0] + ga[1] * gb[1])
    return K


def jittered(nx, ny, width=1.0, height=1.0, seed=0, scale=0.25):
    g = build_grid(nx, ny, width=width, height=height)
    rng = np.random.default_rng(seed)
    nodes = g.nodes.copy()
    interior = ((nodes[:, 0] > 0) & (nodes[:, 0] < width)
                & (nodes[:, 1] > 0) & (nodes[:, 1] < height))
    nodes[interior] += (rng.uniform(-scale, scale, (int(interior.sum()), 2))
                        * np.array([g.hx, g.hy]))
    return grid_with_nodes(g, nodes)


def test_canonical_triangle_local_stiffness():
    K = sympy_local_stiffness((0, 0), (1, 0), (0, 1))
    expect = sympy.Rational(1, 2) * sympy.Matrix([[2, -1, -1],
                                                  [-1, 1, 0],
                                                  [-1, 0, 1]])
    assert K == expect


def test_pattern_locals_match_sympy():
    g = build_grid(3, 2, width=1.3, height=0.7)
    pat = fem.stiffness_pattern(g)
    base = pat.base9.reshape(g.n_cells, 3, 3)
    for t in range(g.n_cells):
        p = g.nodes[g.cells[t]]
        K = np.array(sympy_local_stiffness(p[0], p[1], p[2]), dtype=float)
        assert np.allclose(base[t], K, rtol=1e-12, atol=1e-14)


def test_assembled_unit_square():
    # 1x1 grid: the diagonal edge couples two right angles, so the
    # cotangent weights cancel and the (0,0)-(1,1) entry vanishes
    g = build_grid(1, 1)
    A = fem.assemble_stiffness(g, np.ones(g.n_cells)).matrix.toarray()
    expect = np.array([[1.0, -0.5, -0.5, 0.0],
                       [-0.5, 1.0, 0.0, -0.5],
                       [-0.5, 0.0, 1.0, -0.5],
                       [0.0, -0.5, -0.5, 1.0]])
    assert np.array_equal(A, expect)


def test_row_sums_vanish():
    # constants are in the kernel; on a regular grid the gradient components
    # sum exactly and the row sums are bitwise zero
    g = build_grid(4, 4)
    A = fem.assemble_stiffness(g, np.ones(g.n_cells)).matrix
    assert np.abs(A @ np.ones(g.n_nodes)).max() == 0.0
    gj = jittered(6, 5, width=1.3, height=0.9)
    rng = np.random.default_rng(1)
    Aj = fem.assemble_stiffness(gj, rng.uniform(0.1, 2.0, gj.n_cells)).matrix
    assert np.abs(Aj @ np.ones(gj.n_nodes)).max() <= 1e-13


def test_assembled_matrix_bitwise_symmetric():
    gj = jittered(6, 5, width=1.3, height=0.9, seed=2)
    rng = np.random.default_rng(3)
    A = fem.assemble_stiffness(gj, rng.uniform(0.1, 2.0, gj.n_cells)).matrix
    D = A - A.T
    assert D.nnz == 0 or np.abs(D.data).max() == 0.0


def test_assemble_stiffness_validation():
    g = build_grid(3, 3)
    with pytest.raises(ValueError):
        fem.assemble_stiffness(g, np.ones(g.n_cells - 1))
    bad = np.ones(g.n_cells)
    bad[0] = 0.0
    with pytest.raises(ValueError):
        fem.assemble_stiffness(g, bad)
    bad[0] = np.nan
    with pytest.raises(ValueError):
        fem.assemble_stiffness(g, bad)


def test_pattern_and_unit_stiffness_cached():
    g = build_grid(3, 3)
    assert fem.stiffness_pattern(g) is fem.stiffness_pattern(g)
    assert fem.unit_stiffness(g) is fem.unit_stiffness(g)
    g2 = build_grid(3, 3)
    assert fem.stiffness_pattern(g2) is not fem.stiffness_pattern(g)


def test_stiffness_action_signed_coefficient():
    g = build_grid(4, 3, width=1.1, height=0.8)
    rng = np.random.default_rng(4)
    coeff = rng.uniform(-1.0, 1.0, g.n_cells)
    u = rng.standard_normal(g.n_nodes)
    ref = np.zeros(g.n_nodes)
    for t in range(g.n_cells):
        loc = (g.tri_grads[t] @ g.tri_grads[t].T) * g.tri_area[t] * coeff[t]
        ref[g.cells[t]] += loc @ u[g.cells[t]]
    assert np.allclose(fem.stiffness_action(g, coeff, u), ref, atol=1e-13)


# ---------------------------------------------------------------------------
# Neumann loads

def side_flux(g, values):
    """Constant-per-side edge flux from a {side: value} map."""
    flux = fem.zero_edge_flux(g)
    for side, val in values.items():
        flux[g.bedge_side == SIDES.index(side)] = val
    return flux


def test_constant_flux_load_frozen():
    # unit side split in two edges: trapezoid-exact loads (1/4, 1/2, 1/4)
    g = build_grid(2, 1)
    flux = side_flux(g, {"bottom": 1.0, "top": -1.0})
    load = fem.assemble_neumann_load(g, flux)
    bottom = g.side_nodes("bottom")
    assert np.array_equal(load[bottom], np.array([0.25, 0.5, 0.25]))
    assert load.sum() == 0.0


def test_linear_flux_load_matches_exact_integrals():
    # f(x) = x on the bottom side, nx = 4: integrate f * hat_i exactly in
    # rational arithmetic
    g = build_grid(4, 2)
    nodal = np.zeros(g.n_nodes)
    bottom = g.side_nodes("bottom")
    nodal[bottom] = g.nodes[bottom, 0]
    flux = fem.edge_flux_from_nodal(g, nodal)
    # only keep the bottom edges
    flux[g.bedge_side != SIDES.index("bottom")] = 0.0
    load = fem.assemble_neumann_load(g, flux)

    h = Fraction(1, 4)
    xs = [Fraction(i, 4) for i in range(5)]
    expect = [Fraction(0)] * 5
    for e in range(4):
        fa, fb = xs[e], xs[e + 1]
        expect[e] += h * (2 * fa + fb) / 6
        expect[e + 1] += h * (fa + 2 * fb) / 6
    assert np.allclose(load[bottom], [float(v) for v in expect],
                       rtol=1e-15, atol=1e-18)
    off_bottom = np.setdiff1d(np.arange(g.n_nodes), bottom)
    assert np.all(load[off_bottom] == 0.0)


def test_edge_flux_from_nodal_shape_checks():
    g = build_grid(3, 3)
    with pytest.raises(ValueError):
        fem.edge_flux_from_nodal(g, np.ones(4))
    with pytest.raises(ValueError):
        fem.assemble_neumann_load(g, np.ones((3, 2)))


# ---------------------------------------------------------------------------
# gamma functionals

def test_gamma_inner_frozen_values():
    g = build_grid(4, 4)
    ones_t = fem.GammaTrace.from_nodal(g, SIDES, np.ones(g.n_nodes))
    assert fem.gamma_inner(g, SIDES, ones_t, ones_t) == 4.0

    xb = fem.GammaTrace.from_nodal(g, ("bottom",), g.nodes[:, 0])
    ob = fem.GammaTrace.from_nodal(g, ("bottom",), np.ones(g.n_nodes))
    assert fem.gamma_inner(g, ("bottom",), xb, ob) == 0.5
    assert fem.gamma_inner(g, ("bottom",), xb, xb) == pytest.approx(1 / 3,
                                                                    rel=1e-14)


def test_gamma_mass_apply_consistent_with_inner():
    g = build_grid(5, 3, width=1.4, height=0.6)
    sides = ("bottom", "right")
    rng = np.random.default_rng(5)
    n1 = rng.standard_normal(g.n_nodes)
    n2 = rng.standard_normal(g.n_nodes)
    t1 = fem.GammaTrace.from_nodal(g, sides, n1)
    t2 = fem.GammaTrace.from_nodal(g, sides, n2)
    mass = fem.gamma_mass_apply(g, sides, t2)
    assert float(n1 @ mass) == pytest.approx(
        fem.gamma_inner(g, sides, t1, t2), rel=1e-13)
    # mass vector is supported on gamma only
    off = np.setdiff1d(np.arange(g.n_nodes), fem.gamma_node_ids(g, sides))
    assert np.all(mass[off] == 0.0)


def test_gamma_mean_and_length():
    g = build_grid(4, 4, width=2.0, height=1.0)
    assert fem.gamma_length(g, SIDES) == 6.0
    assert fem.gamma_length(g, ("left",)) == 1.0
    const = np.full(g.n_nodes, 3.25)
    assert fem.gamma_mean(g, SIDES, const) == pytest.approx(3.25, rel=1e-15)
    assert fem.gamma_mean(g, ("bottom",), g.nodes[:, 0]) == pytest.approx(
        1.0, rel=1e-14)


def test_gamma_trace_from_nodal():
    g = build_grid(3, 3)
    sides = ("top", "left")
    ids = fem.gamma_node_ids(g, sides)
    full = np.arange(g.n_nodes, dtype=float)
    t_full = fem.GammaTrace.from_nodal(g, sides, full)
    assert np.array_equal(t_full.values, full[ids])
    t_small = fem.GammaTrace.from_nodal(g, sides, full[ids])
    assert np.array_equal(t_small.values, full[ids])
    with pytest.raises(ValueError):
        fem.GammaTrace.from_nodal(g, sides, full[ids][:-1])
    bad = full.copy()
    bad[ids[0]] = np.nan
    with pytest.raises(ValueError):
        fem.GammaTrace.from_nodal(g, sides, bad)


def test_gamma_mismatch_rejected():
    g = build_grid(3, 3)
    t1 = fem.GammaTrace.from_nodal(g, ("bottom",), np.ones(g.n_nodes))
    t2 = fem.GammaTrace.from_nodal(g, ("top",), np.ones(g.n_nodes))
    with pytest.raises(ValueError):
        fem.gamma_inner(g, ("bottom",), t1, t2)
    with pytest.raises(ValueError):
        fem.gamma_inner(g, ("top",), t1, t1)
    with pytest.raises(ValueError):
        fem.gamma_mass_apply(g, ("top",), t1)


# ---------------------------------------------------------------------------
# solvers

def test_patch_test_on_jittered_grid():
    # u = x solves the unit-conductivity Neumann problem with flux n_x; the
    # P1 space contains it, so the solve reproduces it to solver tolerance
    gj = jittered(9, 7, width=1.3, height=0.9, seed=7)
    flux = side_flux(gj, {"right": 1.0, "left": -1.0})
    load = fem.assemble_neumann_load(gj, flux)
    assert load.sum() == 0.0
    A = fem.assemble_stiffness(gj, np.ones(gj.n_cells))
    u = fem.solve_gauged_neumann(A, load, SIDES)
    exact = gj.nodes[:, 0] - fem.gamma_mean(gj, SIDES, gj.nodes[:, 0])
    assert np.abs(u - exact).max() <= 1e-9


def test_solution_is_gauged():
    g = build_grid(8, 8)
    flux = side_flux(g, {"bottom": 1.0, "top": -1.0})
    load = fem.assemble_neumann_load(g, flux)
    A = fem.assemble_stiffness(g, np.ones(g.n_cells))
    gamma = ("bottom", "top")
    u = fem.solve_gauged_neumann(A, load, gamma)
    assert abs(fem.gamma_mean(g, gamma, u)) <= 1e-12 * np.abs(u).max()


def test_unbalanced_load_rejected():
    g = build_grid(4, 4)
    load = fem.assemble_neumann_load(g, side_flux(g, {"bottom": 1.0}))
    A = fem.assemble_stiffness(g, np.ones(g.n_cells))
    with pytest.raises(fem.CompatibilityError):
        fem.solve_gauged_neumann(A, load, SIDES)


def test_zero_rhs_returns_zero():
    g = build_grid(4, 4)
    A = fem.assemble_stiffness(g, np.ones(g.n_cells))
    u = fem.solve_gauged_neumann(A, np.zeros(g.n_nodes), SIDES)
    assert np.array_equal(u, np.zeros(g.n_nodes))


def test_convergence_error_carries_diagnostics():
    g = build_grid(8, 8)
    load = fem.assemble_neumann_load(g, side_flux(g, {"right": 1.0,
                                                      "left": -1.0}))
    A = fem.assemble_stiffness(g, np.ones(g.n_cells))
    with pytest.raises(fem.ConvergenceError) as exc:
        fem.solve_gauged_neumann(A, load, SIDES, rtol=1e-30, maxiter=2)
    assert exc.value.iterations == 2
    assert exc.value.relres is not None and exc.value.relres > 0.0


def test_solve_spd_matches_direct():
    g = build_grid(5, 5)
    A = fem.unit_stiffness(g).matrix + 0.3 * sp.eye(g.n_nodes, format="csr")
    rng = np.random.default_rng(8)
    b = rng.standard_normal(g.n_nodes)
    x = fem.solve_spd(A, b, rtol=1e-12)
    assert np.allclose(A @ x, b, atol=1e-10)
