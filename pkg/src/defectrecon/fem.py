"""P1 finite-element operators on triangulated rectangles.

Assembles weighted-Laplacian stiffness matrices, Neumann boundary loads,
and boundary (trace) functionals, and solves the singular pure-Neumann
systems.  The stiffness kernel contains the constants, so systems are
solved by conjugate gradients restricted to the zero-mean subspace and
the solution is afterwards shifted to have zero trapezoid mean on the
accessible boundary part gamma (the gauge).

Sparse structure is precomputed once per grid and cached by grid
identity; reassembling with a new coefficient only rewrites the data
array, in a fixed order, so assembly is deterministic and the matrix is
bitwise symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache, cached_property

import numpy as np
import scipy.sparse as sp

from . import kernels
from .grid import check_sides, SIDES

CG_RTOL = 1e-10
COMPAT_RTOL = 1e-8


class CompatibilityError(ValueError):
    """Right-hand side is not discretely balanced (sum too far from zero)."""


class ConvergenceError(RuntimeError):
    """Iterative solver hit its iteration cap; carries the final residual."""

    def __init__(self, msg, relres=None, iterations=None):
        super().__init__(msg)
        self.relres = relres
        self.iterations = iterations


@dataclass(frozen=True, eq=False)
class StiffnessPattern:
    """Fixed sparse structure shared by all assemblies on one grid."""

    grid: object
    indptr: np.ndarray
    indices: np.ndarray
    slots: np.ndarray      # data position of each of the 9*n_cells local entries
    tri9: np.ndarray       # triangle index of each local entry
    base9: np.ndarray      # unit-coefficient local values |T| (grad_a . grad_b)
    diag_slots: np.ndarray

    @property
    def nnz(self):
        return len(self.indices)


@lru_cache(maxsize=None)
def stiffness_pattern(grid):
    cells = grid.cells
    n = grid.n_nodes
    m = grid.n_cells
    # local matrices; products commute so K[t,a,b] == K[t,b,a] bitwise
    local = np.einsum("tad,tbd->tab", grid.tri_grads, grid.tri_grads)
    local = local * grid.tri_area[:, None, None]
    rows = np.repeat(cells, 3, axis=1).ravel()
    cols = np.tile(cells, (1, 3)).ravel()
    keys = rows * np.int64(n) + cols
    ukeys, slots = np.unique(keys, return_inverse=True)
    indices = (ukeys % n).astype(np.int64)
    counts = np.bincount((ukeys // n).astype(np.int64), minlength=n)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    diag_slots = np.searchsorted(ukeys, np.arange(n, dtype=np.int64) * (n + 1))
    return StiffnessPattern(grid, indptr, indices, slots.astype(np.int64),
                            np.repeat(np.arange(m, dtype=np.int64), 9),
                            local.ravel(), diag_slots)


class SymmetricSparseOperator:
    """CSR-backed symmetric operator tied to a StiffnessPattern."""

    def __init__(self, pattern, data):
        self.pattern = pattern
        self.data = data

    @property
    def grid(self):
        return self.pattern.grid

    @property
    def dimension(self):
        return self.pattern.grid.n_nodes

    @cached_property
    def matrix(self):
        n = self.dimension
        return sp.csr_matrix((self.data, self.pattern.indices, self.pattern.indptr),
                             shape=(n, n))

    @property
    def diagonal(self):
        return self.data[self.pattern.diag_slots]

    def matvec(self, v):
        return self.matrix @ v

    def quad(self, u, w=None):
        """u^T A w (w defaults to u)."""
        return float(u @ (self.matrix @ (u if w is None else w)))


def assemble_stiffness(grid, coeff):
    """Weighted stiffness A_ij = sum_T coeff_T int_T grad(hat_i).grad(hat_j)."""
    coeff = np.asarray(coeff, dtype=float)
    if coeff.shape != (grid.n_cells,):
        raise ValueError(f"coefficient must have shape ({grid.n_cells},)")
    if not np.all(np.isfinite(coeff)) or np.any(coeff <= 0.0):
        raise ValueError("coefficient must be finite and strictly positive")
    pat = stiffness_pattern(grid)
    w = coeff[pat.tri9] * pat.base9
    data = kernels.accumulate(pat.slots, w, pat.nnz)
    return SymmetricSparseOperator(pat, data)


@lru_cache(maxsize=None)
def unit_stiffness(grid):
    """Coefficient-1 stiffness, cached (used by regularizers every iteration)."""
    return assemble_stiffness(grid, np.ones(grid.n_cells))


def stiffness_action(grid, coeff, u):
    """Apply the weighted stiffness without assembling it.

    The coefficient may take any sign here (used for derivative right-hand
    sides built from psi' weights).
    """
    coeff = np.asarray(coeff, dtype=float)
    u = np.asarray(u, dtype=float)
    if coeff.shape != (grid.n_cells,) or u.shape != (grid.n_nodes,):
        raise ValueError("shape mismatch in stiffness_action")
    return kernels.stiffness_action(grid.cells, grid.tri_grads, grid.tri_area,
                                    coeff, u, grid.n_nodes)


# ---------------------------------------------------------------------------
# boundary flux and loads

def zero_edge_flux(grid):
    """Per-boundary-edge linear flux density, all zero: shape (n_bedges, 2)."""
    return np.zeros((len(grid.bedge_nodes), 2))


def edge_flux_from_nodal(grid, nodal):
    """Continuous piecewise-linear flux from nodal boundary values."""
    nodal = np.asarray(nodal, dtype=float)
    if nodal.shape != (grid.n_nodes,):
        raise ValueError("nodal flux must be a full nodal field")
    return nodal[grid.bedge_nodes].astype(float)


def assemble_neumann_load(grid, flux):
    """load_i = sum over boundary edges of int_edge f hat_i, exactly.

    flux holds the linear density's endpoint values per boundary edge,
    shape (n_bedges, 2); per edge of length h the exact integrals are
    h(2 f_a + f_b)/6 and h(f_a + 2 f_b)/6.
    """
    flux = np.asarray(flux, dtype=float)
    if flux.shape != (len(grid.bedge_nodes), 2):
        raise ValueError(f"flux must have shape ({len(grid.bedge_nodes)}, 2)")
    h = grid.bedge_len
    fa = flux[:, 0]
    fb = flux[:, 1]
    ca = h * (2.0 * fa + fb) / 6.0
    cb = h * (fa + 2.0 * fb) / 6.0
    idx = np.concatenate([grid.bedge_nodes[:, 0], grid.bedge_nodes[:, 1]])
    return np.bincount(idx, weights=np.concatenate([ca, cb]),
                       minlength=grid.n_nodes)


# ---------------------------------------------------------------------------
# gamma (accessible boundary part) machinery

@lru_cache(maxsize=None)
def _gamma_cache(grid, sides):
    want = np.isin(grid.bedge_side, [SIDES.index(s) for s in sides])
    enodes = grid.bedge_nodes[want]
    elen = grid.bedge_len[want]
    node_ids = np.unique(enodes)
    pos_a = np.searchsorted(node_ids, enodes[:, 0])
    pos_b = np.searchsorted(node_ids, enodes[:, 1])
    return enodes, elen, node_ids, pos_a, pos_b, float(elen.sum())


@dataclass
class GammaTrace:
    """Nodal values on the gamma part of the boundary.

    node_ids is sorted; values[i] belongs to node_ids[i].
    """

    grid: object
    sides: tuple
    node_ids: np.ndarray
    values: np.ndarray

    @classmethod
    def from_nodal(cls, grid, sides, nodal):
        sides = check_sides(sides)
        _, _, ids, _, _, _ = _gamma_cache(grid, sides)
        nodal = np.asarray(nodal, dtype=float)
        if nodal.shape == (grid.n_nodes,):
            vals = nodal[ids]
        elif nodal.shape == ids.shape:
            vals = nodal.astype(float).copy()
        else:
            raise ValueError("trace values must be full-nodal or gamma-sized")
        if not np.all(np.isfinite(vals)):
            raise ValueError("trace values must be finite")
        return cls(grid, sides, ids, vals)


def gamma_node_ids(grid, sides):
    return _gamma_cache(grid, check_sides(sides))[2]


def gamma_length(grid, sides):
    return _gamma_cache(grid, check_sides(sides))[5]


def gamma_mean(grid, sides, nodal):
    """Edge-length-weighted trapezoid mean of a nodal field's trace on gamma."""
    sides = check_sides(sides)
    enodes, elen, _, _, _, total = _gamma_cache(grid, sides)
    nodal = np.asarray(nodal, dtype=float)
    integral = float(np.sum(elen * 0.5 * (nodal[enodes[:, 0]] + nodal[enodes[:, 1]])))
    return integral / total


def _check_same_gamma(t1, t2):
    if t1.grid is not t2.grid or t1.sides != t2.sides:
        raise ValueError("traces live on different gammas")


def gamma_inner(grid, sides, t1, t2):
    """Exact integral over gamma of the product of two piecewise-linear traces."""
    sides = check_sides(sides)
    if t1.sides != sides or t1.grid is not grid:
        raise ValueError("trace does not match the requested gamma")
    _check_same_gamma(t1, t2)
    _, elen, _, pos_a, pos_b, _ = _gamma_cache(grid, sides)
    a1 = t1.values[pos_a]
    b1 = t1.values[pos_b]
    a2 = t2.values[pos_a]
    b2 = t2.values[pos_b]
    return float(np.sum(elen / 6.0 * (2.0 * a1 * a2 + a1 * b2 + b1 * a2
                                      + 2.0 * b1 * b2)))


def gamma_mass_apply(grid, sides, trace):
    """Full nodal vector of int_gamma trace * hat_i (edge mass h/6 [[2,1],[1,2]])."""
    sides = check_sides(sides)
    if trace.sides != sides or trace.grid is not grid:
        raise ValueError("trace does not match the requested gamma")
    enodes, elen, _, pos_a, pos_b, _ = _gamma_cache(grid, sides)
    ra = trace.values[pos_a]
    rb = trace.values[pos_b]
    ca = elen / 6.0 * (2.0 * ra + rb)
    cb = elen / 6.0 * (ra + 2.0 * rb)
    idx = np.concatenate([enodes[:, 0], enodes[:, 1]])
    return np.bincount(idx, weights=np.concatenate([ca, cb]),
                       minlength=grid.n_nodes)


# ---------------------------------------------------------------------------
# solvers

def solve_gauged_neumann(op, rhs, gamma, x0=None, rtol=CG_RTOL, maxiter=None):
    """Solve the singular Neumann system A u = rhs with mean-zero gauge on gamma.

    The rhs must be discretely balanced: |sum rhs| <= 1e-8 ||rhs||_1.  CG runs
    in the zero-mean subspace with Jacobi preconditioning, then the solution
    is shifted so the trapezoid gamma-mean vanishes.
    """
    gamma = check_sides(gamma)
    grid = op.grid
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (op.dimension,):
        raise ValueError(f"rhs must have shape ({op.dimension},)")
    if not np.all(np.isfinite(rhs)):
        raise ValueError("rhs must be finite")
    l1 = float(np.abs(rhs).sum())
    s = float(rhs.sum())
    if l1 == 0.0:
        return np.zeros(op.dimension)
    if abs(s) > COMPAT_RTOL * l1:
        raise CompatibilityError(
            f"right-hand side is not balanced: sum {s:.3e} exceeds "
            f"{COMPAT_RTOL:g} * l1-norm {l1:.3e}")
    b = rhs - s / op.dimension
    if x0 is None:
        x0 = np.zeros(op.dimension)
    if maxiter is None:
        maxiter = 10 * op.dimension
    diag = op.diagonal
    if np.any(diag <= 0.0):
        raise ValueError("operator diagonal must be positive")
    pat = op.pattern
    x, relres, iters, ok = kernels.pcg(pat.indptr, pat.indices, op.data, b,
                                       np.asarray(x0, dtype=float),
                                       1.0 / diag, rtol, maxiter, True)
    if not ok:
        raise ConvergenceError(
            f"CG stalled after {iters} iterations, relative residual {relres:.3e}",
            relres=relres, iterations=iters)
    return x - gamma_mean(grid, gamma, x)


def solve_spd(matrix, rhs, x0=None, rtol=CG_RTOL, maxiter=None):
    """Jacobi-PCG for a definite symmetric CSR matrix (no deflation)."""
    matrix = matrix.tocsr()
    n = matrix.shape[0]
    rhs = np.asarray(rhs, dtype=float)
    if x0 is None:
        x0 = np.zeros(n)
    if maxiter is None:
        maxiter = 10 * n
    diag = matrix.diagonal()
    if np.any(diag <= 0.0):
        raise ValueError("matrix diagonal must be positive")
    x, relres, iters, ok = kernels.pcg(matrix.indptr, matrix.indices, matrix.data,
                                       rhs, np.asarray(x0, dtype=float),
                                       1.0 / diag, rtol, maxiter, False)
    if not ok:
        raise ConvergenceError(
            f"CG stalled after {iters} iterations, relative residual {relres:.3e}",
            relres=relres, iterations=iters)
    return x
