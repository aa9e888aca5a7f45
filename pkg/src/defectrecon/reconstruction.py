"""Gradient-based minimization of the phase-field defect functionals.

One iteration: solve the weighted-Laplace state problem per dataset,
solve the matching adjoint problems, assemble the cost gradient in the
descent variable (the complement of the phase field), lift it into the
primal space through a screened Riesz solve with homogeneous Dirichlet
pinning on the masked nodes, and take a truncated Armijo step.  An outer
loop sweeps a decreasing schedule of the phase-field width eps so
interfaces sharpen gradually.

Conventions fixed here and relied on by the tests: the weighted
stiffness coefficient is conductivity(P0(v), eps) with v projected per
triangle first; per-triangle gradient terms distribute |T|/3 to each
vertex; the well term uses vertex (lumped) quadrature.  Under these
conventions the assembled gradient is the exact derivative of the
discrete cost, which is what makes the adjoint and directional-solve
routes agree to solver tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels
from .grid import check_sides, p0_project, side_offsets, SIDES
from .fem import (GammaTrace, assemble_stiffness, unit_stiffness,
                  assemble_neumann_load, solve_gauged_neumann, solve_spd,
                  gamma_inner, gamma_mass_apply, gamma_mean, gamma_node_ids,
                  gamma_length, stiffness_action, CompatibilityError)
from .potentials import (PotentialKind, conductivity, conductivity_prime,
                         well, well_prime)


class InternalConsistencyError(RuntimeError):
    """An analytically balanced right-hand side failed the discrete check."""


def check_eps(eps):
    eps = float(eps)
    if not (0.0 < eps <= 0.5):
        raise ValueError(f"eps must lie in (0, 0.5], got {eps}")
    return eps


# ---------------------------------------------------------------------------
# phase field

def boundary_mask(grid):
    mask = np.zeros(grid.n_nodes, dtype=bool)
    mask[grid.boundary_nodes] = True
    return mask


@dataclass
class PhaseField:
    """Descent variable per node; the physical phase field is v = 1 - values.

    mask marks nodes pinned to 0 (sound material enforced, v = 1 there);
    by default that is the whole rectangle boundary.
    """

    values: np.ndarray
    mask: np.ndarray

    @property
    def v(self):
        return 1.0 - self.values

    def copy(self):
        return PhaseField(self.values.copy(), self.mask)

    def validate(self, grid):
        if self.values.shape != (grid.n_nodes,) or self.mask.shape != (grid.n_nodes,):
            raise ValueError("phase field arrays must be full nodal fields")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("phase field must be finite")
        if np.any(self.values < 0.0) or np.any(self.values > 1.0):
            raise ValueError("phase field must lie in [0, 1]")
        if np.any(self.values[self.mask] != 0.0):
            raise ValueError("phase field must vanish on masked nodes")


def initial_phase(grid, value=0.5, mask=None):
    if mask is None:
        mask = boundary_mask(grid)
    values = np.full(grid.n_nodes, float(value))
    values[mask] = 0.0
    return PhaseField(values, mask)


def conductivity_field(grid, phase, eps):
    """Cell coefficient conductivity(P0(v), eps) used by every assembly."""
    return conductivity(p0_project(grid, phase.v), eps)


# ---------------------------------------------------------------------------
# parameters

@dataclass
class ArmijoParams:
    initial_step: float = 1.0
    backtrack: float = 0.5
    sigma: float = 1e-4
    max_reductions: int = 5
    growth: float = 1.2

    def validate(self):
        if self.initial_step <= 0:
            raise ValueError("armijo initial_step must be > 0")
        if not (0.0 < self.backtrack < 1.0):
            raise ValueError("armijo backtrack must lie in (0, 1)")
        if not (0.0 < self.sigma < 1.0):
            raise ValueError("armijo sigma must lie in (0, 1)")
        if self.max_reductions < 0:
            raise ValueError("armijo max_reductions must be >= 0")
        if self.growth < 1.0:
            raise ValueError("armijo growth must be >= 1")


def default_eps_schedule(kind, stages=5, eps_start=2e-4, eps_end=None,
                         total_iterations=None):
    """Geometric eps schedule with the iteration budget split evenly."""
    if eps_end is None:
        eps_end = 1e-6 if kind is PotentialKind.SINGLE_WELL else 2e-6
    if total_iterations is None:
        total_iterations = 2500 if kind is PotentialKind.SINGLE_WELL else 1000
    if stages < 1:
        raise ValueError("schedule needs at least one stage")
    eps_values = np.geomspace(eps_start, eps_end, stages)
    base, extra = divmod(int(total_iterations), stages)
    budgets = [base + (1 if i < extra else 0) for i in range(stages)]
    return tuple((float(e), int(n)) for e, n in zip(eps_values, budgets))


@dataclass
class ReconParams:
    a: float = 1.0
    b: float = 1.0
    c: float = 0.5
    q1: float = 0.25
    potential: PotentialKind = PotentialKind.SINGLE_WELL
    eps_schedule: tuple = None
    riesz_alpha: float = 2e-3  # 1e-3 * (diameter^2) on the unit square
    armijo: ArmijoParams = field(default_factory=ArmijoParams)
    gamma: tuple = SIDES

    def __post_init__(self):
        if self.eps_schedule is None:
            self.eps_schedule = default_eps_schedule(self.potential)

    def validate(self):
        for name in ("a", "b", "c"):
            if getattr(self, name) <= 0:
                raise ValueError(f"weight {name} must be > 0")
        if not (0.0 < self.q1 < 0.5):
            raise ValueError(f"q1 must lie in (0, 0.5), got {self.q1}")
        if self.riesz_alpha < 0:
            raise ValueError("riesz_alpha must be >= 0")
        if not isinstance(self.potential, PotentialKind):
            raise ValueError("potential must be a PotentialKind")
        sched = tuple(self.eps_schedule)
        if len(sched) == 0:
            raise ValueError("eps schedule must be non-empty")
        prev = None
        for e, n in sched:
            check_eps(e)
            if prev is not None and e >= prev:
                raise ValueError("eps schedule must be strictly decreasing")
            if n < 0:
                raise ValueError("iteration budgets must be >= 0")
            prev = e
        self.gamma = check_sides(self.gamma)
        self.armijo.validate()

    def fidelity_weight(self, eps):
        return self.a / eps ** self.q1


# ---------------------------------------------------------------------------
# boundary data as seen by the inversion

@dataclass
class BoundaryData:
    """One measurement prepared on the inversion grid: a balanced Neumann
    load and a gamma-mean-free voltage trace."""

    load: np.ndarray
    g: GammaTrace
    gamma: tuple
    label: str = ""


def _indicator_load(grid, gamma):
    nodal = np.zeros(grid.n_nodes)
    nodal[gamma_node_ids(grid, gamma)] = 1.0
    flux = np.zeros((len(grid.bedge_nodes), 2))
    on = np.isin(grid.bedge_side, [SIDES.index(s) for s in gamma])
    flux[on] = nodal[grid.bedge_nodes[on]]
    return assemble_neumann_load(grid, flux)


def _finish_boundary_data(grid, gamma, load, g_nodal, label):
    """Rebalance the load by a constant on gamma so it sums to zero
    exactly, and shift g to zero gamma-mean; both are gauge changes the
    functional is invariant under."""
    imbalance = float(load.sum())
    if imbalance != 0.0:
        load = load - (imbalance / gamma_length(grid, gamma)) * _indicator_load(grid, gamma)
    g = GammaTrace.from_nodal(grid, gamma, np.asarray(g_nodal, dtype=float))
    g.values = g.values - gamma_mean_trace(grid, gamma, g)
    return BoundaryData(load, g, gamma, label)


def boundary_data_from_nodal(grid, gamma, flux_nodal, g_nodal, label=""):
    """Build BoundaryData from nodal flux/voltage values on gamma.

    A nodal flux is single-valued at corner nodes, so side fluxes that
    jump across a corner leak onto the neighbouring side's end edge; use
    boundary_data_from_edge_flux for discontinuous per-side fluxes.
    """
    gamma = check_sides(gamma)
    flux = np.zeros((len(grid.bedge_nodes), 2))
    on = np.isin(grid.bedge_side, [SIDES.index(s) for s in gamma])
    flux[on] = np.asarray(flux_nodal, dtype=float)[grid.bedge_nodes[on]]
    load = assemble_neumann_load(grid, flux)
    return _finish_boundary_data(grid, gamma, load, g_nodal, label)


def boundary_data_from_edge_flux(grid, gamma, edge_flux, g_nodal, label=""):
    """Build BoundaryData from per-edge flux endpoint values.

    Edge values represent the flux on each boundary edge independently,
    so per-side constants with corner jumps stay exact.
    """
    gamma = check_sides(gamma)
    load = assemble_neumann_load(grid, edge_flux)
    return _finish_boundary_data(grid, gamma, load, g_nodal, label)


def gamma_mean_trace(grid, gamma, trace):
    full = np.zeros(grid.n_nodes)
    full[trace.node_ids] = trace.values
    return gamma_mean(grid, gamma, full)


def boundary_data_from_dataset(grid, gamma, ds):
    """Interpolate a measured dataset onto the inversion grid's boundary."""
    gamma = check_sides(gamma)
    if check_sides(ds.gamma) != gamma:
        raise ValueError("dataset gamma does not match the requested gamma")
    if not (abs(ds.width - grid.width) < 1e-12 * max(1.0, grid.width)
            and abs(ds.height - grid.height) < 1e-12 * max(1.0, grid.height)):
        raise ValueError("dataset domain does not match the grid")
    offsets = side_offsets(grid.width, grid.height)
    f_nodal = np.zeros(grid.n_nodes)
    g_nodal = np.zeros(grid.n_nodes)
    for s in gamma:
        lo = offsets[s]
        hi = lo + grid.side_length(s)
        sel = (ds.s >= lo) & (ds.s < hi) if s != "left" else (ds.s >= lo)
        if not np.any(sel):
            raise ValueError(f"dataset has no measurement points on side {s!r}")
        sp_ = ds.s[sel] - lo
        order = np.argsort(sp_)
        ids = grid.side_nodes(s)
        arc = grid.side_arclengths(s)
        f_nodal[ids] = np.interp(arc, sp_[order], ds.f[sel][order])
        g_nodal[ids] = np.interp(arc, sp_[order], ds.g[sel][order])
    label = "-".join(ds.electrodes)
    return boundary_data_from_nodal(grid, gamma, f_nodal, g_nodal, label)


# ---------------------------------------------------------------------------
# state, adjoint, cost, gradient

@dataclass
class StatePack:
    """Solutions shared by one iterate: coefficient, operator, per-dataset
    states and (optionally) adjoints."""

    eps: float
    coeff: np.ndarray
    op: object
    states: list
    adjoints: list = None


def solve_states(grid, phase, params, eps, datasets, warm=None):
    eps = check_eps(eps)
    coeff = conductivity_field(grid, phase, eps)
    op = assemble_stiffness(grid, coeff)
    states = []
    for k, data in enumerate(datasets):
        x0 = warm.states[k] if warm is not None else None
        states.append(solve_gauged_neumann(op, data.load, data.gamma, x0=x0))
    return StatePack(eps, coeff, op, states)


def solve_state(grid, phase, params, eps, data, x0=None):
    """State solve for one dataset: u = H(phase) at the given eps."""
    pack = solve_states(grid, phase, params, eps, [data],
                        warm=None if x0 is None else
                        StatePack(eps, None, None, [x0]))
    return pack.states[0]


def residual_trace(grid, data, u):
    r = GammaTrace.from_nodal(grid, data.gamma, u)
    r.values = r.values - data.g.values
    return r


def solve_adjoint(grid, phase, params, eps, data, u, op=None, x0=None):
    """Adjoint solve sharing the state operator.

    RHS = -2b (A u) - (2 a / eps^q1) * (gamma boundary mass applied to the
    trace residual u - g); zero-sum analytically, so a compatibility
    failure here means the state or data are inconsistent.
    """
    eps = check_eps(eps)
    if op is None:
        op = assemble_stiffness(grid, conductivity_field(grid, phase, eps))
    r = residual_trace(grid, data, u)
    rhs = -2.0 * params.b * op.matvec(u) \
        - 2.0 * params.fidelity_weight(eps) * gamma_mass_apply(grid, data.gamma, r)
    try:
        return solve_gauged_neumann(op, rhs, data.gamma, x0=x0)
    except CompatibilityError as exc:
        raise InternalConsistencyError(
            f"adjoint right-hand side unbalanced: {exc}") from exc


def solve_adjoints(grid, phase, params, eps, datasets, pack, warm=None):
    adjoints = []
    for k, (data, u) in enumerate(zip(datasets, pack.states)):
        x0 = warm.adjoints[k] if warm is not None and warm.adjoints else None
        adjoints.append(solve_adjoint(grid, phase, params, eps, data, u,
                                      op=pack.op, x0=x0))
    pack.adjoints = adjoints
    return pack


@dataclass
class CostBreakdown:
    fidelity: float
    dirichlet: float
    well: float
    gradient_term: float
    total: float

    @classmethod
    def build(cls, fidelity, dirichlet, well_part, gradient_term):
        return cls(fidelity, dirichlet, well_part, gradient_term,
                   fidelity + dirichlet + well_part + gradient_term)


def eval_cost(grid, phase, params, eps, datasets, pack):
    """Total cost and its four parts at the given iterate.

    Fidelity and Dirichlet energies are summed over datasets; the well
    term uses vertex (lumped) quadrature; the gradient term is
    eps * (descent field)^T K (descent field) with unit stiffness K.
    """
    eps = check_eps(eps)
    w_fid = params.fidelity_weight(eps)
    fid = 0.0
    diri = 0.0
    for data, u in zip(datasets, pack.states):
        r = residual_trace(grid, data, u)
        fid += w_fid * gamma_inner(grid, data.gamma, r, r)
        diri += params.b * pack.op.quad(u)
    well_part = (params.c ** 2 / eps) * float(
        grid.lumped_mass @ well(params.potential, phase.v))
    K = unit_stiffness(grid)
    grad_part = eps * K.quad(phase.values)
    return CostBreakdown.build(fid, diri, well_part, grad_part)


def joint_cost(grid, tilde_v, u_list, params, eps, datasets, mask=None):
    """Cost of an arbitrary (descent field, states) pair, without solving.

    Used by the truncation-monotonicity checks: here tilde_v may leave
    [0, 1], and u is held fixed while the field is clamped.
    """
    eps = check_eps(eps)
    tilde_v = np.asarray(tilde_v, dtype=float)
    v = 1.0 - tilde_v
    coeff = conductivity(p0_project(grid, v), eps)
    op = assemble_stiffness(grid, coeff)
    w_fid = params.fidelity_weight(eps)
    fid = 0.0
    diri = 0.0
    for data, u in zip(datasets, u_list):
        r = residual_trace(grid, data, u)
        fid += w_fid * gamma_inner(grid, data.gamma, r, r)
        diri += params.b * op.quad(u)
    well_part = (params.c ** 2 / eps) * float(
        grid.lumped_mass @ well(params.potential, v))
    grad_part = eps * unit_stiffness(grid).quad(tilde_v)
    return CostBreakdown.build(fid, diri, well_part, grad_part)


def assemble_gradient(grid, phase, params, eps, datasets, pack):
    """Derivative of the discrete cost with respect to the descent field.

    Per-triangle terms are evaluated at the P0-projected v and distribute
    |T|/3 to each vertex; the well derivative is diagonal thanks to the
    lumped quadrature; masked nodes are forced to zero.
    """
    eps = check_eps(eps)
    if pack.adjoints is None:
        raise ValueError("adjoints missing; call solve_adjoints first")
    v_cells = p0_project(grid, phase.v)
    dpsi = conductivity_prime(v_cells, eps)
    acc = np.zeros(grid.n_cells)
    for u, phi in zip(pack.states, pack.adjoints):
        gu = kernels.tri_gradients(grid.cells, grid.tri_grads, u)
        gphi = kernels.tri_gradients(grid.cells, grid.tri_grads, phi)
        gu2 = gu[:, 0] ** 2 + gu[:, 1] ** 2
        gugphi = gu[:, 0] * gphi[:, 0] + gu[:, 1] * gphi[:, 1]
        acc += params.b * gu2 + gugphi
    w_tri = -dpsi * acc * (grid.tri_area / 3.0)
    G = kernels.accumulate(grid.cells.ravel(), np.repeat(w_tri, 3), grid.n_nodes)
    G += (params.c ** 2 / eps) * (-well_prime(params.potential, phase.v)) \
        * grid.lumped_mass
    K = unit_stiffness(grid)
    G += 2.0 * eps * K.matvec(phase.values)
    G[phase.mask] = 0.0
    return G


def directional_state_derivative(grid, phase, params, eps, data, u0, direction,
                                 op=None):
    """Derivative of the state along a descent-field direction.

    Solves the state operator against the action of the stiffness built
    with the signed coefficient conductivity'(v_T) * direction_T on u0.
    """
    eps = check_eps(eps)
    direction = np.asarray(direction, dtype=float)
    if np.any(direction[phase.mask] != 0.0):
        raise ValueError("direction must vanish on masked nodes")
    if op is None:
        op = assemble_stiffness(grid, conductivity_field(grid, phase, eps))
    v_cells = p0_project(grid, phase.v)
    coeff = conductivity_prime(v_cells, eps) * p0_project(grid, direction)
    rhs = stiffness_action(grid, coeff, u0)
    return solve_gauged_neumann(op, rhs, data.gamma)


def directional_cost_derivative(grid, phase, params, eps, datasets, pack,
                                direction):
    """Derivative of the reduced cost along a direction, via per-dataset
    directional state solves instead of the adjoint (test oracle)."""
    eps = check_eps(eps)
    direction = np.asarray(direction, dtype=float)
    v_cells = p0_project(grid, phase.v)
    d_cells = p0_project(grid, direction)
    dpsi = conductivity_prime(v_cells, eps)
    w_fid = params.fidelity_weight(eps)
    total = 0.0
    for data, u in zip(datasets, pack.states):
        U = directional_state_derivative(grid, phase, params, eps, data, u,
                                         direction, op=pack.op)
        r = residual_trace(grid, data, u)
        trU = GammaTrace.from_nodal(grid, data.gamma, U)
        total += 2.0 * w_fid * gamma_inner(grid, data.gamma, r, trU)
        gu = kernels.tri_gradients(grid.cells, grid.tri_grads, u)
        gu2 = gu[:, 0] ** 2 + gu[:, 1] ** 2
        total += params.b * (2.0 * pack.op.quad(u, U)
                             - float(np.sum(dpsi * gu2 * d_cells * grid.tri_area)))
    total += (params.c ** 2 / eps) * float(
        (-well_prime(params.potential, phase.v) * grid.lumped_mass) @ direction)
    K = unit_stiffness(grid)
    total += 2.0 * eps * float(direction @ K.matvec(phase.values))
    return total


# ---------------------------------------------------------------------------
# Riesz lift

class RieszSolver:
    """Screened Riesz map (M_lumped + alpha K) delta = dual with delta = 0
    pinned on masked nodes."""

    def __init__(self, grid, alpha, mask):
        if alpha < 0:
            raise ValueError("riesz_alpha must be >= 0")
        self.grid = grid
        self.alpha = float(alpha)
        self.mask = np.asarray(mask, dtype=bool)
        self.free = np.flatnonzero(~self.mask)
        R = sp.diags(grid.lumped_mass) + self.alpha * unit_stiffness(grid).matrix
        self.matrix = R.tocsr()[self.free][:, self.free].tocsr()

    def lift(self, dual, x0=None):
        dual = np.asarray(dual, dtype=float)
        if np.any(dual[self.mask] != 0.0):
            raise ValueError("dual vector must vanish on masked nodes")
        sol = solve_spd(self.matrix, dual[self.free],
                        x0=None if x0 is None else x0[self.free])
        out = np.zeros(self.grid.n_nodes)
        out[self.free] = sol
        return out


def riesz_lift(grid, dual, riesz_alpha, mask):
    return RieszSolver(grid, riesz_alpha, mask).lift(dual)


# ---------------------------------------------------------------------------
# line search and outer loop

@dataclass
class IterationRecord:
    stage: int
    iteration: int
    eps: float
    cost: CostBreakdown
    step: float
    dual_norm: float
    reductions: int
    converged: bool = False


def truncate(phase, candidate):
    """Clamp a raw update into [0,1] and re-impose the mask."""
    values = np.clip(candidate, 0.0, 1.0)
    values[phase.mask] = 0.0
    return PhaseField(values, phase.mask)


def armijo_step(grid, phase, params, eps, datasets, descent, grad,
                cost_before, pack, step):
    """One truncated backtracking step.

    Tries t = step, step*backtrack, ... (at most max_reductions
    reductions); accepts the first candidate with
    total <= cost_before - sigma * t * <grad, descent>.  If all fail, the
    best candidate seen is accepted only when it does not increase the
    cost (so accepted iterates stay monotone) and the stored step is
    halved; a first-try success grows the stored step.

    Returns (phase, pack, cost, step_taken, reductions, new_step, converged).
    """
    gd = float(grad @ descent)
    if gd <= 0.0:
        return phase, pack, cost_before, 0.0, 0, step, True
    arm = params.armijo
    t = step
    best = None
    for red in range(arm.max_reductions + 1):
        cand = truncate(phase, phase.values - t * descent)
        cand_pack = solve_states(grid, cand, params, eps, datasets, warm=pack)
        cand_cost = eval_cost(grid, cand, params, eps, datasets, cand_pack)
        if cand_cost.total <= cost_before.total - arm.sigma * t * gd:
            new_step = step * arm.growth if red == 0 else t
            return cand, cand_pack, cand_cost, t, red, new_step, False
        if best is None or cand_cost.total < best[2].total:
            best = (cand, cand_pack, cand_cost, t)
        t *= arm.backtrack
    cand, cand_pack, cand_cost, t_best = best
    if cand_cost.total <= cost_before.total:
        return cand, cand_pack, cand_cost, t_best, arm.max_reductions, \
            step * 0.5, False
    return phase, pack, cost_before, 0.0, arm.max_reductions, step * 0.5, False


STAGE_RTOL = 1e-10


def run_reconstruction(grid, params, datasets, initial, callback=None):
    """Full descent over the eps schedule.

    Returns the final phase field and the per-iteration history; within
    each eps stage the recorded total cost is non-increasing.
    """
    params.validate()
    initial.validate(grid)
    free = ~initial.mask
    if not np.any(initial.values[free] != 0.0):
        raise ValueError(
            "initial field is identically zero on its free nodes, which is a "
            "stationary point the iteration cannot leave; start from a "
            "nonzero interior value such as 0.5")
    if len(datasets) == 0:
        raise ValueError("at least one dataset is required")
    for d in datasets:
        if check_sides(d.gamma) != check_sides(params.gamma):
            raise ValueError("dataset gamma does not match params.gamma")

    riesz = RieszSolver(grid, params.riesz_alpha, initial.mask)
    phase = initial.copy()
    step = params.armijo.initial_step
    history = []
    pack = None
    delta_prev = None
    it_global = 0
    for stage, (eps, budget) in enumerate(params.eps_schedule):
        pack = solve_states(grid, phase, params, eps, datasets, warm=pack)
        cost = eval_cost(grid, phase, params, eps, datasets, pack)
        stage_tol = None
        for _ in range(budget):
            pack = solve_adjoints(grid, phase, params, eps, datasets, pack,
                                  warm=pack)
            G = assemble_gradient(grid, phase, params, eps, datasets, pack)
            delta = riesz.lift(G, x0=delta_prev)
            delta_prev = delta
            gd = float(G @ delta)
            dual_norm = float(np.sqrt(max(gd, 0.0)))
            if stage_tol is None:
                stage_tol = STAGE_RTOL * dual_norm
            if dual_norm <= stage_tol:
                it_global += 1
                history.append(IterationRecord(stage, it_global, eps, cost,
                                               0.0, dual_norm, 0, True))
                break
            prev_adjoints = pack.adjoints
            phase, new_pack, cost, t, reds, step, conv = armijo_step(
                grid, phase, params, eps, datasets, delta, G, cost, pack, step)
            if new_pack.adjoints is None:
                new_pack.adjoints = prev_adjoints  # warm starts only
            pack = new_pack
            it_global += 1
            rec = IterationRecord(stage, it_global, eps, cost, t, dual_norm,
                                  reds, conv)
            history.append(rec)
            if callback is not None:
                callback(rec, phase)
            if conv:
                break
    return phase, history
