"""Synthetic Cauchy data: forward solves on a fine jittered mesh with
insulating defects, sampled at boundary measurement points.

The data mesh is deliberately different from the inversion mesh (finer by
an integer factor, interior nodes jittered) so reconstructions are never
tested against their own discretization.  Defects are realized by a tiny
conductivity eta in every fine cell that meets a crack segment or lies
inside a cavity polygon; the insulating boundary condition is the
eta -> 0 limit of that.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .grid import build_grid, grid_with_nodes, check_sides, side_offsets, SIDES
from .fem import assemble_stiffness, assemble_neumann_load, solve_gauged_neumann


class ClearanceError(ValueError):
    """A defect touches or leaves the domain interior."""


# ---------------------------------------------------------------------------
# defect geometry

def _as_points(obj, what, min_pts):
    arr = np.asarray(obj, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < min_pts:
        raise ValueError(f"{what} must be a sequence of at least {min_pts} (x, y) points")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} has non-finite coordinates")
    return arr


def _segments_meet(p1, p2, q1, q2):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def between(a, b, p):
        return (min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= p[1] <= max(a[1], b[1]))

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if ((o1 > 0) != (o2 > 0)) and ((o3 > 0) != (o4 > 0)) \
            and 0 not in (o1, o2, o3, o4):
        return True
    for o, (a, b, p) in ((o1, (p1, p2, q1)), (o2, (p1, p2, q2)),
                         (o3, (q1, q2, p1)), (o4, (q1, q2, p2))):
        if o == 0 and between(a, b, p):
            return True
    return False


@dataclass
class DefectSpec:
    """Ground-truth defects: crack polylines and cavity polygons.

    Validates local geometry on construction; the positive-clearance
    requirement against a concrete domain is checked by build_fine_model.
    """

    cracks: tuple = ()
    cavities: tuple = ()

    def __post_init__(self):
        self.cracks = tuple(_as_points(c, "crack polyline", 2) for c in self.cracks)
        cavs = []
        for poly in self.cavities:
            arr = _as_points(poly, "cavity polygon", 3)
            x, y = arr[:, 0], arr[:, 1]
            area = 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
            if area == 0.0:
                raise ValueError("cavity polygon has zero area")
            k = len(arr)
            for i in range(k):
                for j in range(i + 1, k):
                    if j == i or (j + 1) % k == i or (i + 1) % k == j:
                        continue  # adjacent edges share a vertex by design
                    if _segments_meet(arr[i], arr[(i + 1) % k],
                                      arr[j], arr[(j + 1) % k]):
                        raise ValueError("cavity polygon is self-intersecting")
            cavs.append(arr)
        self.cavities = tuple(cavs)

    @property
    def empty(self):
        return not self.cracks and not self.cavities

    def all_vertices(self):
        parts = list(self.cracks) + list(self.cavities)
        if not parts:
            return np.zeros((0, 2))
        return np.concatenate(parts)


@dataclass
class FineModel:
    grid: object
    conductivity: np.ndarray
    refine: int
    eta: float
    seed: int


def build_fine_model(spec, coarse, refine=8, eta=1e-8, seed=0):
    """Refined jittered grid with defect cells at conductivity eta.

    Interior nodes move by at most a quarter of the fine spacing per axis
    (uniform, seeded); boundary nodes stay put.  Crack cells are found by
    a closed-triangle/segment intersection test, cavity cells by their
    centroid.  Deterministic given (spec, refine, eta, seed).
    """
    if not isinstance(refine, (int, np.integer)) or refine < 4:
        raise ValueError(f"refine must be an integer >= 4, got {refine}")
    eta = float(eta)
    if not (0.0 < eta <= 1e-4):
        raise ValueError(f"eta must lie in (0, 1e-4], got {eta}")
    verts = spec.all_vertices()
    if len(verts):
        clearance = np.minimum.reduce([
            verts[:, 0], coarse.width - verts[:, 0],
            verts[:, 1], coarse.height - verts[:, 1]])
        if np.any(clearance <= 0.0):
            raise ClearanceError(
                "defect touches or crosses the boundary; positive clearance "
                "from all four sides is required")

    fine = build_grid(refine * coarse.nx, refine * coarse.ny,
                      coarse.width, coarse.height)
    rng = np.random.default_rng(seed)
    offsets = rng.uniform(-1.0, 1.0, size=(fine.n_nodes, 2))
    offsets[:, 0] *= 0.25 * fine.hx
    offsets[:, 1] *= 0.25 * fine.hy
    offsets[fine.boundary_nodes] = 0.0
    fine = grid_with_nodes(fine, fine.nodes + offsets)

    marked = np.zeros(fine.n_cells, dtype=bool)
    for crack in spec.cracks:
        for i in range(len(crack) - 1):
            marked |= kernels.mark_cells_crossed(fine.nodes, fine.cells,
                                                 crack[i], crack[i + 1])
    if spec.cavities:
        centroids = fine.nodes[fine.cells].mean(axis=1)
        for poly in spec.cavities:
            marked |= kernels.points_in_polygon(centroids, poly)

    cond = np.ones(fine.n_cells)
    cond[marked] = eta
    return FineModel(fine, cond, int(refine), eta, int(seed))


# ---------------------------------------------------------------------------
# boundary flux profiles

@dataclass(frozen=True)
class SideProfile:
    """Piecewise-constant flux density on one side.

    breaks are arclength fractions of the side (increasing, spanning
    [0, 1]); levels[i] holds on [breaks[i], breaks[i+1]).
    """

    side: str
    breaks: tuple
    levels: tuple

    def _cum(self):
        b = np.asarray(self.breaks)
        lv = np.asarray(self.levels)
        return b, lv, np.concatenate([[0.0], np.cumsum(lv * np.diff(b))])

    def value_at(self, t):
        b = np.asarray(self.breaks)
        lv = np.asarray(self.levels)
        idx = np.clip(np.searchsorted(b, t, side="right") - 1, 0, len(lv) - 1)
        return lv[idx]

    def antiderivative(self, t):
        b, lv, cum = self._cum()
        idx = np.clip(np.searchsorted(b, t, side="right") - 1, 0, len(lv) - 1)
        return cum[idx] + lv[idx] * (np.asarray(t) - b[idx])

    def mean_over(self, t0, t1):
        return (self.antiderivative(t1) - self.antiderivative(t0)) \
            / (np.asarray(t1) - np.asarray(t0))

    def integral_fraction(self):
        """Integral over the side in arclength-fraction units."""
        b, lv, cum = self._cum()
        return float(cum[-1])


def plus_flux(side, center, width, amplitude, shape="plus"):
    """Compactly supported electrode profile on one side.

    "plus" is a stepped stack: amplitude on the central third of the
    support, amplitude/2 on the outer thirds.  "flat" is a single step.
    center and width are arclength fractions of the side.
    """
    if side not in SIDES:
        raise ValueError(f"unknown side label {side!r}")
    center = float(center)
    width = float(width)
    if not (0.0 < width < 1.0):
        raise ValueError(f"electrode width must lie in (0, 1), got {width}")
    lo = center - width / 2.0
    hi = center + width / 2.0
    if lo < 0.0 or hi > 1.0:
        raise ValueError(
            f"electrode support [{lo:.4g}, {hi:.4g}] overflows the side")
    a = float(amplitude)
    if shape == "plus":
        breaks = (0.0, lo, lo + width / 3.0, hi - width / 3.0, hi, 1.0)
        levels = (0.0, a / 2.0, a, a / 2.0, 0.0)
    elif shape == "flat":
        breaks = (0.0, lo, hi, 1.0)
        levels = (0.0, a, 0.0)
    else:
        raise ValueError(f"unknown profile shape {shape!r}")
    # collapse zero-length pieces at the side ends
    keep = [i for i in range(len(levels)) if breaks[i + 1] > breaks[i]]
    breaks_out = tuple([breaks[keep[0]]] + [breaks[i + 1] for i in keep])
    levels_out = tuple(levels[i] for i in keep)
    return SideProfile(side, breaks_out, levels_out)


@dataclass(frozen=True)
class BoundaryFlux:
    """At most one profile per side; zero elsewhere."""

    profiles: tuple  # of SideProfile

    def profile_on(self, side):
        for p in self.profiles:
            if p.side == side:
                return p
        return None


def electrode_pair_flux(pair, width, height, center=0.5, electrode_width=0.5,
                        amplitude=1.0, shape="plus"):
    """Injection at +amplitude on one side, extraction on another.

    The extraction profile is scaled so the two analytic integrals cancel
    exactly, which on equal-length sides leaves it at -amplitude.
    """
    side_a, side_b = pair
    if side_a == side_b:
        raise ValueError("electrode pair must use two distinct sides")
    lengths = {"bottom": width, "top": width, "left": height, "right": height}
    prof_a = plus_flux(side_a, center, electrode_width, amplitude, shape)
    prof_b = plus_flux(side_b, center, electrode_width, -amplitude, shape)
    int_a = prof_a.integral_fraction() * lengths[side_a]
    int_b = prof_b.integral_fraction() * lengths[side_b]
    scale = -int_a / int_b
    prof_b = SideProfile(side_b, prof_b.breaks,
                         tuple(scale * lv for lv in prof_b.levels))
    return BoundaryFlux((prof_a, prof_b))


def edge_flux_of(grid, flux):
    """Per-boundary-edge flux values: each edge carries the exact mean of
    its side's profile over the edge (piecewise-constant density)."""
    out = np.zeros((len(grid.bedge_nodes), 2))
    for prof in flux.profiles:
        sidx = SIDES.index(prof.side)
        sel = grid.bedge_side == sidx
        length = grid.side_length(prof.side)
        axis = 0 if prof.side in ("bottom", "top") else 1
        s0 = grid.nodes[grid.bedge_nodes[sel, 0], axis] / length
        s1 = grid.nodes[grid.bedge_nodes[sel, 1], axis] / length
        means = prof.mean_over(s0, s1)
        out[sel, 0] = means
        out[sel, 1] = means
    return out


# ---------------------------------------------------------------------------
# measurement

@dataclass
class NoiseSpec:
    level_f: float = 0.0
    level_g: float = 0.0
    seed: int = 0

    def validate(self):
        if self.level_f < 0 or self.level_g < 0:
            raise ValueError("noise levels must be >= 0")


@dataclass
class CauchyDataset:
    """One electrode pair's measurement at equispaced boundary points.

    s holds global boundary arclength (bottom from the origin, then
    right, top, left); f is the injected current density, g the measured
    voltage, both sampled at the same points.
    """

    electrodes: tuple
    gamma: tuple
    width: float
    height: float
    points_per_side: int
    s: np.ndarray
    f: np.ndarray
    g: np.ndarray
    noise: NoiseSpec = None

    def weights(self):
        """Quadrature weight per measurement point (side length / count)."""
        offsets = side_offsets(self.width, self.height)
        lengths = {"bottom": self.width, "top": self.width,
                   "left": self.height, "right": self.height}
        w = np.empty_like(self.s)
        for side in self.gamma:
            lo = offsets[side]
            hi = lo + lengths[side]
            sel = (self.s >= lo) & (self.s < hi)
            w[sel] = lengths[side] / self.points_per_side
        return w

    def validate(self):
        w = self.weights()
        fsum = abs(float(w @ self.f))
        fscale = float(w @ np.abs(self.f))
        if fscale > 0 and fsum > 1e-9 * fscale:
            raise ValueError(f"flux is not balanced: weighted sum {fsum:.3e}")
        gsum = abs(float(w @ self.g))
        gscale = float(w @ np.abs(self.g))
        if gscale > 0 and gsum > 1e-9 * gscale:
            raise ValueError(f"voltage trace is not centered: weighted mean {gsum:.3e}")


def measurement_points(grid, gamma, per_side):
    """Midpoint-equispaced points per side: local arclength (i+1/2)L/n.

    Midpoints avoid the corner nodes shared by two sides and never sit on
    a flux discontinuity of the stepped profiles' break fractions with
    the default even counts.
    """
    offsets = side_offsets(grid.width, grid.height)
    sides, s_local, s_global = [], [], []
    for side in gamma:
        length = grid.side_length(side)
        pts = (np.arange(per_side) + 0.5) * (length / per_side)
        sides.extend([side] * per_side)
        s_local.append(pts)
        s_global.append(pts + offsets[side])
    return sides, np.concatenate(s_local), np.concatenate(s_global)


def simulate_measurement(model, flux, gamma, points_per_side=64):
    """Noise-free Cauchy pair for one electrode arrangement.

    Solves the fine-mesh gauged Neumann problem with the defect
    conductivity, samples the trace at the measurement points by linear
    interpolation, re-centers g, and pairs it with the analytic flux
    (re-balanced discretely at the points).
    """
    gamma = check_sides(gamma)
    grid = model.grid
    op = assemble_stiffness(grid, model.conductivity)
    load = assemble_neumann_load(grid, edge_flux_of(grid, flux))
    u = solve_gauged_neumann(op, load, gamma)

    sides_pt, s_local, s_global = measurement_points(grid, gamma, points_per_side)
    g = np.empty(len(s_global))
    f = np.empty(len(s_global))
    pos = 0
    for side in gamma:
        ids = grid.side_nodes(side)
        arc = grid.side_arclengths(side)
        pts = s_local[pos:pos + points_per_side]
        g[pos:pos + points_per_side] = np.interp(pts, arc, u[ids])
        prof = flux.profile_on(side)
        if prof is None:
            f[pos:pos + points_per_side] = 0.0
        else:
            f[pos:pos + points_per_side] = prof.value_at(pts / grid.side_length(side))
        pos += points_per_side

    n_per = points_per_side
    w = np.empty(len(s_global))
    pos = 0
    for side in gamma:
        w[pos:pos + n_per] = grid.side_length(side) / n_per
        pos += n_per
    g = g - float(w @ g) / float(w.sum())
    pos_part = float(w @ np.maximum(f, 0.0))
    neg_part = float(w @ np.minimum(f, 0.0))
    if pos_part > 0.0 and neg_part < 0.0:
        f = np.where(f < 0.0, f * (pos_part / -neg_part), f)

    el = tuple(p.side for p in flux.profiles)
    return CauchyDataset(el, gamma, grid.width, grid.height, points_per_side,
                         s_global, f, g)


def add_noise(ds, noise):
    """Seeded Gaussian corruption relative to the signal RMS.

    Draws the g stream first, then the f stream, from one generator.
    Invariants are restored additively afterwards (g re-centered, f
    shifted to zero weighted sum).  Zero levels return the data unchanged.
    """
    noise.validate()
    if noise.level_f == 0.0 and noise.level_g == 0.0:
        return replace(ds, noise=noise)
    rng = np.random.default_rng(noise.seed)
    xi = rng.standard_normal(len(ds.g))
    zeta = rng.standard_normal(len(ds.f))
    rms_g = float(np.sqrt(np.mean(ds.g ** 2)))
    rms_f = float(np.sqrt(np.mean(ds.f ** 2)))
    g = ds.g + noise.level_g * rms_g * xi
    f = ds.f + noise.level_f * rms_f * zeta
    w = ds.weights()
    g = g - float(w @ g) / float(w.sum())
    f = f - float(w @ f) / float(w.sum())
    return replace(ds, f=f, g=g, noise=noise)


def generate_suite(coarse, spec, electrode_pairs, gamma, refine=8, eta=1e-8,
                   seed=0, points_per_side=64, noise_level_f=0.0,
                   noise_level_g=0.0, center=0.5, electrode_width=0.5,
                   amplitude=1.0, shape="plus"):
    """Fine model plus one noisy dataset per electrode pair.

    Per-dataset noise seeds are derived as seed XOR dataset index so
    datasets stay independent and reproducible.
    """
    gamma = check_sides(gamma)
    for pair in electrode_pairs:
        for side in pair:
            if side not in gamma:
                raise ValueError(
                    f"electrode side {side!r} lies outside gamma {gamma}")
    model = build_fine_model(spec, coarse, refine=refine, eta=eta, seed=seed)
    datasets = []
    for idx, pair in enumerate(electrode_pairs):
        flux = electrode_pair_flux(pair, coarse.width, coarse.height,
                                   center=center, electrode_width=electrode_width,
                                   amplitude=amplitude, shape=shape)
        ds = simulate_measurement(model, flux, gamma, points_per_side)
        ds = add_noise(ds, NoiseSpec(noise_level_f, noise_level_g,
                                     int(seed) ^ idx))
        datasets.append(ds)
    return model, datasets
