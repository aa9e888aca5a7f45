"""Pure-numpy twins of the numba kernels.

Signature-compatible with numba_backend so the dispatcher can swap them
freely.  Scatter-adds go through np.bincount, which accumulates in input
order, matching the sequential loops of the numba path.
"""

import numpy as np
import scipy.sparse as sp


def accumulate(idx, weights, size):
    """Scatter-add weights into a fresh array of the given size."""
    return np.bincount(idx, weights=weights, minlength=size).astype(float)


def tri_gradients(cells, grads, u):
    """Gradient of the P1 interpolant of u on each triangle, (n_cells, 2)."""
    return np.einsum("ta,tad->td", u[cells], grads)


def stiffness_action(cells, grads, area, coeff, u, n):
    """y_i = sum_T coeff_T |T| (grad hat_i . grad u)_T without assembling."""
    gu = np.einsum("ta,tad->td", u[cells], grads)
    w = coeff * area
    contrib = np.einsum("tad,td->ta", grads, gu) * w[:, None]
    return np.bincount(cells.ravel(), weights=contrib.ravel(), minlength=n)


def pcg(indptr, indices, data, b, x0, invdiag, rtol, maxiter, deflate):
    """Jacobi-preconditioned conjugate gradients on a CSR matrix.

    With deflate=True the iteration is confined to the zero-mean subspace
    (singular Neumann operators whose kernel is the constants).  Returns
    (x, relative_residual, iterations, converged).
    """
    n = b.shape[0]
    A = sp.csr_matrix((data, indices, indptr), shape=(n, n))
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0.0, 0, True
    x = x0.copy()
    if deflate:
        x -= x.mean()
    r = b - A @ x
    if deflate:
        r -= r.mean()
    z = invdiag * r
    if deflate:
        z -= z.mean()
    p = z.copy()
    rz = float(r @ z)
    k = 0
    while True:
        res = np.linalg.norm(r)
        if res <= rtol * bnorm:
            return x, res / bnorm, k, True
        if k >= maxiter or rz <= 0.0:
            return x, res / bnorm, k, False
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            return x, res / bnorm, k, False
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if deflate:
            r -= r.mean()
        z = invdiag * r
        if deflate:
            z -= z.mean()
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        k += 1


def _cross(ax, ay, bx, by, cx, cy):
    # orientation of c relative to segment a->b
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _between(ax, ay, bx, by, px, py):
    return ((np.minimum(ax, bx) <= px) & (px <= np.maximum(ax, bx))
            & (np.minimum(ay, by) <= py) & (py <= np.maximum(ay, by)))


def mark_cells_crossed(nodes, cells, seg_a, seg_b):
    """True per cell when the closed triangle meets segment [seg_a, seg_b]."""
    p = nodes[cells]
    sax, say = float(seg_a[0]), float(seg_a[1])
    sbx, sby = float(seg_b[0]), float(seg_b[1])

    def in_tri(px, py):
        d1 = _cross(p[:, 0, 0], p[:, 0, 1], p[:, 1, 0], p[:, 1, 1], px, py)
        d2 = _cross(p[:, 1, 0], p[:, 1, 1], p[:, 2, 0], p[:, 2, 1], px, py)
        d3 = _cross(p[:, 2, 0], p[:, 2, 1], p[:, 0, 0], p[:, 0, 1], px, py)
        neg = (d1 < 0) | (d2 < 0) | (d3 < 0)
        pos = (d1 > 0) | (d2 > 0) | (d3 > 0)
        return ~(neg & pos)

    hit = in_tri(sax, say) | in_tri(sbx, sby)
    for e in range(3):
        q1 = p[:, e]
        q2 = p[:, (e + 1) % 3]
        o1 = _cross(q1[:, 0], q1[:, 1], q2[:, 0], q2[:, 1], sax, say)
        o2 = _cross(q1[:, 0], q1[:, 1], q2[:, 0], q2[:, 1], sbx, sby)
        o3 = _cross(sax, say, sbx, sby, q1[:, 0], q1[:, 1])
        o4 = _cross(sax, say, sbx, sby, q2[:, 0], q2[:, 1])
        proper = (((o1 > 0) & (o2 < 0)) | ((o1 < 0) & (o2 > 0))) \
            & (((o3 > 0) & (o4 < 0)) | ((o3 < 0) & (o4 > 0)))
        touch = ((o1 == 0) & _between(q1[:, 0], q1[:, 1], q2[:, 0], q2[:, 1], sax, say)) \
            | ((o2 == 0) & _between(q1[:, 0], q1[:, 1], q2[:, 0], q2[:, 1], sbx, sby)) \
            | ((o3 == 0) & _between(sax, say, sbx, sby, q1[:, 0], q1[:, 1])) \
            | ((o4 == 0) & _between(sax, say, sbx, sby, q2[:, 0], q2[:, 1]))
        hit |= proper | touch
    return hit


def points_in_polygon(points, poly):
    """Even-odd rule point-in-polygon; boundary points count as inside."""
    x = points[:, 0]
    y = points[:, 1]
    inside = np.zeros(len(points), dtype=bool)
    on_edge = np.zeros(len(points), dtype=bool)
    nv = len(poly)
    for i in range(nv):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % nv]
        on_edge |= (_cross(x1, y1, x2, y2, x, y) == 0) & _between(x1, y1, x2, y2, x, y)
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xint)
    return inside | on_edge
