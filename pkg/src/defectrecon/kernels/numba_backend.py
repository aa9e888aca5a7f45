"""Numba implementations of the hot kernels.

All loops are serial; accumulation order matches the numpy backend
(bincount adds in input order) so both backends are deterministic.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def accumulate(idx, weights, size):
    out = np.zeros(size)
    for k in range(idx.shape[0]):
        out[idx[k]] += weights[k]
    return out


@njit(cache=True)
def tri_gradients(cells, grads, u):
    m = cells.shape[0]
    out = np.empty((m, 2))
    for t in range(m):
        gx = 0.0
        gy = 0.0
        for a in range(3):
            ua = u[cells[t, a]]
            gx += ua * grads[t, a, 0]
            gy += ua * grads[t, a, 1]
        out[t, 0] = gx
        out[t, 1] = gy
    return out


@njit(cache=True)
def stiffness_action(cells, grads, area, coeff, u, n):
    out = np.zeros(n)
    for t in range(cells.shape[0]):
        gx = 0.0
        gy = 0.0
        for a in range(3):
            ua = u[cells[t, a]]
            gx += ua * grads[t, a, 0]
            gy += ua * grads[t, a, 1]
        w = coeff[t] * area[t]
        for a in range(3):
            out[cells[t, a]] += w * (grads[t, a, 0] * gx + grads[t, a, 1] * gy)
    return out


@njit(cache=True)
def _csr_matvec(indptr, indices, data, v, out):
    for i in range(indptr.shape[0] - 1):
        s = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            s += data[k] * v[indices[k]]
        out[i] = s


@njit(cache=True)
def _mean(v):
    s = 0.0
    for i in range(v.shape[0]):
        s += v[i]
    return s / v.shape[0]


@njit(cache=True)
def _norm(v):
    s = 0.0
    for i in range(v.shape[0]):
        s += v[i] * v[i]
    return np.sqrt(s)


@njit(cache=True)
def pcg(indptr, indices, data, b, x0, invdiag, rtol, maxiter, deflate):
    n = b.shape[0]
    bnorm = _norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0.0, 0, True
    x = x0.copy()
    if deflate:
        mx = _mean(x)
        for i in range(n):
            x[i] -= mx
    Ax = np.empty(n)
    _csr_matvec(indptr, indices, data, x, Ax)
    r = np.empty(n)
    for i in range(n):
        r[i] = b[i] - Ax[i]
    if deflate:
        mr = _mean(r)
        for i in range(n):
            r[i] -= mr
    z = np.empty(n)
    for i in range(n):
        z[i] = invdiag[i] * r[i]
    if deflate:
        mz = _mean(z)
        for i in range(n):
            z[i] -= mz
    p = z.copy()
    rz = 0.0
    for i in range(n):
        rz += r[i] * z[i]
    Ap = np.empty(n)
    k = 0
    while True:
        res = _norm(r)
        if res <= rtol * bnorm:
            return x, res / bnorm, k, True
        if k >= maxiter or rz <= 0.0:
            return x, res / bnorm, k, False
        _csr_matvec(indptr, indices, data, p, Ap)
        pAp = 0.0
        for i in range(n):
            pAp += p[i] * Ap[i]
        if pAp <= 0.0:
            return x, res / bnorm, k, False
        alpha = rz / pAp
        for i in range(n):
            x[i] += alpha * p[i]
            r[i] -= alpha * Ap[i]
        if deflate:
            mr = _mean(r)
            for i in range(n):
                r[i] -= mr
        for i in range(n):
            z[i] = invdiag[i] * r[i]
        if deflate:
            mz = _mean(z)
            for i in range(n):
                z[i] -= mz
        rz_new = 0.0
        for i in range(n):
            rz_new += r[i] * z[i]
        beta = rz_new / rz
        for i in range(n):
            p[i] = z[i] + beta * p[i]
        rz = rz_new
        k += 1


@njit(cache=True)
def _cross(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


@njit(cache=True)
def _between(ax, ay, bx, by, px, py):
    return (min(ax, bx) <= px <= max(ax, bx)) and (min(ay, by) <= py <= max(ay, by))


@njit(cache=True)
def _segs_meet(p1x, p1y, p2x, p2y, q1x, q1y, q2x, q2y):
    o1 = _cross(p1x, p1y, p2x, p2y, q1x, q1y)
    o2 = _cross(p1x, p1y, p2x, p2y, q2x, q2y)
    o3 = _cross(q1x, q1y, q2x, q2y, p1x, p1y)
    o4 = _cross(q1x, q1y, q2x, q2y, p2x, p2y)
    if ((o1 > 0 and o2 < 0) or (o1 < 0 and o2 > 0)) and \
       ((o3 > 0 and o4 < 0) or (o3 < 0 and o4 > 0)):
        return True
    if o1 == 0.0 and _between(p1x, p1y, p2x, p2y, q1x, q1y):
        return True
    if o2 == 0.0 and _between(p1x, p1y, p2x, p2y, q2x, q2y):
        return True
    if o3 == 0.0 and _between(q1x, q1y, q2x, q2y, p1x, p1y):
        return True
    if o4 == 0.0 and _between(q1x, q1y, q2x, q2y, p2x, p2y):
        return True
    return False


@njit(cache=True)
def _in_tri(px, py, ax, ay, bx, by, cx, cy):
    d1 = _cross(ax, ay, bx, by, px, py)
    d2 = _cross(bx, by, cx, cy, px, py)
    d3 = _cross(cx, cy, ax, ay, px, py)
    neg = (d1 < 0) or (d2 < 0) or (d3 < 0)
    pos = (d1 > 0) or (d2 > 0) or (d3 > 0)
    return not (neg and pos)


@njit(cache=True)
def mark_cells_crossed(nodes, cells, seg_a, seg_b):
    m = cells.shape[0]
    out = np.zeros(m, dtype=np.bool_)
    sax, say = seg_a[0], seg_a[1]
    sbx, sby = seg_b[0], seg_b[1]
    for t in range(m):
        ax, ay = nodes[cells[t, 0], 0], nodes[cells[t, 0], 1]
        bx, by = nodes[cells[t, 1], 0], nodes[cells[t, 1], 1]
        cx, cy = nodes[cells[t, 2], 0], nodes[cells[t, 2], 1]
        if _in_tri(sax, say, ax, ay, bx, by, cx, cy) or \
           _in_tri(sbx, sby, ax, ay, bx, by, cx, cy):
            out[t] = True
            continue
        if _segs_meet(ax, ay, bx, by, sax, say, sbx, sby) or \
           _segs_meet(bx, by, cx, cy, sax, say, sbx, sby) or \
           _segs_meet(cx, cy, ax, ay, sax, say, sbx, sby):
            out[t] = True
    return out


@njit(cache=True)
def points_in_polygon(points, poly):
    npt = points.shape[0]
    nv = poly.shape[0]
    out = np.zeros(npt, dtype=np.bool_)
    for p in range(npt):
        x = points[p, 0]
        y = points[p, 1]
        inside = False
        on_edge = False
        for i in range(nv):
            x1 = poly[i, 0]
            y1 = poly[i, 1]
            x2 = poly[(i + 1) % nv, 0]
            y2 = poly[(i + 1) % nv, 1]
            if _cross(x1, y1, x2, y2, x, y) == 0.0 and _between(x1, y1, x2, y2, x, y):
                on_edge = True
                break
            if (y1 > y) != (y2 > y):
                xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
                if x < xint:
                    inside = not inside
        out[p] = inside or on_edge
    return out
