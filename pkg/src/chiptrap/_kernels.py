"""Single-layer integrals over flat convex quadrilateral panels.

All kernels return the *geometric* integral  I(p) = int_S dA / |p - r|  (units of
length) or its gradient with respect to p.  Multiplying by sigma / (4 pi eps0)
gives the potential of a uniformly charged panel.

Panels are stored as ``verts[j, 4, 3]`` with vertices ordered counter-clockwise
about ``normals[j]``.  A triangle is encoded as a quad with one repeated vertex;
zero-length edges are skipped.
"""

import math

import numpy as np
from numba import njit, prange

_EDGE_EPS = 1e-30


@njit(cache=True, fastmath=False)
def _solid_angle_tri(px, py, pz, a, b, c):
    # Van Oosterom & Strackee, signed.
    r1x, r1y, r1z = a[0] - px, a[1] - py, a[2] - pz
    r2x, r2y, r2z = b[0] - px, b[1] - py, b[2] - pz
    r3x, r3y, r3z = c[0] - px, c[1] - py, c[2] - pz
    n1 = math.sqrt(r1x * r1x + r1y * r1y + r1z * r1z)
    n2 = math.sqrt(r2x * r2x + r2y * r2y + r2z * r2z)
    n3 = math.sqrt(r3x * r3x + r3y * r3y + r3z * r3z)
    cx = r2y * r3z - r2z * r3y
    cy = r2z * r3x - r2x * r3z
    cz = r2x * r3y - r2y * r3x
    num = r1x * cx + r1y * cy + r1z * cz
    den = (n1 * n2 * n3
           + (r1x * r2x + r1y * r2y + r1z * r2z) * n3
           + (r1x * r3x + r1y * r3y + r1z * r3z) * n2
           + (r2x * r3x + r2y * r3y + r2z * r3z) * n1)
    return 2.0 * math.atan2(num, den)


@njit(cache=True)
def _panel_terms(px, py, pz, v, n, want_grad, out):
    """Exact integral (out[0]) and, optionally, gradient (out[1:4])."""
    h = (px - v[0, 0]) * n[0] + (py - v[0, 1]) * n[1] + (pz - v[0, 2]) * n[2]
    qx = px - h * n[0]
    qy = py - h * n[1]
    qz = pz - h * n[2]
    edge_sum = 0.0
    gx = 0.0
    gy = 0.0
    gz = 0.0
    for k in range(4):
        a = v[k]
        b = v[(k + 1) % 4]
        ex = b[0] - a[0]
        ey = b[1] - a[1]
        ez = b[2] - a[2]
        d = math.sqrt(ex * ex + ey * ey + ez * ez)
        if d < 1e-15:
            continue
        tx = ex / d
        ty = ey / d
        tz = ez / d
        # outward in-plane edge normal m = t x n
        mx = ty * n[2] - tz * n[1]
        my = tz * n[0] - tx * n[2]
        mz = tx * n[1] - ty * n[0]
        s = (a[0] - qx) * mx + (a[1] - qy) * my + (a[2] - qz) * mz
        ra = math.sqrt((px - a[0]) ** 2 + (py - a[1]) ** 2 + (pz - a[2]) ** 2)
        rb = math.sqrt((px - b[0]) ** 2 + (py - b[1]) ** 2 + (pz - b[2]) ** 2)
        den = ra + rb - d
        if den < _EDGE_EPS:
            den = _EDGE_EPS
        f = math.log((ra + rb + d) / den)
        edge_sum += s * f
        if want_grad:
            gx -= mx * f
            gy -= my * f
            gz -= mz * f
    omega = _solid_angle_tri(px, py, pz, v[0], v[1], v[2]) + \
        _solid_angle_tri(px, py, pz, v[0], v[2], v[3])
    omega = abs(omega)
    out[0] = edge_sum - abs(h) * omega
    if want_grad:
        sg = 1.0 if h > 0.0 else (-1.0 if h < 0.0 else 0.0)
        out[1] = gx - sg * omega * n[0]
        out[2] = gy - sg * omega * n[1]
        out[3] = gz - sg * omega * n[2]


@njit(cache=True)
def panel_integral(p, v, n):
    out = np.empty(4)
    _panel_terms(p[0], p[1], p[2], v, n, False, out)
    return out[0]


@njit(cache=True)
def panel_gradient(p, v, n):
    out = np.empty(4)
    _panel_terms(p[0], p[1], p[2], v, n, True, out)
    return out[1:4].copy()


@njit(cache=True, parallel=True)
def influence_matrix(targets, verts, normals, centroids, areas, diam, near):
    """I[i, j] for every target/panel pair (monopole beyond ``near * diam``)."""
    m = targets.shape[0]
    nps = verts.shape[0]
    out = np.empty((m, nps))
    for i in prange(m):
        buf = np.empty(4)
        px = targets[i, 0]
        py = targets[i, 1]
        pz = targets[i, 2]
        for j in range(nps):
            dx = px - centroids[j, 0]
            dy = py - centroids[j, 1]
            dz = pz - centroids[j, 2]
            r = math.sqrt(dx * dx + dy * dy + dz * dz)
            if r > near * diam[j]:
                out[i, j] = areas[j] / r
            else:
                _panel_terms(px, py, pz, verts[j], normals[j], False, buf)
                out[i, j] = buf[0]
    return out


@njit(cache=True, parallel=True)
def superpose(points, verts, normals, centroids, areas, diam, near, weights,
              want_grad):
    """Sum_j weights[j] * I_j(p) and, with ``want_grad``, Sum_j weights[j] * grad I_j.

    Returns an (M, 4) array: column 0 the integral sum, columns 1..3 the gradient.
    Column 0 of the far-field term is exact for a point charge; so is the gradient.
    """
    m = points.shape[0]
    nps = verts.shape[0]
    out = np.zeros((m, 4))
    for i in prange(m):
        buf = np.empty(4)
        px = points[i, 0]
        py = points[i, 1]
        pz = points[i, 2]
        acc0 = 0.0
        acc1 = 0.0
        acc2 = 0.0
        acc3 = 0.0
        for j in range(nps):
            w = weights[j]
            if w == 0.0:
                continue
            dx = px - centroids[j, 0]
            dy = py - centroids[j, 1]
            dz = pz - centroids[j, 2]
            r2 = dx * dx + dy * dy + dz * dz
            r = math.sqrt(r2)
            if r > near * diam[j]:
                q = w * areas[j]
                acc0 += q / r
                if want_grad:
                    f = q / (r2 * r)
                    acc1 -= f * dx
                    acc2 -= f * dy
                    acc3 -= f * dz
            else:
                _panel_terms(px, py, pz, verts[j], normals[j], want_grad, buf)
                acc0 += w * buf[0]
                if want_grad:
                    acc1 += w * buf[1]
                    acc2 += w * buf[2]
                    acc3 += w * buf[3]
        out[i, 0] = acc0
        out[i, 1] = acc1
        out[i, 2] = acc2
        out[i, 3] = acc3
    return out


@njit(cache=True, parallel=True)
def nearest_relative_distance(points, centroids, diam):
    """min_j |p - c_j| / diam_j for each point (cheap proximity screen)."""
    m = points.shape[0]
    out = np.empty(m)
    for i in prange(m):
        best = np.inf
        for j in range(centroids.shape[0]):
            dx = points[i, 0] - centroids[j, 0]
            dy = points[i, 1] - centroids[j, 1]
            dz = points[i, 2] - centroids[j, 2]
            r = math.sqrt(dx * dx + dy * dy + dz * dz) / diam[j]
            if r < best:
                best = r
        out[i] = best
    return out
