# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; semantics identical to trackforge._kernels.reference."""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor, isfinite

COMPILED = True


def project_hulls(double fx, double fy, double cx, double cy,
                  double k1, double k2, double k3, double p1, double p2,
                  int width, int height,
                  double[:, :, ::1] rot, double[:, ::1] trans,
                  double[:, ::1] verts, cnp.int64_t[::1] offsets):
    cdef Py_ssize_t n = rot.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=2] boxes = np.full((n, 4), -1, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] out = boxes
    cdef Py_ssize_t i, j
    cdef double vx, vy, vz, x, y, z, xn, yn, r2, radial, xd, yd, u, v
    cdef double umin, umax, vmin, vmax, fx0, fx1, fy0, fy1
    cdef bint front
    cdef cnp.int64_t ix0, ix1, iy0, iy1

    for i in range(n):
        if offsets[i + 1] <= offsets[i]:
            raise ValueError("every instance needs at least one vertex")
        front = False
        umin = vmin = 0.0
        umax = vmax = 0.0
        for j in range(offsets[i], offsets[i + 1]):
            vx = verts[j, 0]
            vy = verts[j, 1]
            vz = verts[j, 2]
            x = rot[i, 0, 0] * vx + rot[i, 0, 1] * vy + rot[i, 0, 2] * vz + trans[i, 0]
            y = rot[i, 1, 0] * vx + rot[i, 1, 1] * vy + rot[i, 1, 2] * vz + trans[i, 1]
            z = rot[i, 2, 0] * vx + rot[i, 2, 1] * vy + rot[i, 2, 2] * vz + trans[i, 2]
            if z <= 0.0:
                continue
            xn = x / z
            yn = y / z
            r2 = xn * xn + yn * yn
            radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
            xd = xn * radial + 2.0 * p1 * xn * yn + p2 * (r2 + 2.0 * xn * xn)
            yd = yn * radial + p1 * (r2 + 2.0 * yn * yn) + 2.0 * p2 * xn * yn
            u = fx * xd + cx
            v = fy * yd + cy
            if not (isfinite(u) and isfinite(v)):
                continue
            if not front:
                umin = umax = u
                vmin = vmax = v
                front = True
            else:
                if u < umin:
                    umin = u
                elif u > umax:
                    umax = u
                if v < vmin:
                    vmin = v
                elif v > vmax:
                    vmax = v
        if not front:
            continue
        fx0 = floor(umin)
        fx1 = floor(umax)
        fy0 = floor(vmin)
        fy1 = floor(vmax)
        if fx1 < 0.0 or fx0 > width - 1.0 or fy1 < 0.0 or fy0 > height - 1.0:
            continue
        ix0 = <cnp.int64_t>(fx0 if fx0 > 0.0 else 0.0)
        ix1 = <cnp.int64_t>(fx1 if fx1 < width - 1.0 else width - 1.0)
        iy0 = <cnp.int64_t>(fy0 if fy0 > 0.0 else 0.0)
        iy1 = <cnp.int64_t>(fy1 if fy1 < height - 1.0 else height - 1.0)
        out[i, 0] = ix0
        out[i, 1] = iy0
        out[i, 2] = ix1 - ix0 + 1
        out[i, 3] = iy1 - iy0 + 1
    return boxes


def iou_matrix(double[:, ::1] a, double[:, ::1] b):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] result = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] out = result
    cdef Py_ssize_t i, j
    cdef double ax1, ay1, ax2, ay2, area_a, bx1, by1, bx2, by2, iw, ih, inter, union_

    for i in range(n):
        ax1 = a[i, 0]
        ay1 = a[i, 1]
        ax2 = ax1 + a[i, 2]
        ay2 = ay1 + a[i, 3]
        area_a = a[i, 2] * a[i, 3]
        for j in range(m):
            bx1 = b[j, 0]
            by1 = b[j, 1]
            bx2 = bx1 + b[j, 2]
            by2 = by1 + b[j, 3]
            iw = (ax2 if ax2 < bx2 else bx2) - (ax1 if ax1 > bx1 else bx1)
            if iw <= 0.0:
                continue
            ih = (ay2 if ay2 < by2 else by2) - (ay1 if ay1 > by1 else by1)
            if ih <= 0.0:
                continue
            inter = iw * ih
            union_ = area_a + b[j, 2] * b[j, 3] - inter
            out[i, j] = inter / union_
    return result
