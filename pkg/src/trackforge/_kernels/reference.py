"""NumPy implementations of the hot-loop kernels.

These mirror ``trackforge._kernels._ext`` operation for operation and are
selected at import time when the compiled extension is unavailable.
"""

import numpy as np

COMPILED = False


def project_hulls(fx, fy, cx, cy, k1, k2, k3, p1, p2, width, height,
                  rot, trans, verts, offsets):
    """Project per-instance vertex sets and fit clipped integer pixel boxes.

    rot (N,3,3) and trans (N,3) map model-frame vertices into the camera
    frame; verts (M,3) holds all instances' vertices concatenated, sliced
    by offsets (N+1,).  Vertices with z <= 0 or a non-finite projection are
    ignored.  Pixel k spans [k, k+1), so the box over pixel indices
    [x0, x1] is encoded (x0, y0, x1-x0+1, y1-y0+1) after clipping to the
    image; instances with no projected pixel inside the image yield
    (-1, -1, -1, -1).

    Returns an (N, 4) int64 array.
    """
    n = rot.shape[0]
    boxes = np.full((n, 4), -1, dtype=np.int64)
    if n == 0:
        return boxes
    counts = np.diff(offsets)
    if counts.min() < 1:
        raise ValueError("every instance needs at least one vertex")
    idx = np.repeat(np.arange(n), counts)

    p = np.einsum("nij,nj->ni", rot[idx], verts) + trans[idx]
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        xn = x / z
        yn = y / z
        r2 = xn * xn + yn * yn
        radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
        xd = xn * radial + 2.0 * p1 * xn * yn + p2 * (r2 + 2.0 * xn * xn)
        yd = yn * radial + p1 * (r2 + 2.0 * yn * yn) + 2.0 * p2 * xn * yn
        u = fx * xd + cx
        v = fy * yd + cy
    valid = (z > 0.0) & np.isfinite(u) & np.isfinite(v)

    starts = offsets[:-1]
    umin = np.minimum.reduceat(np.where(valid, u, np.inf), starts)
    umax = np.maximum.reduceat(np.where(valid, u, -np.inf), starts)
    vmin = np.minimum.reduceat(np.where(valid, v, np.inf), starts)
    vmax = np.maximum.reduceat(np.where(valid, v, -np.inf), starts)
    front = np.add.reduceat(valid.astype(np.int64), starts) > 0

    fx0 = np.floor(umin)
    fx1 = np.floor(umax)
    fy0 = np.floor(vmin)
    fy1 = np.floor(vmax)
    vis = front & (fx1 >= 0) & (fx0 <= width - 1) & (fy1 >= 0) & (fy0 <= height - 1)
    if vis.any():
        x0 = np.maximum(fx0[vis], 0.0).astype(np.int64)
        x1 = np.minimum(fx1[vis], float(width - 1)).astype(np.int64)
        y0 = np.maximum(fy0[vis], 0.0).astype(np.int64)
        y1 = np.minimum(fy1[vis], float(height - 1)).astype(np.int64)
        boxes[vis, 0] = x0
        boxes[vis, 1] = y0
        boxes[vis, 2] = x1 - x0 + 1
        boxes[vis, 3] = y1 - y0 + 1
    return boxes


def iou_matrix(a, b):
    """Pairwise intersection-over-union of (x, y, w, h) boxes.

    a (N,4) and b (M,4) are float64; returns (N, M) float64.
    """
    ax1 = a[:, 0][:, None]
    ay1 = a[:, 1][:, None]
    ax2 = ax1 + a[:, 2][:, None]
    ay2 = ay1 + a[:, 3][:, None]
    bx1 = b[:, 0][None, :]
    by1 = b[:, 1][None, :]
    bx2 = bx1 + b[:, 2][None, :]
    by2 = by1 + b[:, 3][None, :]

    iw = np.minimum(ax2, bx2) - np.maximum(ax1, bx1)
    ih = np.minimum(ay2, by2) - np.maximum(ay1, by1)
    iw = np.maximum(iw, 0.0)
    ih = np.maximum(ih, 0.0)
    inter = iw * ih
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None, :] - inter
    out = np.zeros_like(inter)
    mask = inter > 0.0
    out[mask] = inter[mask] / union[mask]
    return out
