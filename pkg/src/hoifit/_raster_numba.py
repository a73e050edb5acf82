"""Numba loops behind the fast soft rasterizer.

Serial accumulation keeps results bit-deterministic. The math mirrors the
torch reference in _kernels.soft_silhouette_reference exactly: signed squared
distance to the projected triangle boundary, sigmoid sharpness ``coef`` in
inverse squared pixels, hard skip outside the blur radius.
"""
from __future__ import annotations

import numba as nb
import numpy as np


@nb.njit(inline="always")
def _edge_sqdist(px, py, ax, ay, bx, by):
    abx, aby = bx - ax, by - ay
    apx, apy = px - ax, py - ay
    denom = abx * abx + aby * aby
    t = 0.0
    if denom > 1e-30:
        t = (apx * abx + apy * aby) / denom
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    cx = ax + t * abx - px
    cy = ay + t * aby - py
    return cx * cx + cy * cy, t, cx, cy


@nb.njit(cache=True)
def raster_forward(tri, x0, y0, x1, y1, frame_of_face, height, width, num_frames, coef, blur2):
    acc = np.zeros(num_frames * height * width)
    hw = height * width
    for m in range(tri.shape[0]):
        ax, ay = tri[m, 0, 0], tri[m, 0, 1]
        bx, by = tri[m, 1, 0], tri[m, 1, 1]
        cx, cy = tri[m, 2, 0], tri[m, 2, 1]
        base = frame_of_face[m] * hw
        for iy in range(y0[m], y1[m] + 1):
            py = iy + 0.5
            row = base + iy * width
            for ix in range(x0[m], x1[m] + 1):
                px = ix + 0.5
                d0, _, _, _ = _edge_sqdist(px, py, ax, ay, bx, by)
                d1, _, _, _ = _edge_sqdist(px, py, bx, by, cx, cy)
                d2, _, _, _ = _edge_sqdist(px, py, cx, cy, ax, ay)
                dmin = min(d0, min(d1, d2))
                s0 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
                s1 = (cx - bx) * (py - by) - (cy - by) * (px - bx)
                s2 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
                inside = (s0 > 0.0 and s1 > 0.0 and s2 > 0.0) or (
                    s0 < 0.0 and s1 < 0.0 and s2 < 0.0
                )
                if not inside and dmin > blur2:
                    continue
                u = dmin * coef
                if inside:
                    logmiss = -u - np.log1p(np.exp(-u))
                else:
                    logmiss = -np.log1p(np.exp(-u))
                acc[row + ix] += logmiss
    return acc


@nb.njit(cache=True)
def raster_backward(tri, x0, y0, x1, y1, frame_of_face, grad_acc, height, width, coef, blur2):
    grad_tri = np.zeros(tri.shape)
    hw = height * width
    for m in range(tri.shape[0]):
        ax, ay = tri[m, 0, 0], tri[m, 0, 1]
        bx, by = tri[m, 1, 0], tri[m, 1, 1]
        cx, cy = tri[m, 2, 0], tri[m, 2, 1]
        base = frame_of_face[m] * hw
        for iy in range(y0[m], y1[m] + 1):
            py = iy + 0.5
            row = base + iy * width
            for ix in range(x0[m], x1[m] + 1):
                gacc = grad_acc[row + ix]
                if gacc == 0.0:
                    continue
                px = ix + 0.5
                d0, t0, c0x, c0y = _edge_sqdist(px, py, ax, ay, bx, by)
                d1, t1, c1x, c1y = _edge_sqdist(px, py, bx, by, cx, cy)
                d2, t2, c2x, c2y = _edge_sqdist(px, py, cx, cy, ax, ay)
                if d0 <= d1 and d0 <= d2:
                    edge, dmin, t, ex, ey = 0, d0, t0, c0x, c0y
                elif d1 <= d2:
                    edge, dmin, t, ex, ey = 1, d1, t1, c1x, c1y
                else:
                    edge, dmin, t, ex, ey = 2, d2, t2, c2x, c2y
                s0 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
                s1 = (cx - bx) * (py - by) - (cy - by) * (px - bx)
                s2 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
                inside = (s0 > 0.0 and s1 > 0.0 and s2 > 0.0) or (
                    s0 < 0.0 and s1 < 0.0 and s2 < 0.0
                )
                if not inside and dmin > blur2:
                    continue
                sign = 1.0 if inside else -1.0
                u = sign * dmin * coef
                # D = sigmoid(u), computed stably.
                if u >= 0.0:
                    dcov = 1.0 / (1.0 + np.exp(-u))
                else:
                    eu = np.exp(u)
                    dcov = eu / (1.0 + eu)
                g2 = gacc * (-sign * coef * dcov)
                gex = g2 * 2.0 * ex
                gey = g2 * 2.0 * ey
                i0 = edge
                i1 = (edge + 1) % 3
                grad_tri[m, i0, 0] += gex * (1.0 - t)
                grad_tri[m, i0, 1] += gey * (1.0 - t)
                grad_tri[m, i1, 0] += gex * t
                grad_tri[m, i1, 1] += gey * t
    return grad_tri
