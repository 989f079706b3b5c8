"""Direct-summation pair kernels.

Every kernel processes the target range ``[i0, i1)`` with a sequential inner
loop over sources, writes per-target results, and returns -1 on success or
the first target index at which a zero-distance singularity was met.
"""

from __future__ import annotations

import math

from numba import njit


@njit(cache=True, nogil=True)
def field_block(tx, ty, sx, sy, sw, delta2, skip_self, i0, i1, ex, ey):
    ns = sx.shape[0]
    for i in range(i0, i1):
        xi = tx[i]
        yi = ty[i]
        accx = 0.0
        accy = 0.0
        for j in range(ns):
            if skip_self and j == i:
                continue
            dx = xi - sx[j]
            dy = yi - sy[j]
            r2 = dx * dx + dy * dy + delta2
            if r2 == 0.0:
                return i
            c = sw[j] / r2
            accx += c * dx
            accy += c * dy
        ex[i] = accx
        ey[i] = accy
    return -1


@njit(cache=True, nogil=True)
def log_block(ax, ay, bx, by, bw, delta2, skip_diag, i0, i1, out):
    nb = bx.shape[0]
    for i in range(i0, i1):
        xi = ax[i]
        yi = ay[i]
        acc = 0.0
        for j in range(nb):
            if skip_diag and j == i:
                continue
            dx = xi - bx[j]
            dy = yi - by[j]
            r2 = dx * dx + dy * dy + delta2
            if r2 == 0.0:
                return i
            acc += bw[j] * 0.5 * math.log(r2)
        out[i] = acc
    return -1


@njit(cache=True, nogil=True)
def hphi_block(ax, ay, agx, agy, bx, by, bw, bgx, bgy, delta2, i0, i1, out):
    # out[i] = sum_j bw[j] * K(x_i - y_j)^perp . (grad(x_i) - grad(y_j)), coincident pairs skipped
    nb = bx.shape[0]
    for i in range(i0, i1):
        xi = ax[i]
        yi = ay[i]
        gxi = agx[i]
        gyi = agy[i]
        acc = 0.0
        for j in range(nb):
            dx = xi - bx[j]
            dy = yi - by[j]
            d2 = dx * dx + dy * dy
            if d2 == 0.0:
                continue
            acc += bw[j] * (-dy * (gxi - bgx[j]) + dx * (gyi - bgy[j])) / (d2 + delta2)
        out[i] = acc
    return -1


@njit(cache=True, nogil=True)
def ball_mass_block(cx, cy, px, py, pw, r2, i0, i1, out):
    n = px.shape[0]
    for i in range(i0, i1):
        xi = cx[i]
        yi = cy[i]
        acc = 0.0
        for j in range(n):
            dx = px[j] - xi
            dy = py[j] - yi
            if dx * dx + dy * dy <= r2:
                acc += pw[j]
        out[i] = acc
    return -1
