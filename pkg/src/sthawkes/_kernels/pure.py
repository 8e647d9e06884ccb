"""Pure-NumPy implementations of the hot numerical kernels.

Mirrors the API of the compiled extension ``sthawkes._kernels._core``.
All routines assume events sorted ascending in time and use the same
exponent cutoff as the compiled core: any term whose exponent exceeds
``EXP_CUTOFF`` underflows to exactly 0.0 in IEEE double precision, so
skipping it is bit-exact, not an approximation.
"""

from __future__ import annotations

import numpy as np

EXP_CUTOFF = 800.0

BACKEND = "pure"


def trig_sums(t, x, y, omega, sigma, max_lag):
    """Per-event triggering sums of the exponential/Gaussian Hawkes kernel.

    For each event j (strictly later events only, ties excluded):

        trig[j]  = sum_i omega * exp(-omega*dt - r2/(2 sigma^2)) / (2 pi sigma^2)
        d_om[j]  = d trig[j] / d omega
        d_sig[j] = d trig[j] / d sigma

    restricted to pairs with 0 < dt <= max_lag.  Pass ``max_lag=inf`` for
    the exact all-pairs sum.
    """
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = t.shape[0]
    trig = np.zeros(n)
    d_om = np.zeros(n)
    d_sig = np.zeros(n)
    if n == 0:
        return trig, d_om, d_sig
    # beyond lag_cap every term is exactly 0.0 (exponent > EXP_CUTOFF)
    lag_cap = min(max_lag, EXP_CUTOFF / omega)
    inv2s2 = 1.0 / (2.0 * sigma * sigma)
    norm = omega / (2.0 * np.pi * sigma * sigma)
    inv_om = 1.0 / omega
    s3 = sigma * sigma * sigma
    two_over_s = 2.0 / sigma
    for j in range(1, n):
        tj = t[j]
        lo = np.searchsorted(t, tj - lag_cap, side="left")
        if lo >= j:
            continue
        dt = tj - t[lo:j]
        dx = x[j] - x[lo:j]
        dy = y[j] - y[lo:j]
        r2 = dx * dx + dy * dy
        e = omega * dt + r2 * inv2s2
        live = (dt > 0.0) & (e <= EXP_CUTOFF)
        if not np.any(live):
            continue
        term = np.where(live, norm * np.exp(np.where(live, -e, 0.0)), 0.0)
        trig[j] = term.sum()
        d_om[j] = ((inv_om - dt) * term).sum()
        d_sig[j] = ((r2 / s3 - two_over_s) * term).sum()
    return trig, d_om, d_sig


def _epan(u):
    w = 0.75 * (1.0 - u * u)
    return np.where(np.abs(u) < 1.0, w, 0.0)


def epan2_grid(ex, ey, w, gx, gy, h):
    """Weighted product-Epanechnikov sum on a rectangular grid.

    Returns array of shape (len(gy), len(gx)) with
    ``sum_i w[i] * k((gx-ex[i])/h) * k((gy-ey[i])/h) / h^2``.
    """
    gx = np.asarray(gx, dtype=np.float64)
    gy = np.asarray(gy, dtype=np.float64)
    out = np.zeros((gy.shape[0], gx.shape[0]))
    if len(ex) == 0:
        return out
    inv_h2 = 1.0 / (h * h)
    for xi, yi, wi in zip(ex, ey, w):
        jx = np.nonzero(np.abs(gx - xi) < h)[0]
        jy = np.nonzero(np.abs(gy - yi) < h)[0]
        if jx.size == 0 or jy.size == 0:
            continue
        kx = _epan((gx[jx] - xi) / h)
        ky = _epan((gy[jy] - yi) / h)
        out[np.ix_(jy, jx)] += (wi * inv_h2) * np.outer(ky, kx)
    return out


def epan1_grid(et, w, gt, h):
    """Weighted Epanechnikov sum on a 1-D grid: sum_i w[i]*k((gt-et[i])/h)/h."""
    gt = np.asarray(gt, dtype=np.float64)
    out = np.zeros(gt.shape[0])
    inv_h = 1.0 / h
    for ti, wi in zip(et, w):
        jt = np.nonzero(np.abs(gt - ti) < h)[0]
        if jt.size == 0:
            continue
        out[jt] += (wi * inv_h) * _epan((gt[jt] - ti) / h)
    return out


def epan2_points(ex, ey, w, qx, qy, h):
    """Exact weighted product-Epanechnikov sum at arbitrary query points."""
    ex = np.asarray(ex, dtype=np.float64)
    ey = np.asarray(ey, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    qx = np.atleast_1d(np.asarray(qx, dtype=np.float64))
    qy = np.atleast_1d(np.asarray(qy, dtype=np.float64))
    out = np.zeros(qx.shape[0])
    if ex.shape[0] == 0:
        return out
    inv_h2 = 1.0 / (h * h)
    chunk = max(1, int(4e6 // max(1, ex.shape[0])))
    for s in range(0, qx.shape[0], chunk):
        ux = (qx[s : s + chunk, None] - ex[None, :]) / h
        uy = (qy[s : s + chunk, None] - ey[None, :]) / h
        out[s : s + chunk] = (_epan(ux) * _epan(uy) @ w) * inv_h2
    return out


def epan1_points(et, w, qt, h):
    """Exact weighted Epanechnikov sum at arbitrary 1-D query points."""
    et = np.asarray(et, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    qt = np.atleast_1d(np.asarray(qt, dtype=np.float64))
    out = np.zeros(qt.shape[0])
    if et.shape[0] == 0:
        return out
    inv_h = 1.0 / h
    chunk = max(1, int(4e6 // max(1, et.shape[0])))
    for s in range(0, qt.shape[0], chunk):
        u = (qt[s : s + chunk, None] - et[None, :]) / h
        out[s : s + chunk] = (_epan(u) @ w) * inv_h
    return out
