# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot loops: Hawkes triggering sums and Epanechnikov KDE sums.

Same contracts as ``sthawkes._kernels.pure``; the exponent cutoff of 800
skips only terms that underflow to exactly 0.0 in double precision.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs

cnp.import_array()

BACKEND = "cython"

DEF EXP_CUTOFF = 800.0


def trig_sums(const double[::1] t, const double[::1] x, const double[::1] y,
              double omega, double sigma, double max_lag):
    cdef Py_ssize_t n = t.shape[0]
    trig_arr = np.zeros(n)
    dom_arr = np.zeros(n)
    dsig_arr = np.zeros(n)
    cdef double[::1] trig = trig_arr
    cdef double[::1] d_om = dom_arr
    cdef double[::1] d_sig = dsig_arr
    if n == 0:
        return trig_arr, dom_arr, dsig_arr

    cdef double lag_cap = EXP_CUTOFF / omega
    if max_lag < lag_cap:
        lag_cap = max_lag
    cdef double inv2s2 = 1.0 / (2.0 * sigma * sigma)
    cdef double norm = omega / (2.0 * np.pi * sigma * sigma)
    cdef double inv_om = 1.0 / omega
    cdef double s3 = sigma * sigma * sigma
    cdef double two_over_s = 2.0 / sigma

    cdef Py_ssize_t i, j
    cdef double tj, xj, yj, dt, dx, dy, r2, e, term, acc, acc_om, acc_sig
    for j in range(1, n):
        tj = t[j]
        xj = x[j]
        yj = y[j]
        acc = 0.0
        acc_om = 0.0
        acc_sig = 0.0
        i = j - 1
        while i >= 0:
            dt = tj - t[i]
            if dt > lag_cap:
                break
            if dt > 0.0:
                dx = xj - x[i]
                dy = yj - y[i]
                r2 = dx * dx + dy * dy
                e = omega * dt + r2 * inv2s2
                if e <= EXP_CUTOFF:
                    term = norm * exp(-e)
                    acc += term
                    acc_om += (inv_om - dt) * term
                    acc_sig += (r2 / s3 - two_over_s) * term
            i -= 1
        trig[j] = acc
        d_om[j] = acc_om
        d_sig[j] = acc_sig
    return trig_arr, dom_arr, dsig_arr


cdef inline double _epan(double u) nogil:
    if fabs(u) < 1.0:
        return 0.75 * (1.0 - u * u)
    return 0.0


def epan2_grid(const double[::1] ex, const double[::1] ey, const double[::1] w,
               const double[::1] gx, const double[::1] gy, double h):
    cdef Py_ssize_t nx = gx.shape[0], ny = gy.shape[0], n = ex.shape[0]
    out_arr = np.zeros((ny, nx))
    cdef double[:, ::1] out = out_arr
    if n == 0 or nx == 0 or ny == 0:
        return out_arr
    cdef double inv_h2 = 1.0 / (h * h)
    cdef Py_ssize_t i, jx, jy, jx0, jx1, jy0, jy1
    cdef double xi, yi, wi, ky
    gx_np = np.asarray(gx)
    gy_np = np.asarray(gy)
    for i in range(n):
        xi = ex[i]
        yi = ey[i]
        wi = w[i] * inv_h2
        jx0 = np.searchsorted(gx_np, xi - h, side="right")
        jx1 = np.searchsorted(gx_np, xi + h, side="left")
        jy0 = np.searchsorted(gy_np, yi - h, side="right")
        jy1 = np.searchsorted(gy_np, yi + h, side="left")
        for jy in range(jy0, jy1):
            ky = wi * _epan((gy[jy] - yi) / h)
            if ky == 0.0:
                continue
            for jx in range(jx0, jx1):
                out[jy, jx] += ky * _epan((gx[jx] - xi) / h)
    return out_arr


def epan1_grid(const double[::1] et, const double[::1] w, const double[::1] gt, double h):
    cdef Py_ssize_t nt = gt.shape[0], n = et.shape[0]
    out_arr = np.zeros(nt)
    cdef double[::1] out = out_arr
    if n == 0 or nt == 0:
        return out_arr
    cdef double inv_h = 1.0 / h
    cdef Py_ssize_t i, jt, jt0, jt1
    cdef double ti, wi
    gt_np = np.asarray(gt)
    for i in range(n):
        ti = et[i]
        wi = w[i] * inv_h
        jt0 = np.searchsorted(gt_np, ti - h, side="right")
        jt1 = np.searchsorted(gt_np, ti + h, side="left")
        for jt in range(jt0, jt1):
            out[jt] += wi * _epan((gt[jt] - ti) / h)
    return out_arr


def epan2_points(const double[::1] ex, const double[::1] ey, const double[::1] w,
                 const double[::1] qx, const double[::1] qy, double h):
    cdef Py_ssize_t n = ex.shape[0], m = qx.shape[0]
    out_arr = np.zeros(m)
    cdef double[::1] out = out_arr
    cdef double inv_h2 = 1.0 / (h * h)
    cdef Py_ssize_t i, q
    cdef double acc, ux, uy
    for q in range(m):
        acc = 0.0
        for i in range(n):
            ux = (qx[q] - ex[i]) / h
            if fabs(ux) >= 1.0:
                continue
            uy = (qy[q] - ey[i]) / h
            if fabs(uy) >= 1.0:
                continue
            acc += w[i] * _epan(ux) * _epan(uy)
        out[q] = acc * inv_h2
    return out_arr


def epan1_points(const double[::1] et, const double[::1] w, const double[::1] qt, double h):
    cdef Py_ssize_t n = et.shape[0], m = qt.shape[0]
    out_arr = np.zeros(m)
    cdef double[::1] out = out_arr
    cdef double inv_h = 1.0 / h
    cdef Py_ssize_t i, q
    cdef double acc, u
    for q in range(m):
        acc = 0.0
        for i in range(n):
            u = (qt[q] - et[i]) / h
            if fabs(u) < 1.0:
                acc += w[i] * _epan(u)
        out[q] = acc * inv_h
    return out_arr
