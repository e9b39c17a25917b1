# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-pair loop for derivative-pairing matrices.

Same contract as ``kernelpde._gram_py.pair_matrix``.  Differences are taken
explicitly for every pair, so coincident points give ``t == 0`` exactly and
no quadratic expansion is involved.
"""
import numpy as np

from libc.math cimport exp, sqrt
from libc.stdlib cimport free, malloc

from ._kernel_math import matern_poly_coeffs

cdef double MCOEF[5][5]
cdef double ENUM[5][4]

for _p in range(5):
    _c = matern_poly_coeffs(_p)
    for _m in range(5):
        MCOEF[_p][_m] = _c[_m] if _m <= _p else 0.0
for _j, _row in enumerate(((0, 0, 0, 0), (-1, 0, 0, 0), (1, 1, 0, 0), (-3, -3, -1, 0), (15, 15, 6, 1))):
    for _m in range(4):
        ENUM[_j][_m] = _row[_m]


cdef inline double _poly(const double* c, int deg, double x) noexcept nogil:
    cdef double acc = 0.0
    cdef int m
    for m in range(deg, -1, -1):
        acc = acc * x + c[m]
    return acc


cdef void _psi(int code, double param, double t, int order, double* out) noexcept nogil:
    cdef int k, p, j
    cdef double e, base, c, nu, rho, denom, cp, fact
    if code == 0:
        e = exp(-0.5 * t)
        c = 1.0
        for k in range(order + 1):
            out[k] = c * e
            c *= -0.5
    elif code == 2:
        base = 1.0 / (1.0 + param * t)
        c = base
        fact = 1.0
        for k in range(order + 1):
            out[k] = fact * c
            c *= base
            fact *= -param * (k + 1)
    else:
        p = <int>param
        nu = p + 0.5
        rho = sqrt(2.0 * nu * t)
        e = exp(-rho)
        denom = 1.0
        cp = 1.0
        for k in range(order + 1):
            if k <= p:
                if k > 0:
                    denom *= 2 * (p - k) + 1
                    cp *= -nu
                out[k] = cp / denom * _poly(&MCOEF[p - k][0], p - k, rho) * e
            elif rho == 0.0:
                out[k] = 0.0
            else:
                j = k - p
                out[k] = (nu ** j) * (cp / denom) * _poly(&ENUM[j][0], j - 1, rho) * e / (rho ** (2 * j - 1))


cdef double _combine(const double* psi, double ca, double cb, bint has_ga, bint has_gb, bint has_ha, bint has_hb,
                     double ga, double gb, double gg, double ha, double hb, double Ta, double Tb,
                     double hag, double hbg, double hh, double tt) noexcept nogil:
    cdef double out = ca * cb * psi[0]
    if has_ga:
        out += cb * psi[1] * ga
    if has_gb:
        out -= ca * psi[1] * gb
    if has_ha:
        out += cb * (psi[2] * ha + 2.0 * psi[1] * Ta)
    if has_hb:
        out += ca * (psi[2] * hb + 2.0 * psi[1] * Tb)
    if has_ga and has_gb:
        out -= psi[2] * ga * gb + 2.0 * psi[1] * gg
    if has_ha and has_gb:
        out -= psi[3] * gb * ha + psi[2] * (2.0 * Ta * gb + 4.0 * hag)
    if has_hb and has_ga:
        out += psi[3] * ga * hb + psi[2] * (2.0 * Tb * ga + 4.0 * hbg)
    if has_ha and has_hb:
        out += (psi[4] * ha * hb + psi[3] * (2.0 * Ta * hb + 2.0 * Tb * ha + 8.0 * hh)
                + psi[2] * (4.0 * Ta * Tb + 8.0 * tt))
    return out


def _as_full(h):
    n, d = h.shape
    out = np.zeros((n, d, d))
    idx = np.arange(d)
    out[:, idx, idx] = h
    return out


def pair_matrix(metric, int code, double param, xa, ca, ga, ha, bint ha_full,
                xb, cb, gb, hb, bint hb_full, int order, bint symmetric):
    cdef Py_ssize_t na = xa.shape[0], nb = xb.shape[0], d = xa.shape[1]
    cdef bint has_ga = ga is not None, has_gb = gb is not None
    cdef bint has_ha = ha is not None, has_hb = hb is not None
    cdef bint full = ha_full or hb_full
    if full:
        if has_ha and not ha_full:
            ha = _as_full(ha)
        if has_hb and not hb_full:
            hb = _as_full(hb)
    cdef const double[::1] a = np.ascontiguousarray(metric, dtype=np.float64)
    cdef const double[:, ::1] XA = np.ascontiguousarray(xa, dtype=np.float64)
    cdef const double[:, ::1] XB = np.ascontiguousarray(xb, dtype=np.float64)
    cdef const double[::1] CA = np.ascontiguousarray(ca, dtype=np.float64)
    cdef const double[::1] CB = np.ascontiguousarray(cb, dtype=np.float64)
    dummy2 = np.zeros((1, 1))
    dummy3 = np.zeros((1, 1, 1))
    cdef const double[:, ::1] GA = np.ascontiguousarray(ga, dtype=np.float64) if has_ga else dummy2
    cdef const double[:, ::1] GB = np.ascontiguousarray(gb, dtype=np.float64) if has_gb else dummy2
    cdef const double[:, ::1] HAd = np.ascontiguousarray(ha, dtype=np.float64) if has_ha and not full else dummy2
    cdef const double[:, ::1] HBd = np.ascontiguousarray(hb, dtype=np.float64) if has_hb and not full else dummy2
    cdef const double[:, :, ::1] HAf = np.ascontiguousarray(ha, dtype=np.float64) if has_ha and full else dummy3
    cdef const double[:, :, ::1] HBf = np.ascontiguousarray(hb, dtype=np.float64) if has_hb and full else dummy3
    cdef double[::1] TA = np.zeros(na)
    cdef double[::1] TB = np.zeros(nb)
    if has_ha:
        TA = np.ascontiguousarray((np.einsum("nii->ni", ha) if full else ha) @ np.asarray(a))
    if has_hb:
        TB = np.ascontiguousarray((np.einsum("nii->ni", hb) if full else hb) @ np.asarray(a))

    out_arr = np.empty((na, nb))
    cdef double[:, ::1] out = out_arr
    cdef double* psi = <double*>malloc(5 * sizeof(double))
    cdef double* ad = <double*>malloc(d * sizeof(double))
    cdef double* va = <double*>malloc(d * sizeof(double))
    cdef double* vb = <double*>malloc(d * sizeof(double))
    cdef Py_ssize_t n, m, i, j, m0
    cdef double t, di, adi, sga, sgb, gg, sha, shb, hag, hbg, hh, tt, acc_a, acc_b
    try:
        with nogil:
            for n in range(na):
                m0 = n if symmetric else 0
                for m in range(m0, nb):
                    t = 0.0; sga = 0.0; sgb = 0.0; gg = 0.0
                    sha = 0.0; shb = 0.0; hag = 0.0; hbg = 0.0; hh = 0.0; tt = 0.0
                    for i in range(d):
                        di = XA[n, i] - XB[m, i]
                        adi = a[i] * di
                        ad[i] = adi
                        t += adi * di
                        if has_ga:
                            sga += GA[n, i] * adi
                        if has_gb:
                            sgb += GB[m, i] * adi
                            if has_ga:
                                gg += a[i] * GA[n, i] * GB[m, i]
                        if not full:
                            if has_ha:
                                sha += HAd[n, i] * adi * adi
                                if has_gb:
                                    hag += a[i] * GB[m, i] * HAd[n, i] * adi
                            if has_hb:
                                shb += HBd[m, i] * adi * adi
                                if has_ga:
                                    hbg += a[i] * GA[n, i] * HBd[m, i] * adi
                            if has_ha and has_hb:
                                hh += HAd[n, i] * HBd[m, i] * a[i] * adi * adi
                                tt += a[i] * a[i] * HAd[n, i] * HBd[m, i]
                    if full:
                        for i in range(d):
                            acc_a = 0.0
                            acc_b = 0.0
                            for j in range(d):
                                if has_ha:
                                    acc_a += HAf[n, i, j] * ad[j]
                                if has_hb:
                                    acc_b += HBf[m, i, j] * ad[j]
                                if has_ha and has_hb:
                                    tt += a[i] * a[j] * HAf[n, i, j] * HBf[m, i, j]
                            va[i] = acc_a
                            vb[i] = acc_b
                        for i in range(d):
                            sha += ad[i] * va[i]
                            shb += ad[i] * vb[i]
                            if has_gb:
                                hag += a[i] * GB[m, i] * va[i]
                            if has_ga:
                                hbg += a[i] * GA[n, i] * vb[i]
                            hh += va[i] * a[i] * vb[i]
                    _psi(code, param, t, order, psi)
                    out[n, m] = _combine(psi, CA[n], CB[m], has_ga, has_gb, has_ha, has_hb,
                                         2.0 * sga, 2.0 * sgb, gg, 4.0 * sha, 4.0 * shb,
                                         TA[n] if has_ha else 0.0, TB[m] if has_hb else 0.0,
                                         2.0 * hag, 2.0 * hbg, 4.0 * hh, tt)
                    if symmetric and m != n:
                        out[m, n] = out[n, m]
    finally:
        free(psi)
        free(ad)
        free(va)
        free(vb)
    return out_arr
