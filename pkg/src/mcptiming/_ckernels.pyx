# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, tan, cos, log1p, M_PI

cnp.import_array()

DEF N_SLOTS = 4
cdef double TRIPLET_SIN = 0.8660254037844386


def trace_decays(double[:, ::1] U, double s, double spread, double L, double R,
                 double f1, double qm_fwhm, double delay_mean, double c_light,
                 double positron_branch=0.9):
    cdef Py_ssize_t n = U.shape[0]
    cdef Py_ssize_t cap = 4 * n, m = 0, i, k
    cdef cnp.ndarray[cnp.int64_t] rows = np.empty(cap, dtype=np.int64)
    cdef cnp.ndarray[cnp.int8_t] det = np.empty(cap, dtype=np.int8)
    cdef cnp.ndarray[cnp.int8_t] kind = np.empty(cap, dtype=np.int8)
    cdef cnp.ndarray[cnp.float64_t] off = np.empty(cap, dtype=np.float64)
    cdef double sp, dstop, cstart, cstop, t_ann, qm, e, swing
    cdef double mu[N_SLOTS]
    cdef bint exists[N_SLOTS]
    cdef bint positron, singlet
    cdef int hs, ht

    for i in range(n):
        sp = s + spread * (U[i, 2] - 0.5)
        dstop = L - sp
        cstart = sp / sqrt(sp * sp + R * R)
        cstop = dstop / sqrt(dstop * dstop + R * R)
        positron = U[i, 1] < positron_branch
        singlet = U[i, 3] < f1
        mu[0] = 2.0 * U[i, 4] - 1.0
        mu[1] = 2.0 * U[i, 5] - 1.0
        swing = TRIPLET_SIN * sqrt(1.0 - mu[1] * mu[1]) * cos(2.0 * M_PI * U[i, 6])
        mu[2] = -mu[1] if singlet else -0.5 * mu[1] - swing
        mu[3] = -0.5 * mu[1] + swing
        exists[0] = True
        exists[1] = positron
        exists[2] = positron
        exists[3] = positron and not singlet
        if delay_mean > 0:
            t_ann = -delay_mean * log1p(-U[i, 8])
        else:
            t_ann = 0.0
        if qm_fwhm > 0:
            qm = 0.5 * qm_fwhm * tan(M_PI * (U[i, 9] - 0.5))
        else:
            qm = 0.0
        for k in range(N_SLOTS):
            if not exists[k]:
                continue
            hs = mu[k] < -cstart
            ht = mu[k] > cstop
            if not (hs or ht):
                continue
            e = 0.0 if k == 0 else t_ann
            if singlet and (k == 1 or k == 2) and mu[k] > 0 and qm_fwhm > 0:
                e = e + qm
            rows[m] = i
            det[m] = 1 if ht else 0
            if k == 0:
                kind[m] = 0
            elif singlet:
                kind[m] = 1
            else:
                kind[m] = 2
            off[m] = e + (dstop if ht else sp) / c_light
            m += 1
    return rows[:m].copy(), det[:m].copy(), kind[:m].copy(), off[:m].copy()


def pair_triggers(double[::1] times, const cnp.int8_t[::1] is_stop, double window):
    cdef Py_ssize_t n = times.shape[0], k, m = 0
    cdef Py_ssize_t armed = -1
    cdef double t, t_armed = 0.0
    cdef cnp.ndarray[cnp.int64_t] starts = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t] stops = np.empty(n, dtype=np.int64)
    for k in range(n):
        t = times[k]
        if is_stop[k]:
            if armed >= 0:
                if t - t_armed <= window:
                    starts[m] = armed
                    stops[m] = k
                    m += 1
                armed = -1
        else:
            if armed >= 0 and t - t_armed <= window:
                continue
            armed = k
            t_armed = t
    return starts[:m].copy(), stops[:m].copy()
