# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twin of the NumPy kernel backend.

Same functions, same layouts, same outputs (up to floating-point summation
order); see _pykernels.py for the layout notes.
"""

from libc.math cimport cos, fabs, sin, sqrt

cimport numpy as cnp

import numpy as np

ctypedef cnp.int64_t i64

TRANSE = 0
ROTATE = 1
DISTMULT = 2
COMPLEX = 3


cdef inline double _sgn(double x) nogil:
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


cdef double _score_one(int kind, int norm_p, double gamma,
                       const double* hp, const double* rp, const double* tp,
                       Py_ssize_t d) nogil:
    cdef double acc = 0.0
    cdef double u, ure, uim, c, s, hre, him, rre, rim, tre, tim
    cdef Py_ssize_t k, m
    if kind == 0:
        if norm_p == 1:
            for k in range(d):
                acc += fabs(hp[k] + rp[k] - tp[k])
        else:
            for k in range(d):
                u = hp[k] + rp[k] - tp[k]
                acc += u * u
            acc = sqrt(acc)
        return gamma - acc
    elif kind == 1:
        m = d // 2
        for k in range(m):
            c = cos(rp[k])
            s = sin(rp[k])
            ure = hp[2 * k] * c - hp[2 * k + 1] * s - tp[2 * k]
            uim = hp[2 * k] * s + hp[2 * k + 1] * c - tp[2 * k + 1]
            if norm_p == 1:
                acc += fabs(ure) + fabs(uim)
            else:
                acc += ure * ure + uim * uim
        if norm_p != 1:
            acc = sqrt(acc)
        return gamma - acc
    elif kind == 2:
        for k in range(d):
            acc += hp[k] * rp[k] * tp[k]
        return acc
    else:
        m = d // 2
        for k in range(m):
            hre = hp[2 * k]
            him = hp[2 * k + 1]
            rre = rp[2 * k]
            rim = rp[2 * k + 1]
            tre = tp[2 * k]
            tim = tp[2 * k + 1]
            acc += (hre * rre - him * rim) * tre + (hre * rim + him * rre) * tim
        return acc


cdef void _grad_one(int kind, int norm_p, double gamma,
                    const double* hp, const double* rp, const double* tp,
                    Py_ssize_t d, double up,
                    double* gh, double* gr, double* gt) nogil:
    cdef double acc = 0.0, inv, u, g
    cdef double c, s, ure, uim, rot_re, rot_im, gre, gim
    cdef double hre, him, rre, rim, tre, tim
    cdef Py_ssize_t k, m
    if kind == 0:
        if norm_p == 1:
            for k in range(d):
                g = -_sgn(hp[k] + rp[k] - tp[k]) * up
                gh[k] = g
                gr[k] = g
                gt[k] = -g
        else:
            for k in range(d):
                u = hp[k] + rp[k] - tp[k]
                acc += u * u
            acc = sqrt(acc)
            inv = 0.0 if acc == 0.0 else up / acc
            for k in range(d):
                g = -(hp[k] + rp[k] - tp[k]) * inv
                gh[k] = g
                gr[k] = g
                gt[k] = -g
    elif kind == 1:
        m = d // 2
        if norm_p != 1:
            for k in range(m):
                c = cos(rp[k])
                s = sin(rp[k])
                ure = hp[2 * k] * c - hp[2 * k + 1] * s - tp[2 * k]
                uim = hp[2 * k] * s + hp[2 * k + 1] * c - tp[2 * k + 1]
                acc += ure * ure + uim * uim
            acc = sqrt(acc)
            inv = 0.0 if acc == 0.0 else up / acc
        for k in range(m):
            c = cos(rp[k])
            s = sin(rp[k])
            rot_re = hp[2 * k] * c - hp[2 * k + 1] * s
            rot_im = hp[2 * k] * s + hp[2 * k + 1] * c
            ure = rot_re - tp[2 * k]
            uim = rot_im - tp[2 * k + 1]
            if norm_p == 1:
                gre = -_sgn(ure) * up
                gim = -_sgn(uim) * up
            else:
                gre = -ure * inv
                gim = -uim * inv
            gh[2 * k] = gre * c + gim * s
            gh[2 * k + 1] = -gre * s + gim * c
            gr[k] = -gre * rot_im + gim * rot_re
            gt[2 * k] = -gre
            gt[2 * k + 1] = -gim
    elif kind == 2:
        for k in range(d):
            gh[k] = rp[k] * tp[k] * up
            gr[k] = hp[k] * tp[k] * up
            gt[k] = hp[k] * rp[k] * up
    else:
        m = d // 2
        for k in range(m):
            hre = hp[2 * k]
            him = hp[2 * k + 1]
            rre = rp[2 * k]
            rim = rp[2 * k + 1]
            tre = tp[2 * k]
            tim = tp[2 * k + 1]
            gh[2 * k] = (rre * tre + rim * tim) * up
            gh[2 * k + 1] = (-rim * tre + rre * tim) * up
            gr[2 * k] = (hre * tre + him * tim) * up
            gr[2 * k + 1] = (-him * tre + hre * tim) * up
            gt[2 * k] = (hre * rre - him * rim) * up
            gt[2 * k + 1] = (hre * rim + him * rre) * up


def score_into(int kind, int norm_p, double gamma,
               double[:, ::1] ent, double[:, ::1] rel,
               i64[:] h, i64[:] r, i64[:] t, double[:] out):
    cdef Py_ssize_t n = h.shape[0], d = ent.shape[1], i
    with nogil:
        for i in range(n):
            out[i] = _score_one(kind, norm_p, gamma,
                                &ent[h[i], 0], &rel[r[i], 0], &ent[t[i], 0], d)


def score_swap_into(int kind, int norm_p, double gamma,
                    double[:, ::1] ent, double[:, ::1] rel,
                    i64[:] anchor, i64[:] r, double[:, ::1] vecs, int side,
                    double[:] out):
    cdef Py_ssize_t n = anchor.shape[0], d = ent.shape[1], i
    with nogil:
        for i in range(n):
            if side == 0:
                out[i] = _score_one(kind, norm_p, gamma,
                                    &vecs[i, 0], &rel[r[i], 0], &ent[anchor[i], 0], d)
            else:
                out[i] = _score_one(kind, norm_p, gamma,
                                    &ent[anchor[i], 0], &rel[r[i], 0], &vecs[i, 0], d)


def grad_into(int kind, int norm_p, double gamma,
              double[:, ::1] ent, double[:, ::1] rel,
              i64[:] h, i64[:] r, i64[:] t, double[:] upstream,
              double[:, ::1] gh, double[:, ::1] gr, double[:, ::1] gt):
    cdef Py_ssize_t n = h.shape[0], d = ent.shape[1], i
    with nogil:
        for i in range(n):
            _grad_one(kind, norm_p, gamma,
                      &ent[h[i], 0], &rel[r[i], 0], &ent[t[i], 0], d, upstream[i],
                      &gh[i, 0], &gr[i, 0], &gt[i, 0])


def grad_swap_into(int kind, int norm_p, double gamma,
                   double[:, ::1] ent, double[:, ::1] rel,
                   i64[:] anchor, i64[:] r, double[:, ::1] vecs, int side,
                   double[:] upstream,
                   double[:, ::1] g_anchor, double[:, ::1] g_r, double[:, ::1] g_vec):
    cdef Py_ssize_t n = anchor.shape[0], d = ent.shape[1], i
    with nogil:
        for i in range(n):
            if side == 0:
                _grad_one(kind, norm_p, gamma,
                          &vecs[i, 0], &rel[r[i], 0], &ent[anchor[i], 0], d, upstream[i],
                          &g_vec[i, 0], &g_r[i, 0], &g_anchor[i, 0])
            else:
                _grad_one(kind, norm_p, gamma,
                          &ent[anchor[i], 0], &rel[r[i], 0], &vecs[i, 0], d, upstream[i],
                          &g_anchor[i, 0], &g_r[i, 0], &g_vec[i, 0])


def score_all_into(int kind, int norm_p, double gamma,
                   double[:, ::1] ent, double[:, ::1] rel,
                   Py_ssize_t anchor_id, Py_ssize_t r_id, int side, double[:] out):
    cdef Py_ssize_t n = ent.shape[0], d = ent.shape[1], i
    cdef const double* rp = &rel[r_id, 0]
    cdef const double* ap = &ent[anchor_id, 0]
    with nogil:
        for i in range(n):
            if side == 0:
                out[i] = _score_one(kind, norm_p, gamma, &ent[i, 0], rp, ap, d)
            else:
                out[i] = _score_one(kind, norm_p, gamma, ap, rp, &ent[i, 0], d)
