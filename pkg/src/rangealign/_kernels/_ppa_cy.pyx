# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twin of the batch alternating-projection loop.

Semantics must stay in lockstep with ``_ppa_py``: same sphere-center
conventions, same degeneracy rule, same stopping rule.  Dimensions 2 and 3
only; inputs are assumed finite.
"""

import numpy as np

from libc.math cimport atan2, cos, sin, fabs, sqrt
from scipy.linalg.cython_lapack cimport dgesvd

BACKEND_NAME = "cython"


cdef double _det3_rm(double* m):
    return (m[0] * (m[4] * m[8] - m[5] * m[7])
            - m[1] * (m[3] * m[8] - m[5] * m[6])
            + m[2] * (m[3] * m[7] - m[4] * m[6]))


cdef void _nearest_rotation(int d, double* corr, double* rot) except *:
    """Nearest rotation to row-major ``corr``; 2-D closed form, 3-D LAPACK SVD."""
    cdef double a, b, theta, cth, sth, det
    cdef double a_buf[9]
    cdef double u_lp[9]
    cdef double vt_lp[9]
    cdef double sing[3]
    cdef double work[64]
    cdef double* u_rm
    cdef double* vt_rm
    cdef int m = 3, n = 3, lda = 3, ldu = 3, ldvt = 3, lwork = 64, info = 0
    cdef int i, j, k
    cdef char jobu = b'A'
    cdef char jobvt = b'A'

    if d == 2:
        # Maximize trace(R' corr) = a*cos(theta) + b*sin(theta).
        a = corr[0] + corr[3]
        b = corr[2] - corr[1]
        theta = atan2(b, a)
        cth = cos(theta)
        sth = sin(theta)
        rot[0] = cth
        rot[1] = -sth
        rot[2] = sth
        rot[3] = cth
        return

    # Row-major corr handed to LAPACK column-major is corr^T, so the returned
    # buffers swap roles: LAPACK's VT buffer read row-major is our U, and
    # LAPACK's U buffer read row-major is our V^T.
    for i in range(9):
        a_buf[i] = corr[i]
    dgesvd(&jobu, &jobvt, &m, &n, a_buf, &lda, sing, u_lp, &ldu, vt_lp, &ldvt,
           work, &lwork, &info)
    if info != 0:
        raise RuntimeError(f"SVD failed to converge (info={info})")
    u_rm = vt_lp
    vt_rm = u_lp
    det = _det3_rm(u_rm) * _det3_rm(vt_rm)
    if det < 0.0:
        for i in range(3):
            u_rm[3 * i + 2] = -u_rm[3 * i + 2]
    for i in range(3):
        for j in range(3):
            a = 0.0
            for k in range(3):
                a += u_rm[3 * i + k] * vt_rm[3 * k + j]
            rot[3 * i + j] = a


cdef double _objective(int tbar, int d, double* rot, double* trans,
                       double[:, ::1] p_local, double[:, ::1] p_anchor,
                       double[::1] ranges):
    cdef double acc = 0.0, sq, z, res
    cdef int t, i, j
    for t in range(tbar):
        sq = 0.0
        for i in range(d):
            z = trans[i]
            for j in range(d):
                z += rot[d * i + j] * p_local[t, j]
            z -= p_anchor[t, i]
            sq += z * z
        res = ranges[t] - sqrt(sq)
        acc += res * res
    return acc


cdef void _project(int tbar, int d, double* rot, double* trans,
                   double[:, ::1] p_local, double[:, ::1] p_anchor,
                   double[::1] ranges, double[:, ::1] y):
    cdef double diff[3]
    cdef double dist, scale
    cdef int t, i, j
    for t in range(tbar):
        dist = 0.0
        for i in range(d):
            scale = trans[i]
            for j in range(d):
                scale += rot[d * i + j] * p_local[t, j]
            diff[i] = scale - p_anchor[t, i]
            dist += diff[i] * diff[i]
        dist = sqrt(dist)
        if ranges[t] == 0.0:
            for i in range(d):
                y[t, i] = p_anchor[t, i]
        elif dist == 0.0:
            for i in range(d):
                y[t, i] = p_anchor[t, i]
            y[t, 0] += ranges[t]
        else:
            scale = ranges[t] / dist
            for i in range(d):
                y[t, i] = p_anchor[t, i] + scale * diff[i]


def ppa_run(p_local_in, p_anchor_in, ranges_in, rotation0, translation0,
            int max_iters, double rel_tol):
    """Alternate sphere projections and the closed-form pose update.

    Same contract as the pure-Python twin: returns ``(rotation, translation,
    surface_points, trace, iterations, degenerate)``.
    """
    cdef double[:, ::1] p_local = np.ascontiguousarray(p_local_in, dtype=np.float64)
    cdef double[:, ::1] p_anchor = np.ascontiguousarray(p_anchor_in, dtype=np.float64)
    cdef double[::1] ranges = np.ascontiguousarray(ranges_in, dtype=np.float64)
    cdef int tbar = p_local.shape[0]
    cdef int d = p_local.shape[1]
    if d != 2 and d != 3:
        raise ValueError(f"unsupported dimension {d}")
    if p_anchor.shape[0] != tbar or p_anchor.shape[1] != d or ranges.shape[0] != tbar:
        raise ValueError("inconsistent input shapes")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")

    rot_arr = np.ascontiguousarray(rotation0, dtype=np.float64).copy()
    trans_arr = np.ascontiguousarray(translation0, dtype=np.float64).copy()
    if rot_arr.shape != (d, d) or trans_arr.shape != (d,):
        raise ValueError("initial pose shape does not match data dimension")
    y_arr = np.empty((tbar, d))
    trace_arr = np.empty(max_iters + 1)
    cdef double[:, ::1] rot_mv = rot_arr
    cdef double[::1] trans_mv = trans_arr
    cdef double[:, ::1] y = y_arr
    cdef double[::1] trace = trace_arr
    cdef double* rot = &rot_mv[0, 0]
    cdef double* trans = &trans_mv[0]

    cdef double p_bar[3]
    cdef double y_bar[3]
    cdef double corr[9]
    cdef double spread, v, prev, cur
    cdef int t, i, j, k, iters
    cdef bint degenerate

    for i in range(d):
        v = 0.0
        for t in range(tbar):
            v += p_local[t, i]
        p_bar[i] = v / tbar
    spread = 0.0
    v = 0.0
    for i in range(d):
        if fabs(p_bar[i]) > v:
            v = fabs(p_bar[i])
        for t in range(tbar):
            if fabs(p_local[t, i] - p_bar[i]) > spread:
                spread = fabs(p_local[t, i] - p_bar[i])
    degenerate = spread <= 1e-12 * (1.0 + v)

    trace[0] = _objective(tbar, d, rot, trans, p_local, p_anchor, ranges)
    iters = 0
    for k in range(1, max_iters + 1):
        _project(tbar, d, rot, trans, p_local, p_anchor, ranges, y)
        for i in range(d):
            v = 0.0
            for t in range(tbar):
                v += y[t, i]
            y_bar[i] = v / tbar
        if not degenerate:
            for i in range(d):
                for j in range(d):
                    v = 0.0
                    for t in range(tbar):
                        v += (y[t, i] - y_bar[i]) * (p_local[t, j] - p_bar[j])
                    corr[d * i + j] = v
            _nearest_rotation(d, corr, rot)
        for i in range(d):
            v = y_bar[i]
            for j in range(d):
                v -= rot[d * i + j] * p_bar[j]
            trans[i] = v
        cur = _objective(tbar, d, rot, trans, p_local, p_anchor, ranges)
        trace[k] = cur
        iters = k
        prev = trace[k - 1]
        if rel_tol > 0.0 and prev - cur <= rel_tol * (prev if prev > 1e-30 else 1e-30):
            break

    _project(tbar, d, rot, trans, p_local, p_anchor, ranges, y)
    return rot_arr, trans_arr, y_arr, trace_arr[: iters + 1].copy(), iters, bool(degenerate)
