# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the numpy kernel backend.

Same contracts, same arithmetic, element-wise identical formulas; the
agreement tests hold the two backends to 1e-12.  Quaternions are (w,x,y,z).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


cdef inline void _rot_row(double w, double x, double y, double z,
                          double* R) noexcept:
    # row-major 3x3 of the quadratic quaternion-to-matrix form
    R[0] = 1.0 - 2.0 * (y * y + z * z)
    R[1] = 2.0 * (x * y - w * z)
    R[2] = 2.0 * (x * z + w * y)
    R[3] = 2.0 * (x * y + w * z)
    R[4] = 1.0 - 2.0 * (x * x + z * z)
    R[5] = 2.0 * (y * z - w * x)
    R[6] = 2.0 * (x * z - w * y)
    R[7] = 2.0 * (y * z + w * x)
    R[8] = 1.0 - 2.0 * (x * x + y * y)


cdef inline void _rot_dq_vjp_one(double w, double x, double y, double z,
                                 double v0, double v1, double v2,
                                 double g0, double g1, double g2,
                                 double* out) noexcept:
    # out[m] = g . (dR/du_m @ v), times 2 (matches the reference backend)
    cdef double cw, cx, cy, cz
    cw = (y * v2 - z * v1) * g0 + (z * v0 - x * v2) * g1 + (x * v1 - y * v0) * g2
    cx = ((y * v1 + z * v2) * g0
          + (y * v0 - 2.0 * x * v1 - w * v2) * g1
          + (z * v0 + w * v1 - 2.0 * x * v2) * g2)
    cy = ((-2.0 * y * v0 + x * v1 + w * v2) * g0
          + (x * v0 + z * v2) * g1
          + (-w * v0 + z * v1 - 2.0 * y * v2) * g2)
    cz = ((-2.0 * z * v0 - w * v1 + x * v2) * g0
          + (w * v0 - 2.0 * z * v1 + y * v2) * g1
          + (x * v0 + y * v1) * g2)
    out[0] = 2.0 * cw
    out[1] = 2.0 * cx
    out[2] = 2.0 * cy
    out[3] = 2.0 * cz


def blend_forward(double[:, ::1] mu, double[:, ::1] q,
                  double[:, ::1] apos, double[:, ::1] aquat,
                  double[:, ::1] atrans, long long[:, ::1] nbr,
                  double[:, ::1] w):
    """See numpy_backend.blend_forward."""
    cdef Py_ssize_t n = mu.shape[0], j = nbr.shape[1], kk = apos.shape[0]
    # displacement form mu + sum w*(R v - v + t): an identity graph maps every
    # center to itself exactly, not merely to rounding error
    cdef cnp.ndarray[double, ndim=2] mu_p = np.asarray(mu).copy()
    cdef cnp.ndarray[double, ndim=2] q_p = np.empty((n, 4))
    cdef cnp.ndarray[double, ndim=1] bnorm = np.empty(n)
    cdef double[:, ::1] mu_p_v = mu_p
    cdef double[:, ::1] q_p_v = q_p
    cdef double[::1] bnorm_v = bnorm
    cdef cnp.ndarray[double, ndim=2] un = np.empty((kk, 4))
    cdef double[:, ::1] u = un
    cdef Py_ssize_t i, s, k, a, first
    cdef double an, v0, v1, v2, ws, sign, dot, bn
    cdef double R[9]
    cdef double b0, b1, b2, b3, bh0, bh1, bh2, bh3
    cdef double qw, qx, qy, qz

    for k in range(kk):
        an = sqrt(aquat[k, 0] * aquat[k, 0] + aquat[k, 1] * aquat[k, 1]
                  + aquat[k, 2] * aquat[k, 2] + aquat[k, 3] * aquat[k, 3])
        for a in range(4):
            u[k, a] = aquat[k, a] / an

    for i in range(n):
        first = <Py_ssize_t> nbr[i, 0]
        b0 = b1 = b2 = b3 = 0.0
        for s in range(j):
            k = <Py_ssize_t> nbr[i, s]
            ws = w[i, s]
            _rot_row(u[k, 0], u[k, 1], u[k, 2], u[k, 3], R)
            v0 = mu[i, 0] - apos[k, 0]
            v1 = mu[i, 1] - apos[k, 1]
            v2 = mu[i, 2] - apos[k, 2]
            mu_p_v[i, 0] += ws * (R[0] * v0 + R[1] * v1 + R[2] * v2
                                  - v0 + atrans[k, 0])
            mu_p_v[i, 1] += ws * (R[3] * v0 + R[4] * v1 + R[5] * v2
                                  - v1 + atrans[k, 1])
            mu_p_v[i, 2] += ws * (R[6] * v0 + R[7] * v1 + R[8] * v2
                                  - v2 + atrans[k, 2])
            dot = (aquat[k, 0] * aquat[first, 0] + aquat[k, 1] * aquat[first, 1]
                   + aquat[k, 2] * aquat[first, 2] + aquat[k, 3] * aquat[first, 3])
            sign = -1.0 if dot < 0.0 else 1.0
            b0 += ws * sign * aquat[k, 0]
            b1 += ws * sign * aquat[k, 1]
            b2 += ws * sign * aquat[k, 2]
            b3 += ws * sign * aquat[k, 3]
        bn = sqrt(b0 * b0 + b1 * b1 + b2 * b2 + b3 * b3)
        bnorm_v[i] = bn
        if bn < 1e-300:
            bn = 1e-300
        bh0 = b0 / bn
        bh1 = b1 / bn
        bh2 = b2 / bn
        bh3 = b3 / bn
        qw = q[i, 0]
        qx = q[i, 1]
        qy = q[i, 2]
        qz = q[i, 3]
        # world-frame composition: blended rotation premultiplies
        q_p_v[i, 0] = bh0 * qw - bh1 * qx - bh2 * qy - bh3 * qz
        q_p_v[i, 1] = bh0 * qx + bh1 * qw + bh2 * qz - bh3 * qy
        q_p_v[i, 2] = bh0 * qy - bh1 * qz + bh2 * qw + bh3 * qx
        q_p_v[i, 3] = bh0 * qz + bh1 * qy - bh2 * qx + bh3 * qw
    return mu_p, q_p, bnorm


def blend_backward(double[:, ::1] mu, double[:, ::1] q,
                   double[:, ::1] apos, double[:, ::1] aquat,
                   double[:, ::1] atrans, long long[:, ::1] nbr,
                   double[:, ::1] w, double[:, ::1] gmu_p,
                   double[:, ::1] gq_p):
    """See numpy_backend.blend_backward."""
    cdef Py_ssize_t n = mu.shape[0], j = nbr.shape[1], kk = apos.shape[0]
    cdef cnp.ndarray[double, ndim=2] gaq = np.zeros((kk, 4))
    cdef cnp.ndarray[double, ndim=2] gat = np.zeros((kk, 3))
    cdef double[:, ::1] gaq_v = gaq
    cdef double[:, ::1] gat_v = gat
    cdef cnp.ndarray[double, ndim=2] un = np.empty((kk, 4))
    cdef double[:, ::1] u = un
    cdef cnp.ndarray[double, ndim=1] ann = np.empty(kk)
    cdef double[::1] an = ann
    cdef Py_ssize_t i, s, k, a, first
    cdef double nrm, ws, sign, dot, bn
    cdef double b0, b1, b2, b3, bh0, bh1, bh2, bh3
    cdef double g0, g1, g2, g3, gb0, gb1, gb2, gb3, udot
    cdef double qw, qx, qy, qz
    cdef double v0, v1, v2
    cdef double gu[4]
    cdef double swk

    for k in range(kk):
        nrm = sqrt(aquat[k, 0] * aquat[k, 0] + aquat[k, 1] * aquat[k, 1]
                   + aquat[k, 2] * aquat[k, 2] + aquat[k, 3] * aquat[k, 3])
        an[k] = nrm
        for a in range(4):
            u[k, a] = aquat[k, a] / nrm

    for i in range(n):
        first = <Py_ssize_t> nbr[i, 0]
        # rebuild blend and signs
        b0 = b1 = b2 = b3 = 0.0
        for s in range(j):
            k = <Py_ssize_t> nbr[i, s]
            dot = (aquat[k, 0] * aquat[first, 0] + aquat[k, 1] * aquat[first, 1]
                   + aquat[k, 2] * aquat[first, 2] + aquat[k, 3] * aquat[first, 3])
            sign = -1.0 if dot < 0.0 else 1.0
            ws = w[i, s] * sign
            b0 += ws * aquat[k, 0]
            b1 += ws * aquat[k, 1]
            b2 += ws * aquat[k, 2]
            b3 += ws * aquat[k, 3]
        bn = sqrt(b0 * b0 + b1 * b1 + b2 * b2 + b3 * b3)
        if bn < 1e-300:
            bn = 1e-300
        bh0 = b0 / bn
        bh1 = b1 / bn
        bh2 = b2 / bn
        bh3 = b3 / bn
        # gbhat = gq_p (x) conj(q): adjoint of right-multiplication by q
        qw = q[i, 0]
        qx = -q[i, 1]
        qy = -q[i, 2]
        qz = -q[i, 3]
        g0 = gq_p[i, 0]
        g1 = gq_p[i, 1]
        g2 = gq_p[i, 2]
        g3 = gq_p[i, 3]
        gb0 = g0 * qw - g1 * qx - g2 * qy - g3 * qz
        gb1 = g0 * qx + g1 * qw + g2 * qz - g3 * qy
        gb2 = g0 * qy - g1 * qz + g2 * qw + g3 * qx
        gb3 = g0 * qz + g1 * qy - g2 * qx + g3 * qw
        # through bhat = b/|b|
        udot = bh0 * gb0 + bh1 * gb1 + bh2 * gb2 + bh3 * gb3
        gb0 = (gb0 - bh0 * udot) / bn
        gb1 = (gb1 - bh1 * udot) / bn
        gb2 = (gb2 - bh2 * udot) / bn
        gb3 = (gb3 - bh3 * udot) / bn

        for s in range(j):
            k = <Py_ssize_t> nbr[i, s]
            ws = w[i, s]
            # translation and rotated-offset position path
            gat_v[k, 0] += ws * gmu_p[i, 0]
            gat_v[k, 1] += ws * gmu_p[i, 1]
            gat_v[k, 2] += ws * gmu_p[i, 2]
            v0 = mu[i, 0] - apos[k, 0]
            v1 = mu[i, 1] - apos[k, 1]
            v2 = mu[i, 2] - apos[k, 2]
            _rot_dq_vjp_one(u[k, 0], u[k, 1], u[k, 2], u[k, 3],
                            v0, v1, v2,
                            gmu_p[i, 0], gmu_p[i, 1], gmu_p[i, 2], gu)
            gu[0] *= ws
            gu[1] *= ws
            gu[2] *= ws
            gu[3] *= ws
            udot = (u[k, 0] * gu[0] + u[k, 1] * gu[1]
                    + u[k, 2] * gu[2] + u[k, 3] * gu[3])
            gaq_v[k, 0] += (gu[0] - u[k, 0] * udot) / an[k]
            gaq_v[k, 1] += (gu[1] - u[k, 1] * udot) / an[k]
            gaq_v[k, 2] += (gu[2] - u[k, 2] * udot) / an[k]
            gaq_v[k, 3] += (gu[3] - u[k, 3] * udot) / an[k]
            # quaternion blend path
            dot = (aquat[k, 0] * aquat[first, 0] + aquat[k, 1] * aquat[first, 1]
                   + aquat[k, 2] * aquat[first, 2] + aquat[k, 3] * aquat[first, 3])
            sign = -1.0 if dot < 0.0 else 1.0
            swk = ws * sign
            gaq_v[k, 0] += swk * gb0
            gaq_v[k, 1] += swk * gb1
            gaq_v[k, 2] += swk * gb2
            gaq_v[k, 3] += swk * gb3
    return gaq, gat


def deform_loss_grad(double[:, ::1] mu_p, long long[::1] ids,
                     double[:, ::1] target, double[::1] conf,
                     double fx, double fy, double cx, double cy,
                     double[:, ::1] camR, double[::1] camt):
    """See numpy_backend.deform_loss_grad."""
    cdef Py_ssize_t m = ids.shape[0], n = mu_p.shape[0]
    cdef cnp.ndarray[double, ndim=2] gmu = np.zeros((n, 3))
    cdef double[:, ::1] gmu_v = gmu
    cdef double loss = 0.0
    cdef int n_skipped = 0
    cdef Py_ssize_t p, g
    cdef double p0, p1, p2, z, r0, r1, cf
    cdef double gp0, gp1, gp2

    for p in range(m):
        g = <Py_ssize_t> ids[p]
        p0 = (camR[0, 0] * mu_p[g, 0] + camR[0, 1] * mu_p[g, 1]
              + camR[0, 2] * mu_p[g, 2] + camt[0])
        p1 = (camR[1, 0] * mu_p[g, 0] + camR[1, 1] * mu_p[g, 1]
              + camR[1, 2] * mu_p[g, 2] + camt[1])
        p2 = (camR[2, 0] * mu_p[g, 0] + camR[2, 1] * mu_p[g, 1]
              + camR[2, 2] * mu_p[g, 2] + camt[2])
        z = p2
        if z <= 1e-12:
            n_skipped += 1
            continue
        r0 = fx * p0 / z + cx - target[p, 0]
        r1 = fy * p1 / z + cy - target[p, 1]
        cf = conf[p]
        loss += cf * (r0 * r0 + r1 * r1)
        gp0 = fx * r0 / z
        gp1 = fy * r1 / z
        gp2 = -(fx * r0 * p0 + fy * r1 * p1) / (z * z)
        gmu_v[g, 0] += 2.0 * cf * (gp0 * camR[0, 0] + gp1 * camR[1, 0]
                                   + gp2 * camR[2, 0])
        gmu_v[g, 1] += 2.0 * cf * (gp0 * camR[0, 1] + gp1 * camR[1, 1]
                                   + gp2 * camR[2, 1])
        gmu_v[g, 2] += 2.0 * cf * (gp0 * camR[0, 2] + gp1 * camR[1, 2]
                                   + gp2 * camR[2, 2])
    return loss, gmu, n_skipped


def group_loss_grad(double[:, ::1] mu0, double[:, :, ::1] rot0,
                    double[:, ::1] mu_p, double[:, ::1] q_p,
                    long long[::1] pair_i, long long[::1] pair_j,
                    double[::1] pair_w):
    """See numpy_backend.group_loss_grad."""
    cdef Py_ssize_t m = pair_i.shape[0], n = mu_p.shape[0]
    cdef cnp.ndarray[double, ndim=2] gmu = np.zeros((n, 3))
    cdef cnp.ndarray[double, ndim=2] gq = np.zeros((n, 4))
    cdef double[:, ::1] gmu_v = gmu
    cdef double[:, ::1] gq_v = gq
    cdef double loss = 0.0
    cdef Py_ssize_t p, i, jj
    cdef double d0, d1, d2, dp0, dp1, dp2
    cdef double qn, uw, ux, uy, uz
    cdef double e0, e1, e2, pw
    cdef double gm0, gm1, gm2, udot
    cdef double R[9]
    cdef double gu[4]

    for p in range(m):
        i = <Py_ssize_t> pair_i[p]
        jj = <Py_ssize_t> pair_j[p]
        pw = pair_w[p]
        d0 = mu0[i, 0] - mu0[jj, 0]
        d1 = mu0[i, 1] - mu0[jj, 1]
        d2 = mu0[i, 2] - mu0[jj, 2]
        dp0 = mu_p[i, 0] - mu_p[jj, 0]
        dp1 = mu_p[i, 1] - mu_p[jj, 1]
        dp2 = mu_p[i, 2] - mu_p[jj, 2]
        qn = sqrt(q_p[i, 0] * q_p[i, 0] + q_p[i, 1] * q_p[i, 1]
                  + q_p[i, 2] * q_p[i, 2] + q_p[i, 3] * q_p[i, 3])
        if qn < 1e-300:
            qn = 1e-300
        uw = q_p[i, 0] / qn
        ux = q_p[i, 1] / qn
        uy = q_p[i, 2] / qn
        uz = q_p[i, 3] / qn
        _rot_row(uw, ux, uy, uz, R)
        # e = rot0_i^T d - R^T dp (transposed products)
        e0 = (rot0[i, 0, 0] * d0 + rot0[i, 1, 0] * d1 + rot0[i, 2, 0] * d2
              - (R[0] * dp0 + R[3] * dp1 + R[6] * dp2))
        e1 = (rot0[i, 0, 1] * d0 + rot0[i, 1, 1] * d1 + rot0[i, 2, 1] * d2
              - (R[1] * dp0 + R[4] * dp1 + R[7] * dp2))
        e2 = (rot0[i, 0, 2] * d0 + rot0[i, 1, 2] * d1 + rot0[i, 2, 2] * d2
              - (R[2] * dp0 + R[5] * dp1 + R[8] * dp2))
        loss += pw * (e0 * e0 + e1 * e1 + e2 * e2)
        gm0 = -2.0 * pw * (R[0] * e0 + R[1] * e1 + R[2] * e2)
        gm1 = -2.0 * pw * (R[3] * e0 + R[4] * e1 + R[5] * e2)
        gm2 = -2.0 * pw * (R[6] * e0 + R[7] * e1 + R[8] * e2)
        gmu_v[i, 0] += gm0
        gmu_v[i, 1] += gm1
        gmu_v[i, 2] += gm2
        gmu_v[jj, 0] -= gm0
        gmu_v[jj, 1] -= gm1
        gmu_v[jj, 2] -= gm2
        _rot_dq_vjp_one(uw, ux, uy, uz, e0, e1, e2, dp0, dp1, dp2, gu)
        gu[0] *= -2.0 * pw
        gu[1] *= -2.0 * pw
        gu[2] *= -2.0 * pw
        gu[3] *= -2.0 * pw
        udot = uw * gu[0] + ux * gu[1] + uy * gu[2] + uz * gu[3]
        gq_v[i, 0] += (gu[0] - uw * udot) / qn
        gq_v[i, 1] += (gu[1] - ux * udot) / qn
        gq_v[i, 2] += (gu[2] - uy * udot) / qn
        gq_v[i, 3] += (gu[3] - uz * udot) / qn
    return loss, gmu, gq


def arap_loss_grad(double[:, ::1] apos, double[:, ::1] aquat,
                   double[:, ::1] atrans, long long[::1] edge_i,
                   long long[::1] edge_k):
    """See numpy_backend.arap_loss_grad."""
    cdef Py_ssize_t m = edge_i.shape[0], kk = apos.shape[0]
    cdef cnp.ndarray[double, ndim=2] gaq = np.zeros((kk, 4))
    cdef cnp.ndarray[double, ndim=2] gat = np.zeros((kk, 3))
    cdef double[:, ::1] gaq_v = gaq
    cdef double[:, ::1] gat_v = gat
    cdef double loss = 0.0
    cdef Py_ssize_t p, i, k
    cdef double an, uw, ux, uy, uz
    cdef double d0, d1, d2, e0, e1, e2, udot
    cdef double R[9]
    cdef double gu[4]

    for p in range(m):
        i = <Py_ssize_t> edge_i[p]
        k = <Py_ssize_t> edge_k[p]
        an = sqrt(aquat[i, 0] * aquat[i, 0] + aquat[i, 1] * aquat[i, 1]
                  + aquat[i, 2] * aquat[i, 2] + aquat[i, 3] * aquat[i, 3])
        if an < 1e-300:
            an = 1e-300
        uw = aquat[i, 0] / an
        ux = aquat[i, 1] / an
        uy = aquat[i, 2] / an
        uz = aquat[i, 3] / an
        _rot_row(uw, ux, uy, uz, R)
        d0 = apos[i, 0] - apos[k, 0]
        d1 = apos[i, 1] - apos[k, 1]
        d2 = apos[i, 2] - apos[k, 2]
        e0 = R[0] * d0 + R[1] * d1 + R[2] * d2 - (d0 + atrans[i, 0] - atrans[k, 0])
        e1 = R[3] * d0 + R[4] * d1 + R[5] * d2 - (d1 + atrans[i, 1] - atrans[k, 1])
        e2 = R[6] * d0 + R[7] * d1 + R[8] * d2 - (d2 + atrans[i, 2] - atrans[k, 2])
        loss += e0 * e0 + e1 * e1 + e2 * e2
        gat_v[i, 0] -= 2.0 * e0
        gat_v[i, 1] -= 2.0 * e1
        gat_v[i, 2] -= 2.0 * e2
        gat_v[k, 0] += 2.0 * e0
        gat_v[k, 1] += 2.0 * e1
        gat_v[k, 2] += 2.0 * e2
        _rot_dq_vjp_one(uw, ux, uy, uz, d0, d1, d2, e0, e1, e2, gu)
        gu[0] *= 2.0
        gu[1] *= 2.0
        gu[2] *= 2.0
        gu[3] *= 2.0
        udot = uw * gu[0] + ux * gu[1] + uy * gu[2] + uz * gu[3]
        gaq_v[i, 0] += (gu[0] - uw * udot) / an
        gaq_v[i, 1] += (gu[1] - ux * udot) / an
        gaq_v[i, 2] += (gu[2] - uy * udot) / an
        gaq_v[i, 3] += (gu[3] - uz * udot) / an
    return loss, gaq, gat


def rigidity_scores(double[:, ::1] mu0, double[:, :, ::1] rot0,
                    double[:, ::1] mu_p, double[:, :, ::1] rot_p,
                    cand, members):
    """See numpy_backend.rigidity_scores."""
    cdef cnp.ndarray[long long, ndim=1] cand_a = np.ascontiguousarray(
        cand, dtype=np.int64)
    cdef cnp.ndarray[long long, ndim=1] mem_a = np.ascontiguousarray(
        members, dtype=np.int64)
    cdef Py_ssize_t nc = cand_a.shape[0], nm = mem_a.shape[0]
    cdef cnp.ndarray[double, ndim=1] out = np.zeros(nc)
    if nm == 0:
        return out
    cdef double[::1] out_v = out
    cdef long long[::1] cv = cand_a
    cdef long long[::1] mv = mem_a
    cdef Py_ssize_t a, b, c, m
    cdef double d0, d1, d2, dp0, dp1, dp2, t0, t1, t2, acc

    for a in range(nc):
        c = <Py_ssize_t> cv[a]
        acc = 0.0
        for b in range(nm):
            m = <Py_ssize_t> mv[b]
            d0 = mu0[c, 0] - mu0[m, 0]
            d1 = mu0[c, 1] - mu0[m, 1]
            d2 = mu0[c, 2] - mu0[m, 2]
            dp0 = mu_p[c, 0] - mu_p[m, 0]
            dp1 = mu_p[c, 1] - mu_p[m, 1]
            dp2 = mu_p[c, 2] - mu_p[m, 2]
            t0 = (rot0[c, 0, 0] * d0 + rot0[c, 1, 0] * d1 + rot0[c, 2, 0] * d2
                  - (rot_p[c, 0, 0] * dp0 + rot_p[c, 1, 0] * dp1
                     + rot_p[c, 2, 0] * dp2))
            t1 = (rot0[c, 0, 1] * d0 + rot0[c, 1, 1] * d1 + rot0[c, 2, 1] * d2
                  - (rot_p[c, 0, 1] * dp0 + rot_p[c, 1, 1] * dp1
                     + rot_p[c, 2, 1] * dp2))
            t2 = (rot0[c, 0, 2] * d0 + rot0[c, 1, 2] * d1 + rot0[c, 2, 2] * d2
                  - (rot_p[c, 0, 2] * dp0 + rot_p[c, 1, 2] * dp1
                     + rot_p[c, 2, 2] * dp2))
            acc += t0 * t0 + t1 * t1 + t2 * t2
        out_v[a] = acc / nm
    return out
