# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled closed-loop integrator core.

Mirrors the pure NumPy backend: classical fixed-step fourth-order stepping
of the stacked closed loop with per-step domain checks. Loops are written
out so the whole step runs without temporary allocations.
"""

from libc.math cimport cos, exp, isfinite, sin

import numpy as np

NAME = "compiled"

STATUS_OK = 0
STATUS_DOMAIN = 1
STATUS_NONFINITE = 2


cdef void _rhs(double t, double[::1] x, double[::1] dx,
               int n, int m, int variant,
               int[::1] ia, int[::1] ja, double[::1] bk,
               double[::1] M, double[::1] A, double[::1] Tv,
               double[::1] Ebar, double[::1] Fd,
               double[::1] qinv, double[::1] rlin,
               double alpha, double beta1, double beta2, double[::1] beta3,
               double[:, ::1] L, double[::1] u_fixed,
               int p2, double[::1] mu2, double[::1] R2,
               double[::1] sig2, double[::1] inj2,
               int p3, double[::1] mu3, int[::1] node3, double[::1] R3,
               double[::1] sig3, double epoch,
               double[::1] Pl_const,
               int npulse, double[::1] pt0, double[::1] ptau, double[:, ::1] pamp,
               int o_t1, int o_t2, int o_t3, int has_t2, int has_t3,
               double[::1] flow, double[::1] ev, double[::1] u, double[::1] load) noexcept:
    cdef int i, j, k, b, c, e, o, node
    cdef double se, ce, lam, tmp, ang, cs_, sn_, out2, z, acc, drive
    cdef int o_w = m
    cdef int o_v = m + n
    cdef int d2 = 2 * p2

    # demand at time t
    for i in range(n):
        load[i] = Pl_const[i]
    if p2 > 0:
        out2 = 0.0
        for b in range(p2):
            ang = mu2[b] * (t - epoch)
            cs_ = cos(ang)
            sn_ = sin(ang)
            out2 += (cs_ * sig2[2 * b] + sn_ * sig2[2 * b + 1]) * R2[2 * b] \
                + (-sn_ * sig2[2 * b] + cs_ * sig2[2 * b + 1]) * R2[2 * b + 1]
        for i in range(n):
            load[i] += inj2[i] * out2
    if p3 > 0:
        for b in range(p3):
            ang = mu3[b] * (t - epoch)
            cs_ = cos(ang)
            sn_ = sin(ang)
            e = 2 * b
            load[node3[b]] += R3[e] * (cs_ * sig3[e] + sn_ * sig3[e + 1]) \
                + R3[e + 1] * (-sn_ * sig3[e] + cs_ * sig3[e + 1])
    for k in range(npulse):
        z = (t - pt0[k]) / ptau[k]
        tmp = exp(-0.5 * z * z)
        for i in range(n):
            load[i] += pamp[k, i] * tmp

    # edge pass: line flows and voltage couplings
    for i in range(n):
        flow[i] = 0.0
        ev[i] = Fd[i] * x[o_v + i]
    for k in range(m):
        i = ia[k]
        j = ja[k]
        se = sin(x[k])
        ce = cos(x[k])
        lam = x[o_v + i] * x[o_v + j] * bk[k] * se
        flow[i] += lam
        flow[j] -= lam
        tmp = bk[k] * ce
        ev[i] -= tmp * x[o_v + j]
        ev[j] -= tmp * x[o_v + i]
        dx[k] = x[o_w + i] - x[o_w + j]

    # controller output
    if variant == 0:
        for i in range(n):
            u[i] = u_fixed[i]
    else:
        for i in range(n):
            u[i] = beta1 * qinv[i] * x[o_t1 + i] - qinv[i] * rlin[i]
        if has_t2:
            for i in range(n):
                acc = 0.0
                for c in range(d2):
                    acc += x[o_t2 + i * d2 + c] * R2[c]
                u[i] += beta2 * qinv[i] * acc
        if has_t3:
            for b in range(p3):
                e = o_t3 + 2 * b
                node = node3[b]
                u[node] += beta3[node] * (R3[2 * b] * x[e] + R3[2 * b + 1] * x[e + 1])

    # plant derivatives
    for i in range(n):
        dx[o_w + i] = (u[i] - flow[i] - A[i] * x[o_w + i] - load[i]) / M[i]
        dx[o_v + i] = (Ebar[i] - ev[i]) / Tv[i]

    # controller derivatives
    if variant >= 1:
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += L[i, j] * x[o_t1 + j]
            dx[o_t1 + i] = -alpha * acc - beta1 * qinv[i] * x[o_w + i]
    if has_t2:
        for i in range(n):
            drive = beta2 * qinv[i] * x[o_w + i]
            for b in range(p2):
                e = o_t2 + i * d2 + 2 * b
                dx[e] = mu2[b] * x[e + 1] - drive * R2[2 * b]
                dx[e + 1] = -mu2[b] * x[e] - drive * R2[2 * b + 1]
    if has_t3:
        for b in range(p3):
            e = o_t3 + 2 * b
            node = node3[b]
            drive = beta3[node] * x[o_w + node]
            dx[e] = mu3[b] * x[e + 1] - drive * R3[2 * b]
            dx[e + 1] = -mu3[b] * x[e] - drive * R3[2 * b + 1]


def integrate(double[::1] times, unsigned char[::1] flags, x0, pack, double[:, ::1] out):
    """Integrate over the given step boundaries, recording flagged states.

    Returns (final_state, samples_written, status, steps_committed).
    """
    cdef int n = pack.n
    cdef int m = pack.m
    cdef int variant = pack.variant
    cdef int[::1] ia = pack.ia
    cdef int[::1] ja = pack.ja
    cdef double[::1] bk = pack.bk
    cdef double[::1] M = pack.M
    cdef double[::1] A = pack.A
    cdef double[::1] Tv = pack.Tv
    cdef double[::1] Ebar = pack.Ebar
    cdef double[::1] Fd = pack.Fd
    cdef double[::1] qinv = pack.qinv
    cdef double[::1] rlin = pack.rlin
    cdef double alpha = pack.alpha
    cdef double beta1 = pack.beta1
    cdef double beta2 = pack.beta2
    cdef double[::1] beta3 = pack.beta3
    cdef double[:, ::1] L = pack.L
    cdef double[::1] u_fixed = pack.u_fixed
    cdef int p2 = pack.p2
    cdef double[::1] mu2 = pack.mu2
    cdef double[::1] R2 = pack.R2
    cdef double[::1] sig2 = pack.sig2
    cdef double[::1] inj2 = pack.inj2
    cdef int p3 = pack.p3
    cdef double[::1] mu3 = pack.mu3
    cdef int[::1] node3 = pack.node3
    cdef double[::1] R3 = pack.R3
    cdef double[::1] sig3 = pack.sig3
    cdef double epoch = pack.epoch
    cdef double[::1] Pl_const = pack.Pl_const
    cdef int npulse = pack.npulse
    cdef double[::1] pt0 = pack.pt0
    cdef double[::1] ptau = pack.ptau
    cdef double[:, ::1] pamp = pack.pamp

    x_arr = np.asarray(x0, dtype=float).copy()
    cdef double[::1] x = x_arr
    cdef int N = x.shape[0]
    cdef int o_t1 = m + 2 * n
    cdef int o_t2 = o_t1 + (n if variant >= 1 else 0)
    cdef int o_t3 = o_t2 + (n * 2 * p2 if variant >= 2 else 0)
    cdef int has_t2 = 1 if (variant >= 2 and p2 > 0) else 0
    cdef int has_t3 = 1 if (variant >= 3 and p3 > 0) else 0

    buf = np.empty((9, max(N, n, 1)))
    cdef double[::1] k1 = buf[0, :N]
    cdef double[::1] k2 = buf[1, :N]
    cdef double[::1] k3 = buf[2, :N]
    cdef double[::1] k4 = buf[3, :N]
    cdef double[::1] xt = buf[4, :N]
    cdef double[::1] flow = buf[5, :n]
    cdef double[::1] ev = buf[6, :n]
    cdef double[::1] u = buf[7, :n]
    cdef double[::1] load = buf[8, :n]

    cdef int steps = times.shape[0] - 1
    cdef int written = 0
    cdef int i, c, ok
    cdef int o_v = m + n
    cdef double t0, h, acc

    for i in range(steps):
        t0 = times[i]
        h = times[i + 1] - t0
        _rhs(t0, x, k1, n, m, variant, ia, ja, bk, M, A, Tv, Ebar, Fd,
             qinv, rlin, alpha, beta1, beta2, beta3, L, u_fixed,
             p2, mu2, R2, sig2, inj2, p3, mu3, node3, R3, sig3, epoch,
             Pl_const, npulse, pt0, ptau, pamp,
             o_t1, o_t2, o_t3, has_t2, has_t3, flow, ev, u, load)
        for c in range(N):
            xt[c] = x[c] + (0.5 * h) * k1[c]
        _rhs(t0 + 0.5 * h, xt, k2, n, m, variant, ia, ja, bk, M, A, Tv, Ebar, Fd,
             qinv, rlin, alpha, beta1, beta2, beta3, L, u_fixed,
             p2, mu2, R2, sig2, inj2, p3, mu3, node3, R3, sig3, epoch,
             Pl_const, npulse, pt0, ptau, pamp,
             o_t1, o_t2, o_t3, has_t2, has_t3, flow, ev, u, load)
        for c in range(N):
            xt[c] = x[c] + (0.5 * h) * k2[c]
        _rhs(t0 + 0.5 * h, xt, k3, n, m, variant, ia, ja, bk, M, A, Tv, Ebar, Fd,
             qinv, rlin, alpha, beta1, beta2, beta3, L, u_fixed,
             p2, mu2, R2, sig2, inj2, p3, mu3, node3, R3, sig3, epoch,
             Pl_const, npulse, pt0, ptau, pamp,
             o_t1, o_t2, o_t3, has_t2, has_t3, flow, ev, u, load)
        for c in range(N):
            xt[c] = x[c] + h * k3[c]
        _rhs(t0 + h, xt, k4, n, m, variant, ia, ja, bk, M, A, Tv, Ebar, Fd,
             qinv, rlin, alpha, beta1, beta2, beta3, L, u_fixed,
             p2, mu2, R2, sig2, inj2, p3, mu3, node3, R3, sig3, epoch,
             Pl_const, npulse, pt0, ptau, pamp,
             o_t1, o_t2, o_t3, has_t2, has_t3, flow, ev, u, load)
        ok = 1
        for c in range(N):
            acc = (k1[c] + 2.0 * (k2[c] + k3[c])) + k4[c]
            xt[c] = x[c] + (h / 6.0) * acc
            if not isfinite(xt[c]):
                ok = 2
        if ok == 2:
            return x_arr, written, STATUS_NONFINITE, i
        for c in range(o_v, o_t1):
            if xt[c] <= 0.0:
                ok = 0
        if ok == 0:
            return x_arr, written, STATUS_DOMAIN, i
        for c in range(N):
            x[c] = xt[c]
        if flags[i + 1]:
            for c in range(N):
                out[written, c] = x[c]
            written += 1
    return x_arr, written, STATUS_OK, steps
