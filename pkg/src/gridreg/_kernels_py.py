"""Pure NumPy closed-loop integrator, interface-compatible with the compiled core.

Classical fixed-step fourth-order integration of the stacked closed loop.
A step is committed only if it keeps every voltage positive and every state
finite; otherwise integration stops and the last valid state is returned.
"""

import numpy as np

NAME = "python"

STATUS_OK = 0
STATUS_DOMAIN = 1
STATUS_NONFINITE = 2


def _make_rhs(pack):
    n, m = pack.n, pack.m
    ia, ja, bk = pack.ia, pack.ja, pack.bk
    M, A, Tv, Ebar, Fd = pack.M, pack.A, pack.Tv, pack.Ebar, pack.Fd
    variant = pack.variant
    qinv, rlin = pack.qinv, pack.rlin
    alpha, beta1, beta2, beta3 = pack.alpha, pack.beta1, pack.beta2, pack.beta3
    L = pack.L
    o_w = m
    o_v = m + n
    o_t1 = m + 2 * n
    o_t2 = o_t1 + pack.th1_dim
    o_t3 = o_t2 + pack.th2_dim
    d2 = 2 * pack.p2
    has_t2 = pack.th2_dim > 0
    has_t3 = pack.th3_dim > 0
    even3 = np.arange(0, pack.d3, 2)
    node_comp = np.repeat(pack.node3, 2) if pack.p3 else np.zeros(0, dtype=np.intc)
    R2e, R2o = pack.R2[0::2], pack.R2[1::2]
    sig2e, sig2o = pack.sig2[0::2], pack.sig2[1::2]
    sig3e, sig3o = pack.sig3[0::2], pack.sig3[1::2]
    epoch = pack.epoch

    def demand(t):
        load = pack.Pl_const.copy()
        if pack.p2:
            ang = pack.mu2 * (t - epoch)
            c, s = np.cos(ang), np.sin(ang)
            out = (c * sig2e + s * sig2o) @ R2e + (-s * sig2e + c * sig2o) @ R2o
            load += pack.inj2 * out
        if pack.p3:
            ang = pack.mu3 * (t - epoch)
            c, s = np.cos(ang), np.sin(ang)
            se = c * sig3e + s * sig3o
            so = -s * sig3e + c * sig3o
            contrib = pack.R3[0::2] * se + pack.R3[1::2] * so
            np.add.at(load, pack.node3, contrib)
        for k in range(pack.npulse):
            z = (t - pack.pt0[k]) / pack.ptau[k]
            load = load + pack.pamp[k] * np.exp(-0.5 * z * z)
        return load

    def rhs(t, x, dx):
        eta = x[0:m]
        omega = x[o_w:o_v]
        V = x[o_v:o_t1]
        seta = np.sin(eta)
        ceta = np.cos(eta)
        lam = V[ia] * V[ja] * bk * seta
        flow = np.zeros(n)
        np.add.at(flow, ia, lam)
        np.add.at(flow, ja, -lam)
        ev = Fd * V
        tmp = bk * ceta
        np.add.at(ev, ia, -tmp * V[ja])
        np.add.at(ev, ja, -tmp * V[ia])
        if variant == 0:
            u = pack.u_fixed
        else:
            theta1 = x[o_t1:o_t2]
            u = beta1 * qinv * theta1 - qinv * rlin
            if has_t2:
                th2 = x[o_t2:o_t3].reshape(n, d2)
                u = u + beta2 * qinv * (th2 @ pack.R2)
            if has_t3:
                th3 = x[o_t3:]
                u = u + beta3 * np.bincount(node_comp, weights=pack.R3 * th3, minlength=n)
        dx[0:m] = omega[ia] - omega[ja]
        dx[o_w:o_v] = (u - flow - A * omega - demand(t)) / M
        dx[o_v:o_t1] = (Ebar - ev) / Tv
        if variant >= 1:
            dx[o_t1:o_t2] = -alpha * (L @ theta1) - beta1 * qinv * omega
        if has_t2:
            th = th2.reshape(n, -1, 2)
            dd = dx[o_t2:o_t3].reshape(n, -1, 2)
            drive = beta2 * qinv[:, None] * omega[:, None]
            dd[:, :, 0] = pack.mu2 * th[:, :, 1] - drive * R2e
            dd[:, :, 1] = -pack.mu2 * th[:, :, 0] - drive * R2o
        if has_t3:
            dth3 = dx[o_t3:]
            drive = (beta3 * omega)[node_comp] * pack.R3
            dth3[even3] = pack.mu3 * th3[even3 + 1] - drive[even3]
            dth3[even3 + 1] = -pack.mu3 * th3[even3] - drive[even3 + 1]

    return rhs, o_v, o_t1


def integrate(times, flags, x0, pack, out):
    """Integrate over the given step boundaries, recording flagged states.

    Returns (final_state, samples_written, status, steps_committed).
    """
    rhs, o_v, o_t1 = _make_rhs(pack)
    x = np.asarray(x0, dtype=float).copy()
    N = x.shape[0]
    k1 = np.empty(N)
    k2 = np.empty(N)
    k3 = np.empty(N)
    k4 = np.empty(N)
    xt = np.empty(N)
    written = 0
    steps = times.shape[0] - 1
    for i in range(steps):
        t0 = times[i]
        h = times[i + 1] - t0
        rhs(t0, x, k1)
        np.multiply(k1, 0.5 * h, out=xt)
        xt += x
        rhs(t0 + 0.5 * h, xt, k2)
        np.multiply(k2, 0.5 * h, out=xt)
        xt += x
        rhs(t0 + 0.5 * h, xt, k3)
        np.multiply(k3, h, out=xt)
        xt += x
        rhs(t0 + h, xt, k4)
        k2 += k3
        k2 *= 2.0
        k1 += k2
        k1 += k4
        np.multiply(k1, h / 6.0, out=xt)
        xt += x
        if not np.all(np.isfinite(xt)):
            return x, written, STATUS_NONFINITE, i
        if np.any(xt[o_v:o_t1] <= 0.0):
            return x, written, STATUS_DOMAIN, i
        x[:] = xt
        if flags[i + 1]:
            out[written, :] = x
            written += 1
    return x, written, STATUS_OK, steps
