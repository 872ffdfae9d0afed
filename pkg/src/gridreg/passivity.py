"""Incremental storage functions and dissipation-identity monitors.

The plant storage splits into a kinetic part in the frequency deviations and
a potential part in angles and voltages. Along solutions the storage rate
decomposes into damping, voltage-gradient and consensus losses plus the
supply through the controller port; the functions here evaluate both sides
of that identity pointwise so trajectories can be certified numerically.
"""

from dataclasses import dataclass

import numpy as np

from .network import _vector, line_coupling, voltage_diag, voltage_matrix


def kinetic_storage(omega, omega_ref, M):
    """Inertia-weighted squared distance to the reference frequency."""
    omega = np.asarray(omega, dtype=float)
    omega_ref = np.asarray(omega_ref, dtype=float)
    d = omega - omega_ref
    return 0.5 * float(np.sum(np.asarray(M, dtype=float) * d * d))


def potential_storage(eta, eta_ref, V, V_ref, g, p):
    """Coupling-plus-field energy relative to its value and slope at the reference."""
    eta = _vector(eta, g.m, "eta")
    eta_ref = _vector(eta_ref, g.m, "eta_ref")
    V = _vector(V, g.n, "V")
    V_ref = _vector(V_ref, g.n, "V_ref")
    gam = line_coupling(V, g)
    gam_ref = line_coupling(V_ref, g)
    F = voltage_diag(g, p)
    val = -float(np.sum(gam * np.cos(eta))) + float(np.sum(gam_ref * np.cos(eta_ref)))
    val -= float((gam_ref * np.sin(eta_ref)) @ (eta - eta_ref))
    val -= float(p.e_fd @ (V - V_ref))
    val += 0.5 * float(V @ (F * V)) - 0.5 * float(V_ref @ (F * V_ref))
    return val


def potential_storage_grad(eta, eta_ref, V, V_ref, g, p):
    """Gradient of the potential storage, angle block then voltage block."""
    eta = _vector(eta, g.m, "eta")
    eta_ref = _vector(eta_ref, g.m, "eta_ref")
    V = _vector(V, g.n, "V")
    V_ref = _vector(V_ref, g.n, "V_ref")
    g_eta = line_coupling(V, g) * np.sin(eta) - line_coupling(V_ref, g) * np.sin(eta_ref)
    g_V = voltage_matrix(eta, g, p) @ V - p.e_fd
    return np.concatenate([g_eta, g_V])


def potential_storage_hessian(eta, V, g, p):
    """Hessian of the potential storage; independent of the reference point."""
    eta = _vector(eta, g.m, "eta")
    V = _vector(V, g.n, "V")
    gam = line_coupling(V, g)
    top = np.diag(gam * np.cos(eta))
    H = g.D_abs * (gam * np.sin(eta)) / V[:, None]
    E = voltage_matrix(eta, g, p)
    return np.block([[top, H.T], [H, E]])


def voltage_grad_quadratic(eta, V, g, p):
    """Squared voltage-equation residual weighted by the inverse time constants."""
    gv = voltage_matrix(eta, g, p) @ V - p.e_fd
    return float(np.sum(gv * gv / p.t_v))


@dataclass
class StorageReport:
    """Storage values and the analytic rate decomposition at one state."""

    kinetic: float
    potential: float
    plant: float
    controller: float
    total: float
    d_total_analytic: float
    damping_term: float
    voltage_grad_term: float
    consensus_term: float


def closed_loop_report(eta, omega, V, eq, g, p, omega_ref=None,
                       controller_storage=0.0, consensus_term=0.0):
    """Assemble the storage report for one sampled state.

    ``omega_ref`` defaults to the synchronous frequency of the reference
    equilibrium (zero for dispatch-fed steady states).
    """
    if omega_ref is None:
        omega_ref = np.full(g.n, eq.omega_sync)
    w1 = kinetic_storage(omega, omega_ref, p.M)
    w2 = potential_storage(eta, eq.eta, V, eq.V, g, p)
    diff = np.asarray(omega, dtype=float) - omega_ref
    damping = float(np.sum(p.A * diff * diff))
    vgrad = voltage_grad_quadratic(eta, V, g, p)
    plant = w1 + w2
    total = plant + controller_storage
    return StorageReport(
        kinetic=w1,
        potential=w2,
        plant=plant,
        controller=controller_storage,
        total=total,
        d_total_analytic=-(damping + vgrad + consensus_term),
        damping_term=damping,
        voltage_grad_term=vgrad,
        consensus_term=consensus_term,
    )


# ---- pointwise rate identities ------------------------------------------
#
# Each helper returns (lhs, rhs): the storage rate computed from the model
# equations against the claimed decomposition. Both sides agree to rounding
# for any state and any consistent reference, which is what the test suite
# asserts on random samples.


def kinetic_rate_identity(omega, u, mu, Pl, omega_ref, u_ref, mu_ref, p):
    """Kinetic storage rate against damping loss plus port supplies.

    The reference triple must balance: u_ref + mu_ref - A omega_ref - Pl = 0.
    """
    omega = np.asarray(omega, dtype=float)
    domega = u + mu - p.A * omega - Pl  # times M, cancels against the weight
    diff = omega - omega_ref
    lhs = float(diff @ domega)
    rhs = -float(diff @ (p.A * diff)) + float(diff @ (mu - mu_ref)) + float(diff @ (u - u_ref))
    return lhs, rhs


def potential_rate_identity(eta, V, v_in, eq, g, p):
    """Potential storage rate against gradient loss plus the angle-port supply.

    ``v_in`` is the angle-velocity input; the voltage states move along the
    negative voltage gradient scaled by the time constants. The supply side
    is computed from physical line flows, not from the storage gradient, so
    agreement confirms the gradient formula.
    """
    grad = potential_storage_grad(eta, eq.eta, V, eq.V, g, p)
    g_eta, g_V = grad[: g.m], grad[g.m :]
    lhs = float(g_eta @ v_in) + float(g_V @ (-g_V / p.t_v))
    lam = line_coupling(V, g) * np.sin(np.asarray(eta, dtype=float))
    lam_ref = line_coupling(eq.V, g) * np.sin(eq.eta)
    rhs = -float(np.sum(g_V * g_V / p.t_v)) + float((lam - lam_ref) @ v_in)
    return lhs, rhs


def plant_rate_identity(eta, omega, V, u, Pl, eq, g, p):
    """Full plant storage rate against the damping + voltage-gradient form."""
    omega = np.asarray(omega, dtype=float)
    lam = line_coupling(V, g) * np.sin(eta)
    mu = -(g.D @ lam)
    lam_ref = line_coupling(eq.V, g) * np.sin(eq.eta)
    mu_ref = -(g.D @ lam_ref)
    omega_ref = np.full(g.n, eq.omega_sync)
    grad = potential_storage_grad(eta, eq.eta, V, eq.V, g, p)
    g_eta, g_V = grad[: g.m], grad[g.m :]
    diff = omega - omega_ref
    lhs = float(diff @ (u + mu - p.A * omega - Pl))
    lhs += float(g_eta @ (g.D.T @ omega)) - float(np.sum(g_V * g_V / p.t_v))
    rhs = (
        -float(diff @ (p.A * diff))
        - float(np.sum(g_V * g_V / p.t_v))
        + float(diff @ (u - eq.u))
    )
    return lhs, rhs


def closed_loop_rate_identity(eta, omega, V, cs, ctrl, exo, eq, ref_cs, g, p, t=0.0):
    """Closed-loop storage rate against the claimed three-loss decomposition.

    Requires a consistent reference: equilibrium of the constant demand under
    the optimal dispatch and the matching controller reference state at t.
    """
    cost = ctrl.cost
    u = ctrl.output(cs)
    Pl = exo.demand_at(t, cost)
    lam = line_coupling(V, g) * np.sin(eta)
    mu = -(g.D @ lam)
    grad = potential_storage_grad(eta, eq.eta, V, eq.V, g, p)
    g_eta, g_V = grad[: g.m], grad[g.m :]
    omega = np.asarray(omega, dtype=float)
    diff = omega - np.full(g.n, eq.omega_sync)
    lhs = float(diff @ (u + mu - p.A * omega - Pl))
    lhs += float(g_eta @ (g.D.T @ omega)) - float(np.sum(g_V * g_V / p.t_v))
    dcs = ctrl.rhs(cs, omega)
    dref = _reference_rate(ctrl, exo, ref_cs)
    lhs += float((cs.theta1 - ref_cs.theta1) @ (dcs.theta1 - dref.theta1))
    if ctrl.d2:
        lhs += float(np.sum((cs.theta2 - ref_cs.theta2) * (dcs.theta2 - dref.theta2)))
    if ctrl.d3:
        lhs += float((cs.theta3 - ref_cs.theta3) @ (dcs.theta3 - dref.theta3))
    damping = float(diff @ (p.A * diff))
    vgrad = float(np.sum(g_V * g_V / p.t_v))
    consensus = ctrl.consensus_quadratic(cs, ref_cs)
    rhs = -(damping + vgrad + consensus)
    return lhs, rhs


def _reference_rate(ctrl, exo, ref_cs):
    """Time derivative of the controller reference (free oscillator motion)."""
    d = ctrl.zero_state()
    if ctrl.d2:
        th = ref_cs.theta2.reshape(ctrl.n, -1, 2)
        dd = d.theta2.reshape(ctrl.n, -1, 2)
        dd[:, :, 0] = ctrl.mu2 * th[:, :, 1]
        dd[:, :, 1] = -ctrl.mu2 * th[:, :, 0]
    if ctrl.d3:
        even = np.arange(0, ctrl.d3, 2)
        d.theta3[even] = ctrl.mu3 * ref_cs.theta3[even + 1]
        d.theta3[even + 1] = -ctrl.mu3 * ref_cs.theta3[even]
    return d


def dissipation_check_open_loop(traj, eq, g, p):
    """Largest mismatch between sampled storage rate and the analytic identity.

    Central differences of the plant storage along a constant-input
    trajectory are compared with the damping + voltage-gradient + supply
    form; the mismatch shrinks at second order in the sample spacing.
    """
    times = traj.t
    n_s = times.shape[0]
    omega_ref = np.full(g.n, eq.omega_sync)
    U = np.empty(n_s)
    rate = np.empty(n_s)
    for k in range(n_s):
        eta, omega, V = traj.eta[k], traj.omega[k], traj.V[k]
        U[k] = kinetic_storage(omega, omega_ref, p.M) + potential_storage(
            eta, eq.eta, V, eq.V, g, p
        )
        diff = omega - omega_ref
        rate[k] = (
            -float(diff @ (p.A * diff))
            - voltage_grad_quadratic(eta, V, g, p)
            + float(diff @ (traj.u[k] - eq.u))
        )
    worst = 0.0
    for k in range(1, n_s - 1):
        fd = (U[k + 1] - U[k - 1]) / (times[k + 1] - times[k - 1])
        worst = max(worst, abs(fd - rate[k]))
    return worst
