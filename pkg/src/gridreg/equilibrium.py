"""Steady states of the network model and their feasibility certificates."""

from dataclasses import dataclass

import numpy as np

from .network import _vector, line_coupling, voltage_matrix

SECURITY_LIMIT = 0.5 * np.pi


class EquilibriumError(RuntimeError):
    """Steady-state solve failed. Carries the final residual norm."""

    def __init__(self, message, residual_norm=None):
        super().__init__(message)
        self.residual_norm = residual_norm


class InfeasibleError(RuntimeError):
    """Requested injections cannot be carried by the network."""

    def __init__(self, message, sine_norm=None):
        super().__init__(message)
        self.sine_norm = sine_norm


@dataclass
class Equilibrium:
    eta: np.ndarray
    omega_sync: float
    V: np.ndarray
    u: np.ndarray
    residual_norm: float
    secure: bool
    delta: np.ndarray


def sync_frequency(u, Pl, A):
    """Synchronous per-unit frequency deviation under constant injections.

    Total imbalance is absorbed by the aggregate damping, independently of
    the network topology.
    """
    u = np.asarray(u, dtype=float)
    Pl = np.asarray(Pl, dtype=float)
    A = np.asarray(A, dtype=float)
    return float(np.sum(u - Pl) / np.sum(A))


def check_security(eta):
    """True when every relative angle lies strictly inside (-pi/2, pi/2)."""
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    return bool(np.all(np.abs(eta) < SECURITY_LIMIT))


def _steady_residual(g, p, inj, delta, V):
    eta = g.D.T @ delta
    power = inj - g.D @ (line_coupling(V, g) * np.sin(eta))
    voltage = p.e_fd - voltage_matrix(eta, g, p) @ V
    return power, voltage, eta


def _steady_jacobian(g, p, delta, V, eta):
    n, m = g.n, g.m
    gam = line_coupling(V, g)
    seta, ceta = np.sin(eta), np.cos(eta)
    # power rows: d/d(delta) is the weighted graph Laplacian, d/dV via the
    # product structure of the coupling gains
    K = (g.D * (gam * ceta)) @ g.D.T
    Gv = np.zeros((m, n))
    if m:
        Gv[np.arange(m), g.pos] = V[g.neg] * g.b_edge
        Gv[np.arange(m), g.neg] = V[g.pos] * g.b_edge
    J_pd = -K[1:, 1:]
    J_pv = -(g.D @ (seta[:, None] * Gv))[1:, :]
    # voltage rows
    P = np.zeros((n, m))
    if m:
        np.add.at(P, (g.pos, np.arange(m)), -g.b_edge * seta * V[g.neg])
        np.add.at(P, (g.neg, np.arange(m)), -g.b_edge * seta * V[g.pos])
    J_vd = (P @ g.D.T)[:, 1:]
    J_vv = -voltage_matrix(eta, g, p)
    return np.block([[J_pd, J_pv], [J_vd, J_vv]])


def solve_regulator(g, p, u, Pl, guess_delta=None, guess_V=None, tol=1e-10, max_iter=50):
    """Solve the steady-state equations by damped Newton iteration.

    Node 1 is the angle reference; unknowns are the remaining node angles and
    all voltages. Power balances at nodes 2..n plus all voltage equations
    form a square system, and the node-1 balance is implied by the
    synchronous frequency (verified on exit). Backtracking keeps voltages
    positive and the residual decreasing.
    """
    n = g.n
    u = _vector(u, n, "u")
    Pl = _vector(Pl, n, "Pl")
    w_sync = sync_frequency(u, Pl, p.A)
    inj = u - Pl - p.A * w_sync
    delta = np.zeros(n) if guess_delta is None else _vector(guess_delta, n, "guess_delta").copy()
    V = np.ones(n) if guess_V is None else _vector(guess_V, n, "guess_V").copy()
    if np.any(V <= 0):
        raise ValueError("voltage guess must be positive")

    power, voltage, eta = _steady_residual(g, p, inj, delta, V)
    rnorm = max(np.max(np.abs(power[1:]), initial=0.0), np.max(np.abs(voltage)))
    for _ in range(max_iter):
        if rnorm <= tol:
            break
        J = _steady_jacobian(g, p, delta, V, eta)
        r = np.concatenate([power[1:], voltage])
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -r, rcond=None)[0]
        if not np.all(np.isfinite(step)):
            step = np.linalg.lstsq(J, -r, rcond=None)[0]
        scale = 1.0
        accepted = False
        for _ in range(40):
            d_new = delta.copy()
            d_new[1:] += scale * step[: n - 1]
            V_new = V + scale * step[n - 1 :]
            if np.all(V_new > 0):
                pw, vo, et = _steady_residual(g, p, inj, d_new, V_new)
                rn = max(np.max(np.abs(pw[1:]), initial=0.0), np.max(np.abs(vo)))
                if rn < rnorm:
                    delta, V, power, voltage, eta, rnorm = d_new, V_new, pw, vo, et, rn
                    accepted = True
                    break
            scale *= 0.5
        if not accepted:
            raise EquilibriumError(
                f"steady-state Newton stalled at residual {rnorm:.3e}", rnorm
            )
    if rnorm > tol:
        raise EquilibriumError(
            f"steady-state Newton did not reach tolerance, residual {rnorm:.3e}", rnorm
        )
    full_norm = max(rnorm, float(np.max(np.abs(power))))
    if np.any(V <= 0):
        raise EquilibriumError("solver returned non-positive voltages", full_norm)
    return Equilibrium(
        eta=eta,
        omega_sync=w_sync,
        V=V,
        u=u,
        residual_norm=full_norm,
        secure=check_security(eta),
        delta=delta,
    )


def acyclic_angles(g, V_bar, u, Pl, A):
    """Closed-form steady-state angles for acyclic networks.

    With full-column-rank incidence the flows are determined by the damped
    injections alone; angles follow by inverting the per-edge sine.
    """
    V_bar = _vector(V_bar, g.n, "V_bar")
    u = _vector(u, g.n, "u")
    Pl = _vector(Pl, g.n, "Pl")
    A = _vector(A, g.n, "A")
    if g.m == 0:
        return np.zeros(0)
    if np.linalg.matrix_rank(g.D) < g.m:
        raise ValueError("network has cycles; closed form needs an acyclic graph")
    x = u - Pl
    proj = x - A * (np.sum(x) / np.sum(A))
    flows = np.linalg.solve(g.D.T @ g.D, g.D.T @ proj)
    sines = flows / line_coupling(V_bar, g)
    norm = float(np.max(np.abs(sines)))
    if norm >= 1.0:
        raise InfeasibleError(
            f"injections need per-edge sine magnitude {norm:.6g} >= 1", norm
        )
    return np.arcsin(sines)


@dataclass
class MinimumCheck:
    passed: bool
    min_eig: float


def check_strict_minimum(eta_bar, V_bar, g, p):
    """Certify a strict local minimum of the energy at the steady state.

    Evaluates the Schur complement of the storage Hessian's angle block at
    (eta_bar, V_bar); a positive smallest eigenvalue certifies positive
    definiteness of the full Hessian on the security region.
    """
    eta_bar = _vector(eta_bar, g.m, "eta_bar")
    V_bar = _vector(V_bar, g.n, "V_bar")
    if not check_security(eta_bar):
        raise ValueError("angles outside the security region")
    if np.any(V_bar <= 0):
        raise ValueError("voltages must be positive")
    E = voltage_matrix(eta_bar, g, p)
    if g.m:
        gam = line_coupling(V_bar, g)
        seta, ceta = np.sin(eta_bar), np.cos(eta_bar)
        w = gam * seta * seta / ceta
        C = (g.D_abs * w) @ g.D_abs.T
        C = C / V_bar[:, None] / V_bar[None, :]
        E = E - C
    E = 0.5 * (E + E.T)
    min_eig = float(np.linalg.eigvalsh(E)[0])
    return MinimumCheck(min_eig > 0.0, min_eig)
