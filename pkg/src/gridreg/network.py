"""Grid topology, per-area parameters, and the flux-decay network dynamics.

All electrical quantities are per-unit on a shared system base and time
constants are in seconds. ``omega`` holds per-unit frequency deviations
from nominal; the nominal base enters only when deviations are converted
for display.
"""

from dataclasses import dataclass

import numpy as np

# Nominal frequency in rad/s, used only for display conversions of omega.
FREQ_BASE_RAD_S = 120.0 * np.pi


def _vector(x, n, name):
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.shape != (n,):
        raise ValueError(f"{name} must be a length-{n} vector, got shape {v.shape}")
    return v


class GridGraph:
    """Undirected transmission network with arbitrarily oriented edges.

    Edge k joins ``pos[k]`` (its + end) to ``neg[k]`` and carries a positive
    line susceptance ``b_edge[k]``; ``b_self[i]`` is the negative
    self-susceptance of node i. Column k of the incidence matrix ``D`` has
    +1 at ``pos[k]`` and -1 at ``neg[k]``. Edge orientation is a bookkeeping
    choice: flipping it flips the sign of the relative angle and of the line
    flow but leaves the node dynamics unchanged.
    """

    def __init__(self, n, edges, b_self):
        n = int(n)
        if n < 1:
            raise ValueError("need at least one node")
        pos, neg, b = [], [], []
        for k, (i, j, bij) in enumerate(edges):
            i, j = int(i), int(j)
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge {k} references nodes outside 0..{n - 1}")
            if i == j:
                raise ValueError(f"edge {k} is a self-loop")
            if not float(bij) > 0.0:
                raise ValueError(f"edge {k} needs line susceptance > 0, got {bij}")
            pos.append(i)
            neg.append(j)
            b.append(float(bij))
        self.n = n
        self.m = len(pos)
        self.pos = np.asarray(pos, dtype=np.intc)
        self.neg = np.asarray(neg, dtype=np.intc)
        self.b_edge = np.asarray(b, dtype=float)
        self.b_self = _vector(b_self, n, "b_self")
        if np.any(self.b_self >= 0.0):
            raise ValueError("self-susceptances must be negative")
        D = np.zeros((n, self.m))
        if self.m:
            D[self.pos, np.arange(self.m)] = 1.0
            D[self.neg, np.arange(self.m)] = -1.0
        self.D = D
        self.D_abs = np.abs(D)

    def edges(self):
        return [(int(i), int(j), float(b)) for i, j, b in zip(self.pos, self.neg, self.b_edge)]

    @property
    def connected(self):
        seen = np.zeros(self.n, dtype=bool)
        adj = [[] for _ in range(self.n)]
        for i, j in zip(self.pos, self.neg):
            adj[i].append(j)
            adj[j].append(i)
        stack = [0]
        seen[0] = True
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if not seen[w]:
                    seen[w] = True
                    stack.append(w)
        return bool(seen.all())

    def flip_edge(self, k):
        """Return a copy with the orientation of edge k reversed."""
        e = self.edges()
        i, j, b = e[k]
        e[k] = (j, i, b)
        return GridGraph(self.n, e, self.b_self)

    def cycle_basis(self):
        """Orthonormal basis of the cycle space (null space of D), shape (m, c)."""
        if self.m == 0:
            return np.zeros((0, 0))
        _, sv, vt = np.linalg.svd(self.D)
        tol = max(self.D.shape) * np.finfo(float).eps * (sv[0] if sv.size else 0.0)
        rank = int(np.sum(sv > tol))
        return vt[rank:].T.copy()


@dataclass
class AreaParams:
    """Per-area machine constants.

    M       rotational inertia
    A       frequency damping
    T_do    open-circuit transient time constant (s)
    X_d     synchronous reactance
    X_dp    transient reactance, 0 < X_dp < X_d
    E_f     constant exciter voltage
    """

    M: np.ndarray
    A: np.ndarray
    T_do: np.ndarray
    X_d: np.ndarray
    X_dp: np.ndarray
    E_f: np.ndarray

    def __post_init__(self):
        n = np.atleast_1d(np.asarray(self.M, dtype=float)).shape[0]
        for name in ("M", "A", "T_do", "X_d", "X_dp", "E_f"):
            setattr(self, name, _vector(getattr(self, name), n, name))
        if np.any(self.M <= 0) or np.any(self.A <= 0) or np.any(self.T_do <= 0):
            raise ValueError("M, A and T_do must be positive")
        if np.any(self.X_dp <= 0) or np.any(self.X_d <= self.X_dp):
            raise ValueError("reactances must satisfy X_d > X_dp > 0")
        # derived constants of the voltage equation
        self.x_gap = self.X_d - self.X_dp
        self.t_v = self.T_do / self.x_gap
        self.e_fd = self.E_f / self.x_gap

    @property
    def n(self):
        return self.M.shape[0]


@dataclass
class GridState:
    """Relative angles (one per edge), frequency deviations and voltages."""

    eta: np.ndarray
    omega: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        self.eta = np.atleast_1d(np.asarray(self.eta, dtype=float))
        self.omega = np.atleast_1d(np.asarray(self.omega, dtype=float))
        self.V = np.atleast_1d(np.asarray(self.V, dtype=float))


@dataclass
class LineFlows:
    """Active power carried by each line, signed by edge orientation."""

    flow: np.ndarray


def line_coupling(V, g):
    """Per-edge coupling gains V_i V_j B_ij, positive whenever V > 0."""
    V = _vector(V, g.n, "V")
    if np.any(V <= 0.0):
        raise ValueError("voltages must be positive")
    return V[g.pos] * V[g.neg] * g.b_edge


def voltage_diag(g, p):
    """Diagonal of the voltage interaction matrix; independent of angles."""
    return (1.0 - g.b_self * p.x_gap) / p.x_gap


def voltage_matrix(eta, g, p):
    """Symmetric voltage interaction matrix at relative angles ``eta``."""
    eta = _vector(eta, g.m, "eta")
    E = np.zeros((g.n, g.n))
    if g.m:
        off = -g.b_edge * np.cos(eta)
        # parallel edges accumulate
        np.add.at(E, (g.pos, g.neg), off)
        np.add.at(E, (g.neg, g.pos), off)
    E[np.arange(g.n), np.arange(g.n)] = voltage_diag(g, p)
    return E


@dataclass
class DominanceReport:
    """Structural diagonal-dominance certificate for the voltage matrix."""

    passed: bool
    margins: np.ndarray


def check_voltage_matrix_pd(g, p):
    """Check the structural condition making the voltage matrix positive definite.

    With X_d > X_dp > 0 and B_ii < 0 (both enforced at construction), strict
    dominance |B_ii| > sum of incident line susceptances guarantees positive
    definiteness for every angle configuration. Returns per-node margins.
    """
    incident = np.zeros(g.n)
    if g.m:
        np.add.at(incident, g.pos, g.b_edge)
        np.add.at(incident, g.neg, g.b_edge)
    margins = np.abs(g.b_self) - incident
    return DominanceReport(bool(np.all(margins > 0.0)), margins)


def dynamics_rhs(state, u, Pl, g, p):
    """Time derivatives (deta, domega, dV) of the flux-decay network model."""
    eta = _vector(state.eta, g.m, "eta")
    omega = _vector(state.omega, g.n, "omega")
    V = _vector(state.V, g.n, "V")
    u = _vector(u, g.n, "u")
    Pl = _vector(Pl, g.n, "Pl")
    lam = line_coupling(V, g) * np.sin(eta)
    deta = g.D.T @ omega
    domega = (u - g.D @ lam - p.A * omega - Pl) / p.M
    dV = (p.e_fd - voltage_matrix(eta, g, p) @ V) / p.t_v
    return deta, domega, dV


def line_flows(state, g):
    """Signed per-edge active power flows at the given state."""
    eta = _vector(state.eta, g.m, "eta")
    return LineFlows(line_coupling(state.V, g) * np.sin(eta))
