"""Economic dispatch for quadratic and linear-quadratic generation costs."""

from dataclasses import dataclass

import numpy as np

from .equilibrium import EquilibriumError, InfeasibleError, solve_regulator
from .network import _vector


@dataclass
class CostModel:
    """Strictly convex generation cost 1/2 q_i u_i^2 + r_i u_i + s_i per node."""

    q: np.ndarray
    r: np.ndarray | None = None
    s: np.ndarray | None = None

    def __post_init__(self):
        self.q = np.atleast_1d(np.asarray(self.q, dtype=float))
        n = self.q.shape[0]
        if np.any(self.q <= 0):
            raise ValueError("cost curvatures q must be positive")
        if self.r is not None:
            self.r = _vector(self.r, n, "r")
        if self.s is not None:
            self.s = _vector(self.s, n, "s")

    @property
    def n(self):
        return self.q.shape[0]


@dataclass
class DispatchSolution:
    u: np.ndarray
    multiplier: float
    cost: float


def generation_cost(cost, u):
    """Total generation cost of the injection vector u."""
    u = _vector(u, cost.n, "u")
    total = 0.5 * float(np.sum(cost.q * u * u))
    if cost.r is not None:
        total += float(np.sum(cost.r * u))
    if cost.s is not None:
        total += float(np.sum(cost.s))
    return total


def optimal_dispatch(cost, Pl):
    """Cheapest constant generation covering total demand, quadratic costs.

    The optimality system forces identical marginal prices q_i u_i, so each
    node produces in proportion to 1/q_i.
    """
    if cost.r is not None and np.any(cost.r != 0.0):
        raise ValueError("cost has linear terms; use optimal_dispatch_lq")
    Pl = _vector(Pl, cost.n, "Pl")
    qinv = 1.0 / cost.q
    multiplier = -float(np.sum(Pl) / np.sum(qinv))
    u = -multiplier * qinv
    return DispatchSolution(u=u, multiplier=multiplier, cost=generation_cost(cost, u))


def optimal_dispatch_lq(cost, Pl):
    """Cheapest constant generation covering total demand, linear-quadratic costs.

    Reduces to ``optimal_dispatch`` when the linear coefficients vanish.
    """
    Pl = _vector(Pl, cost.n, "Pl")
    r = np.zeros(cost.n) if cost.r is None else cost.r
    qinv = 1.0 / cost.q
    price = float((np.sum(Pl) + np.sum(qinv * r)) / np.sum(qinv))
    u = qinv * (price - r)
    return DispatchSolution(u=u, multiplier=-price, cost=generation_cost(cost, u))


def compensable_basis(cost):
    """Direction Q^{-1} 1 spanning the demand variations optimal dispatch can track."""
    return 1.0 / cost.q


def compensable_projector(cost):
    """Projector-like map whose null space is exactly span(Q^{-1} 1).

    Time-varying demand components in the null space can be absorbed by the
    economically optimal feedforward; everything else must be generated
    where it appears.
    """
    qinv = 1.0 / cost.q
    return np.outer(qinv, np.ones(cost.n)) / np.sum(qinv) - np.eye(cost.n)


class CommonBlockError(ValueError):
    """A shared demand block whose injection direction is not optimally trackable."""

    def __init__(self, message, direction=None):
        super().__init__(message)
        self.direction = direction


@dataclass
class BlockClassification:
    kind: str  # "common" or "residual"
    frequency: float
    direction: np.ndarray  # complex per-node amplitudes
    compensable: bool


def _proportional_to(direction, basis, rtol=1e-12):
    norm = np.linalg.norm(direction)
    if norm == 0.0:
        return True
    coeff = np.vdot(basis, direction) / np.dot(basis, basis)
    return bool(np.linalg.norm(direction - coeff * basis) <= rtol * norm)


def decompose_demand(exo, cost):
    """Classify each sinusoidal demand block as compensable or residual.

    The shared block must inject along Q^{-1} 1 (anything else raises
    ``CommonBlockError`` with the offending direction). Per-node blocks at a
    common frequency and phase are compensable only if their cross-node
    amplitude pattern happens to align with Q^{-1} 1; otherwise they must be
    matched by local generation.
    """
    basis = compensable_basis(cost)
    n = cost.n
    out = []
    if exo.common is not None:
        w = exo.common_injection
        w = basis if w is None else np.asarray(w, dtype=float)
        if not _proportional_to(w.astype(complex), basis):
            raise CommonBlockError(
                "shared demand block injects outside span(Q^{-1} 1)", w
            )
        for mu, amp, phase in exo.common.mode_list():
            direction = w.astype(complex) * (amp * np.exp(1j * phase))
            out.append(BlockClassification("common", float(mu), direction, True))
    groups = {}
    for i, blk in enumerate(exo.residual):
        if blk is None:
            continue
        for mu, amp, phase in blk.mode_list():
            key = round(float(mu), 9)
            vec = groups.setdefault(key, np.zeros(n, dtype=complex))
            vec[i] += amp * np.exp(1j * phase)
    for key in sorted(groups):
        direction = groups[key]
        out.append(
            BlockClassification(
                "residual", float(key), direction, _proportional_to(direction, basis)
            )
        )
    return out


@dataclass
class FeasibilityReport:
    passed: bool
    equilibrium: object
    message: str


def check_optimal_feasibility(g, p, cost, Pl):
    """Check that the optimal dispatch admits a secure network steady state."""
    disp = optimal_dispatch_lq(cost, Pl)
    try:
        eq = solve_regulator(g, p, disp.u, Pl)
    except (EquilibriumError, InfeasibleError) as exc:
        return FeasibilityReport(False, None, str(exc))
    if not eq.secure:
        return FeasibilityReport(False, eq, "steady state leaves the security region")
    return FeasibilityReport(True, eq, "ok")
