"""Distributed internal-model controllers and their communication graph."""

from dataclasses import dataclass

import numpy as np

from .dispatch import optimal_dispatch_lq
from .network import _vector


class CommGraph:
    """Undirected communication graph between controller nodes."""

    def __init__(self, n, links):
        n = int(n)
        if n < 1:
            raise ValueError("need at least one node")
        seen = set()
        for a, b in links:
            a, b = int(a), int(b)
            if not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"link ({a}, {b}) references nodes outside 0..{n - 1}")
            if a == b:
                raise ValueError("communication links must join distinct nodes")
            seen.add((min(a, b), max(a, b)))
        self.n = n
        self.links = tuple(sorted(seen))

    @property
    def laplacian(self):
        L = np.zeros((self.n, self.n))
        for a, b in self.links:
            L[a, a] += 1.0
            L[b, b] += 1.0
            L[a, b] -= 1.0
            L[b, a] -= 1.0
        return L

    @property
    def connected(self):
        seen = [False] * self.n
        adj = [[] for _ in range(self.n)]
        for a, b in self.links:
            adj[a].append(b)
            adj[b].append(a)
        stack = [0]
        seen[0] = True
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if not seen[w]:
                    seen[w] = True
                    stack.append(w)
        return all(seen)

    def drop_link(self, a, b):
        key = (min(int(a), int(b)), max(int(a), int(b)))
        if key not in self.links:
            raise ValueError(f"link {key} not present")
        return CommGraph(self.n, [l for l in self.links if l != key])

    def add_link(self, a, b):
        return CommGraph(self.n, list(self.links) + [(int(a), int(b))])


@dataclass
class ControllerState:
    """Stacked controller states: consensus integrators plus oscillator banks.

    theta2 is (n, d2) with one shared-bank copy per node; theta3 concatenates
    the per-node banks (layout fixed by the controller).
    """

    theta1: np.ndarray
    theta2: np.ndarray
    theta3: np.ndarray


class Controller:
    """Consensus-coupled internal-model controller.

    variant "none"      constant output, no dynamic states
    variant "constant"  consensus integrators tracking the optimal dispatch
    variant "common"    adds a shared oscillator bank for demand variations
                        along the compensable direction
    variant "wide"      adds per-node oscillator banks for local variations
    """

    VARIANTS = ("none", "constant", "common", "wide")

    def __init__(self, variant, cost, comm, alpha=1.0, beta1=1.0, beta2=1.0,
                 beta3=None, common_block=None, residual_blocks=None, u_fixed=None):
        if variant not in self.VARIANTS:
            raise ValueError(f"unknown controller variant {variant!r}")
        n = cost.n
        if comm is not None and comm.n != n:
            raise ValueError("communication graph size does not match the cost model")
        self.variant = variant
        self.cost = cost
        self.comm = comm
        self.n = n
        self.alpha = float(alpha)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.beta3 = np.ones(n) if beta3 is None else _vector(beta3, n, "beta3")
        if self.alpha <= 0 or self.beta1 <= 0 or self.beta2 <= 0 or np.any(self.beta3 <= 0):
            raise ValueError("controller gains must be positive")
        self.qinv = 1.0 / cost.q
        self.r_lin = np.zeros(n) if cost.r is None else cost.r

        self.mu2 = np.zeros(0)
        self.R2 = np.zeros(0)
        if variant in ("common", "wide") and common_block is not None:
            self.mu2 = common_block.mu.copy()
            self.R2 = common_block.R.copy()
        if variant == "common" and common_block is None:
            raise ValueError("variant 'common' needs a shared demand block to model")
        self.d2 = self.R2.shape[0]

        blocks = list(residual_blocks) if residual_blocks else [None] * n
        if variant != "wide":
            blocks = [None] * n
        if len(blocks) != n:
            raise ValueError(f"residual blocks must list {n} entries (None allowed)")
        off = [0]
        mu3, R3, node_pair = [], [], []
        for i, blk in enumerate(blocks):
            if blk is not None:
                mu3.extend(blk.mu.tolist())
                R3.extend(blk.R.tolist())
                node_pair.extend([i] * blk.mu.shape[0])
            off.append(len(R3))
        self.off3 = np.asarray(off, dtype=np.intc)
        self.mu3 = np.asarray(mu3, dtype=float)
        self.R3 = np.asarray(R3, dtype=float)
        self.node_pair = np.asarray(node_pair, dtype=np.intc)
        self.node_comp = np.repeat(self.node_pair, 2) if self.node_pair.size else np.zeros(0, dtype=np.intc)
        self.d3 = self.R3.shape[0]

        if variant == "none":
            if u_fixed is None:
                raise ValueError("variant 'none' needs a fixed injection vector")
            self.u_fixed = _vector(u_fixed, n, "u_fixed")
        else:
            self.u_fixed = None
            if comm is None:
                raise ValueError("dynamic controller variants need a communication graph")

    # ---- state handling -------------------------------------------------

    def zero_state(self):
        n1 = self.n if self.variant != "none" else 0
        return ControllerState(
            theta1=np.zeros(n1),
            theta2=np.zeros((self.n, self.d2) if self.d2 else (self.n, 0)),
            theta3=np.zeros(self.d3),
        )

    @property
    def state_dim(self):
        n1 = self.n if self.variant != "none" else 0
        return n1 + self.n * self.d2 + self.d3

    def pack(self, cs):
        return np.concatenate([cs.theta1, cs.theta2.ravel(), cs.theta3])

    def unpack(self, flat):
        n1 = self.n if self.variant != "none" else 0
        theta1 = flat[:n1]
        theta2 = flat[n1 : n1 + self.n * self.d2].reshape(self.n, self.d2)
        theta3 = flat[n1 + self.n * self.d2 :]
        return ControllerState(theta1.copy(), theta2.copy(), theta3.copy())

    # ---- dynamics and output --------------------------------------------

    def rhs(self, cs, omega):
        """State derivatives given the measured frequency deviations."""
        omega = _vector(omega, self.n, "omega")
        if self.variant == "none":
            return self.zero_state()
        L = self.comm.laplacian
        d1 = -self.alpha * (L @ cs.theta1) - self.beta1 * self.qinv * omega
        d2 = np.zeros_like(cs.theta2)
        if self.d2:
            th = cs.theta2.reshape(self.n, -1, 2)
            dd = d2.reshape(self.n, -1, 2)
            drive = self.beta2 * self.qinv[:, None] * omega[:, None]
            dd[:, :, 0] = self.mu2 * th[:, :, 1] - drive * self.R2[0::2]
            dd[:, :, 1] = -self.mu2 * th[:, :, 0] - drive * self.R2[1::2]
        d3 = np.zeros_like(cs.theta3)
        if self.d3:
            even = np.arange(0, self.d3, 2)
            drive = (self.beta3 * omega)[self.node_comp] * self.R3
            d3[even] = self.mu3 * cs.theta3[even + 1] - drive[even]
            d3[even + 1] = -self.mu3 * cs.theta3[even] - drive[even + 1]
        return ControllerState(d1, d2, d3)

    def output(self, cs):
        """Injection command produced from the controller state."""
        if self.variant == "none":
            return self.u_fixed.copy()
        u = self.beta1 * self.qinv * cs.theta1 - self.qinv * self.r_lin
        if self.d2:
            u = u + self.beta2 * self.qinv * (cs.theta2 @ self.R2)
        if self.d3:
            u = u + self.beta3 * np.bincount(
                self.node_comp, weights=self.R3 * cs.theta3, minlength=self.n
            )
        return u

    # ---- storage bookkeeping ---------------------------------------------

    def storage(self, cs, ref):
        """Quadratic distance to the reference controller state."""
        if self.variant == "none":
            return 0.0
        val = 0.5 * float(np.sum((cs.theta1 - ref.theta1) ** 2))
        if self.d2:
            val += 0.5 * float(np.sum((cs.theta2 - ref.theta2) ** 2))
        if self.d3:
            val += 0.5 * float(np.sum((cs.theta3 - ref.theta3) ** 2))
        return val

    def consensus_quadratic(self, cs, ref):
        """Dissipation through the communication coupling."""
        if self.variant == "none":
            return 0.0
        diff = cs.theta1 - ref.theta1
        return self.alpha * float(diff @ (self.comm.laplacian @ diff))


def reference_state(ctrl, cost, exo, t):
    """Controller state reproducing the optimal feedforward at time t.

    The consensus integrators sit at the common marginal price scaled by
    1/beta1; each oscillator bank copies the matching demand block state
    scaled by the inverse of its gain.
    """
    if ctrl.variant == "none":
        return ctrl.zero_state()
    disp = optimal_dispatch_lq(cost, exo.constant)
    ref = ctrl.zero_state()
    ref.theta1[:] = -disp.multiplier / ctrl.beta1
    if ctrl.d2 and exo.common is not None:
        ref.theta2[:, :] = exo.common.state_at(t) / ctrl.beta2
    if ctrl.d3:
        for i, blk in enumerate(exo.residual):
            lo, hi = ctrl.off3[i], ctrl.off3[i + 1]
            if blk is not None and hi > lo:
                ref.theta3[lo:hi] = blk.state_at(t) / ctrl.beta3[i]
    return ref
