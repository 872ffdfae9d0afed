"""Demand signal generators with exact closed-form evaluation.

Time-varying demand is produced by marginally stable linear blocks: pairs of
states rotating at fixed angular frequencies, read out through a constant
row vector. States are never integrated numerically; they are evaluated with
exact rotations so demand is reproducible bit-for-bit across step sizes.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .dispatch import CommonBlockError, compensable_basis, optimal_dispatch_lq
from .network import _vector


@dataclass
class SinusoidMode:
    """One sinusoid amplitude*sin(omega_rad*t + phase_rad) in absolute time."""

    omega_rad: float
    amplitude: float
    phase_rad: float = 0.0


class RotationBlock:
    """Bank of 2x2 rotation states with a linear readout.

    ``mu`` holds one angular frequency per pair, ``R`` the readout row over
    the stacked pairs, ``sigma0`` the state at time ``epoch``. The state at
    any time follows by applying exact plane rotations pairwise.
    """

    def __init__(self, mu, R=None, sigma0=None, epoch=0.0):
        self.mu = np.atleast_1d(np.asarray(mu, dtype=float))
        d = 2 * self.mu.shape[0]
        if R is None:
            R = np.tile([1.0, 0.0], self.mu.shape[0])
        if sigma0 is None:
            sigma0 = np.zeros(d)
        self.R = _vector(R, d, "R")
        self.sigma0 = _vector(sigma0, d, "sigma0")
        self.epoch = float(epoch)

    @classmethod
    def from_modes(cls, modes, epoch=0.0):
        """Build a block whose readout equals the sum of the given sinusoids."""
        mu, sigma0 = [], []
        for mode in modes:
            mu.append(float(mode.omega_rad))
            ang = mode.omega_rad * epoch + mode.phase_rad
            sigma0.extend([mode.amplitude * np.sin(ang), mode.amplitude * np.cos(ang)])
        return cls(np.asarray(mu), sigma0=np.asarray(sigma0), epoch=epoch)

    @classmethod
    def from_matrices(cls, S, R, sigma0, epoch=0.0):
        """Build from an explicit generator matrix in paired-rotation layout."""
        S = np.asarray(S, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ValueError("generator matrix must be square")
        d = S.shape[0]
        if d % 2 != 0:
            raise ValueError("generator matrix must pair states (even dimension)")
        if np.max(np.abs(S + S.T), initial=0.0) > 1e-12:
            raise ValueError("generator matrix must be skew-symmetric")
        mask = np.ones_like(S, dtype=bool)
        for b in range(d // 2):
            mask[2 * b : 2 * b + 2, 2 * b : 2 * b + 2] = False
        if np.max(np.abs(S[mask]), initial=0.0) > 0.0:
            raise ValueError("generator matrix must be block diagonal over state pairs")
        mu = np.array([S[2 * b, 2 * b + 1] for b in range(d // 2)])
        return cls(mu, R=R, sigma0=sigma0, epoch=epoch)

    @property
    def dim(self):
        return 2 * self.mu.shape[0]

    def s_matrix(self):
        d = self.dim
        S = np.zeros((d, d))
        for b, mu in enumerate(self.mu):
            S[2 * b, 2 * b + 1] = mu
            S[2 * b + 1, 2 * b] = -mu
        return S

    def state_at(self, t):
        ang = self.mu * (float(t) - self.epoch)
        c, s = np.cos(ang), np.sin(ang)
        even = self.sigma0[0::2]
        odd = self.sigma0[1::2]
        out = np.empty(self.dim)
        out[0::2] = c * even + s * odd
        out[1::2] = -s * even + c * odd
        return out

    def output_at(self, t):
        return float(self.R @ self.state_at(t))

    def output_many(self, ts):
        ts = np.asarray(ts, dtype=float)
        ang = np.multiply.outer(ts - self.epoch, self.mu)
        c, s = np.cos(ang), np.sin(ang)
        even = self.sigma0[0::2]
        odd = self.sigma0[1::2]
        re = self.R[0::2]
        ro = self.R[1::2]
        return (c * even + s * odd) @ re + (-s * even + c * odd) @ ro

    def mode_list(self):
        """Per pair: (mu, amplitude, absolute phase) of the readout sinusoid."""
        out = []
        for b, mu in enumerate(self.mu):
            s1, s2 = self.sigma0[2 * b], self.sigma0[2 * b + 1]
            r1, r2 = self.R[2 * b], self.R[2 * b + 1]
            alpha = r1 * s2 - r2 * s1
            beta = r1 * s1 + r2 * s2
            amp = float(np.hypot(alpha, beta))
            phase = 0.0 if amp == 0.0 else float(np.arctan2(beta, alpha) - mu * self.epoch)
            out.append((float(mu), amp, np.remainder(phase, 2.0 * np.pi)))
        return out


@dataclass
class ExoValidation:
    ok: bool
    issues: list


@dataclass
class Exosystem:
    """Demand model: constant part plus shared and per-node sinusoid blocks.

    The shared block is injected along ``common_injection`` (defaults to the
    compensable direction Q^{-1} 1); per-node blocks feed one node each.
    """

    constant: np.ndarray
    common: RotationBlock | None = None
    common_injection: np.ndarray | None = None
    residual: tuple = field(default_factory=tuple)

    def __post_init__(self):
        self.constant = np.atleast_1d(np.asarray(self.constant, dtype=float))
        n = self.constant.shape[0]
        res = list(self.residual) if self.residual else []
        if len(res) == 0:
            res = [None] * n
        if len(res) != n:
            raise ValueError(f"residual blocks must list {n} entries (None allowed)")
        self.residual = tuple(res)
        if self.common_injection is not None:
            self.common_injection = _vector(self.common_injection, n, "common_injection")

    @property
    def n(self):
        return self.constant.shape[0]

    def injection(self, cost):
        """Injection direction of the shared block; asserted trackable."""
        basis = compensable_basis(cost)
        if self.common_injection is None:
            return basis
        w = self.common_injection
        coeff = float(np.dot(basis, w) / np.dot(basis, basis))
        if np.linalg.norm(w - coeff * basis) > 1e-12 * max(np.linalg.norm(w), 1e-30):
            raise CommonBlockError(
                "shared demand block injects outside span(Q^{-1} 1)", w
            )
        return w

    def demand_at(self, t, cost):
        d = self.constant.copy()
        if self.common is not None:
            d = d + self.injection(cost) * self.common.output_at(t)
        for i, blk in enumerate(self.residual):
            if blk is not None:
                d[i] += blk.output_at(t)
        return d

    def demand_many(self, ts, cost):
        ts = np.asarray(ts, dtype=float)
        d = np.tile(self.constant, (ts.shape[0], 1))
        if self.common is not None:
            d += np.outer(self.common.output_many(ts), self.injection(cost))
        for i, blk in enumerate(self.residual):
            if blk is not None:
                d[:, i] += blk.output_many(ts)
        return d

    def feedforward_at(self, t, cost):
        """Cheapest injection profile tracking the demand at time t.

        The constant part follows the optimal dispatch, the shared block is
        spread along the compensable direction, per-node blocks are supplied
        where they appear.
        """
        u = optimal_dispatch_lq(cost, self.constant).u.copy()
        if self.common is not None:
            u += self.injection(cost) * self.common.output_at(t)
        for i, blk in enumerate(self.residual):
            if blk is not None:
                u[i] += blk.output_at(t)
        return u

    def validate(self, cost=None):
        """Structural checks: skewness, nonzero purely imaginary spectra, observability."""
        issues = []
        named = []
        if self.common is not None:
            named.append(("common", self.common))
        for i, blk in enumerate(self.residual):
            if blk is not None:
                named.append((f"residual[{i}]", blk))
        for name, blk in named:
            S = blk.s_matrix()
            if np.max(np.abs(S + S.T), initial=0.0) > 1e-12:
                issues.append(f"{name}: generator not skew-symmetric")
            eig = np.linalg.eigvals(S) if S.size else np.zeros(0)
            if np.any(np.abs(eig.real) > 1e-9):
                issues.append(f"{name}: eigenvalues not purely imaginary")
            if np.any(np.abs(eig) < 1e-12) or blk.dim == 0:
                issues.append(f"{name}: zero frequency (marginal drift, not a sinusoid)")
        # observability of the readouts, shared and per node
        if self.common is not None and not _observable(self.common.R, self.common.s_matrix()):
            issues.append("common: readout does not observe every mode")
        for i, blk in enumerate(self.residual):
            rows = []
            mats = []
            if self.common is not None:
                rows.append(self.common.R)
                mats.append(self.common.s_matrix())
            if blk is not None:
                rows.append(blk.R)
                mats.append(blk.s_matrix())
            if not rows:
                continue
            R = np.concatenate(rows)
            S = _blkdiag(mats)
            if not _observable(R, S):
                issues.append(f"node {i}: combined readout does not observe every mode")
        if cost is not None and self.common is not None and self.common_injection is not None:
            try:
                self.injection(cost)
            except CommonBlockError as exc:
                issues.append(str(exc))
        return ExoValidation(not issues, issues)

    def with_constant(self, constant):
        return replace(self, constant=np.asarray(constant, dtype=float))


def _blkdiag(mats):
    d = sum(m.shape[0] for m in mats)
    out = np.zeros((d, d))
    at = 0
    for m in mats:
        k = m.shape[0]
        out[at : at + k, at : at + k] = m
        at += k
    return out


def _observable(R, S):
    d = S.shape[0]
    if d == 0:
        return True
    rows = [R]
    cur = R
    for _ in range(d - 1):
        cur = cur @ S
        rows.append(cur)
    return int(np.linalg.matrix_rank(np.vstack(rows))) == d
