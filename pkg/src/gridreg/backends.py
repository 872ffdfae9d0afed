"""Integrator backend selection: compiled core with a NumPy fallback.

Both backends expose ``integrate(times, flags, x0, pack, out)`` with
identical semantics; the compiled extension is preferred when it imported
successfully and the environment variable GRIDREG_BACKEND does not force
the pure Python implementation.
"""

import os
from dataclasses import dataclass

import numpy as np

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None


@dataclass
class KernelPack:
    """Flat parameter pack consumed by the integrator kernels.

    State layout: [eta(m), omega(n), V(n), theta1, theta2, theta3] where the
    controller slices are present according to ``th1_dim``/``th2_dim``/
    ``th3_dim``. Demand blocks are evaluated in closed form from their state
    at ``epoch``.
    """

    n: int
    m: int
    ia: np.ndarray
    ja: np.ndarray
    bk: np.ndarray
    M: np.ndarray
    A: np.ndarray
    Tv: np.ndarray
    Ebar: np.ndarray
    Fd: np.ndarray
    variant: int  # 0 none, 1 constant, 2 common, 3 wide
    qinv: np.ndarray
    rlin: np.ndarray
    alpha: float
    beta1: float
    beta2: float
    beta3: np.ndarray
    L: np.ndarray
    u_fixed: np.ndarray
    p2: int
    mu2: np.ndarray
    R2: np.ndarray
    sig2: np.ndarray
    inj2: np.ndarray
    p3: int
    d3: int
    mu3: np.ndarray
    node3: np.ndarray  # node per oscillator pair
    R3: np.ndarray
    sig3: np.ndarray
    epoch: float
    Pl_const: np.ndarray
    npulse: int
    pt0: np.ndarray
    ptau: np.ndarray
    pamp: np.ndarray

    @property
    def th1_dim(self):
        return self.n if self.variant >= 1 else 0

    @property
    def th2_dim(self):
        return self.n * 2 * self.p2 if self.variant >= 2 else 0

    @property
    def th3_dim(self):
        return self.d3 if self.variant >= 3 else 0

    @property
    def state_dim(self):
        return self.m + 2 * self.n + self.th1_dim + self.th2_dim + self.th3_dim


def available_backends():
    names = ["python"]
    if _compiled is not None:
        names.insert(0, "compiled")
    return names


def get_backend(name=None):
    """Return the backend module for ``name`` (default: best available)."""
    if name is None:
        name = os.environ.get("GRIDREG_BACKEND")
    if name is None:
        return _compiled if _compiled is not None else _kernels_py
    if name == "python":
        return _kernels_py
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled backend is not available in this install")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")
