"""Distributed adaptive control laws evaluated from local information only.

Each follower sees its own state, the states of its in-neighbors and its own
adaptive coupling weight. Nothing here touches global graph information.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import IncompleteNeighborhood, InvalidLeakage, ModeMismatch
from .synthesis import NOMINAL, ROBUST, GainSet

DEFAULT_C0 = 1.0
DEFAULT_D0 = 1.5


@dataclass(frozen=True)
class FollowerState:
    x: np.ndarray
    weight: float


@dataclass(frozen=True)
class ProtocolConfig:
    gains: GainSet
    mode: str
    phi: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.gains.mode != self.mode:
            raise ModeMismatch(f"{self.mode} protocol needs {self.mode} gains, got {self.gains.mode}")
        if self.mode == ROBUST:
            if self.phi is None:
                raise InvalidLeakage("robust protocol requires leakage gains phi")
            phi = np.asarray(self.phi, dtype=float)
            if np.any(~(phi > 0)):
                raise InvalidLeakage("all leakage gains phi_i must be > 0")
            phi = phi.copy()
            phi.setflags(write=False)
            object.__setattr__(self, "phi", phi)


def check_initial_weights(weights, mode):
    """Validate c_i(0) >= 0 (nominal) or d_i(0) >= 1 (robust).

    ``c_i(0) = 0`` is allowed but warned about: positivity of the Lyapunov
    function argument needs ``c_i(0) > 0``.
    """
    w = np.asarray(weights, dtype=float)
    if mode == NOMINAL:
        if np.any(w < 0):
            raise ValueError("nominal initial weights must be >= 0")
        if np.any(w == 0):
            warnings.warn("c_i(0) = 0 admitted; the convergence argument assumes c_i(0) > 0",
                          stacklevel=2)
    elif np.any(w < 1):
        raise ValueError("robust initial weights must be >= 1")
    return w


def relative_state(x_i, neighbors: Mapping[int, np.ndarray], adjacency_row) -> np.ndarray:
    """Sum of ``a_ij (x_i - x_j)`` over the in-neighbors of follower i.

    ``neighbors`` maps agent index to state; the leader is key 0 when it is
    a neighbor. Entries for non-neighbors are ignored.
    """
    x_i = np.asarray(x_i, dtype=float)
    xi = np.zeros_like(x_i)
    for j in np.flatnonzero(np.asarray(adjacency_row)):
        j = int(j)
        if j not in neighbors:
            raise IncompleteNeighborhood(f"state of in-neighbor {j} not supplied")
        xi = xi + adjacency_row[j] * (x_i - np.asarray(neighbors[j], dtype=float))
    return xi


def control_nominal(xi_i, c_i, gains: GainSet):
    """Returns ``(u_i, c_dot_i, rho_i)``."""
    gains.require(NOMINAL)
    return _control(np.asarray(xi_i, dtype=float), float(c_i), gains, 0.0)


def control_robust(xi_i, d_i, gains: GainSet, phi_i):
    """Returns ``(u_i, d_dot_i, rho_i)``; the weight law has leakage ``-phi (d-1)^2``."""
    gains.require(ROBUST)
    if not phi_i > 0:
        raise InvalidLeakage(f"phi_i must be > 0, got {phi_i}")
    return _control(np.asarray(xi_i, dtype=float), float(d_i), gains, float(phi_i))


def _control(xi, w, gains, phi):
    rho = float(xi @ gains.lyapunov_inv @ xi)
    u = (w + rho) * (gains.k @ xi)
    w_dot = float(xi @ gains.gamma @ xi)
    if phi:
        w_dot = -phi * (w - 1.0) ** 2 + w_dot
    return u, w_dot, rho


def control_batch(xi, weights, config: ProtocolConfig):
    """Vectorized evaluation for all followers; row i uses only ``xi[i]``.

    ``xi`` is ``N x n``. Returns ``(u, w_dot, rho)`` with shapes
    ``N x p``, ``N`` and ``N``.
    """
    g = config.gains
    rho = np.einsum("ij,jk,ik->i", xi, g.lyapunov_inv, xi)
    u = (weights + rho)[:, None] * (xi @ g.k.T)
    w_dot = np.einsum("ij,jk,ik->i", xi, g.gamma, xi)
    if config.mode == ROBUST:
        w_dot = -config.phi * (weights - 1.0) ** 2 + w_dot
    return u, w_dot, rho
