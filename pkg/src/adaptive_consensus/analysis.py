"""Lyapunov-side quantities: diagonal scaling, Lyapunov functions, ultimate bound."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import InvalidLeakage, ModeMismatch, NotMMatrix, NotZPattern, ScalingNotFound
from .graph import LaplacianPartition, is_nonsingular_m_matrix
from .metrics import consensus_error
from .synthesis import NOMINAL, ROBUST, GainSet
from .simulation import Trajectory


@dataclass(frozen=True)
class ScalingCertificate:
    g: np.ndarray
    lambda0: float

    def to_dict(self):
        return {"g": self.g.tolist(), "lambda0": self.lambda0}


@dataclass(frozen=True)
class BoundReport:
    alpha: float
    alpha_hat: float
    delta: float
    pi1: float
    pi: float
    radius_sq: float
    omega_bound: float

    def to_dict(self):
        return asdict(self)


def _scaled_min_eig(l1, g):
    m = g[:, None] * l1
    return float(np.linalg.eigvalsh(m + m.T)[0])


def diagonal_scaling(l1) -> ScalingCertificate:
    """Positive diagonal G with ``G L1 + L1' G > 0``.

    Tries ``g = 1 / ((L1')^-1 1)`` first, then ``g = p / q`` with
    ``p = (L1')^-1 1`` and ``q = L1^-1 1``, then a direct numerical search
    maximizing the smallest eigenvalue over ``log g``.
    """
    l1 = np.atleast_2d(np.asarray(l1, dtype=float))
    try:
        ok = is_nonsingular_m_matrix(l1)
    except NotZPattern as exc:
        raise NotMMatrix(str(exc)) from exc
    if not ok:
        raise NotMMatrix("L1 has an eigenvalue with nonpositive real part")
    ones = np.ones(l1.shape[0])
    p = np.linalg.solve(l1.T, ones)
    q = np.linalg.solve(l1, ones)
    candidates = []
    if np.all(p > 0):
        candidates.append(1.0 / p)
    if np.all(p > 0) and np.all(q > 0):
        candidates.append(p / q)
    for g in candidates:
        lam = _scaled_min_eig(l1, g)
        if lam > 0:
            return _certificate(g, lam)

    def cost(logg):
        g = np.exp(logg - logg.max())
        return -_scaled_min_eig(l1, g)

    res = minimize(cost, np.zeros(l1.shape[0]), method="Nelder-Mead",
                   options={"maxiter": 20000, "xatol": 1e-10, "fatol": 1e-14})
    g = np.exp(res.x - res.x.max())
    lam = _scaled_min_eig(l1, g)
    if lam <= 0:
        raise ScalingNotFound("no diagonal scaling with G L1 + L1' G > 0 found")
    return _certificate(g, lam)


def _certificate(g, lam):
    g = np.array(g, dtype=float)
    g.setflags(write=False)
    return ScalingCertificate(g, float(lam))


def adaptation_constants(cert: ScalingCertificate):
    """Smallest admissible ``(alpha_hat, alpha)`` for the Lyapunov argument.

    ``alpha_hat`` makes ``sqrt(2 alpha_hat) lambda0 / g_i >= 2`` for every i;
    ``alpha`` is additionally kept strictly above 1.
    """
    gmax = float(np.max(cert.g))
    lam = cert.lambda0
    alpha_hat = 2.0 * (gmax / lam) ** 2
    alpha = max(1.0 + 1e-6, alpha_hat + lam / 2 + gmax ** 2 / (2 * lam ** 2))
    return alpha_hat, alpha


def lyapunov_values(xi, weights, cert: ScalingCertificate, gains: GainSet, alpha):
    """``sum g_i/2 (2 w_i + rho_i) rho_i + lambda0/2 sum (w_i - alpha)^2`` per row.

    ``xi`` is ``K x N x n`` and ``weights`` is ``K x N``.
    """
    xi = np.asarray(xi, dtype=float)
    w = np.asarray(weights, dtype=float)
    rho = np.einsum("kin,nm,kim->ki", xi, gains.lyapunov_inv, xi)
    g = cert.g
    return (0.5 * (g * (2 * w + rho) * rho).sum(axis=1)
            + cert.lambda0 / 2 * ((w - alpha) ** 2).sum(axis=1))


def _trajectory_lyapunov(traj, part, cert, gains, alpha, mode):
    gains.require(mode)
    if traj.mode is not None and traj.mode != mode:
        raise ModeMismatch(f"trajectory was produced by the {traj.mode} protocol")
    xi = consensus_error(traj, part).reshape(len(traj.times), part.l1.shape[0], -1)
    return lyapunov_values(xi, traj.weights, cert, gains, alpha)


def lyapunov_v1(traj: Trajectory, part: LaplacianPartition, cert: ScalingCertificate,
                gains: GainSet, alpha: float):
    return _trajectory_lyapunov(traj, part, cert, gains, alpha, NOMINAL)


def lyapunov_v2(traj: Trajectory, part: LaplacianPartition, cert: ScalingCertificate,
                gains: GainSet, alpha: float):
    return _trajectory_lyapunov(traj, part, cert, gains, alpha, ROBUST)


def _psd_power(m, power):
    w, v = np.linalg.eigh((m + m.T) / 2)
    w = np.clip(w, 0.0, None)
    return (v * w ** power) @ v.T


def omega_bound(upsilon) -> float:
    """Bound on the stacked relative disturbance from ``[v_0, v_1, ..., v_N]``."""
    ups = np.asarray(upsilon, dtype=float)
    return float(np.sqrt(np.sum((ups[1:] + ups[0]) ** 2)))


def ultimate_bound(cert: ScalingCertificate, gains: GainSet, l1, phi, upsilon) -> BoundReport:
    """Constants of the ultimate-boundedness argument and the radius of the bound set.

    ``upsilon`` lists the leader bound first, then one bound per follower.
    Vector norms involving the time-varying disturbance are bounded by
    operator norms times the stacked-disturbance bound.
    """
    if gains.mode != ROBUST:
        raise ModeMismatch("ultimate bound needs robust-mode gains")
    phi = np.asarray(phi, dtype=float)
    l1 = np.atleast_2d(np.asarray(l1, dtype=float))
    n_f = l1.shape[0]
    if phi.shape != (n_f,) or np.any(~(phi > 0)):
        raise InvalidLeakage("need one positive leakage gain per follower")
    ups = np.asarray(upsilon, dtype=float)
    if ups.shape != (n_f + 1,) or np.any(ups < 0):
        raise ValueError("upsilon must hold N+1 nonnegative bounds (leader first)")

    g, lam = cert.g, cert.lambda0
    alpha_hat, alpha = adaptation_constants(cert)
    delta = gains.epsilon - 1.0
    w_norm = omega_bound(ups)
    q_inv = gains.lyapunov_inv
    sqrt_q_inv = np.linalg.norm(_psd_power(q_inv, 0.5), 2)

    def kron_norm(scale):
        # spectral norm of (diag(scale) L1) kron sqrt(Q^-1)
        return np.linalg.norm(scale[:, None] * l1, 2) * sqrt_q_inv

    leak = np.sum(16 * lam / 27 * phi * (alpha - 1) ** 3)
    pi1 = (leak
           + kron_norm(np.sqrt(g / phi)) ** 2 * w_norm ** 2
           + 2 * kron_norm(np.sqrt(g)) ** 2 * w_norm ** 2
           + 2 * kron_norm(g ** 0.25) ** 4 * w_norm ** 4)
    pi = np.sum(2 * lam * delta ** 3 / (27 * phi ** 2) + delta * lam * (alpha - 1) ** 2 / 2) + pi1
    lam_q = float(np.linalg.eigvalsh(q_inv)[0])
    radius_sq = 2 * pi / (lam_q * np.min(g))
    return BoundReport(float(alpha), float(alpha_hat), float(delta), float(pi1), float(pi),
                       float(radius_sq), w_norm)
