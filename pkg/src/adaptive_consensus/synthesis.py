"""Feedback-gain synthesis for the nominal and robust adaptive protocols.

Both LMIs are reduced to one Riccati equation::

    a' X + X a - 2 X b b' X + I = 0

If ``X`` is its stabilizing solution then ``P = X^-1`` satisfies
``P a' + a P - 2 b b' = -P P < 0``. The nominal LMI uses ``a = A``; the
robust LMI ``A Q + Q A' + eps Q - 2 B B' < 0`` uses ``a = A + (eps/2) I``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, InvalidEpsilon, ModeMismatch, NumericalFailure, SynthesisInfeasible

NOMINAL = "nominal"
ROBUST = "robust"
MODES = (NOMINAL, ROBUST)

RANK_RTOL = 1e-8
CARE_RTOL = 1e-8


@dataclass(frozen=True)
class AgentDynamics:
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.asarray(self.b, dtype=float)
        if b.ndim == 1:
            b = b.reshape(-1, 1)
        if b.ndim == 0:
            b = b.reshape(1, 1)
        n = a.shape[0]
        if a.shape != (n, n) or n < 1:
            raise DimensionError(f"A must be square, got shape {a.shape}")
        if b.ndim != 2 or b.shape[0] != n or b.shape[1] < 1:
            raise DimensionError(f"B must be {n}x p, got shape {b.shape}")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def p(self) -> int:
        return self.b.shape[1]


def symmetric_inverse(m):
    """Inverse of a symmetric positive-definite matrix via eigendecomposition."""
    w, v = np.linalg.eigh((m + m.T) / 2)
    if np.min(w) <= 0:
        raise NumericalFailure("matrix is not positive definite")
    inv = (v / w) @ v.T
    return (inv + inv.T) / 2


@dataclass(frozen=True)
class GainSet:
    """Protocol gains: ``K = -B' M^-1`` and ``Gamma = M^-1 B B' M^-1``.

    ``lyapunov_matrix`` is P (nominal) or Q (robust). Its inverse is cached
    because every control evaluation needs it.
    """

    lyapunov_matrix: np.ndarray
    k: np.ndarray
    gamma: np.ndarray
    epsilon: float = 0.0
    mode: str = NOMINAL
    lyapunov_inv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        m = np.asarray(self.lyapunov_matrix, dtype=float)
        if not np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max())):
            raise NumericalFailure("Lyapunov matrix is not symmetric")
        inv = symmetric_inverse(m)
        for name, arr in (("lyapunov_matrix", m), ("lyapunov_inv", inv),
                          ("k", np.atleast_2d(np.asarray(self.k, dtype=float))),
                          ("gamma", np.asarray(self.gamma, dtype=float))):
            arr = np.array(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def require(self, mode):
        if self.mode != mode:
            raise ModeMismatch(f"expected {mode} gains, got {self.mode}")

    def to_dict(self, dynamics: AgentDynamics | None = None) -> dict:
        key = "P" if self.mode == NOMINAL else "Q"
        out = {
            key: self.lyapunov_matrix.tolist(),
            "K": self.k.tolist(),
            "Gamma": self.gamma.tolist(),
            "mode": self.mode,
            "epsilon": self.epsilon,
        }
        if dynamics is not None:
            out["residual_lambda_max"] = lmi_residual(self, dynamics)
        return out


def gains_from_lyapunov(matrix, dynamics: AgentDynamics, mode=NOMINAL, epsilon=0.0) -> GainSet:
    """Gain formulas applied to a given P (nominal) or Q (robust)."""
    m = np.asarray(matrix, dtype=float)
    if m.shape != (dynamics.n, dynamics.n):
        raise DimensionError(f"Lyapunov matrix must be {dynamics.n}x{dynamics.n}")
    if mode == ROBUST and not epsilon > 1:
        raise InvalidEpsilon(f"epsilon must be > 1, got {epsilon}")
    inv = symmetric_inverse(m)
    k = -dynamics.b.T @ inv
    gamma = k.T @ k
    return GainSet(m, k, (gamma + gamma.T) / 2, float(epsilon) if mode == ROBUST else 0.0, mode)


def _rank(m) -> int:
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > RANK_RTOL * s[0]))


def check_stabilizable(d: AgentDynamics) -> bool:
    """PBH test on every eigenvalue of A with nonnegative real part."""
    n = d.n
    for lam in np.linalg.eigvals(d.a):
        if lam.real < -1e-9:
            continue
        if _rank(np.hstack([d.a - lam * np.eye(n), d.b])) < n:
            return False
    return True


def check_controllable(d: AgentDynamics) -> bool:
    blocks = [d.b]
    for _ in range(d.n - 1):
        blocks.append(d.a @ blocks[-1])
    return _rank(np.hstack(blocks)) == d.n


def care_residual(a, b, x):
    return a.T @ x + x @ a - 2 * x @ b @ b.T @ x + np.eye(a.shape[0])


def _care_ok(a, b, x):
    if not np.all(np.isfinite(x)):
        return False
    res = np.linalg.norm(care_residual(a, b, x), "fro")
    closed = a - 2 * b @ b.T @ x
    return (res <= CARE_RTOL * (1 + np.linalg.norm(x, "fro"))
            and np.max(np.linalg.eigvals(closed).real) < 0
            and np.min(np.linalg.eigvalsh(x)) > 0)


def _care_schur(a, b):
    n = a.shape[0]
    ham = np.block([[a, -2 * b @ b.T], [-np.eye(n), -a.T]])
    t, z, sdim = sla.schur(ham, output="real", sort="lhp")
    if sdim != n:
        raise NumericalFailure("Hamiltonian has eigenvalues on the imaginary axis")
    z11, z21 = z[:n, :n], z[n:, :n]
    if np.linalg.cond(z11) > 1e12:
        raise NumericalFailure("ill-conditioned stable invariant subspace")
    x = np.linalg.solve(z11.T, z21.T).T
    return (x + x.T) / 2


def _stabilizing_start(a, b):
    """Bass gain ``X0 = pinv(Z) / 2`` with ``(A + bI) Z + Z (A + bI)' = 2 B B'``.

    The shift makes ``A + bI`` anti-stable. For a stabilizable but
    uncontrollable pair ``Z`` is singular; the pseudo-inverse acts on the
    controllable subspace only, which still yields a stabilizing start.
    """
    n = a.shape[0]
    shift = max(0.0, -np.min(np.linalg.eigvals(a).real)) + 1.0
    z = sla.solve_continuous_lyapunov(a + shift * np.eye(n), 2 * b @ b.T)
    z = (z + z.T) / 2
    return np.linalg.pinv(z, rcond=1e-10, hermitian=True) / 2


def _care_newton(a, b, x0=None, max_iter=100):
    """Newton-Kleinman iteration from a stabilizing initial guess."""
    n = a.shape[0]
    s = 2 * b @ b.T
    if x0 is None or np.max(np.linalg.eigvals(a - s @ x0).real) >= 0:
        x0 = _stabilizing_start(a, b)
    x = x0
    for _ in range(max_iter):
        ak = a - s @ x
        x_new = sla.solve_continuous_lyapunov(ak.T, -(np.eye(n) + x @ s @ x))
        x_new = (x_new + x_new.T) / 2
        if np.linalg.norm(x_new - x, "fro") <= 1e-14 * (1 + np.linalg.norm(x_new, "fro")):
            return x_new
        x = x_new
    return x


def solve_care(a_mat, b_mat, method="schur"):
    """Stabilizing solution of ``a'X + Xa - 2XBB'X + I = 0``.

    ``method="schur"`` uses the ordered real Schur form of the Hamiltonian
    and falls back to Newton-Kleinman if the split is degenerate or
    inaccurate; ``method="newton"`` goes straight to the iteration.
    """
    a = np.atleast_2d(np.asarray(a_mat, dtype=float))
    b = np.asarray(b_mat, dtype=float)
    if b.ndim < 2:
        b = b.reshape(a.shape[0], -1)
    if not check_stabilizable(AgentDynamics(a, b)):
        raise SynthesisInfeasible("(A, B) is not stabilizable", condition="stabilizable")
    if method not in ("schur", "newton"):
        raise ValueError(f"unknown method {method!r}")
    start = None
    if method == "schur":
        try:
            start = _care_schur(a, b)
            if _care_ok(a, b, start):
                return start
        except NumericalFailure:
            start = None
    try:
        x = _care_newton(a, b, start if start is not None and np.all(np.isfinite(start)) else None)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"Riccati iteration failed: {exc}") from exc
    if not _care_ok(a, b, x):
        raise NumericalFailure("no accurate stabilizing Riccati solution found")
    return x


def synthesize_nominal(d: AgentDynamics) -> GainSet:
    if not check_stabilizable(d):
        raise SynthesisInfeasible("(A, B) is not stabilizable", condition="stabilizable")
    x = solve_care(d.a, d.b)
    return gains_from_lyapunov(symmetric_inverse(x), d, NOMINAL)


def synthesize_robust(d: AgentDynamics, epsilon: float) -> GainSet:
    if not epsilon > 1:
        raise InvalidEpsilon(f"epsilon must be > 1, got {epsilon}")
    if not check_controllable(d):
        raise SynthesisInfeasible("(A, B) is not controllable", condition="controllable")
    x = solve_care(d.a + (epsilon / 2) * np.eye(d.n), d.b)
    return gains_from_lyapunov(symmetric_inverse(x), d, ROBUST, epsilon)


def lmi_matrix(g: GainSet, d: AgentDynamics):
    m = g.lyapunov_matrix
    if m.shape != (d.n, d.n):
        raise DimensionError("gain set does not match the dynamics")
    out = m @ d.a.T + d.a @ m - 2 * d.b @ d.b.T
    if g.mode == ROBUST:
        out = out + g.epsilon * m
    return (out + out.T) / 2


def lmi_residual(g: GainSet, d: AgentDynamics) -> float:
    """Largest eigenvalue of the LMI left-hand side; feasible iff < 0."""
    return float(np.max(np.linalg.eigvalsh(lmi_matrix(g, d))))
