"""Post-hoc trajectory metrics: consensus error, convergence and weight drift."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DimensionError, InsufficientData
from .graph import LaplacianPartition
from .simulation import Trajectory

DEFAULT_THRESHOLD = 1e-3
DRIFT_THRESHOLD = 1e-3
TAIL_FRACTION = 0.2


@dataclass
class ConsensusReport:
    xi_norm_series: np.ndarray
    final_xi_norm: float
    convergence_time: float | None
    weight_final: np.ndarray
    weight_drift_slope: np.ndarray
    drifting: np.ndarray
    empirical_tail_bound: float

    def to_dict(self, include_series=False):
        out = asdict(self)
        for key, val in out.items():
            if isinstance(val, np.ndarray):
                out[key] = val.tolist()
        if not include_series:
            out.pop("xi_norm_series")
        return out


def consensus_error(traj: Trajectory, part: LaplacianPartition) -> np.ndarray:
    """Stacked consensus error per stored step, shape ``K x (N*n)``.

    Equivalent to ``(L1 kron I_n)(x - 1 kron x0)`` without forming the
    Kronecker product.
    """
    states = np.asarray(traj.states)
    if states.ndim != 3 or states.shape[1] != part.l1.shape[0] + 1:
        raise DimensionError(f"trajectory has {states.shape[1]} agents, partition expects {part.l1.shape[0] + 1}")
    offsets = states[:, 1:, :] - states[:, :1, :]
    xi = np.einsum("ij,kjn->kin", part.l1, offsets)
    return xi.reshape(len(states), -1)


def detect_drift(times, weight_series, threshold=DRIFT_THRESHOLD):
    """Least-squares slope of each weight over the final half of the horizon.

    ``weight_series`` is ``K x N``. Returns ``(slopes, drifting)``.
    """
    t = np.asarray(times, dtype=float)
    w = np.asarray(weight_series, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    mask = t >= t[0] + (t[-1] - t[0]) / 2 if t.size else np.zeros(0, bool)
    if t.size < 3 or mask.sum() < 2:
        raise InsufficientData("need at least two samples over the final half")
    tt = t[mask]
    slopes = np.polyfit(tt - tt.mean(), w[mask], 1)[0]
    slopes = np.atleast_1d(slopes)
    return slopes, slopes > threshold


def _convergence_time(times, norms, threshold):
    above = np.flatnonzero(norms >= threshold)
    if above.size == 0:
        return float(times[0])
    last = above[-1]
    if last == len(times) - 1:
        return None
    return float(times[last + 1])


def summarize(traj: Trajectory, part: LaplacianPartition, threshold=DEFAULT_THRESHOLD,
              drift_threshold=DRIFT_THRESHOLD) -> ConsensusReport:
    xi = consensus_error(traj, part)
    norms = np.linalg.norm(xi, axis=1)
    t = traj.times
    slopes, drifting = detect_drift(t, traj.weights, drift_threshold)
    tail = t >= t[-1] - TAIL_FRACTION * (t[-1] - t[0])
    return ConsensusReport(
        xi_norm_series=norms,
        final_xi_norm=float(norms[-1]),
        convergence_time=_convergence_time(t, norms, threshold),
        weight_final=traj.weights[-1].copy(),
        weight_drift_slope=slopes,
        drifting=drifting,
        empirical_tail_bound=float(np.max(norms[tail] ** 2)),
    )
