"""Closed-loop simulation of the leader and followers with fixed-step RK4.

The joint state stacks every agent state (leader first) and the followers'
adaptive weights. Disturbances and the leader input are sums of a small set
of primitive signals; state-dependent primitives are evaluated at each RK4
stage's intermediate state.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, DivergenceDetected, InvalidModel, StructuralAssumptionFailed
from .graph import DirectedGraph, has_leader_spanning_tree
from .protocol import ProtocolConfig, control_batch
from .synthesis import AgentDynamics

DEFAULT_DT = 1e-3
DEFAULT_STRIDE = 10
DIVERGENCE_LIMIT = 1e12


# -- signal primitives ------------------------------------------------------

@dataclass(frozen=True)
class Sin:
    amplitude: float
    angular_frequency: float
    phase: float = 0.0

    def __call__(self, t, x):
        return self.amplitude * math.sin(self.angular_frequency * t + self.phase)


@dataclass(frozen=True)
class Cos:
    amplitude: float
    angular_frequency: float
    phase: float = 0.0

    def __call__(self, t, x):
        return self.amplitude * math.cos(self.angular_frequency * t + self.phase)


@dataclass(frozen=True)
class ExpDecay:
    amplitude: float
    rate: float

    def __call__(self, t, x):
        return self.amplitude * math.exp(-self.rate * t)


@dataclass(frozen=True)
class SinOfState:
    amplitude: float
    state_component_index: int

    def __call__(self, t, x):
        return self.amplitude * math.sin(x[self.state_component_index])


@dataclass(frozen=True)
class InverseQuadOfState:
    """``amplitude / (x[k]^2 + 1)``."""

    amplitude: float
    state_component_index: int

    def __call__(self, t, x):
        return self.amplitude / (x[self.state_component_index] ** 2 + 1.0)


PRIMITIVES = (Sin, Cos, ExpDecay, SinOfState, InverseQuadOfState)


def _term_bound(term) -> float:
    if isinstance(term, ExpDecay) and term.rate < 0:
        raise InvalidModel("growing exponential has no amplitude bound")
    return abs(term.amplitude)


@dataclass(frozen=True)
class DisturbanceModel:
    """One tuple of primitive terms per output component.

    Also used for the leader input, where the components are the inputs.
    """

    terms: tuple = ()

    @classmethod
    def zero(cls, dim):
        return cls(tuple(() for _ in range(dim)))

    @property
    def dim(self) -> int:
        return len(self.terms)

    def validate(self, out_dim, state_dim):
        if self.dim != out_dim:
            raise InvalidModel(f"model has {self.dim} components, expected {out_dim}")
        for comp in self.terms:
            for term in comp:
                if not isinstance(term, PRIMITIVES):
                    raise InvalidModel(f"unknown primitive {term!r}")
                if not math.isfinite(term.amplitude):
                    raise InvalidModel("non-finite amplitude")
                idx = getattr(term, "state_component_index", None)
                if idx is not None and not 0 <= idx < state_dim:
                    raise InvalidModel(f"state component {idx} out of range for n={state_dim}")

    def component_bounds(self) -> np.ndarray:
        """Per-component sum of absolute amplitudes."""
        return np.array([sum(_term_bound(t) for t in comp) for comp in self.terms], dtype=float)

    def norm_bound(self) -> float:
        return float(np.linalg.norm(self.component_bounds()))


def eval_disturbance(m: DisturbanceModel, t, x_i) -> np.ndarray:
    x_i = np.asarray(x_i, dtype=float)
    out = np.zeros(m.dim)
    for k, comp in enumerate(m.terms):
        for term in comp:
            idx = getattr(term, "state_component_index", None)
            if idx is not None and not 0 <= idx < x_i.size:
                raise InvalidModel(f"state component {idx} out of range for n={x_i.size}")
            out[k] += term(t, x_i)
    return out


class _CompiledSignals:
    """Vectorized evaluation of one model per agent into an ``agents x dim`` array.

    ``agent_states`` passed to ``evaluate`` has one row per model, in order.
    """

    def __init__(self, models: Sequence[DisturbanceModel], dim: int):
        self.shape = (len(models), dim)
        groups = {cls: [] for cls in PRIMITIVES}
        for a, model in enumerate(models):
            for k, comp in enumerate(model.terms):
                for term in comp:
                    groups[type(term)].append((a, k, term))
        self.groups = []
        for cls, items in groups.items():
            if not items:
                continue
            rows = np.array([a for a, _, _ in items])
            cols = np.array([k for _, k, _ in items])
            amp = np.array([t.amplitude for _, _, t in items], dtype=float)
            if cls in (Sin, Cos):
                p1 = np.array([t.angular_frequency for _, _, t in items], dtype=float)
                p2 = np.array([t.phase for _, _, t in items], dtype=float)
            elif cls is ExpDecay:
                p1 = np.array([t.rate for _, _, t in items], dtype=float)
                p2 = None
            else:
                p1 = np.array([t.state_component_index for _, _, t in items])
                p2 = None
            self.groups.append((cls, rows, cols, amp, p1, p2))

    def evaluate(self, t, agent_states):
        out = np.zeros(self.shape)
        for cls, rows, cols, amp, p1, p2 in self.groups:
            if cls is Sin:
                vals = amp * np.sin(p1 * t + p2)
            elif cls is Cos:
                vals = amp * np.cos(p1 * t + p2)
            elif cls is ExpDecay:
                vals = amp * np.exp(-p1 * t)
            elif cls is SinOfState:
                vals = amp * np.sin(agent_states[rows, p1])
            else:
                vals = amp / (agent_states[rows, p1] ** 2 + 1.0)
            np.add.at(out, (rows, cols), vals)
        return out


# -- scenario, state, trajectory -------------------------------------------

@dataclass(frozen=True)
class Scenario:
    name: str
    graph: DirectedGraph
    dynamics: AgentDynamics
    protocol: ProtocolConfig
    initial_states: np.ndarray
    initial_weights: np.ndarray
    disturbances: tuple = ()
    leader_input: DisturbanceModel | None = None
    dt: float = DEFAULT_DT
    horizon: float = 20.0
    record_stride: int = DEFAULT_STRIDE
    digest: str = ""

    def __post_init__(self):
        n, p = self.dynamics.n, self.dynamics.p
        agents = self.graph.node_count
        x0 = np.asarray(self.initial_states, dtype=float)
        if x0.shape != (agents, n):
            raise DimensionError(f"initial_states must be {agents}x{n}, got {x0.shape}")
        w0 = np.asarray(self.initial_weights, dtype=float)
        if w0.shape != (agents - 1,):
            raise DimensionError(f"need {agents - 1} initial weights, got shape {w0.shape}")
        dist = tuple(self.disturbances) or tuple(DisturbanceModel.zero(n) for _ in range(agents))
        if len(dist) != agents:
            raise DimensionError(f"need {agents} disturbance models, got {len(dist)}")
        for m in dist:
            m.validate(n, n)
        lead = self.leader_input or DisturbanceModel.zero(p)
        lead.validate(p, n)
        if self.protocol.gains.k.shape != (p, n):
            raise DimensionError("gain K does not match the dynamics")
        if self.protocol.phi is not None and self.protocol.phi.shape != (agents - 1,):
            raise DimensionError(f"need {agents - 1} leakage gains")
        if not self.dt > 0 or not self.horizon > 0 or self.record_stride < 1:
            raise ValueError("dt and horizon must be > 0, record_stride >= 1")
        object.__setattr__(self, "initial_states", x0)
        object.__setattr__(self, "initial_weights", w0)
        object.__setattr__(self, "disturbances", dist)
        object.__setattr__(self, "leader_input", lead)

    @property
    def mode(self):
        return self.protocol.mode

    @property
    def follower_count(self):
        return self.graph.node_count - 1

    def disturbance_bounds(self):
        """``(upsilon_followers, upsilon_leader)`` amplitude bounds.

        The leader bound covers ``B u0 + w0`` componentwise.
        """
        ups = np.array([m.norm_bound() for m in self.disturbances[1:]])
        lead = np.abs(self.dynamics.b) @ self.leader_input.component_bounds()
        lead = lead + self.disturbances[0].component_bounds()
        return ups, float(np.linalg.norm(lead))


@dataclass(frozen=True)
class SystemState:
    x: np.ndarray  # (N+1) x n, leader in row 0
    weights: np.ndarray  # N

    def flat(self):
        return np.concatenate([self.x.ravel(), self.weights])

    @classmethod
    def from_flat(cls, y, agents, n):
        return cls(y[: agents * n].reshape(agents, n), y[agents * n:])


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # K x (N+1) x n
    weights: np.ndarray  # K x N
    controls: np.ndarray  # K x N x p
    metadata: dict = field(default_factory=dict)

    @property
    def dt(self):
        return self.metadata.get("dt")

    @property
    def mode(self):
        return self.metadata.get("mode")


class ClosedLoop:
    """Right-hand side of the closed loop for one scenario."""

    def __init__(self, scenario: Scenario):
        self.s = scenario
        self.agents = scenario.graph.node_count
        self.n, self.p = scenario.dynamics.n, scenario.dynamics.p
        adj = scenario.graph.adjacency
        self.follower_adj = np.array(adj[1:])
        self.in_degree = self.follower_adj.sum(axis=1)
        self.a_t = np.array(scenario.dynamics.a.T)
        self.b_t = np.array(scenario.dynamics.b.T)
        self.dist = _CompiledSignals(scenario.disturbances, self.n)
        self.lead = _CompiledSignals([scenario.leader_input], self.p)

    def relative_states(self, x):
        # row i: sum_j a_ij (x_i - x_j); zero adjacency entries contribute exact zeros
        return self.in_degree[:, None] * x[1:] - self.follower_adj @ x

    def parts(self, t, y):
        agents, n = self.agents, self.n
        x = y[: agents * n].reshape(agents, n)
        w = y[agents * n:]
        xi = self.relative_states(x)
        u, w_dot, rho = control_batch(xi, w, self.s.protocol)
        u0 = self.lead.evaluate(t, x[:1])
        inputs = np.vstack([u0, u])
        x_dot = x @ self.a_t + inputs @ self.b_t + self.dist.evaluate(t, x)
        return x_dot, w_dot, u, xi

    def __call__(self, t, y):
        x_dot, w_dot, _, _ = self.parts(t, y)
        return np.concatenate([x_dot.ravel(), w_dot])


def closed_loop_derivative(state: SystemState, t, scenario: Scenario) -> SystemState:
    loop = ClosedLoop(scenario)
    x_dot, w_dot, _, _ = loop.parts(t, state.flat())
    return SystemState(x_dot, w_dot)


def rk4(f: Callable, y0, t0: float, dt: float, steps: int, stride: int = 1,
        check: Callable | None = None):
    """Classic fixed-step RK4; returns ``(times, ys)`` recorded every ``stride`` steps.

    ``check(t, y)`` runs after every step and may raise to abort.
    """
    y = np.array(y0, dtype=float)
    times = [t0]
    ys = [y.copy()]
    half = dt / 2
    for k in range(steps):
        t = t0 + k * dt
        k1 = f(t, y)
        k2 = f(t + half, y + half * k1)
        k3 = f(t + half, y + half * k2)
        k4 = f(t + dt, y + dt * k3)
        y = y + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        t_next = t0 + (k + 1) * dt
        if check is not None:
            check(t_next, y)
        if (k + 1) % stride == 0:
            times.append(t_next)
            ys.append(y.copy())
    return np.array(times), np.array(ys)


def _divergence_check(t, y):
    if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > DIVERGENCE_LIMIT:
        raise DivergenceDetected(t)


def simulate(scenario: Scenario, horizon: float | None = None, dt: float | None = None) -> Trajectory:
    """Integrate the closed loop from t=0 to the horizon; bit-deterministic."""
    if not has_leader_spanning_tree(scenario.graph):
        raise StructuralAssumptionFailed("some follower is not reachable from the leader")
    dt = scenario.dt if dt is None else dt
    horizon = scenario.horizon if horizon is None else horizon
    steps = int(round(horizon / dt))
    if steps < 1:
        raise ValueError("horizon shorter than one step")
    loop = ClosedLoop(scenario)
    y0 = SystemState(scenario.initial_states, scenario.initial_weights).flat()
    times, ys = rk4(loop, y0, 0.0, dt, steps, scenario.record_stride, _divergence_check)
    agents, n = loop.agents, loop.n
    states = ys[:, : agents * n].reshape(len(times), agents, n)
    weights = ys[:, agents * n:]
    controls = np.array([loop.parts(t, y)[2] for t, y in zip(times, ys)])
    meta = {"scenario": scenario.name, "scenario_hash": scenario.digest, "dt": dt,
            "horizon": steps * dt, "record_stride": scenario.record_stride, "mode": scenario.mode}
    return Trajectory(times, states, weights, controls, meta)


def write_trajectory_csv(traj: Trajectory, xi_norm, path):
    """Columns: t, x{agent}_{component} (component 1-based), w{follower}, xi_norm."""
    _, agents, n = traj.states.shape
    header = ["t"] + [f"x{i}_{k + 1}" for i in range(agents) for k in range(n)]
    header += [f"w{i}" for i in range(1, agents)] + ["xi_norm"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k, t in enumerate(traj.times):
            row = [t, *traj.states[k].ravel(), *traj.weights[k], xi_norm[k]]
            writer.writerow([repr(float(v)) for v in row])
