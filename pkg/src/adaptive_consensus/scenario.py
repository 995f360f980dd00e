"""Scenario documents: JSON schema, validation, construction and built-ins."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ScenarioError, SynthesisInfeasible
from .graph import build_graph
from .protocol import DEFAULT_C0, DEFAULT_D0, ProtocolConfig, check_initial_weights
from .simulation import (DEFAULT_DT, DEFAULT_STRIDE, Cos, DisturbanceModel, ExpDecay,
                         InverseQuadOfState, Scenario, Sin, SinOfState)
from .synthesis import (NOMINAL, ROBUST, AgentDynamics, gains_from_lyapunov, lmi_residual,
                        synthesize_nominal, synthesize_robust)

DEFAULT_EPSILON = 2.0
DEFAULT_PHI = 0.1
DEFAULT_HORIZON = 20.0
DEFAULT_SEED = 7

_matrix = {"type": "array", "minItems": 1,
           "items": {"type": "array", "minItems": 1, "items": {"type": "number"}}}
_scalar_or_list = {"oneOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}}]}
_term = {
    "type": "object",
    "required": ["type", "amp"],
    "properties": {
        "type": {"enum": ["sin", "cos", "exp", "sin_state", "inv_quad_state"]},
        "amp": {"type": "number"},
        "freq": {"type": "number"},
        "phase": {"type": "number"},
        "rate": {"type": "number"},
        "index": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
}
_model = {"type": "array", "items": {"type": "array", "items": _term}}

SCHEMA = {
    "type": "object",
    "required": ["graph", "dynamics", "protocol"],
    "properties": {
        "name": {"type": "string"},
        "notes": {"type": "string"},
        "seed": {"type": "integer"},
        "graph": {
            "type": "object",
            "required": ["nodes", "edges"],
            "properties": {
                "nodes": {"type": "integer", "minimum": 2},
                "edges": {"type": "array", "items": {
                    "type": "array", "minItems": 2, "maxItems": 2,
                    "items": {"type": "integer", "minimum": 0}}},
            },
            "additionalProperties": False,
        },
        "dynamics": {
            "type": "object",
            "required": ["A", "B"],
            "properties": {"A": _matrix, "B": _matrix},
            "additionalProperties": False,
        },
        "protocol": {
            "type": "object",
            "required": ["mode"],
            "properties": {
                "mode": {"enum": [NOMINAL, ROBUST]},
                "phi": _scalar_or_list,
                "c0": _scalar_or_list,
                "d0": _scalar_or_list,
                "epsilon": {"type": "number"},
                "lyapunov_matrix": _matrix,
            },
            "additionalProperties": False,
        },
        "disturbances": {
            "type": "object",
            "patternProperties": {"^[0-9]+$": _model},
            "additionalProperties": False,
        },
        "leader_input": _model,
        "sim": {
            "type": "object",
            "properties": {
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "T": {"type": "number", "exclusiveMinimum": 0},
                "record_stride": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "initial_states": {"oneOf": [
            _matrix,
            {"type": "object", "required": ["uniform"],
             "properties": {"uniform": {"type": "array", "minItems": 2, "maxItems": 2,
                                        "items": {"type": "number"}}},
             "additionalProperties": False},
        ]},
    },
    "additionalProperties": False,
}


def _path(parts):
    return "/" + "/".join(str(p) for p in parts)


def validate(doc):
    """Schema plus cross-section dimensional checks; raises ScenarioError."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ScenarioError(_path(err.absolute_path), err.message)

    nodes = doc["graph"]["nodes"]
    for k, edge in enumerate(doc["graph"]["edges"]):
        for v in edge:
            if v >= nodes:
                raise ScenarioError(f"/graph/edges/{k}", f"node {v} out of range for {nodes} nodes")
        if edge[0] == edge[1]:
            raise ScenarioError(f"/graph/edges/{k}", "self-loop")
        if edge[1] == 0:
            raise ScenarioError(f"/graph/edges/{k}", "the leader (node 0) cannot be a child")

    a, b = doc["dynamics"]["A"], doc["dynamics"]["B"]
    n = len(a)
    if any(len(row) != n for row in a):
        raise ScenarioError("/dynamics/A", "A must be square")
    if len(b) != n or len({len(row) for row in b}) != 1:
        raise ScenarioError("/dynamics/B", f"B must have {n} rows of equal length")
    p = len(b[0])

    followers = nodes - 1
    proto = doc["protocol"]
    for key in ("phi", "c0", "d0"):
        val = proto.get(key)
        if isinstance(val, list) and len(val) != followers:
            raise ScenarioError(f"/protocol/{key}", f"expected {followers} entries")
    lyap = proto.get("lyapunov_matrix")
    if lyap is not None and (len(lyap) != n or any(len(r) != n for r in lyap)):
        raise ScenarioError("/protocol/lyapunov_matrix", f"must be {n}x{n}")

    for agent, model in doc.get("disturbances", {}).items():
        if int(agent) >= nodes:
            raise ScenarioError(f"/disturbances/{agent}", "agent index out of range")
        _check_model(model, n, n, f"/disturbances/{agent}")
    if "leader_input" in doc:
        _check_model(doc["leader_input"], p, n, "/leader_input")

    init = doc.get("initial_states")
    if isinstance(init, list) and (len(init) != nodes or any(len(r) != n for r in init)):
        raise ScenarioError("/initial_states", f"must be {nodes}x{n}")


def _check_model(model, dim, n, where):
    if len(model) != dim:
        raise ScenarioError(where, f"expected {dim} components, got {len(model)}")
    for k, comp in enumerate(model):
        for j, term in enumerate(comp):
            loc = f"{where}/{k}/{j}"
            kind = term["type"]
            need = {"sin": ("freq",), "cos": ("freq",), "exp": ("rate",),
                    "sin_state": ("index",), "inv_quad_state": ("index",)}[kind]
            for key in need:
                if key not in term:
                    raise ScenarioError(loc, f"'{key}' is required for type {kind}")
            if "index" in term and term["index"] >= n:
                raise ScenarioError(f"{loc}/index", f"state component out of range for n={n}")


def _term_from_json(term):
    kind = term["type"]
    amp = float(term["amp"])
    if kind == "sin":
        return Sin(amp, float(term["freq"]), float(term.get("phase", 0.0)))
    if kind == "cos":
        return Cos(amp, float(term["freq"]), float(term.get("phase", 0.0)))
    if kind == "exp":
        return ExpDecay(amp, float(term["rate"]))
    if kind == "sin_state":
        return SinOfState(amp, int(term["index"]))
    return InverseQuadOfState(amp, int(term["index"]))


def model_from_json(model) -> DisturbanceModel:
    return DisturbanceModel(tuple(tuple(_term_from_json(t) for t in comp) for comp in model))


def _per_follower(val, default, count):
    if val is None:
        val = default
    if isinstance(val, list):
        return np.array(val, dtype=float)
    return np.full(count, float(val))


def digest(doc) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def graph_of(doc):
    return build_graph(doc["graph"]["nodes"], doc["graph"]["edges"])


def dynamics_of(doc):
    return AgentDynamics(doc["dynamics"]["A"], doc["dynamics"]["B"])


def mode_of(doc):
    return doc["protocol"]["mode"]


def epsilon_of(doc):
    return float(doc["protocol"].get("epsilon", DEFAULT_EPSILON))


def synthesize_gains(doc):
    """Gains solved from the dynamics, ignoring any supplied Lyapunov matrix."""
    dyn = dynamics_of(doc)
    if mode_of(doc) == NOMINAL:
        return synthesize_nominal(dyn)
    return synthesize_robust(dyn, epsilon_of(doc))


def gains_of(doc):
    """Gains from the supplied Lyapunov matrix, otherwise synthesized."""
    lyap = doc["protocol"].get("lyapunov_matrix")
    if lyap is None:
        return synthesize_gains(doc)
    dyn = dynamics_of(doc)
    mode = mode_of(doc)
    gains = gains_from_lyapunov(lyap, dyn, mode, epsilon_of(doc) if mode == ROBUST else 0.0)
    if lmi_residual(gains, dyn) >= 0:
        raise SynthesisInfeasible("supplied Lyapunov matrix does not satisfy the LMI",
                                  condition="lmi")
    return gains


def initial_states_of(doc):
    nodes = doc["graph"]["nodes"]
    n = len(doc["dynamics"]["A"])
    init = doc.get("initial_states", {"uniform": [-1.0, 1.0]})
    if isinstance(init, list):
        return np.array(init, dtype=float)
    low, high = init["uniform"]
    rng = np.random.default_rng(doc.get("seed", DEFAULT_SEED))
    return rng.uniform(low, high, size=(nodes, n))


def build_scenario(doc, gains=None, dt=None, horizon=None) -> Scenario:
    validate(doc)
    graph = graph_of(doc)
    dyn = dynamics_of(doc)
    followers = graph.node_count - 1
    proto = doc["protocol"]
    mode = proto["mode"]
    gains = gains if gains is not None else gains_of(doc)
    if mode == NOMINAL:
        weights = _per_follower(proto.get("c0"), DEFAULT_C0, followers)
        config = ProtocolConfig(gains, mode)
    else:
        weights = _per_follower(proto.get("d0"), DEFAULT_D0, followers)
        config = ProtocolConfig(gains, mode, _per_follower(proto.get("phi"), DEFAULT_PHI, followers))
    check_initial_weights(weights, mode)
    n, p = dyn.n, dyn.p
    dist_doc = doc.get("disturbances", {})
    dist = tuple(model_from_json(dist_doc[str(i)]) if str(i) in dist_doc
                 else DisturbanceModel.zero(n) for i in range(graph.node_count))
    lead = model_from_json(doc["leader_input"]) if "leader_input" in doc else DisturbanceModel.zero(p)
    sim = doc.get("sim", {})
    return Scenario(
        name=doc.get("name", "scenario"),
        graph=graph,
        dynamics=dyn,
        protocol=config,
        initial_states=initial_states_of(doc),
        initial_weights=weights,
        disturbances=dist,
        leader_input=lead,
        dt=float(dt if dt is not None else sim.get("dt", DEFAULT_DT)),
        horizon=float(horizon if horizon is not None else sim.get("T", DEFAULT_HORIZON)),
        record_stride=int(sim.get("record_stride", DEFAULT_STRIDE)),
        digest=digest(doc),
    )


# -- built-in scenarios ------------------------------------------------------

PAPER_P = [[1.7559, -0.5853], [-0.5853, 0.5853]]
PAPER_Q = [[0.2622, -0.3517], [-0.3517, 0.7395]]
DOUBLE_INTEGRATOR = {"A": [[0.0, 1.0], [0.0, 0.0]], "B": [[0.0], [1.0]]}
DEFAULT_GRAPH = {"nodes": 7, "edges": [[0, 1], [1, 2], [2, 3], [3, 4], [4, 5], [5, 6], [1, 4], [3, 6]]}
GRAPH_NOTE = ("The published topology figure is not machine-readable; this 7-node graph "
              "(chain 0->1->...->6 plus 1->4 and 3->6) is a substitute rooted at the leader.")

PAPER_DISTURBANCES = {
    "0": [[{"type": "sin", "amp": 0.1, "freq": 2.0}], [{"type": "sin", "amp": 0.3, "freq": 4.0}]],
    "1": [[{"type": "sin", "amp": 0.2, "freq": 3.5}], [{"type": "cos", "amp": 0.3, "freq": 2.5}]],
    "2": [[{"type": "cos", "amp": 0.15, "freq": 4.0}], [{"type": "sin", "amp": 0.2, "freq": 5.0}]],
    "3": [[{"type": "sin_state", "amp": 0.3, "index": 1}], [{"type": "sin", "amp": 0.6, "freq": 3.0}]],
    "4": [[{"type": "exp", "amp": 0.3, "rate": 2.0}], [{"type": "cos", "amp": 0.15, "freq": 3.0}]],
    "5": [[{"type": "sin", "amp": 0.2, "freq": 4.0}], [{"type": "cos", "amp": 0.25, "freq": 3.0}]],
    "6": [[{"type": "sin", "amp": 0.3, "freq": 5.0}], [{"type": "inv_quad_state", "amp": 0.4, "index": 0}]],
}
PAPER_LEADER_INPUT = [[{"type": "exp", "amp": 1.0, "rate": 0.1}]]

BUILTINS = {
    "paper-nominal": {
        "name": "paper-nominal",
        "notes": GRAPH_NOTE + " Initial states are drawn uniformly from [-1, 1] with the given seed.",
        "seed": DEFAULT_SEED,
        "graph": DEFAULT_GRAPH,
        "dynamics": DOUBLE_INTEGRATOR,
        "protocol": {"mode": NOMINAL, "c0": 1.0, "lyapunov_matrix": PAPER_P},
        "sim": {"dt": 1e-3, "T": 20.0, "record_stride": 10},
        "initial_states": {"uniform": [-1.0, 1.0]},
    },
    "paper-robust": {
        "name": "paper-robust",
        "notes": GRAPH_NOTE + " Initial states are drawn uniformly from [-1, 1] with the given seed.",
        "seed": DEFAULT_SEED,
        "graph": DEFAULT_GRAPH,
        "dynamics": DOUBLE_INTEGRATOR,
        "protocol": {"mode": ROBUST, "d0": 1.5, "phi": 0.1, "epsilon": 2.0,
                     "lyapunov_matrix": PAPER_Q},
        "disturbances": PAPER_DISTURBANCES,
        "leader_input": PAPER_LEADER_INPUT,
        "sim": {"dt": 1e-3, "T": 20.0, "record_stride": 10},
        "initial_states": {"uniform": [-1.0, 1.0]},
    },
    "paper-drift": {
        "name": "paper-drift",
        "notes": GRAPH_NOTE + " Nominal protocol driven by the persistent disturbance suite.",
        "seed": DEFAULT_SEED,
        "graph": DEFAULT_GRAPH,
        "dynamics": DOUBLE_INTEGRATOR,
        "protocol": {"mode": NOMINAL, "c0": 1.0, "lyapunov_matrix": PAPER_P},
        "disturbances": PAPER_DISTURBANCES,
        "leader_input": PAPER_LEADER_INPUT,
        "sim": {"dt": 1e-3, "T": 20.0, "record_stride": 10},
        "initial_states": {"uniform": [-1.0, 1.0]},
    },
}


def builtin(name):
    try:
        return copy.deepcopy(BUILTINS[name])
    except KeyError:
        raise ScenarioError("/", f"unknown built-in scenario {name!r}") from None


def load_document(source):
    """Return the scenario document for a built-in name or a JSON file path."""
    if str(source) in BUILTINS:
        return builtin(str(source))
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError("/", f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("/", f"invalid JSON: {exc}") from exc
