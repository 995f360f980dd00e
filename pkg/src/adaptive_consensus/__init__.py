"""Distributed adaptive leader-follower consensus on directed graphs.

Gain synthesis, the nominal and leakage-modified adaptive protocols,
closed-loop simulation, Lyapunov analysis and trajectory metrics.
"""

from .graph import DirectedGraph, LaplacianPartition, build_graph, laplacian
from .synthesis import AgentDynamics, GainSet, synthesize_nominal, synthesize_robust
from .simulation import Scenario, Trajectory, simulate

__all__ = [
    "AgentDynamics",
    "DirectedGraph",
    "GainSet",
    "LaplacianPartition",
    "Scenario",
    "Trajectory",
    "build_graph",
    "laplacian",
    "simulate",
    "synthesize_nominal",
    "synthesize_robust",
]

__version__ = "0.1.0"
