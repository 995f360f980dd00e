import numpy as np
import pytest

from adaptive_consensus.errors import DimensionError, InsufficientData
from adaptive_consensus.graph import build_graph, laplacian
from adaptive_consensus.metrics import consensus_error, detect_drift, summarize
from adaptive_consensus.simulation import Trajectory


def make_traj(states, weights=None, times=None):
    states = np.asarray(states, dtype=float)
    k, agents, _ = states.shape
    times = np.arange(k, dtype=float) if times is None else times
    weights = np.ones((k, agents - 1)) if weights is None else weights
    return Trajectory(times, states, weights, np.zeros((k, agents - 1, 1)), {"mode": "nominal"})


CHAIN = laplacian(build_graph(4, [(0, 1), (1, 2), (2, 3)]))


def test_zero_at_agreement():
    x0 = np.array([1.0, -2.0, 0.5])
    traj = make_traj(np.tile(x0, (3, 4, 1)))
    np.testing.assert_array_equal(consensus_error(traj, CHAIN), 0.0)


def test_single_follower():
    part = laplacian(build_graph(2, [(0, 1)]))
    traj = make_traj([[[1.0, 2.0], [4.0, 0.0]]])
    np.testing.assert_array_equal(consensus_error(traj, part)[0], [3.0, -2.0])


def test_blockwise_equals_dense_kronecker():
    rng = np.random.default_rng(1)
    for followers in range(1, 5):
        for n in range(1, 4):
            edges = [(0, 1)] + [(int(rng.integers(0, i)), i) for i in range(2, followers + 1)]
            edges += [(int(rng.integers(0, followers + 1)), int(rng.integers(1, followers + 1)))]
            edges = [e for e in edges if e[0] != e[1]]
            part = laplacian(build_graph(followers + 1, edges))
            states = rng.normal(size=(3, followers + 1, n))
            got = consensus_error(make_traj(states), part)
            dense = np.kron(part.l1, np.eye(n))
            for k in range(3):
                x = states[k, 1:].ravel()
                ref = dense @ (x - np.tile(states[k, 0], followers))
                assert np.max(np.abs(got[k] - ref)) <= 1e-12


def test_translation_invariance():
    rng = np.random.default_rng(2)
    states = rng.normal(size=(2, 4, 3))
    shift = rng.normal(size=3)
    a = consensus_error(make_traj(states), CHAIN)
    b = consensus_error(make_traj(states + shift), CHAIN)
    np.testing.assert_allclose(np.linalg.norm(a, axis=1), np.linalg.norm(b, axis=1), rtol=1e-12)


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        consensus_error(make_traj(np.zeros((2, 3, 2))), CHAIN)


def test_drift_constant_and_linear():
    t = np.linspace(0, 10, 101)
    slope, drifting = detect_drift(t, np.ones((101, 1)))
    assert slope[0] == pytest.approx(0.0, abs=1e-14) and not drifting[0]
    slope, drifting = detect_drift(t, (0.01 * t)[:, None])
    assert slope[0] == pytest.approx(0.01, rel=1e-10) and drifting[0]


def test_drift_ignores_early_transient():
    t = np.linspace(0, 10, 201)
    w = np.where(t < 4, t, 4.0)
    slope, drifting = detect_drift(t, w[:, None])
    assert not drifting[0]


def test_drift_needs_data():
    with pytest.raises(InsufficientData):
        detect_drift([0.0, 1.0], np.ones((2, 1)))


def test_summary_of_zero_error_run():
    states = np.tile([0.2, 0.1], (11, 4, 1))
    rep = summarize(make_traj(states, times=np.linspace(0, 5, 11)), CHAIN)
    assert rep.convergence_time == 0.0
    assert rep.final_xi_norm == 0.0
    assert rep.empirical_tail_bound == 0.0
    assert not rep.drifting.any()


def test_convergence_time_is_last_crossing():
    times = np.linspace(0, 10, 11)
    states = np.zeros((11, 2, 1))
    states[:, 1, 0] = [1, 1, 1e-4, 1, 0.1, 1e-4, 1e-5, 0, 0, 0, 0]
    part = laplacian(build_graph(2, [(0, 1)]))
    rep = summarize(make_traj(states, times=times), part)
    assert rep.convergence_time == 5.0
    assert rep.empirical_tail_bound == 0.0


def test_not_converged():
    times = np.linspace(0, 10, 11)
    states = np.zeros((11, 2, 1))
    states[:, 1, 0] = 1.0
    rep = summarize(make_traj(states, times=times), laplacian(build_graph(2, [(0, 1)])))
    assert rep.convergence_time is None
    assert rep.to_dict()["convergence_time"] is None
