import math

import numpy as np
import pytest

from adaptive_consensus.errors import (DimensionError, DivergenceDetected, InvalidModel,
                                       StructuralAssumptionFailed)
from adaptive_consensus.graph import build_graph, laplacian
from adaptive_consensus.protocol import ProtocolConfig
from adaptive_consensus.simulation import (ClosedLoop, Cos, DisturbanceModel, ExpDecay,
                                           InverseQuadOfState, Scenario, Sin, SinOfState,
                                           SystemState, closed_loop_derivative, eval_disturbance,
                                           rk4, simulate)
from adaptive_consensus.synthesis import AgentDynamics, gains_from_lyapunov, synthesize_nominal
from adaptive_consensus import scenario as sc


def scalar_scenario(xi0=1.0, c0=1.0, horizon=2.0, dt=0.01, stride=1):
    dyn = AgentDynamics([[0.0]], [[1.0]])
    gains = gains_from_lyapunov([[math.sqrt(2)]], dyn)
    return Scenario("scalar", build_graph(2, [(0, 1)]), dyn, ProtocolConfig(gains, "nominal"),
                    np.array([[0.0], [xi0]]), np.array([c0]), dt=dt, horizon=horizon,
                    record_stride=stride)


def scalar_rhs(t, y):
    xi, c = y
    return np.array([-(c + xi ** 2 / math.sqrt(2)) * xi / math.sqrt(2), xi ** 2 / 2])


# -- disturbances ----------------------------------------------------------

def test_empty_model_is_zero():
    np.testing.assert_array_equal(eval_disturbance(DisturbanceModel.zero(2), 1.3, [1.0, 2.0]), [0, 0])


def test_omega4_at_zero():
    m = DisturbanceModel(((ExpDecay(0.3, 2.0),), (Cos(0.15, 3.0),)))
    np.testing.assert_allclose(eval_disturbance(m, 0.0, [5.0, 5.0]), [0.3, 0.15])


def test_omega6_state_term():
    m = DisturbanceModel(((Sin(0.3, 5.0),), (InverseQuadOfState(0.4, 0),)))
    assert eval_disturbance(m, 0.0, [1.0, 0.0])[1] == pytest.approx(0.2)


def test_omega3_state_term():
    m = DisturbanceModel(((SinOfState(0.3, 1),), (Sin(0.6, 3.0),)))
    out = eval_disturbance(m, 0.5, [0.0, 0.7])
    np.testing.assert_allclose(out, [0.3 * math.sin(0.7), 0.6 * math.sin(1.5)])


def test_state_index_out_of_range():
    m = DisturbanceModel(((SinOfState(0.3, 2),),))
    with pytest.raises(InvalidModel):
        eval_disturbance(m, 0.0, [1.0, 2.0])
    with pytest.raises(InvalidModel):
        m.validate(1, 2)


def test_amplitude_bounds():
    m = DisturbanceModel(((Sin(0.2, 1.0), Cos(-0.1, 2.0)), (InverseQuadOfState(0.4, 0),)))
    np.testing.assert_allclose(m.component_bounds(), [0.3, 0.4])
    assert m.norm_bound() == pytest.approx(0.5)
    with pytest.raises(InvalidModel):
        DisturbanceModel(((ExpDecay(1.0, -1.0),),)).component_bounds()


def test_vectorized_signals_match_reference():
    scn = sc.build_scenario(sc.builtin("paper-robust"))
    loop = ClosedLoop(scn)
    rng = np.random.default_rng(2)
    for t in (0.0, 0.37, 5.2):
        x = rng.normal(size=(7, 2))
        fast = loop.dist.evaluate(t, x)
        for i, model in enumerate(scn.disturbances):
            np.testing.assert_allclose(fast[i], eval_disturbance(model, t, x[i]), rtol=1e-14, atol=1e-15)


def test_leader_bound_includes_input():
    scn = sc.build_scenario(sc.builtin("paper-robust"))
    ups, ups0 = scn.disturbance_bounds()
    np.testing.assert_allclose(ups, [math.hypot(0.2, 0.3), math.hypot(0.15, 0.2), math.hypot(0.3, 0.6),
                                     math.hypot(0.3, 0.15), math.hypot(0.2, 0.25), math.hypot(0.3, 0.4)])
    assert ups0 == pytest.approx(math.hypot(0.1, 0.3 + 1.0))


# -- closed loop -----------------------------------------------------------

def test_consensus_fixed_point(double_integrator):
    g = build_graph(4, [(0, 1), (1, 2), (0, 3), (2, 3)])
    gains = synthesize_nominal(double_integrator)
    x0 = np.array([0.4, -1.2])
    scn = Scenario("fp", g, double_integrator, ProtocolConfig(gains, "nominal"),
                   np.tile(x0, (4, 1)), np.array([2.0, 3.0, 0.5]))
    d = closed_loop_derivative(SystemState(scn.initial_states, scn.initial_weights), 0.0, scn)
    for i in range(4):
        np.testing.assert_array_equal(d.x[i], double_integrator.a @ x0)
    np.testing.assert_array_equal(d.weights, 0.0)


def test_scalar_closed_form():
    scn = scalar_scenario()
    loop = ClosedLoop(scn)
    for xi, c in [(1.0, 1.0), (-0.3, 2.5), (2.0, 0.0)]:
        y = np.array([0.0, xi, c])
        np.testing.assert_allclose(loop(0.0, y), [0.0, *scalar_rhs(0.0, [xi, c])], rtol=1e-14)


def test_matches_stacked_error_dynamics(double_integrator):
    """Finite differences of the simulated error follow the stacked closed-loop form."""
    g = build_graph(5, [(0, 1), (1, 2), (2, 3), (0, 4), (3, 4)])
    gains = synthesize_nominal(double_integrator)
    rng = np.random.default_rng(4)
    scn = Scenario("eq", g, double_integrator, ProtocolConfig(gains, "nominal"),
                   rng.uniform(-1, 1, (5, 2)), np.ones(4), dt=1e-3, horizon=1.0, record_stride=1)
    traj = simulate(scn)
    l1 = laplacian(g).l1
    n_f = 4
    kron_l1 = np.kron(l1, np.eye(2))
    xs = traj.states
    xi = np.array([kron_l1 @ (x[1:] - x[:1]).ravel() for x in xs])
    bk = double_integrator.b @ gains.k
    dt = traj.times[1] - traj.times[0]
    for k in (50, 300, 800):
        blocks = xi[k].reshape(n_f, 2)
        rho = np.einsum("ij,jk,ik->i", blocks, gains.lyapunov_inv, blocks)
        cr = np.diag(traj.weights[k] + rho)
        rhs = (np.kron(np.eye(n_f), double_integrator.a) + np.kron(l1 @ cr, bk)) @ xi[k]
        fd = (xi[k + 1] - xi[k - 1]) / (2 * dt)
        assert np.linalg.norm(fd - rhs) <= 1e-4 * (1 + np.linalg.norm(rhs))


def test_locality_of_closed_loop():
    scn = sc.build_scenario(sc.builtin("paper-robust"))
    loop = ClosedLoop(scn)
    rng = np.random.default_rng(9)
    y = SystemState(rng.normal(size=(7, 2)), 1 + rng.random(6)).flat()
    _, wd, u, _ = loop.parts(0.3, y)
    for i in range(1, 7):
        local = set(scn.graph.in_neighbors(i)) | {i}
        for j in range(7):
            if j in local:
                continue
            y2 = y.copy()
            y2[2 * j: 2 * j + 2] += rng.normal(size=2) * 10
            _, wd2, u2, _ = loop.parts(0.3, y2)
            assert u2[i - 1].tobytes() == u[i - 1].tobytes()
            assert wd2[i - 1].tobytes() == wd[i - 1].tobytes()


# -- integration -----------------------------------------------------------

def test_rk4_order_on_scalar_benchmark():
    y0 = np.array([1.0, 1.0])
    ref = rk4(scalar_rhs, y0, 0.0, 1e-4, 20000)[1][-1]
    err = [np.linalg.norm(rk4(scalar_rhs, y0, 0.0, dt, int(round(2.0 / dt)))[1][-1] - ref)
           for dt in (0.2, 0.1)]
    assert 12 <= err[0] / err[1] <= 20


def test_simulate_matches_scalar_rhs():
    traj = simulate(scalar_scenario(horizon=2.0, dt=0.01))
    _, ys = rk4(scalar_rhs, np.array([1.0, 1.0]), 0.0, 0.01, 200)
    np.testing.assert_allclose(traj.states[-1, 1, 0], ys[-1, 0], rtol=1e-12)
    np.testing.assert_allclose(traj.weights[-1, 0], ys[-1, 1], rtol=1e-12)


def test_zero_initial_error_stays_zero(double_integrator):
    g = build_graph(4, [(0, 1), (1, 2), (2, 3)])
    gains = synthesize_nominal(double_integrator)
    scn = Scenario("z", g, double_integrator, ProtocolConfig(gains, "nominal"),
                   np.tile([0.5, 0.2], (4, 1)), np.ones(3), dt=1e-2, horizon=5.0)
    traj = simulate(scn)
    offsets = traj.states[:, 1:] - traj.states[:, :1]
    assert np.max(np.abs(offsets)) <= 1e-12
    np.testing.assert_array_equal(traj.weights, 1.0)


def test_recording_layout():
    traj = simulate(scalar_scenario(horizon=1.0, dt=0.01, stride=10))
    assert traj.times.shape == (11,)
    np.testing.assert_allclose(np.diff(traj.times), 0.1, rtol=1e-12)
    assert traj.states.shape == (11, 2, 1)
    assert traj.weights.shape == (11, 1)
    assert traj.controls.shape == (11, 1, 1)
    assert traj.metadata["mode"] == "nominal" and traj.metadata["dt"] == 0.01


def test_deterministic():
    scn = sc.build_scenario(sc.builtin("paper-robust"), horizon=1.0)
    a, b = simulate(scn), simulate(scn)
    for f in ("times", "states", "weights", "controls"):
        assert getattr(a, f).tobytes() == getattr(b, f).tobytes()


def test_divergence_detected():
    dyn = AgentDynamics([[30.0]], [[1.0]])
    gains = synthesize_nominal(dyn)
    scn = Scenario("blowup", build_graph(2, [(0, 1)]), dyn, ProtocolConfig(gains, "nominal"),
                   np.array([[1.0], [1.0]]), np.array([1.0]), dt=1e-3, horizon=2.0)
    with pytest.raises(DivergenceDetected) as err:
        simulate(scn)
    assert 0.8 < err.value.t < 1.0  # e^{30 t} crosses 1e12 near t = 0.92


def test_rejects_graph_without_spanning_tree(double_integrator):
    g = build_graph(3, [(0, 1)])
    gains = synthesize_nominal(double_integrator)
    scn = Scenario("iso", g, double_integrator, ProtocolConfig(gains, "nominal"),
                   np.zeros((3, 2)), np.ones(2))
    with pytest.raises(StructuralAssumptionFailed):
        simulate(scn)


def test_scenario_dimension_checks(double_integrator):
    gains = synthesize_nominal(double_integrator)
    with pytest.raises(DimensionError):
        Scenario("bad", build_graph(2, [(0, 1)]), double_integrator,
                 ProtocolConfig(gains, "nominal"), np.zeros((3, 2)), np.ones(1))
    with pytest.raises(DimensionError):
        Scenario("bad", build_graph(2, [(0, 1)]), double_integrator,
                 ProtocolConfig(gains, "nominal"), np.zeros((2, 2)), np.ones(2))
