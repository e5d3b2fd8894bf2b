import time

import numpy as np
import pytest

from pocbf.errors import DimensionMismatchError, DivergedTrajectoryError, InvalidParameterError, WiringError
from pocbf.polyalg import Polynomial
from pocbf.regions import RegionSpec
from pocbf.sysmodel import (
    ACC_CONTROLLERS,
    Block,
    ControllerSpec,
    Edge,
    EstimatorSpec,
    NetworkState,
    SubsystemSpec,
    acc_block,
    acc_platoon,
    augment,
    build_interconnection,
    step,
)

X, Y = Polynomial.variable("x0"), Polynomial.variable("xh0")


def scalar_block(a=0.5, k=1.0, c1=True, p=1, sigma=0.0):
    plant = SubsystemSpec.linear(
        [[a]], [[0.0]], [[1.0]], Aw=np.zeros((1, p)) if p else None, C1=[[1.0]] if c1 else None,
        process_std=sigma, measurement_std=sigma, state_region=RegionSpec.box([[-1, 1]]),
    )
    est = EstimatorSpec.observer([[a]], [[0.0]], [[k]], [[1.0]], Aw=np.zeros((1, p)) if p else None)
    return Block(plant, est, ControllerSpec.affine([[0.0]]))


def zeros(net):
    return [np.zeros(b.plant.state_dim) for b in net.blocks], [np.zeros(b.plant.output_dim) for b in net.blocks]


def test_two_block_chain_valid():
    net = build_interconnection([scalar_block(), scalar_block()], [Edge(0, 1, (0,), (0,))])
    assert net.size == 2 and net.neighbours() == [set(), {0}]


def test_wiring_dimension_mismatch():
    with pytest.raises(WiringError, match=r"edge 0->1.*dimension 2.*dimension 1"):
        build_interconnection([scalar_block(), scalar_block()], [Edge(0, 1, (0, 0), (0,))])


def test_wiring_errors():
    b = scalar_block()
    with pytest.raises(WiringError, match="dangling"):
        build_interconnection([b, b], [Edge(0, 1, (1,), (0,))])
    with pytest.raises(WiringError, match="already driven"):
        build_interconnection([b, b, b], [Edge(0, 2, (0,), (0,)), Edge(1, 2, (0,), (0,))])
    with pytest.raises(WiringError, match="does not exist"):
        build_interconnection([b], [Edge(0, 3, (0,), (0,))])
    with pytest.raises(WiringError):
        build_interconnection([], [])


def test_acc_platoon_matrices():
    net = acc_platoon(2, tau=0.01)
    b = net.blocks[1]
    for i, row in enumerate([[1, -1, 0, 0.01], [0, 1, 1, 0]]):
        p = b.plant.transition[i]
        got = [p.coefficient({"x0": 1}), p.coefficient({"x1": 1}), p.coefficient({"u0": 1}), p.coefficient({"w1": 1})]
        assert got == row
    assert b.plant.internal_output[0] == Polynomial.variable("x1")
    np.testing.assert_array_equal(b.plant.output_matrix, [[1.0, 0.0]])
    assert b.plant.state_region.to_list() == [[[0, 3.5], [-2, 3]]]
    assert b.plant.initial_region.to_list() == [[[1, 1.5], [-0.4, 0.4]]]
    assert len(b.plant.unsafe_region.boxes) == 2
    assert b.controller.saturation == ((-1.0, 1.0),)
    assert net.edges == (Edge(0, 1, (0,), (1,)),)


def test_acc_chain_of_four_and_head():
    net = acc_platoon(4)
    assert [(e.src, e.dst, e.outputs, e.inputs) for e in net.edges] == [(i, i + 1, (0,), (1,)) for i in range(3)]
    assert acc_platoon(1).edges == ()


def test_acc_controller_variants():
    assert ACC_CONTROLLERS[1] == (0.06, -0.7, 0.02, -0.07)
    assert ACC_CONTROLLERS[2] == (0.09, -1.0, 0.03, -0.09)
    with pytest.raises(InvalidParameterError):
        acc_block(variant=3)


def test_platoon_1000_builds_fast():
    t0 = time.perf_counter()
    net = acc_platoon(1000)
    assert time.perf_counter() - t0 < 1.0
    assert len(net.edges) == 999


def test_augment_zero_dynamics():
    plant = SubsystemSpec(
        (Polynomial.zero(),), (), [[1.0]], 0.0, 0.0, RegionSpec.box([[-1, 1]]), external_input_dim=0
    )
    aug = augment(plant, EstimatorSpec((Polynomial.zero(),)))
    assert all(p.is_zero() for p in aug.transition)


def test_augment_acc_second_block():
    b = acc_block()
    aug = augment(b.plant, b.estimator)
    rng = np.random.default_rng(3)
    A, B, Aw = np.array([[1, -1], [0, 1]]), np.array([0, 1]), np.array([[0, 0.01], [0, 0]])
    K, C2 = np.array([1.7, -0.72]), np.array([1.0, 0.0])
    for _ in range(10):
        x, xh, wh = rng.normal(size=2), rng.normal(size=2), rng.normal(size=2)
        u, m = rng.normal(), rng.normal()
        pt = {"x0": x[0], "x1": x[1], "xh0": xh[0], "xh1": xh[1], "u0": u, "wh0": wh[0], "wh1": wh[1], "m0": m}
        want = A @ xh + B * u + Aw @ wh + K * (C2 @ x + m - C2 @ xh)
        np.testing.assert_allclose([p.eval(pt) for p in aug.estimator_next], want, atol=1e-13)


def test_augment_scalar_hand_substitution():
    plant = SubsystemSpec.linear([[0.5]], [[0.0]], [[1.0]], state_region=RegionSpec.box([[-1, 1]]))
    est = EstimatorSpec.observer([[0.5]], [[0.0]], [[1.0]], [[1.0]])
    aug = augment(plant, est)
    s, m, u = (Polynomial.variable(n) for n in ("s0", "m0", "u0"))
    assert aug.plant_next[0] == 0.5 * X + s
    assert aug.estimator_next[0].almost_equal(0.5 * Y + X + m - Y)


def test_acc_step_example():
    net = acc_platoon(1)
    st = NetworkState([np.array([1.2, 0.0])], [np.array([1.2, 0.0])])
    nxt, u = step(net, st, [np.zeros(2)], [np.zeros(1)], return_inputs=True)
    assert u[0][0] == pytest.approx(0.002, abs=1e-15)
    np.testing.assert_allclose(nxt.x[0], [1.2, 0.002], atol=1e-15)


def test_step_linear_zero_controller():
    A = np.array([[0.9, 0.1], [0.0, 0.5]])
    plant = SubsystemSpec.linear(A, [[0.0], [0.0]], [[1.0, 0.0]], state_region=RegionSpec.box([[-1, 1]] * 2))
    est = EstimatorSpec.observer(A, [[0.0], [0.0]], [[0.0], [0.0]], [[1.0, 0.0]])
    net = build_interconnection([Block(plant, est, ControllerSpec.affine([[0.0, 0.0]]))], [])
    x = np.array([0.3, -0.7])
    nxt = step(net, NetworkState([x], [x.copy()]), [np.zeros(2)], [np.zeros(1)])
    np.testing.assert_array_equal(nxt.x[0], A @ x)


def test_step_routing_uses_pre_step_estimates():
    net = acc_platoon(2)
    rng = np.random.default_rng(0)
    st = NetworkState([rng.normal(size=2) for _ in range(2)], [rng.normal(size=2) for _ in range(2)])
    nxt = step(net, st, [np.zeros(2)] * 2, [np.zeros(1)] * 2)
    b = net.blocks[1]
    u = b.controller.evaluate({"xh0": st.xh[1][0], "xh1": st.xh[1][1], "wh0": 0.0, "wh1": st.xh[0][1]})[0]
    y = st.x[1][0]
    xh = st.xh[1]
    want = np.array([xh[0] - xh[1] + 0.01 * st.xh[0][1], xh[1] + u]) + np.array([1.7, -0.72]) * (y - xh[0])
    np.testing.assert_allclose(nxt.xh[1], want, atol=1e-14)


def test_step_deterministic_and_interconnection_consistent():
    net = acc_platoon(3)
    rng = np.random.default_rng(7)
    st = NetworkState([rng.uniform(0, 2, 2) for _ in range(3)], [rng.uniform(0, 2, 2) for _ in range(3)])
    for _ in range(100):
        pn = [rng.normal(scale=0.01, size=2) for _ in range(3)]
        mn = [rng.normal(scale=0.01, size=1) for _ in range(3)]
        a = step(net, st, pn, mn)
        b = step(net, st.copy(), pn, mn)
        for i in range(3):
            np.testing.assert_array_equal(a.x[i], b.x[i])
        # block i+1's x0 carries tau * (velocity of block i) exactly as routed
        for i in range(1, 3):
            u = net.blocks[i].controller.evaluate(
                {"xh0": st.xh[i][0], "xh1": st.xh[i][1], "wh0": 0.0, "wh1": st.xh[i - 1][1]}
            )[0]
            want0 = st.x[i][0] - st.x[i][1] + 0.01 * st.x[i - 1][1] + pn[i][0]
            assert a.x[i][0] == pytest.approx(want0, abs=1e-14)
            assert a.x[i][1] == pytest.approx(st.x[i][1] + u + pn[i][1], abs=1e-14)
        st = a


def test_chain_locality():
    net = acc_platoon(6)
    base = NetworkState([np.array([1.2, 0.1])] * 6, [np.array([1.2, 0.1])] * 6)
    pert = base.copy()
    pert.x[2] = pert.x[2] + np.array([0.05, 0.3])
    pert.xh[2] = pert.xh[2] + np.array([0.02, -0.2])
    pn, mn = [np.zeros(2)] * 6, [np.zeros(1)] * 6
    a, b = step(net, base, pn, mn), step(net, pert, pn, mn)
    changed = {i for i in range(6) if not (np.array_equal(a.x[i], b.x[i]) and np.array_equal(a.xh[i], b.xh[i]))}
    assert changed == {2, 3}


def test_affine_fast_path_agrees():
    est = EstimatorSpec.observer(
        [[1, -1], [0, 1]], [[0], [1]], [[1.7], [-0.72]], [[1, 0]], Aw=[[0, 0.01], [0, 0]]
    )
    est._check_agreement(points=100, seed=5)
    bad = dict(est.matrices, K=np.array([[1.0], [0.0]]))
    with pytest.raises(InvalidParameterError):
        EstimatorSpec(est.transition, bad)


def test_controller_reads_only_estimates():
    with pytest.raises(InvalidParameterError, match="observable"):
        ControllerSpec((Polynomial.variable("x0"),))


def test_dimension_checks():
    with pytest.raises(DimensionMismatchError):
        SubsystemSpec.linear([[1.0]], [[0.0]], [[1.0]], state_region=RegionSpec.box([[0, 1], [0, 1]]))
    with pytest.raises(InvalidParameterError):
        SubsystemSpec.linear([[1.0]], [[0.0]], [[1.0]], process_std=-1, state_region=RegionSpec.box([[0, 1]]))


def test_step_diverged():
    net = acc_platoon(1)
    st = NetworkState([np.array([np.inf, 0.0])], [np.zeros(2)])
    with pytest.raises(DivergedTrajectoryError):
        step(net, st, [np.zeros(2)], [np.zeros(1)])
