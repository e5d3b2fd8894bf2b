import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pocbf import kernels, rng
from pocbf.bounds import exit_probability_delta
from pocbf.errors import InvalidParameterError
from pocbf.montecarlo import (
    ANY,
    CONSISTENT,
    VIOLATION,
    InitialResult,
    SafetyReport,
    SimConfig,
    clopper_pearson,
    dump_csv,
    estimate_estimation_accuracy,
    estimate_exit_probability,
    validate_bound,
)
from pocbf.regions import RegionSpec
from pocbf.sysmodel import Block, ControllerSpec, EstimatorSpec, SubsystemSpec, acc_platoon, build_interconnection

from test_composition import fixture_cert


def scalar_net(a=1.0, sigma=0.0, n_blocks=1, unsafe=((0.5, 1.0),), initial=((-0.5, 0.5),), domain=((-2.0, 2.0),)):
    plant = SubsystemSpec.linear(
        [[a]], [[0.0]], [[1.0]], process_std=sigma, measurement_std=sigma,
        state_region=RegionSpec.box(domain), initial_region=RegionSpec.box(initial), unsafe_region=RegionSpec.box(unsafe),
    )
    est = EstimatorSpec.observer([[a]], [[0.0]], [[0.5]], [[1.0]])
    block = Block(plant, est, ControllerSpec.affine([[0.0]]))
    return build_interconnection([block] * n_blocks, [])


def row(k, n=10_000):
    return InitialResult("p", (), n, k, k, 0, 0, clopper_pearson(k, n))


def report(k, bound, n=10_000):
    return SafetyReport("exit", "product", (row(k, n),), bound, 0, 10, "numpy")


# ------------------------------------------------------------ intervals
def test_clopper_pearson_examples():
    lo, hi = clopper_pearson(1000, 10_000)
    assert lo < 0.10 < hi and hi < 0.1288
    assert validate_bound(report(1000, 0.1288)) == CONSISTENT
    lo, _ = clopper_pearson(5000, 10_000)
    assert lo == pytest.approx(0.490, abs=1e-3)
    assert validate_bound(report(5000, 0.1288)) == VIOLATION
    assert validate_bound(report(0, 0.0)) == CONSISTENT
    assert validate_bound(report(0, None)) is None


def test_clopper_pearson_edges():
    assert clopper_pearson(0, 10) == (0.0, pytest.approx(1 - 0.025 ** 0.1))
    assert clopper_pearson(10, 10)[1] == 1.0
    with pytest.raises(InvalidParameterError):
        clopper_pearson(3, 2)


@given(st.integers(1, 500), st.data())
def test_clopper_pearson_brackets_frequency(n, data):
    k = data.draw(st.integers(0, n))
    lo, hi = clopper_pearson(k, n)
    assert 0.0 <= lo <= k / n <= hi <= 1.0


# ------------------------------------------------------------ trivial runs
def test_static_safe_point_never_exits():
    cfg = SimConfig(trials=200, horizon=10, initial="fixed", initial_point=(0.0,))
    r = estimate_exit_probability(scalar_net(), cfg, bound=0.0)
    assert r.worst.events == 0 and r.verdict == CONSISTENT


def test_immediate_exit():
    cfg = SimConfig(trials=200, horizon=0, initial="fixed", initial_point=(0.75,))
    r = estimate_exit_probability(scalar_net(), cfg, bound=0.5)
    assert r.worst.frequency == 1.0 and r.worst.unsafe == 200 and r.verdict == VIOLATION


def test_leaving_domain_counts_unless_disabled():
    net = scalar_net(a=3.0, unsafe=((10.0, 11.0),))
    cfg = SimConfig(trials=50, horizon=5, initial="fixed", initial_point=(0.25,))
    r = estimate_exit_probability(net, cfg)
    assert r.worst.left_domain == 50 and r.worst.frequency == 1.0
    r = estimate_exit_probability(net, dataclasses.replace(cfg, left_domain_is_exit=False))
    assert r.worst.events == 0


def test_product_vs_any_block():
    # only block 0 starts unsafe; the product event needs both blocks
    net = scalar_net(n_blocks=2)
    cfg = SimConfig(trials=20, horizon=3, initial="fixed", initial_point=(0.75, 0.0))
    assert estimate_exit_probability(net, cfg).worst.events == 0
    assert estimate_exit_probability(net, dataclasses.replace(cfg, exit_mode=ANY)).worst.events == 20


def test_estimation_accuracy_trivial():
    cfg = SimConfig(trials=100, horizon=10, initial="uniform")
    assert estimate_estimation_accuracy(scalar_net(), 1e-9, cfg).worst.events == 0
    noisy = scalar_net(a=0.5, sigma=0.1)
    assert estimate_estimation_accuracy(noisy, 0.0, cfg).worst.frequency == 1.0
    with pytest.raises(InvalidParameterError):
        estimate_estimation_accuracy(noisy, -1.0, cfg)


def test_grid_initial_points():
    cfg = SimConfig(trials=10, horizon=0)
    r = estimate_exit_probability(acc_platoon(2), cfg)
    assert len(r.rows) == 9
    assert r.rows[0].point == (1.0, -0.4) and r.rows[4].point == (1.25, 0.0) and r.rows[-1].point == (1.5, 0.4)


def test_simconfig_validation():
    for kw in ({"trials": 0}, {"horizon": -1}, {"initial": "corner"}, {"initial": "fixed"}, {"exit_mode": "all"}):
        with pytest.raises(InvalidParameterError):
            SimConfig(**kw)


# ------------------------------------------------------------ determinism
def test_rng_scalar_matches_vector():
    trials = np.arange(7)
    blocks, coords = [0, 0, 3, 5], [rng.coord(0, 0), rng.coord(0, 1), rng.coord(1, 0), rng.coord(2, 4)]
    V = rng.normals(123, trials, 4, blocks, coords)
    U = rng.uniforms(123, trials, 4, blocks, coords)
    for t in trials:
        for j, (b, c) in enumerate(zip(blocks, coords)):
            assert V[t, j] == rng.normal(123, int(t), b, 4, c)
            assert U[t, j] == rng.uniform(123, int(t), b, 4, c)


def test_rng_moments():
    z = rng.normals(7, np.arange(200_000), 0, [0], [0])[:, 0]
    assert abs(z.mean()) < 4 / np.sqrt(z.size) and abs(z.var() - 1) < 0.02


@pytest.mark.parametrize("variant", [1, 2])
def test_workers_and_chunking_do_not_change_report(variant):
    net = acc_platoon(5, variant=variant, sigma1=0.05, sigma2=0.05)
    base = SimConfig(trials=600, horizon=10, seed=9, chunk=128, grid_points=2)
    ref = estimate_exit_probability(net, base, bound=0.5)
    for kw in ({"workers": 4}, {"workers": 8, "chunk": 50}, {"chunk": 600}):
        r = estimate_exit_probability(net, dataclasses.replace(base, **kw), bound=0.5)
        assert r.render() == ref.render() and r.to_dict() == ref.to_dict()


@pytest.mark.skipif("cython" not in kernels.AVAILABLE, reason="compiled kernel not built")
def test_kernels_agree():
    net = acc_platoon(4, sigma1=0.05, sigma2=0.05)
    cfg = SimConfig(trials=500, horizon=10, seed=3, grid_points=2)
    rc = estimate_exit_probability(net, dataclasses.replace(cfg, kernel="cython", exit_mode=ANY))
    rn = estimate_exit_probability(net, dataclasses.replace(cfg, kernel="numpy", exit_mode=ANY))
    assert [r.events for r in rc.rows] == [r.events for r in rn.rows]
    assert sum(r.events for r in rn.rows) > 0
    ec = estimate_estimation_accuracy(net, 0.02, dataclasses.replace(cfg, kernel="cython"))
    en = estimate_estimation_accuracy(net, 0.02, dataclasses.replace(cfg, kernel="numpy"))
    assert [r.events for r in ec.rows] == [r.events for r in en.rows]


def test_seed_changes_outcome():
    net = scalar_net(a=0.9, sigma=0.3)
    cfg = SimConfig(trials=400, horizon=10, initial="fixed", initial_point=(0.0,))
    a, b = (estimate_exit_probability(net, dataclasses.replace(cfg, seed=s)).worst.events for s in (1, 2))
    assert a != b and a == estimate_exit_probability(net, dataclasses.replace(cfg, seed=1)).worst.events


# ------------------------------------------------------------ properties
@given(
    lo=st.floats(0.0, 0.9),
    width=st.floats(0.05, 1.0),
    grow_lo=st.floats(0.0, 0.5),
    grow_hi=st.floats(0.0, 0.5),
    seed=st.integers(0, 2**32),
)
def test_exit_monotone_in_unsafe_set(lo, width, grow_lo, grow_hi, seed):
    net = scalar_net(a=0.9, sigma=0.2)
    cfg = SimConfig(trials=40, horizon=6, seed=seed, initial="uniform", chunk=40)
    small = RegionSpec.box([[lo, lo + width]])
    big = RegionSpec.box([[lo - grow_lo, lo + width + grow_hi]])
    a = estimate_exit_probability(net, cfg, unsafe=small).worst
    b = estimate_exit_probability(net, cfg, unsafe=big).worst
    assert b.unsafe >= a.unsafe and b.events >= a.events


# ------------------------------------------------------------ fixtures
def test_quadratic_fixture_conservative_over_20_seeds():
    cert = fixture_cert("quadratic")
    delta = exit_probability_delta(cert.gamma, cert.lam, cert.kappa, cert.psi, 10)
    net = acc_platoon(1)
    for seed in range(20):
        r = estimate_exit_probability(net, SimConfig(trials=2000, horizon=10, seed=seed), bound=delta)
        assert r.verdict == CONSISTENT, r.render()


def test_csv_dump(tmp_path):
    path = tmp_path / "t.csv"
    n = dump_csv(acc_platoon(2), SimConfig(trials=5, horizon=3, initial="fixed", initial_point=(1.0, 0.0)), path, trials=3)
    lines = path.read_text().splitlines()
    assert lines[0] == "trial,k,block,d,v,d_hat,v_hat,u"
    assert n == len(lines) - 1 == 3 * 4 * 2
    assert lines[1].startswith("0,0,0,1.0,0.0,1.0,0.0,")


# reduced-scale throughput budget: 100 blocks x 10 steps x 1e3 trials x 9 initial points
THROUGHPUT_BUDGET_S = 30.0


def test_throughput_budget():
    net = acc_platoon(100)
    r = estimate_exit_probability(net, SimConfig(trials=1000, horizon=10, seed=0, exit_mode=ANY))
    assert len(r.rows) == 9 and r.runtime < THROUGHPUT_BUDGET_S
