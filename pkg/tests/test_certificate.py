import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pocbf.bounds import exit_probability_delta
from pocbf.certificate import (
    ESTIMATOR,
    BarrierCertificate,
    SimulationCertificate,
    calibrate_constants,
    verify_lcbf_augmented,
    verify_lcbf_estimator,
    verify_matrix_ssf,
    verify_spsf,
)
from pocbf.config import REFERENCE_SSF, load_fixture
from pocbf.errors import InvalidCertificateError
from pocbf.gains import GainFn
from pocbf.grid import axis_points
from pocbf.polyalg import Polynomial
from pocbf.regions import RegionSpec
from pocbf.sysmodel import ACC_A, ACC_C2, ACC_K, ControllerSpec, EstimatorSpec, SubsystemSpec, acc_block

x, xh = Polynomial.variable("x0"), Polynomial.variable("xh0")
ALPHA, RHO = GainFn(1e-5), GainFn(2e-8)


def scalar(a=0.0, ah=0.0, k=0.0, sigma=0.0, msigma=0.0, X=(-1, 1), XA=(-0.1, 0.1), XB=(0.9, 1)):
    sub = SubsystemSpec.linear(
        [[a]], [[0.0]], [[1.0]], process_std=sigma, measurement_std=msigma,
        state_region=RegionSpec.box([X]), initial_region=RegionSpec.box([XA]), unsafe_region=RegionSpec.box([XB]),
    )
    est = EstimatorSpec.observer([[ah]], [[0.0]], [[k]], [[1.0]])
    return sub, est, ControllerSpec.affine([[0.0]])


def test_pure_noise_decrease_passes():
    sub, est, ctrl = scalar(sigma=0.1)
    cert = BarrierCertificate(x**2 + xh**2, ALPHA, GainFn.zero(), 0.5, 0.011, 0.021, 0.81)
    rep = verify_lcbf_augmented(cert, sub, est, ctrl, 21)
    assert rep.passed, rep.render()
    assert rep.condition("expected decrease").margin <= 0


def test_pass_is_sound_on_every_grid_point():
    sub, est, ctrl = scalar(sigma=0.1)
    cert = BarrierCertificate(x**2 + xh**2, ALPHA, GainFn.zero(), 0.5, 0.011, 0.021, 0.81)
    assert verify_lcbf_augmented(cert, sub, est, ctrl, 21).passed
    g = axis_points(-1, 1, 21)
    X, XH = np.meshgrid(g, g, indexing="ij")
    # next state is pure noise, so E[B(next)] = 0.01 everywhere
    assert np.all(0.01 - np.maximum(0.5 * (X**2 + XH**2), 0.011) <= 0)
    ga = axis_points(-0.1, 0.1, 21)
    assert np.max(ga[:, None] ** 2 + ga[None, :] ** 2) <= 0.021
    gb = axis_points(0.9, 1, 21)
    assert np.min(gb[:, None] ** 2 + g[None, :] ** 2) >= 0.81


def test_constant_barrier():
    sub, est, ctrl = scalar()
    with pytest.raises(InvalidCertificateError, match="K-infinity"):
        BarrierCertificate(Polynomial.constant(1.0), GainFn.zero(), GainFn.zero(), 0.5, 0.0, 1.0, 1.0)
    cert = BarrierCertificate(Polynomial.constant(1.0), ALPHA, GainFn.zero(), 0.5, 1.0, 0.5, 1.0)
    rep = verify_lcbf_augmented(cert, sub, est, ctrl, 5)
    c = rep.condition("initial set (gamma)")
    assert not c.passed and c.margin == pytest.approx(0.5) and c.witness is not None
    cert = BarrierCertificate(Polynomial.constant(1.0), ALPHA, GainFn.zero(), 0.5, 1.0, 1.0, 1.0)
    assert verify_lcbf_augmented(cert, sub, est, ctrl, 5).passed


def test_certificate_invariants():
    for kw in ({"kappa": 1.0}, {"kappa": 0.0}, {"lam": 0.0}, {"psi": -1.0}):
        args = dict(B=x**2, alpha=ALPHA, rho=RHO, kappa=0.5, psi=0.0, gamma=0.0, lam=1.0)
        args.update(kw)
        with pytest.raises(InvalidCertificateError):
            BarrierCertificate(**args)
    with pytest.raises(InvalidCertificateError, match="may not depend"):
        BarrierCertificate(x**2, ALPHA, RHO, 0.5, 0, 0, 1, ESTIMATOR)
    trusted = BarrierCertificate(None, ALPHA, RHO, 0.95, 0.001, 0.12, 1.0)
    sub, est, ctrl = scalar()
    with pytest.raises(InvalidCertificateError, match="constants-only"):
        verify_lcbf_augmented(trusted, sub, est, ctrl)


def test_failure_witness_reproduces():
    # x+ = 1.2 x leaves any small quadratic level set
    sub, est, ctrl = scalar(a=1.2, ah=1.2)
    cert = BarrierCertificate(x**2 + xh**2, ALPHA, GainFn.zero(), 0.9, 0.0, 0.02, 0.81)
    rep = verify_lcbf_augmented(cert, sub, est, ctrl, 11)
    c = rep.condition("expected decrease")
    assert not c.passed and c.margin > 0
    w = c.witness
    again = 1.44 * (w["x0"] ** 2 + w["xh0"] ** 2) - max(0.9 * (w["x0"] ** 2 + w["xh0"] ** 2), 0.0)
    assert again == pytest.approx(c.margin) and again > 0
    # refinement containing the witness still fails
    fine = verify_lcbf_augmented(cert, sub, est, ctrl, 21).condition("expected decrease")
    assert not fine.passed and fine.margin >= c.margin


def test_lipschitz_mode():
    sub, est, ctrl = scalar(sigma=0.1)
    cert = BarrierCertificate(x**2 + xh**2, ALPHA, GainFn.zero(), 0.5, 0.011, 0.03, 0.81)
    rep = verify_lcbf_augmented(cert, sub, est, ctrl, 21, lipschitz={"initial set (gamma)": 0.4})
    c = rep.condition("initial set (gamma)")
    # margin -0.01, half spacing 0.005: 0.4 * 0.005 = 0.002 < 0.01
    assert c.rigorous is True
    assert rep.condition("expected decrease").rigorous is None
    assert "continuum: certified" in rep.render()


# ------------------------------------------------------------ estimator


def test_estimator_zero_inflation_matches_plain_unsafe_set():
    sub, est, ctrl = scalar(sigma=0.1)
    cert = BarrierCertificate(xh**2, ALPHA, GainFn.zero(), 0.5, 0.02, 0.01, 0.81, ESTIMATOR)
    a = verify_lcbf_estimator(cert, sub, est, ctrl, 0.0, 21)
    c = a.condition("inflated unsafe (lambda)")
    assert c.margin == pytest.approx(0.0) and c.witness == {"xh0": 0.9}
    b = verify_lcbf_estimator(cert, sub, est, ctrl, 0.05, 21).condition("inflated unsafe (lambda)")
    assert not b.passed and b.witness == {"xh0": 0.85}


@pytest.mark.parametrize("degree", ["quadratic", "quartic"])
def test_acc_estimator_fixture(degree):
    fx = load_fixture(degree, variant=2)
    blk = acc_block(variant=2)
    cert = BarrierCertificate(
        Polynomial.from_text(fx["B"]), GainFn.from_value(fx["alpha"]), GainFn.from_value(fx["rho"]),
        fx["kappa"], fx["psi"], fx["gamma"], fx["lambda"], ESTIMATOR,
    )
    assert cert.kappa <= 0.95
    rep = verify_lcbf_estimator(
        cert, blk.plant, blk.estimator, blk.controller, fx["eps"], 21, innovation_band=fx["innovation_band"]
    )
    assert rep.passed, rep.render()


# ------------------------------------------------------------- SPSF / SSF


def test_matrix_ssf_examples():
    M = np.array([[2.0, 0.5], [0.5, 1.0]])
    # perfect one-step estimator: A = K C2
    m, ok = verify_matrix_ssf(M, [[1.0, 0.0], [0.0, 0.0]], [[1.0], [0.0]], [[1.0, 0.0]], 1.0, 0.4)
    assert ok and m == pytest.approx(0.4 * np.linalg.eigvalsh(M)[0])
    m, ok = verify_matrix_ssf(np.eye(2), 0.5 * np.eye(2), [[0.0], [0.0]], [[1.0, 0.0]], 1.0, 1.0)
    assert ok and m == pytest.approx(0.25)


def test_matrix_ssf_reference_values():
    M = np.array(REFERENCE_SSF["M"])
    m, ok = verify_matrix_ssf(M, ACC_A, ACC_K, ACC_C2, 1.0, 0.4)
    N = ACC_A - np.reshape(ACC_K, (2, 1)) @ ACC_C2
    oracle = np.linalg.eigvalsh(0.4 * M - 3 * N.T @ M @ N)[0]
    assert m == pytest.approx(oracle, rel=1e-12)
    assert -1e-4 <= m <= 0 and ok
    m2, ok2 = verify_matrix_ssf(M * 1.001, ACC_A, ACC_K, ACC_C2, 1.0, 0.4)
    assert m2 == pytest.approx(np.linalg.eigvalsh(1.001 * (0.4 * M - 3 * N.T @ M @ N))[0], rel=1e-12)


def test_matrix_ssf_errors():
    with pytest.raises(InvalidCertificateError):
        verify_matrix_ssf([[1.0, 0.2], [0.0, 1.0]], np.eye(2), [[0.0], [0.0]], [[1.0, 0.0]], 1.0, 0.5)
    with pytest.raises(ValueError):
        verify_matrix_ssf(np.eye(2), np.eye(2), [[0.0], [0.0]], [[1.0, 0.0]], 0.0, 0.5)
    with pytest.raises(InvalidCertificateError):
        SimulationCertificate.from_matrix([[1.0, 0.0], [0.0, -1.0]], GainFn(1, 2), GainFn.zero(), 0.5, 0.0)


def test_spsf_decoupled_identity():
    sigma = 0.2
    sub = SubsystemSpec.linear(
        np.zeros((2, 2)), [[0.0], [0.0]], [[1.0, 0.0]], process_std=sigma, state_region=RegionSpec.box([[-1, 1]] * 2)
    )
    est = EstimatorSpec.observer(np.zeros((2, 2)), [[0.0], [0.0]], [[0.0], [0.0]], [[1.0, 0.0]])
    cert = SimulationCertificate.from_matrix(np.eye(2), GainFn(0.5, 2), GainFn.zero(), 0.05, 2 * sigma**2)
    ctrl = ControllerSpec.affine([[0.0, 0.0]])
    rep = verify_spsf(cert, sub, est, ctrl, 11)
    # E[phi(next)] = trace of the noise covariance, whatever mu is
    c = rep.condition("expected contraction")
    assert c.passed and c.margin == pytest.approx(0.0, abs=1e-15)
    # condition (i) is tight on the diagonal x = xh, where expansion leaves roundoff
    assert verify_spsf(cert, sub, est, ctrl, 11, tol=1e-12).passed


def test_spsf_reference_pair_violates_lower_bound():
    blk = acc_block(variant=2)
    ssf = SimulationCertificate.from_matrix(
        REFERENCE_SSF["M"], GainFn(0.3, 2), GainFn(0.002, 2), REFERENCE_SSF["mu"], REFERENCE_SSF["c"]
    )
    rep = verify_spsf(ssf, blk.plant, blk.estimator, blk.controller, 5)
    c = rep.condition("lower bound (eps)")
    assert not c.passed
    w = c.witness
    e = np.array([w["x0"] - w["xh0"], w["x1"] - w["xh1"]])
    again = 0.3 * np.max(np.abs(e)) ** 2 - e @ np.array(REFERENCE_SSF["M"]) @ e
    assert again == pytest.approx(c.margin) and again > 0
    e = np.array([1.0, -1.0])
    assert e @ np.array(REFERENCE_SSF["M"]) @ e == pytest.approx(1e-4)


@pytest.mark.parametrize("X, passes", [((-1, 1), True), ((-10, 10), False)])
def test_scalar_spsf(X, passes):
    sigma = 1.0
    sub, est, ctrl = scalar(a=0.5, ah=0.5, sigma=sigma, X=X, XA=X, XB=X)
    cert = SimulationCertificate((x - xh) ** 2, GainFn(1, 2), GainFn.zero(), 0.3, 2 * sigma**2)
    rep = verify_spsf(cert, sub, est, ctrl, 41)
    assert rep.condition("expected contraction").passed is passes


# ------------------------------------------------------------ calibration


def test_calibrate_interval_example():
    sub, est, ctrl = scalar(a=0.5, ah=0.5, sigma=0.1, X=(0, 4), XA=(1, 1.5), XB=(3, 3.5))
    cal = calibrate_constants(x**2, sub, est, ctrl, ALPHA, GainFn.zero(), 21)
    assert cal.feasible
    assert (cal.gamma, cal.lam) == (2.25, 9.0)
    cert = cal.certificate(x**2, ALPHA, GainFn.zero())
    assert verify_lcbf_augmented(cert, sub, est, ctrl, 21).passed


def test_calibrate_infeasible_without_separation():
    sub, est, ctrl = scalar(X=(-1, 1), XA=(-0.1, 0.1), XB=(-0.1, 0.1))
    cal = calibrate_constants(x**2, sub, est, ctrl, ALPHA, GainFn.zero(), 5)
    assert not cal.feasible and cal.lam == 0


quads = st.tuples(st.floats(0.1, 2), st.floats(-0.1, 0.1), st.floats(0.1, 2), st.floats(-0.05, 0.05))


def _quad(q):
    a, b, c, d = q
    return a * x**2 + b * x * xh + c * xh**2 + d * x + 0.01


@given(quads, st.floats(1e-9, 1.0), st.floats(0.2, 0.9))
def test_calibration_tightness(q, frac, a):
    sub, est, ctrl = scalar(a=a, ah=a, sigma=0.05, X=(-1, 1), XA=(-0.3, 0.3), XB=(0.8, 1))
    B = _quad(q)
    cal = calibrate_constants(B, sub, est, ctrl, GainFn(1e-6), GainFn.zero(), 5)
    grid_a = axis_points(-0.3, 0.3, 5)
    grid_max = max(B.eval({"x0": s, "xh0": t}) for s in grid_a for t in grid_a)
    # equal up to summation order of the two evaluation paths
    assert cal.gamma == pytest.approx(grid_max, rel=1e-14)
    if not cal.feasible:
        return
    cert = cal.certificate(B, GainFn(1e-6), GainFn.zero())
    assert verify_lcbf_augmented(cert, sub, est, ctrl, 5).condition("initial set (gamma)").margin == 0.0
    lower = BarrierCertificate(B, cert.alpha, cert.rho, cert.kappa, cert.psi, cert.gamma * (1 - frac), cert.lam)
    c = verify_lcbf_augmented(lower, sub, est, ctrl, 5).condition("initial set (gamma)")
    assert not c.passed and c.witness == cal.gamma_at


@pytest.mark.filterwarnings("ignore::pocbf.bounds.VacuousBoundWarning")
@given(quads, st.floats(0.2, 0.9), st.sampled_from([0.5, 2.0, 3.0]))
def test_calibration_homogeneity(q, a, t):
    sub, est, ctrl = scalar(a=a, ah=a, sigma=0.05, X=(-1, 1), XA=(-0.3, 0.3), XB=(0.8, 1))
    B = _quad(q)
    c1 = calibrate_constants(B, sub, est, ctrl, GainFn(1e-6), RHO, 5, psi_grid=None)
    c2 = calibrate_constants(B * t, sub, est, ctrl, GainFn(1e-6 * t), RHO.scaled(t), 5, psi_grid=None)
    assert c2.feasible == c1.feasible
    assert c2.gamma == pytest.approx(t * c1.gamma, rel=1e-9)
    assert c2.lam == pytest.approx(t * c1.lam, rel=1e-9)
    if c1.feasible:
        assert c2.kappa == c1.kappa
        assert c2.psi == pytest.approx(t * c1.psi, rel=1e-9, abs=1e-15)
        d1 = exit_probability_delta(max(c1.gamma, 0), c1.lam, c1.kappa, c1.psi, 10)
        d2 = exit_probability_delta(max(c2.gamma, 0), c2.lam, c2.kappa, c2.psi, 10)
        assert d2 == pytest.approx(d1, rel=1e-9, abs=1e-15)
