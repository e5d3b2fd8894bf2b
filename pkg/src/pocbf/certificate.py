"""Barrier and simulation certificates, grid verification and calibration.

Every condition is turned into a residual that must be ``<= 0``; a report
carries the largest residual seen on the grid and the point where it occurs.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bounds import exit_probability_delta
from .errors import DimensionMismatchError, InvalidCertificateError, InvalidParameterError
from .gains import GainFn
from .grid import DEFAULT_MAX_POINTS, SplitPoly, axis_points, product_scan, scan_max
from .polyalg import Polynomial, gaussian_expectation
from .regions import BoxRegion, RegionSpec, inflate_unsafe
from .sysmodel import ControllerSpec, EstimatorSpec, SubsystemSpec, augment, names

__all__ = [
    "BarrierCertificate",
    "SimulationCertificate",
    "ConditionResult",
    "VerificationReport",
    "CalibrationResult",
    "verify_lcbf_augmented",
    "verify_lcbf_estimator",
    "verify_spsf",
    "verify_matrix_ssf",
    "calibrate_constants",
    "inflate_unsafe",
    "KAPPA_SWEEP",
    "PSI_SWEEP",
]

AUGMENTED = "augmented"
ESTIMATOR = "estimator"

#: Fixed sweep of decay rates used by calibration.
KAPPA_SWEEP = np.linspace(0.5, 0.99, 50)
#: Offsets are rounded up onto 1.0, 1.1, ..., 9.9 times each decade in [1e-6, 1].
PSI_SWEEP = np.unique(np.round(np.concatenate([np.arange(10, 100) / 10 * 10.0**e for e in range(-6, 0)] + [[1.0]]), 12))


def _unit_interval(v, nm):
    if not 0 < v < 1:
        raise InvalidCertificateError(f"{nm} must lie in (0,1), got {v}")


@dataclass(frozen=True)
class BarrierCertificate:
    """Local barrier ``B`` with gains and constants.

    ``B`` may be ``None`` for a trusted, constants-only certificate (used when
    only reference constants are available); such certificates compose and
    bound but cannot be verified.
    """

    B: Polynomial | None
    alpha: GainFn
    rho: GainFn
    kappa: float
    psi: float
    gamma: float
    lam: float
    flavor: str = AUGMENTED

    def __post_init__(self):
        if self.flavor not in (AUGMENTED, ESTIMATOR):
            raise InvalidCertificateError(f"unknown certificate flavor {self.flavor!r}")
        _unit_interval(self.kappa, "kappa")
        if not self.lam > 0:
            raise InvalidCertificateError(f"lambda must be > 0, got {self.lam}")
        if not (self.psi >= 0 and self.gamma >= 0):
            raise InvalidCertificateError("psi and gamma must be >= 0")
        if self.alpha.is_zero:
            raise InvalidCertificateError("alpha must be class K-infinity, not the zero gain")
        if self.B is not None:
            ok = ("x", "xh") if self.flavor == AUGMENTED else ("xh",)
            for v in self.B.variables:
                head = v.rstrip("0123456789")
                if head not in ok:
                    raise InvalidCertificateError(f"{self.flavor} barrier may not depend on {v!r}")

    @property
    def trusted_only(self) -> bool:
        return self.B is None

    def scaled(self, t: float) -> "BarrierCertificate":
        """Multiply B and every level-type quantity by ``t > 0``."""
        return BarrierCertificate(
            None if self.B is None else self.B * t,
            self.alpha.scaled(t),
            self.rho.scaled(t),
            self.kappa,
            self.psi * t,
            self.gamma * t,
            self.lam * t,
            self.flavor,
        )


@dataclass(frozen=True)
class SimulationCertificate:
    """Simulation function ``phi`` with gains ``eps``, ``varrho`` and ``mu``, ``c``."""

    phi: Polynomial | None
    eps_gain: GainFn
    varrho: GainFn
    mu: float
    c: float
    M: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        _unit_interval(self.mu, "mu")
        if not self.c >= 0:
            raise InvalidCertificateError(f"c must be >= 0, got {self.c}")
        if self.eps_gain.is_zero:
            raise InvalidCertificateError("eps gain must be class K-infinity, not the zero gain")
        if self.M is not None:
            M = np.atleast_2d(np.asarray(self.M, dtype=float))
            if M.shape[0] != M.shape[1] or not np.allclose(M, M.T, rtol=0, atol=1e-14):
                raise InvalidCertificateError("M must be a symmetric matrix")
            if np.linalg.eigvalsh(M)[0] <= 0:
                raise InvalidCertificateError("M must be positive definite")
            object.__setattr__(self, "M", M)
            if self.phi is None:
                object.__setattr__(self, "phi", quadratic_error_form(M))

    @classmethod
    def from_matrix(cls, M, eps_gain: GainFn, varrho: GainFn, mu: float, c: float) -> "SimulationCertificate":
        return cls(None, eps_gain, varrho, mu, c, np.asarray(M, dtype=float))


def quadratic_error_form(M: np.ndarray) -> Polynomial:
    """``(x - xh)^T M (x - xh)``."""
    n = M.shape[0]
    e = [Polynomial.variable(f"x{i}") - Polynomial.variable(f"xh{i}") for i in range(n)]
    out = Polynomial.zero()
    for i in range(n):
        for j in range(n):
            if M[i, j]:
                out = out + e[i] * e[j] * float(M[i, j])
    return out


# ---------------------------------------------------------------- reports
@dataclass(frozen=True)
class ConditionResult:
    name: str
    passed: bool
    margin: float
    witness: dict | None
    points: int
    rigorous: bool | None = None

    def render(self) -> str:
        tag = "pass" if self.passed else "FAIL"
        s = f"  {self.name:<28} {tag}  worst residual {self.margin:+.6e}  ({self.points} grid points)"
        if self.rigorous is not None:
            s += "  continuum: " + ("certified" if self.rigorous else "not certified")
        if self.witness is not None:
            s += "\n    at " + ", ".join(f"{k}={v:.6g}" for k, v in self.witness.items())
        return s


@dataclass(frozen=True)
class VerificationReport:
    kind: str
    resolution: object
    conditions: tuple[ConditionResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def condition(self, name: str) -> ConditionResult:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def render(self) -> str:
        head = f"{self.kind} verification at resolution {self.resolution}: {'PASS' if self.passed else 'FAIL'}"
        return "\n".join([head] + [c.render() for c in self.conditions])


def _spacing(region: RegionSpec, resolution) -> float:
    """Largest half grid spacing over all coordinates (infinity-norm cover radius)."""
    h = 0.0
    for b in region.boxes:
        for lo, hi in zip(b.lo, b.hi):
            if hi > lo:
                h = max(h, float(np.max(np.diff(axis_points(lo, hi, resolution if np.isscalar(resolution) else 2)))))
    return 0.5 * h


def _result(name, scan, tol, lipschitz, regions, resolution) -> ConditionResult:
    passed = scan.value <= tol
    rig = None
    if lipschitz is not None:
        rad = max(_spacing(r, resolution) for r in regions if r is not None)
        rig = bool(scan.value + lipschitz * rad <= 0)
    return ConditionResult(name, bool(passed), scan.value, dict(scan.witness), scan.points, rig)


# ------------------------------------------------------ residual plumbing
def _norm_sq(vals: dict, keys: Sequence[str], n: int) -> np.ndarray:
    if not keys:
        return np.zeros(n)
    return np.max(np.abs(np.stack([np.broadcast_to(vals[k], (n,)) for k in keys])), axis=0) ** 2


def _with_inputs(O: dict, ctrl: ControllerSpec) -> dict:
    O = dict(O)
    for j, u in enumerate(ctrl.evaluate(O)):
        O[f"u{j}"] = np.asarray(u, dtype=float)
    return O


def _split_eval(sp: SplitPoly, O, I, no, ni) -> np.ndarray:
    return sp.outer_matrix(O, no) @ sp.inner_matrix(I, ni).T


def _h1_norm_sq(sub: SubsystemSpec, vals: dict, prefix: str, n: int) -> np.ndarray:
    out = np.zeros(n)
    for p in sub.internal_output:
        if prefix == "xh":
            p = p.substitute({f"x{i}": Polynomial.variable(f"xh{i}") for i in range(sub.state_dim)}, partial=True)
        out = np.maximum(out, np.abs(np.broadcast_to(np.asarray(p.eval(vals), dtype=float), (n,))))
    return out**2


def _need_regions(sub: SubsystemSpec):
    if sub.initial_region is None or sub.unsafe_region is None:
        raise InvalidParameterError("subsystem must declare initial and unsafe regions")
    if sub.internal_input_dim and sub.internal_input_region is None:
        raise InvalidParameterError("subsystem with internal inputs must declare their region")


def _expected_next_augmented(B: Polynomial, sub: SubsystemSpec, est: EstimatorSpec) -> Polynomial:
    aug = augment(sub, est)
    n = sub.state_dim
    mapping = {f"x{i}": aug.plant_next[i] for i in range(n)}
    mapping.update({f"xh{i}": aug.estimator_next[i] for i in range(n)})
    return gaussian_expectation(B.substitute(mapping, partial=True), aug.noise_sigmas(sub))


def _aug_layout(sub: SubsystemSpec):
    n, p, m = sub.state_dim, sub.internal_input_dim, sub.external_input_dim
    xs, xh, ws, wh, us = names("x", n), names("xh", n), names("w", p), names("wh", p), names("u", m)
    return xs, xh, ws, wh, us


def _decrease_residual_augmented(cert, sub, est, ctrl, EB=None):
    """Residual of the expected-decrease condition over (xh, wh | x, w)."""
    xs, xh, ws, wh, us = _aug_layout(sub)
    EB = _expected_next_augmented(cert.B, sub, est) if EB is None else EB
    sp_e = SplitPoly(EB, xh + wh + us, xs + ws)
    sp_b = SplitPoly(cert.B, xh, xs)

    def parts(O, I, no, ni):
        O = _with_inputs(O, ctrl)
        ebv = _split_eval(sp_e, O, I, no, ni)
        bv = _split_eval(sp_b, O, I, no, ni)
        if cert.rho.is_zero or not ws:
            rt = None
        else:
            nw = np.maximum(_norm_sq(O, wh, no)[:, None], _norm_sq(I, ws, ni)[None, :])
            rt = cert.rho(nw)
        return ebv, bv, rt

    def residual(O, I, no, ni):
        ebv, bv, rt = parts(O, I, no, ni)
        rhs = np.maximum(cert.kappa * bv, cert.psi)
        if rt is not None:
            rhs = np.maximum(rhs, rt)
        return ebv - rhs

    outer = _prod(sub.state_region, sub.internal_input_region if ws else None)
    inner = _prod(sub.state_region, sub.internal_input_region if ws else None)
    return residual, parts, outer, xh + wh, inner, xs + ws


def _prod(a: RegionSpec | None, b: RegionSpec | None) -> RegionSpec | None:
    if a is None:
        return b
    if b is None:
        return a
    return a.product(b)


def verify_lcbf_augmented(
    cert: BarrierCertificate,
    sub: SubsystemSpec,
    est: EstimatorSpec,
    ctrl: ControllerSpec,
    resolution=21,
    *,
    tol: float = 0.0,
    lipschitz: dict | float | None = None,
    max_points: int = DEFAULT_MAX_POINTS,
    workers: int = 1,
) -> VerificationReport:
    """Check the four local barrier conditions on the augmented system.

    ``lipschitz`` (a number, or a dict keyed by condition name) bounds the
    residual's Lipschitz constant in the infinity norm; a condition is then
    additionally certified on the continuum when its grid margin beats
    ``L * half spacing``.
    """
    if cert.flavor != AUGMENTED:
        raise InvalidCertificateError("expected an augmented-flavor certificate")
    if cert.B is None:
        raise InvalidCertificateError("a constants-only certificate cannot be verified")
    _need_regions(sub)
    kw = dict(max_points=max_points, workers=workers)
    xs, xh, ws, wh, us = _aug_layout(sub)
    B = cert.B
    XX = sub.state_region.product(sub.state_region)
    L = (lambda k: lipschitz.get(k) if isinstance(lipschitz, dict) else lipschitz)

    sp_b = SplitPoly(B, xh, xs)
    X, XA, XB = sub.state_region, sub.initial_region, sub.unsafe_region

    def r_pos(O, I, no, ni):
        a = cert.alpha(np.maximum(_h1_norm_sq(sub, O, "xh", no)[:, None], _h1_norm_sq(sub, I, "x", ni)[None, :]))
        return a - _split_eval(sp_b, O, I, no, ni)

    out = []
    s = scan_max(r_pos, X, xh, X, xs, resolution, **kw)
    out.append(_result("lower bound (alpha)", s, tol, L("lower bound (alpha)"), [XX], resolution))
    s = scan_max(lambda O, I, no, ni: _split_eval(sp_b, O, I, no, ni) - cert.gamma, XA, xh, XA, xs, resolution, **kw)
    out.append(_result("initial set (gamma)", s, tol, L("initial set (gamma)"), [XA.product(XA)], resolution))
    s = scan_max(lambda O, I, no, ni: cert.lam - _split_eval(sp_b, O, I, no, ni), X, xh, XB, xs, resolution, **kw)
    out.append(_result("unsafe set (lambda)", s, tol, L("unsafe set (lambda)"), [XB.product(X)], resolution))
    residual, _, outer, on, inner, inn = _decrease_residual_augmented(cert, sub, est, ctrl)
    s = scan_max(residual, outer, on, inner, inn, resolution, **kw)
    out.append(_result("expected decrease", s, tol, L("expected decrease"), [outer, inner], resolution))
    return VerificationReport("augmented local barrier", resolution, tuple(out))


# ----------------------------------------------------- estimator flavor
def output_image(sub: SubsystemSpec) -> RegionSpec:
    """Interval image of ``X`` under ``C2 x + c2``."""
    boxes = []
    for b in sub.state_region.boxes:
        lo, hi = np.array(b.lo), np.array(b.hi)
        C = sub.output_matrix
        c = sub.output_offset
        ylo = np.where(C > 0, C * lo, C * hi).sum(axis=1) + c
        yhi = np.where(C > 0, C * hi, C * lo).sum(axis=1) + c
        boxes.append(BoxRegion(tuple(ylo), tuple(yhi)))
    return RegionSpec(tuple(boxes))


def _estimator_next(B: Polynomial, sub: SubsystemSpec, est: EstimatorSpec, band: bool) -> Polynomial:
    n, q = sub.state_dim, sub.output_dim
    mapping = {f"xh{i}": est.transition[i] for i in range(n)}
    nxt = B.substitute(mapping, partial=True)
    if band:
        rows = [
            Polynomial.linear({f"xh{j}": sub.output_matrix[i, j] for j in range(n)}, float(sub.output_offset[i]))
            + Polynomial.variable(f"e{i}")
            for i in range(q)
        ]
        nxt = nxt.substitute({f"y{i}": rows[i] for i in range(q)}, partial=True)
    # no plant noise enters the estimator once y is fixed; kept for generality
    return gaussian_expectation(nxt, {f"m{i}": float(s) for i, s in enumerate(sub.measurement_std)})


def _estimator_decrease(cert, sub, est, ctrl, output_region=None, innovation_band=None, EB=None):
    n, p, m, q = sub.state_dim, sub.internal_input_dim, sub.external_input_dim, sub.output_dim
    xh, wh, us = names("xh", n), names("wh", p), names("u", m)
    if innovation_band is not None:
        b = np.broadcast_to(np.asarray(innovation_band, dtype=float), (q,))
        inner = RegionSpec.box([[-v, v] for v in b])
        inn = names("e", q)
    else:
        inner = output_region if output_region is not None else output_image(sub)
        inn = names("y", q)
    EB = _estimator_next(cert.B, sub, est, innovation_band is not None) if EB is None else EB
    sp_e = SplitPoly(EB, xh + wh + us, inn)

    def parts(O, I, no, ni):
        O = _with_inputs(O, ctrl)
        ebv = _split_eval(sp_e, O, I, no, ni)
        bv = np.asarray(np.broadcast_to(cert.B.eval(O), (no,)), dtype=float)[:, None]
        rt = None if (cert.rho.is_zero or not wh) else cert.rho(_norm_sq(O, wh, no))[:, None]
        return ebv, bv, rt

    def residual(O, I, no, ni):
        ebv, bv, rt = parts(O, I, no, ni)
        rhs = np.maximum(cert.kappa * bv, cert.psi)
        if rt is not None:
            rhs = np.maximum(rhs, rt)
        return ebv - rhs

    outer = _prod(sub.state_region, sub.internal_input_region if wh else None)
    return residual, parts, outer, xh + wh, inner, inn


def verify_lcbf_estimator(
    cert: BarrierCertificate,
    sub: SubsystemSpec,
    est: EstimatorSpec,
    ctrl: ControllerSpec,
    eps: float,
    resolution=21,
    *,
    output_region: RegionSpec | None = None,
    innovation_band=None,
    tol: float = 0.0,
    lipschitz: dict | float | None = None,
    max_points: int = DEFAULT_MAX_POINTS,
    workers: int = 1,
) -> VerificationReport:
    """Check the estimator-side local barrier conditions.

    The measurement ranges over ``output_region`` (default: the image of
    ``X`` under ``C2``), or, with ``innovation_band = b``, over
    ``C2 xh + c2 + e`` with ``|e_i| <= b_i``.
    """
    if cert.flavor != ESTIMATOR:
        raise InvalidCertificateError("expected an estimator-flavor certificate")
    if cert.B is None:
        raise InvalidCertificateError("a constants-only certificate cannot be verified")
    _need_regions(sub)
    kw = dict(max_points=max_points, workers=workers)
    n = sub.state_dim
    xh = names("xh", n)
    B = cert.B
    X, XA = sub.state_region, sub.initial_region
    XBe = inflate_unsafe(sub.unsafe_region, eps, X)
    L = (lambda k: lipschitz.get(k) if isinstance(lipschitz, dict) else lipschitz)

    def bval(O, no):
        return np.asarray(np.broadcast_to(B.eval(O), (no,)), dtype=float)[:, None]

    out = []
    s = scan_max(lambda O, I, no, ni: cert.alpha(_h1_norm_sq(sub, O, "xh", no))[:, None] - bval(O, no), X, xh, resolution=resolution, **kw)
    out.append(_result("lower bound (alpha)", s, tol, L("lower bound (alpha)"), [X], resolution))
    s = scan_max(lambda O, I, no, ni: bval(O, no) - cert.gamma, XA, xh, resolution=resolution, **kw)
    out.append(_result("initial set (gamma)", s, tol, L("initial set (gamma)"), [XA], resolution))
    s = scan_max(lambda O, I, no, ni: cert.lam - bval(O, no), XBe, xh, resolution=resolution, **kw)
    out.append(_result("inflated unsafe (lambda)", s, tol, L("inflated unsafe (lambda)"), [XBe], resolution))
    residual, _, outer, on, inner, inn = _estimator_decrease(cert, sub, est, ctrl, output_region, innovation_band)
    s = scan_max(residual, outer, on, inner, inn, resolution, **kw)
    out.append(_result("expected decrease", s, tol, L("expected decrease"), [outer, inner], resolution))
    return VerificationReport("estimator local barrier", resolution, tuple(out))


# ------------------------------------------------------------ SPSF / SSF
def verify_spsf(
    cert: SimulationCertificate,
    sub: SubsystemSpec,
    est: EstimatorSpec,
    ctrl: ControllerSpec,
    resolution=21,
    *,
    tol: float = 0.0,
    lipschitz: dict | float | None = None,
    max_points: int = DEFAULT_MAX_POINTS,
    workers: int = 1,
) -> VerificationReport:
    """Check ``eps(||x - xh||) <= phi`` and the expected contraction of ``phi``."""
    if cert.phi is None:
        raise InvalidCertificateError("a constants-only simulation certificate cannot be verified")
    if sub.internal_input_dim and sub.internal_input_region is None:
        raise InvalidParameterError("subsystem with internal inputs must declare their region")
    kw = dict(max_points=max_points, workers=workers)
    xs, xh, ws, wh, us = _aug_layout(sub)
    X = sub.state_region
    phi = cert.phi
    sp_p = SplitPoly(phi, xh, xs)
    L = (lambda k: lipschitz.get(k) if isinstance(lipschitz, dict) else lipschitz)

    def r_low(O, I, no, ni):
        err = np.zeros((no, ni))
        for a, b in zip(xh, xs):
            err = np.maximum(err, np.abs(I[b][None, :] - O[a][:, None]))
        return cert.eps_gain(err) - _split_eval(sp_p, O, I, no, ni)

    out = []
    s = scan_max(r_low, X, xh, X, xs, resolution, **kw)
    out.append(_result("lower bound (eps)", s, tol, L("lower bound (eps)"), [X.product(X)], resolution))

    aug = augment(sub, est)
    n = sub.state_dim
    mapping = {f"x{i}": aug.plant_next[i] for i in range(n)}
    mapping.update({f"xh{i}": aug.estimator_next[i] for i in range(n)})
    EP = gaussian_expectation(phi.substitute(mapping, partial=True), aug.noise_sigmas(sub))
    sp_e = SplitPoly(EP, xh + wh + us, xs + ws)

    def r_dec(O, I, no, ni):
        O = _with_inputs(O, ctrl)
        rhs = np.maximum(cert.mu * _split_eval(sp_p, O, I, no, ni), cert.c)
        if ws and not cert.varrho.is_zero:
            d = np.zeros((no, ni))
            for a, b in zip(wh, ws):
                d = np.maximum(d, np.abs(I[b][None, :] - O[a][:, None]))
            rhs = np.maximum(rhs, cert.varrho(d))
        return _split_eval(sp_e, O, I, no, ni) - rhs

    W = sub.internal_input_region if ws else None
    outer, inner = _prod(X, W), _prod(X, W)
    s = scan_max(r_dec, outer, xh + wh, inner, xs + ws, resolution, **kw)
    out.append(_result("expected contraction", s, tol, L("expected contraction"), [outer, inner], resolution))
    return VerificationReport("simulation function", resolution, tuple(out))


#: Relative tolerance of :func:`verify_matrix_ssf`.
SSF_REL_TOL = 1e-4


def matrix_ssf_margin(M, A, K, C2, pi_tilde: float, mu: float) -> float:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1] or not np.allclose(M, M.T, rtol=0, atol=1e-14):
        raise InvalidCertificateError("M must be symmetric")
    if not pi_tilde > 0:
        raise InvalidParameterError(f"pi_tilde must be > 0, got {pi_tilde}")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    K = np.reshape(np.asarray(K, dtype=float), (A.shape[0], -1))
    C2 = np.atleast_2d(np.asarray(C2, dtype=float))
    N = A - K @ C2
    if N.shape != M.shape:
        raise DimensionMismatchError(f"A - K C2 is {N.shape}, M is {M.shape}")
    S = mu * M - (1.0 + 2.0 / pi_tilde) * N.T @ M @ N
    return float(np.linalg.eigvalsh(0.5 * (S + S.T))[0])


def verify_matrix_ssf(M, A, K, C2, pi_tilde: float, mu: float, tol: float | None = None) -> tuple[float, bool]:
    """Smallest eigenvalue of ``mu M - (1 + 2/pi) N^T M N``, ``N = A - K C2``.

    Passes when the margin is ``>= -tol``; ``tol`` defaults to
    ``SSF_REL_TOL * ||M||_2``, which absorbs 4-decimal rounding of ``M``.
    """
    margin = matrix_ssf_margin(M, A, K, C2, pi_tilde, mu)
    if tol is None:
        tol = SSF_REL_TOL * float(np.linalg.norm(np.atleast_2d(np.asarray(M, dtype=float)), 2))
    return margin, bool(margin >= -tol)


# ------------------------------------------------------------ calibration
@dataclass(frozen=True)
class CalibrationResult:
    feasible: bool
    gamma: float
    lam: float
    kappa: float | None
    psi: float | None
    delta: float | None
    gamma_at: dict
    lam_at: dict
    witness: dict | None = None
    psi_required: np.ndarray | None = field(default=None, compare=False, repr=False)

    def certificate(self, B: Polynomial, alpha: GainFn, rho: GainFn, flavor: str = AUGMENTED) -> BarrierCertificate:
        if not self.feasible:
            raise InvalidCertificateError("calibration was infeasible")
        return BarrierCertificate(B, alpha, rho, self.kappa, self.psi, self.gamma, self.lam, flavor)


def _quiet_delta(g, lam, k, psi, T) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return exit_probability_delta(g, lam, k, psi, T)


def _round_up(v: float, grid) -> float | None:
    if grid is None:
        return max(v, 0.0)
    if v <= 0:
        return 0.0
    i = int(np.searchsorted(grid, v, side="left"))
    return float(grid[i]) if i < len(grid) else None


def calibrate_constants(
    B: Polynomial,
    sub: SubsystemSpec,
    est: EstimatorSpec,
    ctrl: ControllerSpec,
    alpha: GainFn,
    rho: GainFn,
    resolution=21,
    *,
    flavor: str = AUGMENTED,
    eps: float = 0.0,
    output_region: RegionSpec | None = None,
    innovation_band=None,
    kappas=KAPPA_SWEEP,
    psi_grid=PSI_SWEEP,
    horizon: int = 10,
    max_points: int = DEFAULT_MAX_POINTS,
    workers: int = 1,
) -> CalibrationResult:
    """Grid-tight constants for a fixed ``B``.

    ``gamma`` and ``lam`` are the grid max on the initial set and grid min on
    the unsafe set. For each ``kappa`` in the sweep, the smallest admissible
    ``psi`` is computed exactly from per-point thresholds and rounded up onto
    ``psi_grid`` (``None`` keeps the exact value); among feasible pairs the
    one with the smallest exit bound at ``horizon`` is returned.
    """
    _need_regions(sub)
    kw = dict(max_points=max_points, workers=workers)
    kappas = np.asarray(kappas, dtype=float)
    n = sub.state_dim
    xs, xh = names("x", n), names("xh", n)
    X, XA, XB = sub.state_region, sub.initial_region, sub.unsafe_region
    if flavor == AUGMENTED:
        sp_b = SplitPoly(B, xh, xs)
        f = lambda O, I, no, ni: _split_eval(sp_b, O, I, no, ni)
        hi = scan_max(f, XA, xh, XA, xs, resolution, **kw)
        lo = scan_max(lambda *a: -f(*a), X, xh, XB, xs, resolution, **kw)
        probe = BarrierCertificate(B, alpha, rho, 0.5, 0.0, 0.0, 1.0, AUGMENTED)
        _, parts, outer, on, inner, inn = _decrease_residual_augmented(probe, sub, est, ctrl)
    elif flavor == ESTIMATOR:
        f = lambda O, I, no, ni: np.asarray(np.broadcast_to(B.eval(O), (no,)), dtype=float)[:, None]
        hi = scan_max(f, XA, xh, resolution=resolution, **kw)
        lo = scan_max(lambda *a: -f(*a), inflate_unsafe(XB, eps, X), xh, resolution=resolution, **kw)
        probe = BarrierCertificate(B, alpha, rho, 0.5, 0.0, 0.0, 1.0, ESTIMATOR)
        _, parts, outer, on, inner, inn = _estimator_decrease(probe, sub, est, ctrl, output_region, innovation_band)
    else:
        raise InvalidParameterError(f"unknown flavor {flavor!r}")
    gamma, lam = hi.value, -lo.value
    K = len(kappas)

    def fn(O, I, no, ni):
        ebv, bv, rt = parts(O, I, no, ni)
        ebv = ebv.ravel()
        bv = np.broadcast_to(bv, (no, ni)).ravel()
        need = ebv > 0
        if rt is not None:
            need &= ebv > np.broadcast_to(rt, (no, ni)).ravel()
        idx = np.full(ebv.shape, K, dtype=np.int64)
        pos = need & (bv > 0)
        t = np.divide(ebv, bv, out=np.full(ebv.shape, np.inf), where=pos)
        idx[pos] = np.searchsorted(kappas, t[pos], side="left")
        # guard against rounding in ebv / bv: recheck the first admissible kappa
        chk = pos & (idx < K)
        k_at = kappas[np.minimum(idx, K - 1)]
        bump = chk & (ebv > k_at * bv)
        idx[bump] += 1
        bins = np.full(K + 1, -np.inf)
        np.maximum.at(bins, idx[need], ebv[need])
        # witness: the binding point of the largest kappa
        top = need & (idx == K)
        if np.any(top):
            j = int(np.flatnonzero(top)[np.argmax(ebv[top])])
            a, b = divmod(j, ni)
            w = (float(ebv[j]), tuple(float(O[v][a]) for v in on) + tuple(float(I[v][b]) for v in inn))
        else:
            w = None
        return bins, w

    results, _ = product_scan(fn, outer, on, inner, inn, resolution, **kw)
    bins = np.full(K + 1, -np.inf)
    wit = None
    for b, w in results:
        bins = np.maximum(bins, b)
        if w is not None and (wit is None or w[0] > wit[0] or (w[0] == wit[0] and w[1] < wit[1])):
            wit = w
    # psi needed for kappas[j] = max over bins j+1..K
    suffix = np.maximum.accumulate(bins[::-1])[::-1]
    psi_req = np.maximum(suffix[1:], 0.0)
    witness = None if wit is None else dict(zip(tuple(on) + tuple(inn), wit[1]))
    if not lam > 0:
        return CalibrationResult(False, gamma, lam, None, None, None, hi.witness, lo.witness, lo.witness, psi_req)
    best = None
    g = max(gamma, 0.0)
    for j, k in enumerate(kappas):
        psi = _round_up(float(psi_req[j]), psi_grid)
        if psi is None:
            continue
        d = 1.0 if g > lam else _quiet_delta(g, lam, float(k), psi, horizon)
        if best is None or d < best[0]:
            best = (d, float(k), psi)
    if best is None:
        return CalibrationResult(False, gamma, lam, None, None, None, hi.witness, lo.witness, witness, psi_req)
    d, k, psi = best
    return CalibrationResult(True, gamma, lam, k, psi, d, hi.witness, lo.witness, witness, psi_req)
