"""Synthesize, calibrate and verify a polynomial barrier for one ACC vehicle.

The barrier is a linear combination of monomials in (x0, x1, xh0, xh1) up to
``--degree``. Coefficients come from a grid linear program:

    E[B(next)] <= k' B + p'          on grid(X x X) x grid(W x W)
    B >= 2 alpha(max(v^2, vh^2)) + 1e-6   on cut points of X x X
    B <= g                           on grid(Xa x Xa)
    B >= 1                           on grid(Xb x X)
    minimize g + T p'

The expectation rows are exact (Gaussian moments through the package's
expectation operator). Positivity rows start on a coarse grid and are refined
by cutting planes until B clears alpha on the whole calibration grid. The LP
solution only fixes the shape of B; the shipped constants come from the
package's own grid calibration at ``--resolution``, and the fixture is written
only if verification passes there and at every coarser ``--check`` resolution
(grid nodes are nested, so 21 is a subset of 41).

    python3 scripts/synthesize_acc_fixture.py --degree 2 --out src/pocbf/data/acc_quadratic.yaml

``--variant 2`` synthesizes an estimator-flavor barrier over (xh0, xh1) instead:
the measurement enters through the innovation ``y - C2 xh`` ranging over
``[-b, b]`` (``--innovation-band``), and the unsafe set is inflated by ``--eps``.

    python3 scripts/synthesize_acc_fixture.py --variant 2 --degree 2 --lp-resolution 41 --lp-w-points 9 \\
        --kappa-lp 0.7 --out src/pocbf/data/acc_quadratic_estimator.yaml
"""
from __future__ import annotations

import argparse
import itertools
import math
import sys
import time

import numpy as np
from scipy.optimize import linprog

from pocbf.certificate import (
    AUGMENTED,
    ESTIMATOR,
    BarrierCertificate,
    _estimator_next,
    _expected_next_augmented,
    calibrate_constants,
    verify_lcbf_augmented,
    verify_lcbf_estimator,
)
from pocbf.bounds import exit_probability_delta
from pocbf.config import dump_config
from pocbf.gains import GainFn
from pocbf.polyalg import Polynomial
from pocbf.regions import inflate_unsafe
from pocbf.sysmodel import ACC_CONTROLLERS, acc_block

VARS = ("x0", "x1", "xh0", "xh1")
EST_VARS = ("xh0", "xh1")


def monomials(degree: int, names=VARS) -> list[dict]:
    out = []
    for e in itertools.product(range(degree + 1), repeat=len(names)):
        if sum(e) <= degree:
            out.append({v: k for v, k in zip(names, e) if k})
    return out


def box_grid(box: list, r: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, r) if hi > lo else np.array([lo]) for lo, hi in box]
    return np.array(list(itertools.product(*axes)))


def region_grid(region, r: int) -> np.ndarray:
    return np.vstack([box_grid(list(zip(b.lo, b.hi)), r) for b in region.boxes])


def pairs(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.hstack([np.repeat(A, len(B), axis=0), np.tile(B, (len(A), 1))])


def basis_matrix(polys, cols: dict, n: int) -> np.ndarray:
    return np.column_stack([np.broadcast_to(np.asarray(p.eval(cols), dtype=float), (n,)) for p in polys])


def mono_values(G: np.ndarray, monos: list[dict], names=VARS) -> np.ndarray:
    cols = dict(zip(names, G.T))
    out = np.ones((len(G), len(monos)))
    for j, m in enumerate(monos):
        for v, k in m.items():
            out[:, j] *= cols[v] ** k
    return out


def alpha_cuts(c: np.ndarray, monos, X: np.ndarray, alpha, margin: float, limit: int = 4000) -> np.ndarray:
    """Points of the fine X x X grid where ``B < 2 alpha + margin``, worst first."""
    bad, val = [], []
    for a in range(0, len(X), max(1, 400_000 // len(X))):
        G = pairs(X[a : a + max(1, 400_000 // len(X))], X)
        r = mono_values(G, monos) @ c - 2 * alpha(np.maximum(G[:, 1] ** 2, G[:, 3] ** 2)) - margin
        k = r < 0
        bad.append(G[k])
        val.append(r[k])
    bad, val = np.vstack(bad), np.concatenate(val)
    return bad[np.argsort(val)[:limit]]


def solve(block, degree, kappa_lp, alpha, r, nw, horizon, r_level, r_fine, margin=1e-6):
    sub, est, ctrl = block.plant, block.estimator, block.controller
    monos = monomials(degree)
    basis = [Polynomial.from_monomials([(m, 1.0)]) for m in monos]
    X = region_grid(sub.state_region, r)
    XX = pairs(X, X)
    pts = {"x0": XX[:, 0], "x1": XX[:, 1], "xh0": XX[:, 2], "xh1": XX[:, 3]}
    n = len(XX)
    MB = mono_values(XX, monos)
    EB = [_expected_next_augmented(b, sub, est) for b in basis]
    wlo, whi = sub.internal_input_region.boxes[0].lo[1], sub.internal_input_region.boxes[0].hi[1]
    W = np.linspace(wlo, whi, nw)
    rows = []
    for w, wh in itertools.product(W, W):
        P = dict(pts, w0=0.0, w1=w, wh0=0.0, wh1=wh)
        P["u0"] = np.asarray(ctrl.evaluate(P)[0], dtype=float)
        rows.append(basis_matrix(EB, P, n) - kappa_lp * MB)
    Mdec = np.vstack(rows)
    XA = region_grid(sub.initial_region, r_level)
    Xb = pairs(region_grid(sub.unsafe_region, r_level), region_grid(sub.state_region, r_level))
    M = len(monos)
    lam_rows = np.hstack([-mono_values(Xb, monos), np.zeros((len(Xb), 2))])
    ga_rows = np.hstack([mono_values(pairs(XA, XA), monos), -np.ones((len(XA) ** 2, 1)), np.zeros((len(XA) ** 2, 1))])
    dec_rows = np.hstack([Mdec, np.zeros((len(Mdec), 1)), -np.ones((len(Mdec), 1))])
    cut = pairs(region_grid(sub.state_region, r_level), region_grid(sub.state_region, r_level))
    Xfine = region_grid(sub.state_region, r_fine)
    cost = np.zeros(M + 2)
    cost[M], cost[M + 1] = 1.0, float(horizon)
    for it in range(20):
        a_rows = np.hstack([-mono_values(cut, monos), np.zeros((len(cut), 2))])
        a_rhs = -(2 * alpha(np.maximum(cut[:, 1] ** 2, cut[:, 3] ** 2)) + margin)
        A_ub = np.vstack([dec_rows, a_rows, ga_rows, lam_rows])
        b_ub = np.concatenate([np.zeros(len(dec_rows)), a_rhs, np.zeros(len(ga_rows)), -np.ones(len(lam_rows))])
        res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=[(-1e4, 1e4)] * M + [(0, None)] * 2, method="highs")
        if res.status != 0:
            raise SystemExit(f"LP failed: {res.message}")
        c = np.array([float(f"{v:.12g}") if abs(v) > 1e-12 else 0.0 for v in res.x[:M]])
        new = alpha_cuts(c, monos, Xfine, alpha, 0.5 * margin)
        print(f"  LP round {it}: gamma {res.x[M]:.5g}, offset {res.x[M + 1]:.5g}, {len(new)} positivity cuts")
        if not len(new):
            break
        cut = np.vstack([cut, new])
    else:
        raise SystemExit("positivity cutting planes did not converge")
    terms = [(m, v) for m, v in zip(monos, c) if v != 0.0]
    return Polynomial.from_monomials(terms), res.x[M], res.x[M + 1]


def solve_estimator(block, degree, kappa_lp, alpha, r, nw, horizon, r_level, r_fine, eps, band, margin=1e-6):
    """Estimator flavor: the X grid is 2-d, so positivity is imposed on the fine grid directly."""
    sub, est, ctrl = block.plant, block.estimator, block.controller
    monos = monomials(degree, EST_VARS)
    mv = lambda G: mono_values(G, monos, EST_VARS)
    basis = [Polynomial.from_monomials([(m, 1.0)]) for m in monos]
    EB = [_estimator_next(b, sub, est, True) for b in basis]
    X = region_grid(sub.state_region, r)
    wlo, whi = sub.internal_input_region.boxes[0].lo[1], sub.internal_input_region.boxes[0].hi[1]
    rows = []
    for w, e in itertools.product(np.linspace(wlo, whi, nw), np.linspace(-band, band, 3)):
        P = {"xh0": X[:, 0], "xh1": X[:, 1], "wh0": 0.0, "wh1": w, "e0": e}
        P["u0"] = np.asarray(ctrl.evaluate(P)[0], dtype=float)
        rows.append(basis_matrix(EB, P, len(X)) - kappa_lp * mv(X))
    D = np.vstack(rows)
    XA = region_grid(sub.initial_region, r_level)
    XB = region_grid(inflate_unsafe(sub.unsafe_region, eps, sub.state_region), r_level)
    XF = region_grid(sub.state_region, r_fine)
    M = len(monos)
    A_ub = np.vstack([
        np.hstack([D, np.zeros((len(D), 1)), -np.ones((len(D), 1))]),
        np.hstack([mv(XA), -np.ones((len(XA), 1)), np.zeros((len(XA), 1))]),
        np.hstack([-mv(XB), np.zeros((len(XB), 2))]),
        np.hstack([-mv(XF), np.zeros((len(XF), 2))]),
    ])
    b_ub = np.concatenate([np.zeros(len(D) + len(XA)), -np.ones(len(XB)), -(2 * alpha(XF[:, 1] ** 2) + margin)])
    cost = np.zeros(M + 2)
    cost[M], cost[M + 1] = 1.0, float(horizon)
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=[(-1e4, 1e4)] * M + [(0, None)] * 2, method="highs")
    if res.status != 0:
        raise SystemExit(f"LP failed: {res.message}")
    c = [float(f"{v:.12g}") if abs(v) > 1e-12 else 0.0 for v in res.x[:M]]
    return Polynomial.from_monomials([(m, v) for m, v in zip(monos, c) if v != 0.0]), res.x[M], res.x[M + 1]


def sig_round(v: float, digits: int, up: bool) -> float:
    if v == 0:
        return 0.0
    q = 10.0 ** (math.floor(math.log10(abs(v))) - digits + 1)
    k = math.ceil(v / q) if up else math.floor(v / q)
    return float(f"{k * q:.{digits}g}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--degree", type=int, default=2)
    ap.add_argument("--variant", type=int, default=1, choices=sorted(ACC_CONTROLLERS))
    ap.add_argument("--kappa-lp", type=float, default=0.8)
    ap.add_argument("--alpha", type=float, default=1e-5)
    ap.add_argument("--rho", type=float, default=2e-8)
    ap.add_argument("--lp-resolution", type=int, default=11)
    ap.add_argument("--lp-w-points", type=int, default=3)
    ap.add_argument("--lp-level-resolution", type=int, default=11)
    ap.add_argument("--resolution", type=int, default=41, help="calibration resolution (the finest certified grid)")
    ap.add_argument("--check", type=int, nargs="*", default=[21], help="coarser verification resolutions")
    ap.add_argument("--horizon", type=int, default=10)
    ap.add_argument("--eps", type=float, default=0.01, help="accuracy radius (variant 2)")
    ap.add_argument("--innovation-band", type=float, default=0.1, help="innovation half-width (variant 2)")
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    block = acc_block(variant=args.variant)
    alpha, rho = GainFn(args.alpha, 1.0), GainFn(args.rho, 1.0)
    t0 = time.perf_counter()
    flavor = AUGMENTED if args.variant == 1 else ESTIMATOR
    lp = (block, args.degree, args.kappa_lp, alpha, args.lp_resolution, args.lp_w_points, args.horizon,
          args.lp_level_resolution, args.resolution)
    if flavor == AUGMENTED:
        B, g_lp, p_lp = solve(*lp)
        ekw = {}
    else:
        B, g_lp, p_lp = solve_estimator(*lp, args.eps, args.innovation_band)
        ekw = {"eps": args.eps, "innovation_band": args.innovation_band}
    print(f"LP: {B.nterms} terms, gamma {g_lp:.4g}, offset {p_lp:.4g} ({time.perf_counter() - t0:.1f} s)")

    sub, est, ctrl = block.plant, block.estimator, block.controller
    cal = calibrate_constants(B, sub, est, ctrl, alpha, rho, args.resolution, horizon=args.horizon, flavor=flavor, **ekw)
    if not cal.feasible:
        raise SystemExit("calibration infeasible")
    gamma, lam = sig_round(cal.gamma, 4, True), sig_round(cal.lam, 4, False)
    cert = BarrierCertificate(B, alpha, rho, cal.kappa, cal.psi, gamma, lam, flavor)
    delta = exit_probability_delta(gamma, lam, cal.kappa, cal.psi, args.horizon)
    print(f"calibrated: gamma {gamma}, lambda {lam}, kappa {cal.kappa:.4f}, psi {cal.psi:g}, delta {delta:.6f}")
    results = {}
    for res in sorted(set([args.resolution] + list(args.check))):
        t0 = time.perf_counter()
        if flavor == AUGMENTED:
            rep = verify_lcbf_augmented(cert, sub, est, ctrl, res)
        else:
            rep = verify_lcbf_estimator(cert, sub, est, ctrl, args.eps, res, innovation_band=args.innovation_band)
        print(rep.render())
        print(f"  ({time.perf_counter() - t0:.1f} s)")
        if not rep.passed:
            raise SystemExit(f"verification failed at resolution {res}; fixture not written")
        results[res] = {c.name: float(c.margin) for c in rep.conditions}

    doc = {
        "flavor": flavor,
        "variant": args.variant,
        "degree": args.degree,
        "B": B.to_text() + "\n",
        "alpha": alpha.to_dict(),
        "rho": rho.to_dict(),
        "kappa": round(float(cal.kappa), 12),
        "psi": float(cal.psi),
        "gamma": gamma,
        "lambda": lam,
        "verified_resolutions": sorted(results),
    }
    if flavor == ESTIMATOR:
        doc.update({"eps": args.eps, "innovation_band": args.innovation_band})
    cmd = " ".join(a for a in sys.argv[1:] if a != args.out and a != "--out")
    header = (
        f"# Generated by scripts/synthesize_acc_fixture.py {cmd}\n"
        f"# Grid-verified at resolutions {sorted(results)}; exit bound at T={args.horizon}: {delta:.6f}\n"
    )
    with open(args.out, "w") as fh:
        fh.write(header)
        fh.write(dump_config(doc))
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
