"""Command-line front end: ``pocbf {verify,compose,bound,simulate,acc}``."""
from __future__ import annotations

import argparse
import sys
import time
import warnings

from . import __version__
from .bounds import VacuousBoundWarning, combined_bound, delta_branch, estimation_accuracy_theta, exit_probability_delta
from .certificate import (
    AUGMENTED,
    verify_lcbf_augmented,
    verify_lcbf_estimator,
    verify_matrix_ssf,
    verify_spsf,
)
from .composition import (
    build_gain_matrix,
    check_small_gain,
    compose_cbf,
    compose_ssf,
    find_scalings,
    spotcheck_composed_condition,
)
from .config import ACC_FIXTURES, ProjectConfig, acc_config, build_config, dump_config, load_config
from .errors import ConfigError, PocbfError
from .gains import GainFn
from .montecarlo import SimConfig, dump_columns, dump_csv, estimate_exit_probability

OK, FAIL, USAGE = 0, 1, 2


class _Out:
    """Collects report lines; the report is printed once, runtime goes to stderr."""

    def __init__(self):
        self.lines: list[str] = []

    def __call__(self, s: str = ""):
        self.lines.extend(s.splitlines() or [""])

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


def _header(out: _Out, cmd: str, cfg: ProjectConfig | None, seed=None):
    parts = [f"pocbf {__version__}", cmd]
    if cfg is not None:
        parts.append(f"config {cfg.hash}")
    if seed is not None:
        parts.append(f"seed {seed}")
    out("# " + " | ".join(parts))


def _need_config(args) -> ProjectConfig:
    if not getattr(args, "config", None):
        raise ConfigError("this subcommand needs --config PATH")
    return load_config(args.config)


def _resolution(args, cfg) -> int:
    r = getattr(args, "resolution", None)
    return int(r) if r is not None else int(cfg.verification.get("resolution", 21))


def _workers(args, default: int = 1) -> int:
    w = getattr(args, "workers", None)
    return default if w is None else int(w)


def _block_label(cfg: ProjectConfig, t: int) -> str:
    n = cfg.block_template.count(t)
    return f"block '{cfg.templates[t]}' (x{n})"


# ---------------------------------------------------------------- verify
def _run_verification(cfg: ProjectConfig, args, out: _Out) -> bool:
    res = _resolution(args, cfg)
    tol = float(cfg.verification.get("tolerance", 0.0))
    lip = cfg.verification.get("lipschitz")
    kw = dict(tol=tol, lipschitz=lip, workers=_workers(args))
    if "max_points" in cfg.verification:
        kw["max_points"] = int(cfg.verification["max_points"])
    ok = True
    any_cert = False
    for t in range(len(cfg.templates)):
        blk = cfg.template_block(t)
        cert, opts = cfg.barrier[t], cfg.barrier_opts[t]
        if cert is not None:
            any_cert = True
            out(f"{_block_label(cfg, t)}: barrier certificate ({cert.flavor})")
            if cert.trusted_only:
                out("  trusted constants-only certificate: not verified")
            elif cert.flavor == AUGMENTED:
                rep = verify_lcbf_augmented(cert, blk.plant, blk.estimator, blk.controller, res, **kw)
                out("  " + rep.render().replace("\n", "\n  "))
                ok &= rep.passed
            else:
                rep = verify_lcbf_estimator(
                    cert, blk.plant, blk.estimator, blk.controller, opts["eps"], res,
                    output_region=opts["output_region"], innovation_band=opts["innovation_band"], **kw,
                )
                out("  " + rep.render().replace("\n", "\n  "))
                ok &= rep.passed
        sc, sopts = cfg.simulation_certs[t], cfg.ssf_opts[t]
        if sc is not None:
            any_cert = True
            out(f"{_block_label(cfg, t)}: simulation function")
            if sc.M is not None:
                mats = blk.estimator.matrices
                if mats is None:
                    raise ConfigError("a matrix simulation function needs an observer-form estimator")
                margin, passed = verify_matrix_ssf(
                    sc.M, mats["A"], mats["K"], mats["C2"], sopts["pi_tilde"], sc.mu, cfg.verification.get("ssf_tolerance")
                )
                out(f"  matrix inequality margin {margin:+.6e} (pi_tilde={sopts['pi_tilde']:g}, mu={sc.mu:g}): {'pass' if passed else 'FAIL'}")
                ok &= passed
            elif sc.phi is None:
                out("  trusted constants-only certificate: not verified")
            else:
                rep = verify_spsf(sc, blk.plant, blk.estimator, blk.controller, res, **kw)
                out("  " + rep.render().replace("\n", "\n  "))
                ok &= rep.passed
    if not any_cert:
        out("no certificates declared")
    return ok


def cmd_verify(args) -> int:
    cfg = _need_config(args)
    out = _Out()
    _header(out, "verify", cfg)
    ok = _run_verification(cfg, args, out)
    out(f"verification: {'PASS' if ok else 'FAIL'}")
    args._report = out.text()
    return OK if ok else FAIL


# --------------------------------------------------------------- compose
def _compose(cfg: ProjectConfig, args, out: _Out):
    """Composed barrier (or None) and composed simulation function (or None)."""
    n = cfg.network.size
    per_block = [cfg.barrier[t] for t in cfg.block_template]
    if any(c is None for c in per_block):
        missing = sorted({cfg.templates[t] for t in cfg.block_template if cfg.barrier[t] is None})
        raise ConfigError(f"no barrier certificate for block(s) {missing}")
    if not getattr(args, "trust", False) and any(c.B is not None for c in per_block):
        out("local verification (use --trust to skip):")
        sub = _Out()
        ok = _run_verification(cfg, args, sub)
        out("  " + sub.text().rstrip("\n").replace("\n", "\n  "))
        if not ok:
            out("composition refused: a local certificate failed verification")
            return None, None, False
    G = build_gain_matrix(per_block, cfg.network)
    out(G.render())
    sg = check_small_gain(G)
    out(sg.render())
    if not sg.passed:
        return None, None, False
    s = find_scalings(G, sg)
    if n == 1:
        out("single block: the composed certificate is the local one (pass-through)")
    lin = "identity" if all(abs(v - 1.0) < 1e-15 for v in s) else "linear"
    out(f"scalings: {lin}" + ("" if lin == "identity" else f", s = [{', '.join(f'{v:.6g}' for v in s[:8])}{', ...' if n > 8 else ''}]"))
    cbf = compose_cbf(per_block, s, cfg.network)
    out(cbf.render())
    ssf = None
    sims = [cfg.simulation_certs[t] for t in cfg.block_template]
    if all(c is not None for c in sims):
        Gs = build_gain_matrix(sims, cfg.network)
        sgs = check_small_gain(Gs)
        out("simulation functions: " + sgs.render())
        if not sgs.passed:
            return cbf, None, False
        ssf = compose_ssf(sims, find_scalings(Gs, sgs), cfg.network)
        out(ssf.render())
    return cbf, ssf, True


def cmd_compose(args) -> int:
    cfg = _need_config(args)
    out = _Out()
    seed = getattr(args, "seed", None)
    _header(out, "compose", cfg, seed if args.spotcheck else None)
    cbf, _, ok = _compose(cfg, args, out)
    if ok and args.spotcheck:
        sc = cfg.verification.get("spotcheck", {})
        if any(c.B is None for c in cbf.certs):
            raise ConfigError("the spot check needs barrier polynomials, not constants-only certificates")
        rep = spotcheck_composed_condition(
            cbf, cfg.network, samples=int(sc.get("samples", 200)), inner=int(sc.get("inner", 4000)),
            seed=int(seed if seed is not None else sc.get("seed", 0)), workers=_workers(args),
        )
        out(rep.render())
        ok = rep.passed
    args._report = out.text()
    return OK if ok else FAIL


# ----------------------------------------------------------------- bound
def _bound_lines(out: _Out, gamma, lam, kappa, psi, T, theta_args=None, delta=None, theta=None):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", VacuousBoundWarning)
        if delta is None:
            delta = exit_probability_delta(gamma, lam, kappa, psi, T)
            out(f"exit bound delta = {delta:.10g} (horizon {T}, branch {delta_branch(lam, kappa, psi)})")
        else:
            out(f"exit bound delta = {delta:.10g} (given)")
        if theta is None and theta_args is not None:
            theta = estimation_accuracy_theta(*theta_args, T)
            out(f"estimation bound theta = {theta:.10g} (eps = {theta_args[2]:g})")
        elif theta is not None:
            out(f"estimation bound theta = {theta:.10g} (given)")
    total = delta if theta is None else combined_bound(delta, theta)
    if theta is not None:
        out(f"combined bound delta + theta = {total:.10g}")
        if total >= 1.0:
            out("warning: the combined bound is vacuous")
    out(f"safety probability >= {1.0 - total:.6%}")
    for w in caught:
        out(f"warning: {w.message}")
    return total


def cmd_bound(args) -> int:
    out = _Out()
    direct = [args.gamma, args.lam, args.kappa, args.psi]
    if args.delta is not None:
        _header(out, "bound", None)
        _bound_lines(out, None, None, None, None, None, delta=args.delta, theta=args.theta)
    elif any(v is not None for v in direct):
        if any(v is None for v in direct):
            raise ConfigError("direct invocation needs --gamma, --lambda, --kappa and --psi")
        _header(out, "bound", None)
        T = 10 if args.horizon is None else args.horizon
        theta_args = None
        if args.mu is not None:
            gain = GainFn(args.eps_coef, args.eps_power)
            theta_args = (args.phi0, gain, args.eps, args.mu, args.c)
        _bound_lines(out, args.gamma, args.lam, args.kappa, args.psi, T, theta_args, theta=args.theta)
    else:
        cfg = _need_config(args)
        _header(out, "bound", cfg)
        args.trust = True
        cbf, ssf, ok = _compose(cfg, args, out)
        if not ok:
            args._report = out.text()
            return FAIL
        T = int(args.horizon if args.horizon is not None else cfg.bound.get("horizon", 10))
        theta_args = None
        if ssf is not None:
            theta_args = (float(cfg.bound.get("phi0", 0.0)), ssf.certificate.eps_gain, float(cfg.bound.get("eps", 0.0)), ssf.mu, ssf.c)
        _bound_lines(out, cbf.gamma, cbf.lam, cbf.kappa, cbf.psi, T, theta_args)
    args._report = out.text()
    return OK


# -------------------------------------------------------------- simulate
def _sim_config(cfg: ProjectConfig, args) -> SimConfig:
    d = {k: v for k, v in cfg.simulation.items() if k != "csv_trials"}
    for k in ("initial_point", "estimator_offset"):
        if k in d:
            d[k] = tuple(d[k])
    if getattr(args, "seed", None) is not None:
        d["seed"] = int(args.seed)
    if getattr(args, "trials", None) is not None:
        d["trials"] = int(args.trials)
    d["workers"] = _workers(args)
    return SimConfig(**d)


def cmd_simulate(args) -> int:
    cfg = _need_config(args)
    sc = _sim_config(cfg, args)
    out = _Out()
    _header(out, "simulate", cfg, sc.seed)
    bound = None
    if any(c is not None for c in cfg.barrier):
        args.trust = True
        sub = _Out()
        cbf, ssf, ok = _compose(cfg, args, sub)
        if ok:
            T = sc.horizon
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", VacuousBoundWarning)
                delta = exit_probability_delta(cbf.gamma, cbf.lam, cbf.kappa, cbf.psi, T)
                bound = delta
                if ssf is not None:
                    theta = estimation_accuracy_theta(
                        float(cfg.bound.get("phi0", 0.0)), ssf.certificate.eps_gain, float(cfg.bound.get("eps", 0.0)), ssf.mu, ssf.c, T
                    )
                    bound = combined_bound(delta, theta)
                    out(f"certified: delta {delta:.6f} + theta {theta:.6f} -> bound {bound:.6f} (horizon {T})")
                else:
                    out(f"certified: delta {delta:.6f} (horizon {T})")
        else:
            out("no certified bound: composition failed")
    rep = estimate_exit_probability(cfg.network, sc, bound)
    out(rep.render())
    if bound is not None:
        w = rep.worst
        out(f"certified vs empirical: bound {bound:.6f}, worst frequency {w.frequency:.6f}, worst lower limit {max(r.ci[0] for r in rep.rows):.6f}")
    if getattr(args, "csv", None):
        n = dump_csv(cfg.network, sc, args.csv, trials=int(cfg.simulation.get("csv_trials", 10)))
        out(f"trajectories: {n} rows written to {args.csv}")
    if getattr(args, "columns", None):
        files = dump_columns(cfg.network, sc, args.columns, trials=int(cfg.simulation.get("csv_trials", 10)), block=args.block)
        out(f"plot columns: {', '.join(files)}")
    args._report = out.text()
    args._runtime = rep.runtime
    return FAIL if rep.verdict == "violation" else OK


# ------------------------------------------------------------------- acc
def cmd_acc(args) -> int:
    raw = acc_config(args.N, args.tau, args.variant, args.sigma1, args.sigma2, args.certificate, args.trials or 10_000)
    build_config(raw, "<generated>")  # the generator must always produce a loadable config
    text = dump_config(raw)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
        args._report = f"wrote {args.output} ({args.N} vehicles, controller variant {args.variant}, certificate {args.certificate})\n"
    else:
        args._report = text
    return OK


# ---------------------------------------------------------------- parser
def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="project config (YAML)")
    p.add_argument("--seed", type=int, default=S, help="override the master seed")
    p.add_argument("--workers", type=int, default=S, help="worker threads")
    p.add_argument("--csv", default=S, help="write simulated trajectories to this CSV file")
    p.add_argument("--resolution", type=int, default=S, help="grid points per axis for verification")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="pocbf", description=__doc__.splitlines()[0], parents=[common])
    ap.add_argument("--version", action="version", version=f"pocbf {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", parents=[common], help="check every declared local certificate")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("compose", parents=[common], help="small-gain check and network certificate")
    p.add_argument("--trust", action="store_true", help="skip local verification")
    p.add_argument("--spotcheck", action="store_true", help="Monte Carlo check of the composed decrease condition")
    p.set_defaults(fn=cmd_compose)

    p = sub.add_parser("bound", parents=[common], help="exit and estimation-accuracy bounds")
    p.add_argument("--gamma", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--psi", type=float)
    p.add_argument("--horizon", type=int)
    p.add_argument("--phi0", type=float, default=0.0, help="initial simulation-function value")
    p.add_argument("--eps", type=float, default=0.0, help="accuracy radius")
    p.add_argument("--eps-coef", type=float, default=1.0, help="accuracy gain coefficient")
    p.add_argument("--eps-power", type=float, default=1.0, help="accuracy gain power")
    p.add_argument("--mu", type=float)
    p.add_argument("--c", type=float, default=0.0)
    p.add_argument("--delta", type=float, help="combine a given exit bound")
    p.add_argument("--theta", type=float, help="combine a given estimation bound")
    p.set_defaults(fn=cmd_bound)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo exit frequencies against the bound")
    p.add_argument("--trials", type=int)
    p.add_argument("--columns", metavar="DIR", help="write gnuplot column files (d, v, u vs k) here")
    p.add_argument("--block", type=int, default=0, help="block plotted by --columns")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("acc", parents=[common], help="write the vehicle-platoon config")
    p.add_argument("--N", type=int, default=1000)
    p.add_argument("--tau", type=float, default=0.01)
    p.add_argument("--variant", type=int, choices=(1, 2), default=1)
    p.add_argument("--sigma1", type=float, default=0.01, help="process noise std (tool default)")
    p.add_argument("--sigma2", type=float, default=0.01, help="measurement noise std (tool default)")
    p.add_argument("--certificate", choices=ACC_FIXTURES, default="reference")
    p.add_argument("--trials", type=int)
    p.add_argument("-o", "--output")
    p.set_defaults(fn=cmd_acc)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    t0 = time.perf_counter()
    try:
        code = args.fn(args)
    except ConfigError as exc:
        print(f"pocbf: config error: {exc}", file=sys.stderr)
        return USAGE
    except PocbfError as exc:
        print(f"pocbf: error: {exc}", file=sys.stderr)
        return FAIL
    sys.stdout.write(args._report)
    sys.stdout.flush()
    print(f"pocbf: {args.command} finished in {time.perf_counter() - t0:.2f} s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
