"""Deterministic Monte Carlo estimation of exit and estimation-error frequencies."""
from __future__ import annotations

import csv
import itertools
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.stats import beta

from . import kernels, rng
from .errors import InvalidParameterError, SubstitutionArityError
from .regions import RegionSpec
from .sysmodel import NetworkSpec, linear_matrix, names

PRODUCT, ANY = "product", "any"
CONSISTENT, VIOLATION = "consistent", "violation"


# ------------------------------------------------------------- lowering
class _NotAffine(Exception):
    pass


def _csr(M) -> tuple:
    M = sp.csr_matrix(M)
    M.eliminate_zeros()
    M.sort_indices()
    return (
        np.ascontiguousarray(M.indptr, dtype=np.int64),
        np.ascontiguousarray(M.indices, dtype=np.int64),
        np.ascontiguousarray(M.data, dtype=np.float64),
        M.shape,
    )


def _mat(t) -> sp.csr_matrix:
    ptr, idx, val, shape = t
    return sp.csr_matrix((val, idx, ptr), shape=shape)


def _flat_boxes(regions: list[RegionSpec | None]):
    ptr, start, lo, hi = [0], [], [], []
    pos = 0
    for r in regions:
        if r is not None:
            for b in r.boxes:
                start.append(pos)
                lo.extend(b.lo)
                hi.extend(b.hi)
                pos += b.dim
        ptr.append(len(start))
    i64 = lambda a: np.asarray(a, dtype=np.int64)
    f64 = lambda a: np.asarray(a, dtype=np.float64)
    return i64(ptr), i64(start), f64(lo), f64(hi)


class _Layout:
    """Block offsets, noise stream layout and event regions shared by lowerings."""

    def __init__(self, net: NetworkSpec, unsafe, domain):
        self.net = net
        self.nblocks = net.size
        dims = [b.plant.state_dim for b in net.blocks]
        self.block_off = np.concatenate([[0], np.cumsum(dims)]).astype(np.int64)
        self.n = int(self.block_off[-1])
        self.m = sum(b.plant.external_input_dim for b in net.blocks)
        self.u_off = np.concatenate([[0], np.cumsum([b.plant.external_input_dim for b in net.blocks])]).astype(np.int64)
        sb, sc, mb, mc = [], [], [], []
        for i, b in enumerate(net.blocks):
            sb += [i] * b.plant.state_dim
            sc += [rng.coord(rng.PROCESS, j) for j in range(b.plant.state_dim)]
            mb += [i] * b.plant.output_dim
            mc += [rng.coord(rng.MEASUREMENT, j) for j in range(b.plant.output_dim)]
        self.s_block, self.s_coord = np.array(sb, dtype=np.int64), np.array(sc, dtype=np.int64)
        self.m_block, self.m_coord = np.array(mb, dtype=np.int64), np.array(mc, dtype=np.int64)
        self.ns, self.nm = len(sb), len(mb)
        self.set_regions(unsafe, domain)

    def set_regions(self, unsafe, domain):
        self.unsafe_ptr, self.unsafe_start, self.unsafe_lo, self.unsafe_hi = _flat_boxes(unsafe)
        self.domain_ptr, self.domain_start, self.domain_lo, self.domain_hi = _flat_boxes(domain)


def _block_mats(b):
    """Affine coefficient matrices of one block; raises ``_NotAffine``."""
    n, m, p, q = b.plant.state_dim, b.plant.external_input_dim, b.plant.internal_input_dim, b.plant.output_dim
    try:
        F, c = linear_matrix(b.plant.transition, names("x", n) + names("u", m) + names("w", p) + names("s", n))
        C1, c1 = linear_matrix(b.plant.internal_output, names("x", n))
        H, ch = linear_matrix(b.estimator.transition, names("xh", n) + names("u", m) + names("wh", p) + names("y", q))
        L, f0 = linear_matrix(b.controller.laws, names("xh", n) + names("wh", p))
    except SubstitutionArityError as exc:
        raise _NotAffine(str(exc)) from None
    sat = b.controller.saturation or [(-np.inf, np.inf)] * m
    cut = np.cumsum([n, m, p])
    hcut = np.cumsum([n, m, p])
    return {
        "A": F[:, : cut[0]], "Bu": F[:, cut[0] : cut[1]], "Aw": F[:, cut[1] : cut[2]], "S": F[:, cut[2] :], "c": c,
        "C1": C1, "c1": c1, "C2": b.plant.output_matrix, "c2": b.plant.output_offset,
        "Ah": H[:, : hcut[0]], "Bh": H[:, hcut[0] : hcut[1]], "Awh": H[:, hcut[1] : hcut[2]], "Ky": H[:, hcut[2] :], "ch": ch,
        "Fx": L[:, :n], "Fw": L[:, n:], "f0": f0,
        "lo": np.array([a for a, _ in sat]), "hi": np.array([z for _, z in sat]),
        "s1": b.plant.process_std, "s2": b.plant.measurement_std,
    }


class AffineLowering(_Layout):
    """Whole-network affine map on stacked states.

    ``x+ = Axx x + Bxu u + Gx zs + cx``,
    ``xh+ = Ahh xh + Ahx x + Bhu u + Gh zm + ch``,
    ``u = clip(Fu xh + fu, ulo, uhi)``, with ``zs, zm`` standard normals.
    """

    kind = "affine"

    def __init__(self, net: NetworkSpec, unsafe=None, domain=None):
        super().__init__(net, unsafe, domain)
        cache = {}
        mats = []
        for b in net.blocks:
            if id(b) not in cache:
                cache[id(b)] = _block_mats(b)
            mats.append(cache[id(b)])
        bd = lambda key: sp.block_diag([mm[key] for mm in mats], format="csr") if mats else None
        cat = lambda key: np.concatenate([np.asarray(mm[key], dtype=float) for mm in mats])
        # routing: w = R x + r
        p_off = np.concatenate([[0], np.cumsum([b.plant.internal_input_dim for b in net.blocks])]).astype(int)
        r_off = np.concatenate([[0], np.cumsum([b.plant.internal_output_dim for b in net.blocks])]).astype(int)
        rows, cols, vals = [], [], []
        r = np.zeros(p_off[-1])
        C1 = bd("C1")
        c1 = cat("c1") if r_off[-1] else np.zeros(0)
        for e in net.edges:
            for o, i in zip(e.outputs, e.inputs):
                rows.append(p_off[e.dst] + i)
                cols.append(r_off[e.src] + o)
                vals.append(1.0)
        Route = sp.csr_matrix((vals, (rows, cols)), shape=(p_off[-1], r_off[-1]))
        R = Route @ C1
        r = Route @ c1
        Aw, Awh, Fw = bd("Aw"), bd("Awh"), bd("Fw")
        Ky = bd("Ky")
        s1, s2 = cat("s1"), cat("s2")
        self.Axx = _csr(bd("A") + Aw @ R)
        self.Bxu = _csr(bd("Bu"))
        self.Gx = _csr(bd("S") @ sp.diags(s1))
        self.cx = np.ascontiguousarray(cat("c") + Aw @ r)
        self.Ahh = _csr(bd("Ah") + Awh @ R)
        self.Ahx = _csr(Ky @ bd("C2"))
        self.Bhu = _csr(bd("Bh"))
        self.Gh = _csr(Ky @ sp.diags(s2))
        self.ch = np.ascontiguousarray(cat("ch") + Awh @ r + Ky @ cat("c2"))
        self.Fu = _csr(bd("Fx") + Fw @ R)
        self.fu = np.ascontiguousarray(cat("f0") + Fw @ r)
        self.ulo, self.uhi = np.ascontiguousarray(cat("lo")), np.ascontiguousarray(cat("hi"))
        self._sp = {k: _mat(getattr(self, k)) for k in ("Axx", "Bxu", "Gx", "Ahh", "Ahx", "Bhu", "Gh", "Fu")}

    def control(self, XH):
        if not self.m:
            return np.zeros((XH.shape[0], 0))
        return np.clip((self._sp["Fu"] @ XH.T).T + self.fu, self.ulo, self.uhi)

    def advance(self, X, XH, U, zs, zm):
        S = self._sp
        xn = (S["Axx"] @ X.T).T
        xn += (S["Bxu"] @ U.T).T
        xn += (S["Gx"] @ zs.T).T
        xhn = (S["Ahh"] @ XH.T).T
        xhn += (S["Ahx"] @ X.T).T
        xhn += (S["Bhu"] @ U.T).T
        xhn += (S["Gh"] @ zm.T).T
        return xn + self.cx, xhn + self.ch


class PolynomialLowering(_Layout):
    """Vectorized polynomial stepping for networks that are not affine."""

    kind = "polynomial"

    def _cols(self, A, i, prefix):
        a = self.block_off[i]
        return {f"{prefix}{j}": A[:, a + j] for j in range(self.net.blocks[i].plant.state_dim)}

    def _routes(self, A):
        T = A.shape[0]
        outs = []
        for i, b in enumerate(self.net.blocks):
            pt = self._cols(A, i, "x")
            outs.append([np.broadcast_to(np.asarray(p.eval(pt), dtype=float), (T,)) for p in b.plant.internal_output])
        w = [[np.zeros(T) for _ in range(b.plant.internal_input_dim)] for b in self.net.blocks]
        for e in self.net.edges:
            for o, i in zip(e.outputs, e.inputs):
                w[e.dst][i] = outs[e.src][o]
        return w

    def control(self, XH):
        T = XH.shape[0]
        wh = self._routes(XH)
        U = np.zeros((T, self.m))
        for i, b in enumerate(self.net.blocks):
            pt = self._cols(XH, i, "xh")
            pt.update({f"wh{j}": v for j, v in enumerate(wh[i])})
            for j, u in enumerate(b.controller.evaluate(pt)):
                U[:, self.u_off[i] + j] = u
        return U

    def advance(self, X, XH, U, zs, zm):
        T = X.shape[0]
        w, wh = self._routes(X), self._routes(XH)
        Xn, XHn = np.empty_like(X), np.empty_like(XH)
        mo = 0
        for i, b in enumerate(self.net.blocks):
            n, q = b.plant.state_dim, b.plant.output_dim
            a = self.block_off[i]
            us = {f"u{j}": U[:, self.u_off[i] + j] for j in range(b.plant.external_input_dim)}
            P = self._cols(X, i, "x")
            P.update(us)
            P.update({f"w{j}": v for j, v in enumerate(w[i])})
            P.update({f"s{j}": zs[:, a + j] * b.plant.process_std[j] for j in range(n)})
            y = (X[:, a : a + n] @ b.plant.output_matrix.T) + b.plant.output_offset + zm[:, mo : mo + q] * b.plant.measurement_std
            E = self._cols(XH, i, "xh")
            E.update(us)
            E.update({f"wh{j}": v for j, v in enumerate(wh[i])})
            E.update({f"y{j}": y[:, j] for j in range(q)})
            for j, pol in enumerate(b.plant.transition):
                Xn[:, a + j] = pol.eval(P)
            for j, pol in enumerate(b.estimator.transition):
                XHn[:, a + j] = pol.eval(E)
            mo += q
        return Xn, XHn


def lower_network(net: NetworkSpec, unsafe=None, domain=None):
    """Affine lowering when every map is affine, else the polynomial path."""
    unsafe = [b.plant.unsafe_region for b in net.blocks] if unsafe is None else _per_block(unsafe, net)
    domain = [b.plant.state_region for b in net.blocks] if domain is None else _per_block(domain, net)
    try:
        return AffineLowering(net, unsafe, domain)
    except _NotAffine:
        return PolynomialLowering(net, unsafe, domain)


def _per_block(r, net):
    if isinstance(r, RegionSpec) or r is None:
        return [r] * net.size
    r = list(r)
    if len(r) != net.size:
        raise InvalidParameterError(f"{len(r)} regions for {net.size} blocks")
    return r


# ------------------------------------------------------------ statistics
def clopper_pearson(k: int, n: int, conf: float = 0.95) -> tuple[float, float]:
    """Exact two-sided binomial interval."""
    if n <= 0 or not 0 <= k <= n:
        raise InvalidParameterError(f"invalid binomial counts k={k}, n={n}")
    a = 1.0 - conf
    lo = 0.0 if k == 0 else float(beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


@dataclass(frozen=True)
class SimConfig:
    trials: int = 10_000
    horizon: int = 10
    seed: int = 0
    initial: str = "grid"
    initial_point: tuple | None = None
    grid_points: int = 3
    estimator_init: str = "equal"
    estimator_offset: tuple | None = None
    workers: int = 1
    chunk: int = 2048
    exit_mode: str = PRODUCT
    left_domain_is_exit: bool = True
    kernel: str = "auto"

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidParameterError(f"trials must be >= 1, got {self.trials}")
        if self.horizon < 0:
            raise InvalidParameterError(f"horizon must be >= 0, got {self.horizon}")
        if self.initial not in ("fixed", "grid", "uniform"):
            raise InvalidParameterError(f"unknown initial-condition policy {self.initial!r}")
        if self.estimator_init not in ("equal", "offset", "uniform"):
            raise InvalidParameterError(f"unknown estimator initialization {self.estimator_init!r}")
        if self.exit_mode not in (PRODUCT, ANY):
            raise InvalidParameterError(f"exit mode must be 'product' or 'any', got {self.exit_mode!r}")
        if self.initial == "fixed" and self.initial_point is None:
            raise InvalidParameterError("fixed initial condition needs initial_point")
        if self.estimator_init == "offset" and self.estimator_offset is None:
            raise InvalidParameterError("offset estimator initialization needs estimator_offset")
        if self.chunk < 1 or self.workers < 1:
            raise InvalidParameterError("chunk and workers must be >= 1")


@dataclass(frozen=True)
class InitialResult:
    label: str
    point: tuple
    trials: int
    events: int
    unsafe: int
    left_domain: int
    diverged: int
    ci: tuple[float, float]

    @property
    def frequency(self) -> float:
        return self.events / self.trials


@dataclass(frozen=True)
class SafetyReport:
    kind: str
    mode: str
    rows: tuple[InitialResult, ...]
    bound: float | None
    seed: int
    horizon: int
    kernel: str
    runtime: float = field(default=0.0, compare=False)
    eps: float | None = None

    @property
    def worst(self) -> InitialResult:
        return max(self.rows, key=lambda r: (r.frequency, -self.rows.index(r)))

    @property
    def verdict(self) -> str | None:
        return validate_bound(self)

    def render(self) -> str:
        """Structured text; runtime is deliberately left out so reruns compare equal."""
        what = "exit (unsafe set" + (", product over blocks)" if self.mode == PRODUCT else ", any block)")
        if self.kind == "estimation":
            what = f"estimation error sup-norm >= {self.eps:g}"
        lines = [
            f"monte carlo: {what}",
            f"  seed {self.seed}, horizon {self.horizon}, kernel {self.kernel}",
        ]
        for r in self.rows:
            p = ", ".join(f"{v:.6g}" for v in r.point)
            lines.append(
                f"  [{r.label}] ({p}): {r.events}/{r.trials} = {r.frequency:.6f}  "
                f"95% CI [{r.ci[0]:.6f}, {r.ci[1]:.6f}]"
                + (f"  unsafe {r.unsafe}, left-domain {r.left_domain}, diverged {r.diverged}" if self.kind == "exit" else f"  diverged {r.diverged}")
            )
        w = self.worst
        lines.append(f"  worst: [{w.label}] frequency {w.frequency:.6f}, lower limit {w.ci[0]:.6f}")
        if self.bound is not None:
            lines.append(f"  certified bound {self.bound:.6f}: {self.verdict}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "mode": self.mode,
            "seed": self.seed,
            "horizon": self.horizon,
            "kernel": self.kernel,
            "bound": self.bound,
            "verdict": self.verdict,
            "rows": [
                {
                    "label": r.label,
                    "point": list(r.point),
                    "trials": r.trials,
                    "events": r.events,
                    "unsafe": r.unsafe,
                    "left_domain": r.left_domain,
                    "diverged": r.diverged,
                    "ci": list(r.ci),
                }
                for r in self.rows
            ],
        }


def validate_bound(report: SafetyReport) -> str | None:
    """``violation`` iff some initial condition's 95% lower limit exceeds the bound."""
    if report.bound is None:
        return None
    return VIOLATION if max(r.ci[0] for r in report.rows) > report.bound else CONSISTENT


# ----------------------------------------------------- initial conditions
def _first_box(r: RegionSpec | None, i: int):
    if r is None:
        raise InvalidParameterError(f"block {i} declares no initial region")
    return r.boxes[0]


def initial_points(net: NetworkSpec, cfg: SimConfig) -> list[tuple[str, tuple, np.ndarray | None]]:
    """``(label, local point, stacked state or None for random)`` per initial condition."""
    if cfg.initial == "fixed":
        pt = np.asarray(cfg.initial_point, dtype=float)
        n = sum(b.plant.state_dim for b in net.blocks)
        if pt.size == n:
            full = pt
        else:
            full = np.concatenate([np.broadcast_to(pt, (b.plant.state_dim,)) for b in net.blocks])
        return [("fixed", tuple(pt.ravel()[: net.blocks[0].plant.state_dim]), full)]
    if cfg.initial == "uniform":
        return [("uniform", (), None)]
    boxes = [_first_box(b.plant.initial_region, i) for i, b in enumerate(net.blocks)]
    dims = {bx.dim for bx in boxes}
    if len(dims) != 1:
        raise InvalidParameterError("grid initial conditions need equal state dimensions across blocks")
    g = cfg.grid_points
    out = []
    for k, idx in enumerate(itertools.product(range(g), repeat=dims.pop())):
        full = []
        for bx in boxes:
            full.extend(lo + (hi - lo) * (j / (g - 1) if g > 1 else 0.5) for lo, hi, j in zip(bx.lo, bx.hi, idx))
        b0 = boxes[0]
        local = tuple(lo + (hi - lo) * (j / (g - 1) if g > 1 else 0.5) for lo, hi, j in zip(b0.lo, b0.hi, idx))
        out.append((f"grid {k}", local, np.array(full)))
    return out


def _random_in(net, L, seed, trials, channel):
    U = rng.uniforms(seed, trials, 0, L.s_block, [rng.coord(channel, c & 0xFFFF) for c in L.s_coord])
    X = np.empty((len(trials), L.n))
    for i, b in enumerate(net.blocks):
        bx = _first_box(b.plant.initial_region, i)
        a = L.block_off[i]
        lo, hi = np.array(bx.lo), np.array(bx.hi)
        X[:, a : a + bx.dim] = lo + (hi - lo) * U[:, a : a + bx.dim]
    return X


def _initial_arrays(net, L, cfg, seed, trials, full):
    X = _random_in(net, L, seed, trials, rng.INIT_STATE) if full is None else np.tile(full, (len(trials), 1))
    if cfg.estimator_init == "equal":
        XH = X.copy()
    elif cfg.estimator_init == "offset":
        off = np.asarray(cfg.estimator_offset, dtype=float)
        if off.size != L.n:
            off = np.concatenate([np.broadcast_to(off, (b.plant.state_dim,)) for b in net.blocks])
        XH = X + off
    else:
        XH = _random_in(net, L, seed, trials, rng.INIT_ESTIMATE)
    return np.ascontiguousarray(X), np.ascontiguousarray(XH)


# ------------------------------------------------------------- drivers
def _run(net: NetworkSpec, cfg: SimConfig, L, need_error: bool, seed: int):
    kname = kernels.resolve(cfg.kernel)
    if L.kind != "affine":
        kname = "numpy"
    kern = kernels.get(kname)
    mode = 0 if cfg.exit_mode == PRODUCT else 1
    results = []
    for label, local, full in initial_points(net, cfg):
        starts = list(range(0, cfg.trials, cfg.chunk))

        def job(s, full=full):
            trials = np.arange(s, min(s + cfg.chunk, cfg.trials), dtype=np.int64)
            X, XH = _initial_arrays(net, L, cfg, seed, trials, full)
            return kern(L, X, XH, np.uint64(seed & rng.MASK), trials, cfg.horizon, mode, not need_error)

        if cfg.workers > 1 and len(starts) > 1:
            with ThreadPoolExecutor(cfg.workers) as ex:
                parts = list(ex.map(job, starts))
        else:
            parts = [job(s) for s in starts]
        hit, leave, div, err = (np.concatenate([p[j] for p in parts]) for j in range(4))
        results.append((label, local, hit, leave, div, err))
    return results, kname


def _first_event(hit, leave, div):
    big = np.iinfo(np.int64).max
    h = np.where(hit >= 0, hit, big)
    l = np.where(leave >= 0, leave, big)
    d = np.where(div >= 0, div, big)
    unsafe = (h < big) & (h <= l) & (h <= d)
    left = ~unsafe & (l < big) & (l <= d)
    diverged = ~unsafe & ~left & (d < big)
    return unsafe, left, diverged


def estimate_exit_probability(
    net: NetworkSpec,
    cfg: SimConfig,
    bound: float | None = None,
    *,
    unsafe=None,
    domain=None,
) -> SafetyReport:
    """Per initial condition, the fraction of trials reaching the unsafe set by the horizon.

    ``unsafe``/``domain`` override the blocks' declared regions (one region
    for all blocks, or a list). Diverged trials always count; leaving the
    domain first counts unless ``cfg.left_domain_is_exit`` is off.
    """
    t0 = time.perf_counter()
    L = lower_network(net, unsafe, domain)
    res, kname = _run(net, cfg, L, False, cfg.seed)
    rows = []
    for label, local, hit, leave, div, _ in res:
        u, l, d = _first_event(hit, leave, div)
        ev = u | d | (l if cfg.left_domain_is_exit else False)
        k = int(np.sum(ev))
        rows.append(InitialResult(label, tuple(local), cfg.trials, k, int(u.sum()), int(l.sum()), int(d.sum()), clopper_pearson(k, cfg.trials)))
    return SafetyReport("exit", cfg.exit_mode, tuple(rows), bound, cfg.seed, cfg.horizon, kname, time.perf_counter() - t0)


def estimate_estimation_accuracy(net: NetworkSpec, eps: float, cfg: SimConfig, bound: float | None = None) -> SafetyReport:
    """Per initial condition, the fraction of trials with ``sup_k ||x - xh||_inf >= eps``."""
    if not eps >= 0:
        raise InvalidParameterError(f"accuracy radius must be >= 0, got {eps}")
    t0 = time.perf_counter()
    L = lower_network(net)
    res, kname = _run(net, cfg, L, True, cfg.seed)
    rows = []
    for label, local, hit, leave, div, err in res:
        ev = (err >= eps) | (div >= 0)
        k = int(np.sum(ev))
        rows.append(InitialResult(label, tuple(local), cfg.trials, k, 0, 0, int((div >= 0).sum()), clopper_pearson(k, cfg.trials)))
    return SafetyReport("estimation", cfg.exit_mode, tuple(rows), bound, cfg.seed, cfg.horizon, kname, time.perf_counter() - t0, eps)


def simulate_trajectories(net: NetworkSpec, cfg: SimConfig, trials: int | None = None):
    """Full histories ``(x, xh, u)`` of the first ``trials`` trials of each initial condition.

    Uses the numpy kernel; arrays have shape ``(trials, horizon + 1, dim)``.
    """
    L = lower_network(net)
    T = cfg.trials if trials is None else min(trials, cfg.trials)
    out = []
    for label, local, full in initial_points(net, cfg):
        ids = np.arange(T, dtype=np.int64)
        X, XH = _initial_arrays(net, L, cfg, cfg.seed, ids, full)
        *_, hist = kernels._kernel_py.simulate_chunk(L, X, XH, cfg.seed, ids, cfg.horizon, 0, False, record=True)
        out.append((label, hist))
    return L, out


def dump_csv(net: NetworkSpec, cfg: SimConfig, path, trials: int | None = 10) -> int:
    """Write ``trial,k,block,<state>,<estimate>,<input>`` rows; returns the row count.

    Two-state single-input blocks use the column names ``d,v,d_hat,v_hat,u``.
    When several initial conditions exist, trial numbers are offset per condition.
    """
    L, runs = simulate_trajectories(net, cfg, trials)
    b0 = net.blocks[0].plant
    if all(b.plant.state_dim == 2 and b.plant.external_input_dim == 1 for b in net.blocks):
        head = ["d", "v", "d_hat", "v_hat", "u"]
    else:
        n, m = b0.state_dim, b0.external_input_dim
        head = names("x", n) + [f"{v}_hat" for v in names("x", n)] + names("u", m)
    count = 0
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["trial", "k", "block"] + head)
        base = 0
        for _, (X, XH, U) in runs:
            for t in range(X.shape[0]):
                for k in range(X.shape[1]):
                    for i in range(net.size):
                        a, z = L.block_off[i], L.block_off[i + 1]
                        ua, uz = L.u_off[i], L.u_off[i + 1]
                        row = [base + t, k, i] + [repr(float(v)) for v in X[t, k, a:z]]
                        row += [repr(float(v)) for v in XH[t, k, a:z]] + [repr(float(v)) for v in U[t, k, ua:uz]]
                        wr.writerow(row)
                        count += 1
            base += X.shape[0]
    return count


def dump_columns(net: NetworkSpec, cfg: SimConfig, directory, trials: int | None = 10, block: int = 0) -> list[str]:
    """Gnuplot-ready column files for one block: ``<name>.dat`` per state/input.

    Each file has a ``k`` column followed by one column per trajectory
    (all initial conditions, in order), so ``plot for [j=2:*] f u 1:j`` works.
    """
    if not 0 <= block < net.size:
        raise InvalidParameterError(f"block {block} outside 0..{net.size - 1}")
    L, runs = simulate_trajectories(net, cfg, trials)
    p = net.blocks[block].plant
    two = p.state_dim == 2 and p.external_input_dim == 1
    a, z = L.block_off[block], L.block_off[block + 1]
    ua, uz = L.u_off[block], L.u_off[block + 1]
    series = {}
    for j, nm in enumerate(["d", "v"] if two else names("x", p.state_dim)):
        series[nm] = np.concatenate([X[:, :, a + j] for _, (X, _, _) in runs])
    for j, nm in enumerate(["u"] if two else names("u", p.external_input_dim)):
        series[nm] = np.concatenate([U[:, :, ua + j] for _, (_, _, U) in runs])
    os.makedirs(directory, exist_ok=True)
    paths = []
    for nm, S in series.items():
        path = os.path.join(directory, f"{nm}.dat")
        with open(path, "w") as fh:
            fh.write(f"# block {block}, {nm} vs k, {S.shape[0]} trajectories, seed {cfg.seed}\n")
            for k in range(S.shape[1]):
                fh.write(" ".join([str(k)] + [repr(float(v)) for v in S[:, k]]) + "\n")
        paths.append(path)
    return paths
