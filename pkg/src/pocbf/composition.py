"""Small-gain composition of local certificates into network certificates."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .certificate import AUGMENTED, BarrierCertificate, SimulationCertificate
from .errors import CompositionInfeasibleError, InvalidParameterError, SmallGainError
from .gains import GainFn
from .polyalg import gaussian_expectation
from .sysmodel import NetworkSpec, NetworkState, augment, route


@dataclass(frozen=True)
class GainMatrix:
    """Sparse ``N x N`` matrix of monomial gains.

    ``off[(i, j)]`` is the gain from block ``j`` into block ``i`` (edge j -> i);
    missing pairs are structural zeros.
    """

    diag: tuple[GainFn, ...]
    off: dict

    @property
    def size(self) -> int:
        return len(self.diag)

    def entry(self, i: int, j: int) -> GainFn:
        if i == j:
            return self.diag[i]
        return self.off.get((i, j), GainFn.zero())

    def entries(self):
        """All nonzero ``((i, j), gain)`` pairs, diagonal first, in sorted order."""
        for i, g in enumerate(self.diag):
            if not g.is_zero:
                yield (i, i), g
        for k in sorted(self.off):
            yield k, self.off[k]

    @property
    def is_linear(self) -> bool:
        return all(g.is_linear for _, g in self.entries())

    def render(self, limit: int = 8) -> str:
        lines = [f"gain matrix {self.size}x{self.size}, {len(self.off)} off-diagonal entries"]
        if self.size > limit:
            # large networks: distinct gains only
            for label, gains in (("diagonal", self.diag), ("off-diagonal", self.off.values())):
                distinct = sorted({str(g) for g in gains})
                if distinct:
                    more = f" (+{len(distinct) - limit} more)" if len(distinct) > limit else ""
                    lines.append(f"  {label}: {', '.join(distinct[:limit])}{more}")
            return "\n".join(lines)
        for k, ((i, j), g) in enumerate(self.entries()):
            if k >= limit:
                lines.append("  ...")
                break
            lines.append(f"  [{i},{j}] = {g}")
        return "\n".join(lines)


def _edge_pairs(topology) -> list[tuple[int, int]]:
    """``(src, dst)`` pairs from a network, an edge list, or raw pairs."""
    if isinstance(topology, NetworkSpec):
        topology = topology.edges
    out = []
    for e in topology:
        if hasattr(e, "src"):
            out.append((e.src, e.dst))
        else:
            out.append((int(e[0]), int(e[1])))
    return sorted(set(out))


def _gains_of(c):
    if isinstance(c, BarrierCertificate):
        return c.kappa, c.rho, c.alpha
    if isinstance(c, SimulationCertificate):
        return c.mu, c.varrho, c.eps_gain
    raise InvalidParameterError(f"not a certificate: {type(c).__name__}")


def build_gain_matrix(certs: Sequence, topology) -> GainMatrix:
    """Diagonal ``kappa_i``; entry (i, j) = ``rho_i o alpha_j^-1`` for each edge j -> i.

    For simulation certificates the roles are ``mu_i`` and ``varrho_i o eps_j^-1``.
    """
    certs = list(certs)
    N = len(certs)
    diag = []
    cache: dict[int, tuple] = {}
    for c in certs:
        key = id(c)
        if key not in cache:
            cache[key] = _gains_of(c)
        diag.append(GainFn(cache[key][0], 1.0))
    off = {}
    inv_cache: dict[int, GainFn] = {}
    for src, dst in _edge_pairs(topology):
        if not (0 <= src < N and 0 <= dst < N):
            raise InvalidParameterError(f"edge {src}->{dst} outside a {N}-block network")
        _, rho_i, _ = cache[id(certs[dst])]
        if rho_i.is_zero:
            continue
        cj = certs[src]
        if id(cj) not in inv_cache:
            a = cache[id(cj)][2]
            if a.is_zero:
                raise InvalidParameterError(f"block {src}: zero lower-bound gain is not invertible")
            inv_cache[id(cj)] = a.inverse()
        off[(dst, src)] = rho_i.compose(inv_cache[id(cj)])
    return GainMatrix(tuple(diag), off)


@dataclass(frozen=True)
class SmallGainResult:
    passed: bool
    method: str
    cycle_mean: float | None
    witness: tuple[int, ...] | None
    message: str

    def render(self) -> str:
        s = f"small-gain: {'pass' if self.passed else 'FAIL'} ({self.method})"
        if self.cycle_mean is not None:
            s += f", max cycle mean of log-gains {self.cycle_mean:.6g}"
        if self.witness is not None:
            s += "\n  witness cycle " + " -> ".join(str(i) for i in self.witness)
        if self.message:
            s += "\n  " + self.message
        return s


def _below_identity(g: GainFn) -> bool:
    return g.is_zero or (g.is_linear and g.coef < 1.0)


def _graph(G: GainMatrix):
    """Edges of the gain digraph: ``j -> i`` for entry (i, j), weight log coef."""
    src, dst, w = [], [], []
    for (i, j), g in G.entries():
        src.append(j)
        dst.append(i)
        w.append(math.log(g.coef))
    return np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64), np.array(w, dtype=float)


def max_cycle_mean(n: int, src, dst, w) -> tuple[float, tuple[int, ...] | None]:
    """Karp's algorithm with a zero-weight super source; returns (mean, cycle).

    ``-inf`` and ``None`` for an acyclic graph.
    """
    if len(w) == 0:
        return -math.inf, None
    D = np.full((n + 1, n), -np.inf)
    P = np.full((n + 1, n), -1, dtype=np.int64)
    D[0, :] = 0.0
    order = np.lexsort((src, dst))
    src, dst, w = src[order], dst[order], w[order]
    for k in range(1, n + 1):
        cand = D[k - 1, src] + w
        best = np.full(n, -np.inf)
        np.maximum.at(best, dst, cand)
        D[k] = best
        hit = np.flatnonzero(np.isfinite(cand) & (cand == best[dst]))
        # edges are sorted by (dst, src): the first hit per target has the lowest source
        tg, first = np.unique(dst[hit], return_index=True)
        P[k, tg] = src[hit[first]]
    fin = np.isfinite(D[n])
    if not np.any(fin):
        return -math.inf, None
    ks = np.arange(n)[:, None]
    with np.errstate(invalid="ignore"):
        ratios = (D[n][None, :] - D[:n]) / (n - ks)
    ratios = np.where(np.isfinite(D[:n]), ratios, np.inf)
    per_v = np.min(ratios, axis=0)
    per_v = np.where(fin, per_v, -np.inf)
    v = int(np.argmax(per_v))
    lam = float(per_v[v])
    # walk back along the n-edge path to v and cut out a cycle
    walk = [v]
    cur = v
    for k in range(n, 0, -1):
        cur = int(P[k, cur])
        walk.append(cur)
    walk.reverse()
    seen = {}
    cycle = None
    for pos, node in enumerate(walk):
        if node in seen:
            cycle = tuple(walk[seen[node] : pos + 1])
            break
        seen[node] = pos
    return lam, cycle


def _cycle_gain_edges(cycle: Sequence[int], G: GainMatrix) -> list[GainFn]:
    # cycle lists nodes along edges j -> i, i.e. entries (next, prev)
    return [G.entry(b, a) for a, b in zip(cycle[:-1], cycle[1:])]


def _cycle_through(G: GainMatrix, i: int, j: int) -> tuple[int, ...] | None:
    """A cycle using edge j -> i, found by BFS from i back to j."""
    if i == j:
        return (j, i)
    adj: dict[int, list[int]] = {}
    for (a, b), _ in G.entries():
        adj.setdefault(b, []).append(a)
    prev = {i: None}
    queue = [i]
    while queue:
        nxt = []
        for u in queue:
            for v in sorted(adj.get(u, [])):
                if v not in prev:
                    prev[v] = u
                    nxt.append(v)
        queue = nxt
    if j not in prev:
        return None
    path = [j]
    while path[-1] != i:
        path.append(prev[path[-1]])
    path.reverse()
    return (j,) + tuple(path)


def check_small_gain(G: GainMatrix) -> SmallGainResult:
    """Every cyclic composition of gains must stay below the identity."""
    if all(_below_identity(g) for _, g in G.entries()):
        return SmallGainResult(True, "pointwise", None, None, "every entry is below the identity")
    for (i, j), g in G.entries():
        if not g.is_linear:
            cyc = _cycle_through(G, i, j)
            if cyc is None:
                continue
            q = math.prod(h.power for h in _cycle_gain_edges(cyc, G))
            msg = (
                f"cycle composition has exponent {q:g}; a monomial c*s^q stays below the identity "
                "for all s > 0 only when q = 1 and c < 1"
            )
            if q != 1.0:
                return SmallGainResult(False, "exponent", None, cyc, msg)
            return SmallGainResult(False, "exponent", None, cyc, "nonlinear entries on a cycle are not decidable here")
    src, dst, w = _graph(G)
    lam, cyc = max_cycle_mean(G.size, src, dst, w)
    if lam < 0:
        return SmallGainResult(True, "cycle-mean", lam, None, "")
    prod = math.exp(sum(math.log(g.coef) for g in _cycle_gain_edges(cyc, G))) if cyc else float("nan")
    return SmallGainResult(False, "cycle-mean", lam, cyc, f"cycle gain product {prod:.6g} >= 1")


def find_scalings(G: GainMatrix, result: SmallGainResult | None = None) -> np.ndarray:
    """Coefficients ``s_i`` of linear scalings with ``k_ij s_j / s_i < 1`` on every entry."""
    result = check_small_gain(G) if result is None else result
    if not result.passed:
        raise SmallGainError("small-gain condition fails; no scalings exist")
    if result.method == "pointwise":
        return np.ones(G.size)
    if not G.is_linear:
        raise SmallGainError("scalings are constructed for linear gain matrices only")
    src, dst, w = _graph(G)
    eta = -result.cycle_mean / 2.0
    wt = w + eta
    t = np.zeros(G.size)
    for _ in range(G.size + 1):
        cand = t[src] + wt
        new = t.copy()
        np.maximum.at(new, dst, cand)
        if np.array_equal(new, t):
            break
        t = new
    s = np.exp(t)
    ratio = np.exp(w) * s[src] / s[dst]
    if np.any(ratio >= 1):
        raise SmallGainError("scaling construction failed a post-check")
    return s


@dataclass(frozen=True)
class ComposedCbf:
    certs: tuple[BarrierCertificate, ...]
    scalings: np.ndarray
    gamma: float
    lam: float
    kappa: float
    psi: float
    flavor: str = AUGMENTED

    def value(self, local_values) -> tuple[float, int]:
        """Network barrier value ``max_i B_i / s_i`` and the maximizing block."""
        v = np.asarray(local_values, dtype=float) / self.scalings
        j = int(np.argmax(v))
        return float(v[j]), j

    def render(self) -> str:
        s = self.scalings
        same = bool(np.all(s == 1.0))
        return "\n".join(
            [
                f"composed barrier ({self.flavor}), N={len(self.certs)}",
                "  scalings: identity" if same else f"  scalings: min {s.min():.6g}, max {s.max():.6g}",
                f"  gamma = {self.gamma:.10g}",
                f"  lambda = {self.lam:.10g}",
                f"  kappa = {self.kappa:.10g}",
                f"  psi = {self.psi:.10g}",
            ]
        )


def _composed_rate(G: GainMatrix, s: np.ndarray) -> float:
    k = 0.0
    for (i, j), g in G.entries():
        if not g.is_linear:
            raise SmallGainError("composed rate requires linear gains")
        k = max(k, g.coef * s[j] / s[i])
    return k


def compose_cbf(certs: Sequence[BarrierCertificate], scalings, topology) -> ComposedCbf:
    certs = tuple(certs)
    flavors = {c.flavor for c in certs}
    if len(flavors) != 1:
        raise InvalidParameterError(f"certificates mix flavors {sorted(flavors)}")
    s = np.asarray(scalings, dtype=float)
    if s.shape != (len(certs),) or np.any(s <= 0):
        raise InvalidParameterError("one positive linear scaling per block is required")
    G = build_gain_matrix(certs, topology)
    gam = np.array([c.gamma for c in certs]) / s
    lam = np.array([c.lam for c in certs]) / s
    psi = np.array([c.psi for c in certs]) / s
    gamma, lam_, psi_ = float(gam.max()), float(lam.max()), float(psi.max())
    if gamma >= lam_:
        raise CompositionInfeasibleError(f"composed gamma={gamma:.6g} is not below lambda={lam_:.6g}")
    kappa = _composed_rate(G, s)
    if not 0 < kappa < 1:
        raise CompositionInfeasibleError(f"composed kappa={kappa:.6g} is not in (0,1)")
    return ComposedCbf(certs, s, gamma, lam_, kappa, psi_, flavors.pop())


@dataclass(frozen=True)
class ComposedSsf:
    certificate: SimulationCertificate
    scalings: np.ndarray

    @property
    def mu(self) -> float:
        return self.certificate.mu

    @property
    def c(self) -> float:
        return self.certificate.c

    def render(self) -> str:
        c = self.certificate
        return f"composed simulation function: mu = {c.mu:.10g}, c = {c.c:.10g}, eps = {c.eps_gain}"


def compose_ssf(certs: Sequence[SimulationCertificate], scalings, topology) -> ComposedSsf:
    certs = tuple(certs)
    z = np.asarray(scalings, dtype=float)
    if z.shape != (len(certs),) or np.any(z <= 0):
        raise InvalidParameterError("one positive linear scaling per block is required")
    G = build_gain_matrix(certs, topology)
    eff = {(c.eps_gain.coef / zi, c.eps_gain.power) for c, zi in zip(certs, z)}
    if len(eff) != 1:
        raise CompositionInfeasibleError(
            f"heterogeneous accuracy gains after scaling {sorted(eff)}; the network gain is not formed"
        )
    a, p = eff.pop()
    mu = _composed_rate(G, z)
    c = float(max(ci.c / zi for ci, zi in zip(certs, z)))
    if not 0 < mu < 1:
        raise CompositionInfeasibleError(f"composed mu={mu:.6g} is not in (0,1)")
    return ComposedSsf(SimulationCertificate(None, GainFn(a, p), GainFn.zero(), mu, c), z)


# ------------------------------------------------------------ spot check
@dataclass(frozen=True)
class SpotCheckReport:
    samples: int
    inner: int
    violations: int
    worst_z: float
    witness: dict | None
    jensen_gaps: int

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def render(self) -> str:
        s = (
            f"spot check: {self.samples} states x {self.inner} noise draws, "
            f"{self.violations} violations (worst {self.worst_z:+.3f} standard errors)"
        )
        s += f"\n  states where max of local expectations exceeds the bound: {self.jensen_gaps}"
        if self.witness is not None:
            s += f"\n  witness at sample {self.witness['sample']}"
        return s


def _block_next(b, x, xh, w, wh, s, m):
    """Vectorized one-step map of one block over noise draws (arrays of length M)."""
    n = b.plant.state_dim
    pt = {f"xh{i}": xh[i] for i in range(n)}
    pt.update({f"wh{i}": wh[i] for i in range(len(wh))})
    u = [float(np.asarray(v)) for v in b.controller.evaluate(pt)]
    y = b.plant.output_matrix @ x + b.plant.output_offset
    P = {f"x{i}": x[i] for i in range(n)}
    P.update({f"u{j}": u[j] for j in range(len(u))})
    P.update({f"w{i}": w[i] for i in range(len(w))})
    P.update({f"s{i}": s[:, i] for i in range(n)})
    E = {f"xh{i}": xh[i] for i in range(n)}
    E.update({f"u{j}": u[j] for j in range(len(u))})
    E.update({f"wh{i}": wh[i] for i in range(len(wh))})
    E.update({f"y{i}": y[i] + m[:, i] for i in range(len(y))})
    M = s.shape[0]
    xn = np.stack([np.broadcast_to(p.eval(P), (M,)) for p in b.plant.transition], axis=1)
    xhn = np.stack([np.broadcast_to(p.eval(E), (M,)) for p in b.estimator.transition], axis=1)
    return xn, xhn, u


def spotcheck_composed_condition(
    composed: ComposedCbf,
    net: NetworkSpec,
    samples: int = 200,
    seed: int = 0,
    *,
    inner: int = 4000,
    z_threshold: float = 4.0,
    kappa: float | None = None,
    states=None,
    workers: int = 1,
) -> SpotCheckReport:
    """Sample network states and test ``E[B(next)] <= max{kappa B, psi}``.

    The expectation of the max over blocks has no closed form, so it is
    estimated from ``inner`` noise draws per state; a violation is a sample
    mean exceeding the bound by more than ``z_threshold`` standard errors.
    ``kappa`` overrides the composed rate (negative controls). States are
    drawn uniformly from each block's ``X x X`` unless given.
    """
    if composed.flavor != AUGMENTED:
        raise InvalidParameterError("the spot check covers the augmented flavor")
    kap = composed.kappa if kappa is None else kappa
    s_coef = composed.scalings
    N = net.size
    if len(composed.certs) != N:
        raise InvalidParameterError("composed certificate and network differ in size")
    if any(c.B is None for c in composed.certs):
        raise InvalidParameterError("constants-only certificates cannot be spot-checked")
    # closed-form local expectations for the Jensen-side diagnostic
    ebs = {}
    for c, b in zip(composed.certs, net.blocks):
        key = (id(c), id(b))
        if key not in ebs:
            aug = augment(b.plant, b.estimator)
            n = b.plant.state_dim
            mp = {f"x{i}": aug.plant_next[i] for i in range(n)}
            mp.update({f"xh{i}": aug.estimator_next[i] for i in range(n)})
            ebs[key] = gaussian_expectation(c.B.substitute(mp, partial=True), aug.noise_sigmas(b.plant))

    def one(k):
        rng = np.random.default_rng([seed, k])
        if states is not None:
            st = states[k]
        else:
            xs, xhs = [], []
            for b in net.blocks:
                box = b.plant.state_region.boxes[int(rng.integers(len(b.plant.state_region.boxes)))]
                lo, hi = np.array(box.lo), np.array(box.hi)
                xs.append(lo + (hi - lo) * rng.random(len(lo)))
                xhs.append(lo + (hi - lo) * rng.random(len(lo)))
            st = NetworkState(xs, xhs)
        y1 = [np.array([p.eval({f"x{i}": v for i, v in enumerate(x)}) for p in b.plant.internal_output]) for b, x in zip(net.blocks, st.x)]
        y1h = [np.array([p.eval({f"x{i}": v for i, v in enumerate(x)}) for p in b.plant.internal_output]) for b, x in zip(net.blocks, st.xh)]
        w, wh = route(net, y1), route(net, y1h)
        cur = np.empty(N)
        nxt = np.empty((inner, N))
        local_e = np.empty(N)
        for i, (b, c) in enumerate(zip(net.blocks, composed.certs)):
            n = b.plant.state_dim
            pt = {f"x{j}": st.x[i][j] for j in range(n)}
            pt.update({f"xh{j}": st.xh[i][j] for j in range(n)})
            cur[i] = c.B.eval(pt)
            sn = rng.standard_normal((inner, n)) * b.plant.process_std
            mn = rng.standard_normal((inner, b.plant.output_dim)) * b.plant.measurement_std
            xn, xhn, u = _block_next(b, st.x[i], st.xh[i], w[i], wh[i], sn, mn)
            q = {f"x{j}": xn[:, j] for j in range(n)}
            q.update({f"xh{j}": xhn[:, j] for j in range(n)})
            nxt[:, i] = np.broadcast_to(c.B.eval(q), (inner,))
            ept = dict(pt)
            ept.update({f"u{j}": v for j, v in enumerate(u)})
            ept.update({f"w{j}": v for j, v in enumerate(w[i])})
            ept.update({f"wh{j}": v for j, v in enumerate(wh[i])})
            local_e[i] = ebs[(id(c), id(b))].eval(ept)
        Bcur = float(np.max(cur / s_coef))
        vals = np.max(nxt / s_coef, axis=1)
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(inner)) if inner > 1 else 0.0
        rhs = max(kap * Bcur, composed.psi)
        z = (mean - rhs) / se if se > 0 else (math.inf if mean > rhs else -math.inf)
        jensen = float(np.max(local_e / s_coef)) > rhs
        return z, jensen, st

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            res = list(ex.map(one, range(samples)))
    else:
        res = [one(k) for k in range(samples)]
    zs = np.array([r[0] for r in res])
    viol = int(np.sum(zs > z_threshold))
    k = int(np.argmax(zs))
    witness = None
    if viol:
        st = res[k][2]
        witness = {"sample": k, "x": [a.tolist() for a in st.x], "xh": [a.tolist() for a in st.xh]}
    return SpotCheckReport(samples, inner, viol, float(zs[k]), witness, int(sum(r[1] for r in res)))
