"""Partially observed subsystems, observers, controllers and their networks.

Variable naming inside one block is fixed:

=========  ==========================================
``x{i}``   plant state
``xh{i}``  estimator state
``u{i}``   external (control) input
``w{i}``   internal input
``wh{i}``  internal input seen by the estimator
``s{i}``   process noise
``m{i}``   measurement noise
``y{i}``   measured output fed to the estimator
=========  ==========================================
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionMismatchError, DivergedTrajectoryError, InvalidParameterError, WiringError
from .polyalg import Polynomial, Var, VarKind, VarSpace
from .regions import RegionSpec


def names(prefix: str, n: int) -> list[str]:
    return [f"{prefix}{i}" for i in range(n)]


def block_varspace(n: int, m: int, p: int, q: int) -> VarSpace:
    space = VarSpace()
    for prefix, count, kind in (
        ("x", n, VarKind.STATE),
        ("xh", n, VarKind.ESTIMATE),
        ("u", m, VarKind.EXTERNAL_INPUT),
        ("w", p, VarKind.INTERNAL_INPUT),
        ("wh", p, VarKind.INTERNAL_INPUT_ESTIMATE),
        ("s", n, VarKind.NOISE),
        ("m", q, VarKind.NOISE),
        ("y", q, VarKind.OUTPUT),
    ):
        for nm in names(prefix, count):
            space.add(Var(nm, kind))
    return space


def _mat(a, rows: int | None = None, cols: int | None = None, what: str = "matrix") -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if rows is not None and a.shape[0] != rows or cols is not None and a.shape[1] != cols:
        raise DimensionMismatchError(f"{what} has shape {a.shape}, expected ({rows}, {cols})")
    return a


def affine_rows(M: np.ndarray, var_names: Sequence[str]) -> list[Polynomial]:
    """Polynomials ``M @ vars`` row by row."""
    return [Polynomial.linear(dict(zip(var_names, row))) for row in np.asarray(M, dtype=float)]


def _check_vars(polys: Sequence[Polynomial], allowed: set[str], what: str) -> None:
    for i, p in enumerate(polys):
        bad = set(p.variables) - allowed
        if bad:
            raise InvalidParameterError(f"{what}[{i}] uses variables {sorted(bad)} not allowed here")


def linear_matrix(polys: Sequence[Polynomial], var_names: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """Coefficient matrix and offset of affine polynomials over ``var_names``."""
    M = np.zeros((len(polys), len(var_names)))
    c = np.zeros(len(polys))
    col = {v: j for j, v in enumerate(var_names)}
    for i, p in enumerate(polys):
        const, coeffs = p.linear_part()
        c[i] = const
        for v, a in coeffs.items():
            if v not in col:
                raise InvalidParameterError(f"unexpected variable {v!r} in affine map")
            M[i, col[v]] = a
    return M, c


@dataclass(frozen=True)
class SubsystemSpec:
    """One plant ``x+ = f(x, u, w, s)``, ``y1 = h1(x)``, ``y2 = C2 x + c2 + m``."""

    transition: tuple[Polynomial, ...]
    internal_output: tuple[Polynomial, ...]
    output_matrix: np.ndarray
    process_std: np.ndarray
    measurement_std: np.ndarray
    state_region: RegionSpec
    internal_input_region: RegionSpec | None = None
    initial_region: RegionSpec | None = None
    unsafe_region: RegionSpec | None = None
    output_offset: np.ndarray | None = None
    external_input_dim: int = 1
    internal_input_dim: int = 0
    name: str = "block"

    def __post_init__(self):
        n = len(self.transition)
        C2 = _mat(self.output_matrix, cols=n, what="output matrix C2")
        q = C2.shape[0]
        object.__setattr__(self, "transition", tuple(self.transition))
        object.__setattr__(self, "internal_output", tuple(self.internal_output))
        object.__setattr__(self, "output_matrix", C2)
        off = np.zeros(q) if self.output_offset is None else np.asarray(self.output_offset, dtype=float)
        object.__setattr__(self, "output_offset", off)
        s1 = np.broadcast_to(np.asarray(self.process_std, dtype=float), (n,)).copy()
        s2 = np.broadcast_to(np.asarray(self.measurement_std, dtype=float), (q,)).copy()
        if np.any(s1 < 0) or np.any(s2 < 0):
            raise InvalidParameterError("noise standard deviations must be >= 0")
        object.__setattr__(self, "process_std", s1)
        object.__setattr__(self, "measurement_std", s2)
        if off.shape != (q,):
            raise DimensionMismatchError("output offset length differs from output dimension")
        m, p = self.external_input_dim, self.internal_input_dim
        _check_vars(self.transition, set(names("x", n) + names("u", m) + names("w", p) + names("s", n)), "transition")
        _check_vars(self.internal_output, set(names("x", n)), "internal_output")
        if self.state_region.dim != n:
            raise DimensionMismatchError(f"state region is {self.state_region.dim}-d, state is {n}-d")
        for nm in ("initial_region", "unsafe_region"):
            r = getattr(self, nm)
            if r is not None and r.dim != n:
                raise DimensionMismatchError(f"{nm} is {r.dim}-d, state is {n}-d")
        if self.internal_input_region is not None and self.internal_input_region.dim != p:
            raise DimensionMismatchError(
                f"internal input region is {self.internal_input_region.dim}-d, internal input is {p}-d"
            )

    @property
    def state_dim(self) -> int:
        return len(self.transition)

    @property
    def output_dim(self) -> int:
        return self.output_matrix.shape[0]

    @property
    def internal_output_dim(self) -> int:
        return len(self.internal_output)

    def measurement(self) -> list[Polynomial]:
        """``y2`` as polynomials in ``x`` and ``m``."""
        rows = affine_rows(self.output_matrix, names("x", self.state_dim))
        return [r + float(c) + Polynomial.variable(f"m{i}") for i, (r, c) in enumerate(zip(rows, self.output_offset))]

    @classmethod
    def linear(
        cls,
        A,
        B,
        C2,
        *,
        Aw=None,
        C1=None,
        process_std=0.0,
        measurement_std=0.0,
        state_region: RegionSpec,
        **kw,
    ) -> "SubsystemSpec":
        """``x+ = A x + B u + Aw w + s``, ``y1 = C1 x``, ``y2 = C2 x + m``."""
        A = _mat(A, what="A")
        n = A.shape[0]
        B = _mat(B, rows=n, what="B")
        Aw = np.zeros((n, 0)) if Aw is None else _mat(Aw, rows=n, what="Aw")
        C1 = np.zeros((0, n)) if C1 is None else _mat(C1, cols=n, what="C1")
        xs, us, ws = names("x", n), names("u", B.shape[1]), names("w", Aw.shape[1])
        f = []
        for i in range(n):
            f.append(
                Polynomial.linear(
                    {**dict(zip(xs, A[i])), **dict(zip(us, B[i])), **dict(zip(ws, Aw[i])), f"s{i}": 1.0}
                )
            )
        return cls(
            transition=tuple(f),
            internal_output=tuple(affine_rows(C1, xs)),
            output_matrix=C2,
            process_std=process_std,
            measurement_std=measurement_std,
            state_region=state_region,
            external_input_dim=B.shape[1],
            internal_input_dim=Aw.shape[1],
            **kw,
        )


@dataclass(frozen=True)
class EstimatorSpec:
    """``xh+ = fh(xh, u, wh, y)``; optionally carries the observer matrices."""

    transition: tuple[Polynomial, ...]
    matrices: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "transition", tuple(self.transition))
        if self.matrices is not None:
            self._check_agreement()

    @property
    def state_dim(self) -> int:
        return len(self.transition)

    @classmethod
    def observer(cls, A, B, K, C2, Aw=None, c2=None) -> "EstimatorSpec":
        """``xh+ = A xh + B u + Aw wh + K (y - C2 xh - c2)``."""
        A = _mat(A, what="A")
        n = A.shape[0]
        B = _mat(B, rows=n, what="B")
        K = _mat(K, rows=n, what="K")
        C2 = _mat(C2, rows=K.shape[1], cols=n, what="C2")
        Aw = np.zeros((n, 0)) if Aw is None else _mat(Aw, rows=n, what="Aw")
        c2 = np.zeros(C2.shape[0]) if c2 is None else np.asarray(c2, dtype=float)
        xh, us, wh, ys = names("xh", n), names("u", B.shape[1]), names("wh", Aw.shape[1]), names("y", C2.shape[0])
        Ah = A - K @ C2
        off = -K @ c2
        f = []
        for i in range(n):
            coeffs = {**dict(zip(xh, Ah[i])), **dict(zip(us, B[i])), **dict(zip(wh, Aw[i])), **dict(zip(ys, K[i]))}
            f.append(Polynomial.linear(coeffs, float(off[i])))
        mats = {"A": A, "B": B, "Aw": Aw, "K": K, "C2": C2, "c2": c2}
        return cls(tuple(f), mats)

    def _check_agreement(self, points: int = 10, seed: int = 0) -> None:
        M = self.matrices
        n = self.state_dim
        rng = np.random.default_rng(seed)
        for _ in range(points):
            xh = rng.normal(size=n)
            u = rng.normal(size=M["B"].shape[1])
            wh = rng.normal(size=M["Aw"].shape[1])
            y = rng.normal(size=M["C2"].shape[0])
            ref = M["A"] @ xh + M["B"] @ u + M["Aw"] @ wh + M["K"] @ (y - M["C2"] @ xh - M["c2"])
            pt = {**_assign("xh", xh), **_assign("u", u), **_assign("wh", wh), **_assign("y", y)}
            got = np.array([p.eval(pt) for p in self.transition])
            if not np.allclose(got, ref, rtol=1e-12, atol=1e-12):
                raise InvalidParameterError("estimator polynomial form disagrees with its matrix form")


@dataclass(frozen=True)
class ControllerSpec:
    """Polynomial feedback ``u_j = clip(l_j(xh, wh), lo_j, hi_j)``."""

    laws: tuple[Polynomial, ...]
    saturation: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "laws", tuple(self.laws))
        for i, p in enumerate(self.laws):
            bad = [v for v in p.variables if not (v.startswith("xh") or v.startswith("wh"))]
            if bad:
                raise InvalidParameterError(f"controller law {i} reads {bad}; only xh*/wh* are observable")
        if self.saturation is not None:
            sat = tuple((float(a), float(b)) for a, b in self.saturation)
            if len(sat) != len(self.laws):
                raise DimensionMismatchError("one saturation interval per input is required")
            if any(a > b for a, b in sat):
                raise InvalidParameterError("saturation interval has lo > hi")
            object.__setattr__(self, "saturation", sat)

    @property
    def input_dim(self) -> int:
        return len(self.laws)

    @classmethod
    def affine(cls, Fx, Fw=None, offset=None, saturation=None) -> "ControllerSpec":
        Fx = _mat(Fx, what="Fx")
        m, n = Fx.shape
        Fw = np.zeros((m, 0)) if Fw is None else _mat(Fw, rows=m, what="Fw")
        off = np.zeros(m) if offset is None else np.asarray(offset, dtype=float)
        laws = []
        for j in range(m):
            coeffs = {**dict(zip(names("xh", n), Fx[j])), **dict(zip(names("wh", Fw.shape[1]), Fw[j]))}
            laws.append(Polynomial.linear(coeffs, float(off[j])))
        return cls(tuple(laws), saturation)

    def evaluate(self, point) -> np.ndarray | list:
        """Clipped input values; ``point`` maps xh*/wh* to scalars or arrays."""
        out = []
        for j, law in enumerate(self.laws):
            u = law.eval(point)
            if self.saturation is not None:
                lo, hi = self.saturation[j]
                u = np.clip(u, lo, hi)
            out.append(u)
        return out


@dataclass(frozen=True)
class Block:
    plant: SubsystemSpec
    estimator: EstimatorSpec
    controller: ControllerSpec

    def __post_init__(self):
        n = self.plant.state_dim
        if self.estimator.state_dim != n:
            raise DimensionMismatchError(f"estimator has {self.estimator.state_dim} states, plant has {n}")
        if self.controller.input_dim != self.plant.external_input_dim:
            raise DimensionMismatchError(
                f"controller drives {self.controller.input_dim} inputs, plant has {self.plant.external_input_dim}"
            )
        allowed = set(
            names("xh", n)
            + names("u", self.plant.external_input_dim)
            + names("wh", self.plant.internal_input_dim)
            + names("y", self.plant.output_dim)
        )
        _check_vars(self.estimator.transition, allowed, "estimator transition")
        _check_vars(self.controller.laws, set(names("xh", n) + names("wh", self.plant.internal_input_dim)), "controller")


@dataclass(frozen=True)
class Edge:
    """Route ``y1[src][outputs]`` into ``w[dst][inputs]`` (and the estimates likewise)."""

    src: int
    dst: int
    outputs: tuple[int, ...]
    inputs: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "outputs", tuple(int(i) for i in self.outputs))
        object.__setattr__(self, "inputs", tuple(int(i) for i in self.inputs))


@dataclass(frozen=True)
class NetworkSpec:
    blocks: tuple[Block, ...]
    edges: tuple[Edge, ...]

    @property
    def size(self) -> int:
        return len(self.blocks)

    def in_edges(self) -> list[list[Edge]]:
        out: list[list[Edge]] = [[] for _ in self.blocks]
        for e in self.edges:
            out[e.dst].append(e)
        return out

    def neighbours(self) -> list[set[int]]:
        """Predecessor sets: ``j in neighbours()[i]`` iff an edge j -> i exists."""
        out: list[set[int]] = [set() for _ in self.blocks]
        for e in self.edges:
            out[e.dst].add(e.src)
        return out


def build_interconnection(blocks: Sequence[Block], edges: Sequence[Edge]) -> NetworkSpec:
    """Validate wiring and return the network.

    Unwired internal-input slots stay at zero (a missing connection is an
    identically-zero output map).
    """
    blocks = tuple(blocks)
    if not blocks:
        raise WiringError("a network needs at least one block")
    taken: dict[tuple[int, int], Edge] = {}
    for e in edges:
        for end in (e.src, e.dst):
            if not 0 <= end < len(blocks):
                raise WiringError(f"edge {e.src}->{e.dst}: block index {end} does not exist")
        if e.src == e.dst:
            raise WiringError(f"edge {e.src}->{e.dst}: self-interconnection is not an internal edge")
        src, dst = blocks[e.src].plant, blocks[e.dst].plant
        if len(e.outputs) != len(e.inputs):
            raise WiringError(
                f"edge {e.src}->{e.dst}: source port has dimension {len(e.outputs)}, "
                f"target slot has dimension {len(e.inputs)}"
            )
        for o in e.outputs:
            if not 0 <= o < src.internal_output_dim:
                raise WiringError(
                    f"edge {e.src}->{e.dst}: output index {o} dangling (source has {src.internal_output_dim} outputs)"
                )
        for i in e.inputs:
            if not 0 <= i < dst.internal_input_dim:
                raise WiringError(
                    f"edge {e.src}->{e.dst}: input index {i} dangling (target has {dst.internal_input_dim} inputs)"
                )
            prev = taken.get((e.dst, i))
            if prev is not None:
                raise WiringError(
                    f"edge {e.src}->{e.dst}: input slot {i} of block {e.dst} already driven by block {prev.src}"
                )
            taken[(e.dst, i)] = e
    return NetworkSpec(blocks, tuple(edges))


@dataclass(frozen=True)
class AugmentedSystem:
    """Joint map of ``(x, xh)`` with ``y`` eliminated through ``h2``."""

    plant_next: tuple[Polynomial, ...]
    estimator_next: tuple[Polynomial, ...]

    @property
    def transition(self) -> tuple[Polynomial, ...]:
        return self.plant_next + self.estimator_next

    def noise_sigmas(self, sub: SubsystemSpec) -> dict[str, float]:
        out = {f"s{i}": float(s) for i, s in enumerate(sub.process_std)}
        out.update({f"m{i}": float(s) for i, s in enumerate(sub.measurement_std)})
        return out


def augment(sub: SubsystemSpec, est: EstimatorSpec) -> AugmentedSystem:
    if est.state_dim != sub.state_dim:
        raise DimensionMismatchError(f"estimator has {est.state_dim} states, plant has {sub.state_dim}")
    y = {f"y{i}": p for i, p in enumerate(sub.measurement())}
    est_next = tuple(p.substitute(y, partial=True) for p in est.transition)
    return AugmentedSystem(sub.transition, est_next)


def _assign(prefix: str, values) -> dict:
    return {f"{prefix}{i}": v for i, v in enumerate(values)}


@dataclass
class NetworkState:
    x: list[np.ndarray]
    xh: list[np.ndarray]

    def copy(self) -> "NetworkState":
        return NetworkState([a.copy() for a in self.x], [a.copy() for a in self.xh])


def route(net: NetworkSpec, outputs: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Internal inputs of every block given all internal outputs."""
    w = [np.zeros(b.plant.internal_input_dim) for b in net.blocks]
    for e in net.edges:
        for o, i in zip(e.outputs, e.inputs):
            w[e.dst][i] = outputs[e.src][o]
    return w


def step(net: NetworkSpec, state: NetworkState, process_noise, measurement_noise, return_inputs: bool = False):
    """Advance every block one step, synchronously.

    All outputs are computed from the step-k states before any block moves.
    """
    y1 = []
    y1h = []
    for b, x, xh in zip(net.blocks, state.x, state.xh):
        y1.append(np.array([p.eval(_assign("x", x)) for p in b.plant.internal_output], dtype=float))
        y1h.append(np.array([p.eval(_assign("x", xh)) for p in b.plant.internal_output], dtype=float))
    w = route(net, y1)
    wh = route(net, y1h)
    nx, nxh, inputs = [], [], []
    for i, b in enumerate(net.blocks):
        x, xh = state.x[i], state.xh[i]
        u = np.array(b.controller.evaluate({**_assign("xh", xh), **_assign("wh", wh[i])}), dtype=float)
        y = b.plant.output_matrix @ x + b.plant.output_offset + np.asarray(measurement_noise[i], dtype=float)
        pt = {**_assign("x", x), **_assign("u", u), **_assign("w", w[i]), **_assign("s", process_noise[i])}
        ept = {**_assign("xh", xh), **_assign("u", u), **_assign("wh", wh[i]), **_assign("y", y)}
        x1 = np.array([p.eval(pt) for p in b.plant.transition], dtype=float)
        xh1 = np.array([p.eval(ept) for p in b.estimator.transition], dtype=float)
        if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(xh1))):
            raise DivergedTrajectoryError(f"block {i} state became non-finite")
        nx.append(x1)
        nxh.append(xh1)
        inputs.append(u)
    out = NetworkState(nx, nxh)
    return (out, inputs) if return_inputs else out


# ----------------------------------------------------------------- ACC model
ACC_A = np.array([[1.0, -1.0], [0.0, 1.0]])
ACC_B = np.array([[0.0], [1.0]])
ACC_C1 = np.array([[0.0, 1.0]])
ACC_C2 = np.array([[1.0, 0.0]])
ACC_K = (1.7, -0.72)
ACC_X = RegionSpec.box([[0.0, 3.5], [-2.0, 3.0]])
ACC_XA = RegionSpec.box([[1.0, 1.5], [-0.4, 0.4]])
ACC_XB = RegionSpec.from_list([[[0.0, 0.5], [-2.0, -1.5]], [[3.0, 3.5], [2.5, 3.0]]])
#: velocity of the predecessor lands in slot 1; slot 0 is structurally zero
ACC_W = RegionSpec.box([[0.0, 0.0], [-2.0, 3.0]])
ACC_CONTROLLERS = {
    1: (0.06, -0.7, 0.02, -0.07),
    2: (0.09, -1.0, 0.03, -0.09),
}
#: tool default; the case study does not state noise levels
ACC_SIGMA = 0.01


def acc_aw(tau: float) -> np.ndarray:
    return np.array([[0.0, tau], [0.0, 0.0]])


def acc_block(
    tau: float = 0.01,
    K=ACC_K,
    sigma1=ACC_SIGMA,
    sigma2=ACC_SIGMA,
    variant: int = 1,
) -> Block:
    if variant not in ACC_CONTROLLERS:
        raise InvalidParameterError(f"controller variant must be 1 or 2, got {variant}")
    Aw = acc_aw(tau)
    plant = SubsystemSpec.linear(
        ACC_A,
        ACC_B,
        ACC_C2,
        Aw=Aw,
        C1=ACC_C1,
        process_std=sigma1,
        measurement_std=sigma2,
        state_region=ACC_X,
        internal_input_region=ACC_W,
        initial_region=ACC_XA,
        unsafe_region=ACC_XB,
        name="vehicle",
    )
    est = EstimatorSpec.observer(ACC_A, ACC_B, np.reshape(K, (2, 1)), ACC_C2, Aw=Aw)
    kd, kv, kp, k0 = ACC_CONTROLLERS[variant]
    ctrl = ControllerSpec.affine([[kd, kv]], Fw=[[0.0, kp]], offset=[k0], saturation=[(-1.0, 1.0)])
    return Block(plant, est, ctrl)


def chain_edges(n_blocks: int, outputs=(0,), inputs=(1,)) -> list[Edge]:
    return [Edge(i - 1, i, outputs, inputs) for i in range(1, n_blocks)]


def acc_platoon(
    N: int,
    tau: float = 0.01,
    K=ACC_K,
    sigma1=ACC_SIGMA,
    sigma2=ACC_SIGMA,
    variant: int = 1,
) -> NetworkSpec:
    """Vehicle chain: block i-1 feeds its velocity to block i."""
    if N < 1:
        raise InvalidParameterError(f"platoon needs N >= 1, got {N}")
    block = acc_block(tau, K, sigma1, sigma2, variant)
    return build_interconnection([block] * N, chain_edges(N))
