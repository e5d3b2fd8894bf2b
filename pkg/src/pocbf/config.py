"""Project configuration: YAML text, schema validation and model construction.

A config describes block templates (each replicated ``count`` times), the
wiring, per-template certificates and the settings of every pipeline stage.
Matrices are row-major nested lists; polynomials use the one-term-per-line
text format of :meth:`Polynomial.to_text`.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Any

import jsonschema
import numpy as np
import yaml

from .certificate import AUGMENTED, ESTIMATOR, BarrierCertificate, SimulationCertificate
from .errors import ConfigError, PocbfError
from .gains import GainFn
from .polyalg import Polynomial
from .regions import RegionSpec
from .sysmodel import (
    ACC_A,
    ACC_B,
    ACC_C1,
    ACC_C2,
    ACC_CONTROLLERS,
    ACC_K,
    ACC_SIGMA,
    ACC_W,
    ACC_X,
    ACC_XA,
    ACC_XB,
    Block,
    ControllerSpec,
    Edge,
    EstimatorSpec,
    NetworkSpec,
    SubsystemSpec,
    acc_aw,
    build_interconnection,
    chain_edges,
)

SCHEMA_VERSION = 1

_num = {"type": "number"}
_int = {"type": "integer"}
_vec = {"type": "array", "items": _num}
_num_or_vec = {"oneOf": [_num, _vec]}
_mat = {"type": "array", "items": _vec}
_interval = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_box = {"type": "array", "items": _interval, "minItems": 1}
_region = {"type": "array", "items": _box, "minItems": 1}
_gain = {
    "oneOf": [
        {"type": "number", "minimum": 0},
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["coef"],
            "properties": {"coef": {"type": "number", "minimum": 0}, "power": {"type": "number"}},
        },
    ]
}
_poly = {"type": "string"}
_polys = {"type": "array", "items": _poly}
_idx = {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "additionalProperties": False, "required": list(required), "properties": props}


SCHEMA: dict = _obj(
    {
        "schema_version": {"const": SCHEMA_VERSION},
        "description": {"type": "string"},
        "system": _obj(
            {
                "blocks": {
                    "type": "array",
                    "minItems": 1,
                    "items": _obj(
                        {
                            "name": {"type": "string"},
                            "count": {"type": "integer", "minimum": 1},
                            "plant": _obj(
                                {
                                    "A": _mat,
                                    "B": _mat,
                                    "C2": _mat,
                                    "Aw": _mat,
                                    "C1": _mat,
                                    "transition": _polys,
                                    "internal_output": _polys,
                                    "output_matrix": _mat,
                                    "output_offset": _vec,
                                    "external_input_dim": {"type": "integer", "minimum": 0},
                                    "internal_input_dim": {"type": "integer", "minimum": 0},
                                    "process_std": _num_or_vec,
                                    "measurement_std": _num_or_vec,
                                    "regions": _obj(
                                        {"state": _region, "internal_input": _region, "initial": _region, "unsafe": _region},
                                        ["state"],
                                    ),
                                },
                                ["regions"],
                            ),
                            "estimator": _obj({"K": _mat, "transition": _polys}),
                            "controller": _obj(
                                {"Fx": _mat, "Fw": _mat, "offset": _vec, "laws": _polys, "saturation": {"type": "array", "items": _interval}}
                            ),
                        },
                        ["name", "plant", "estimator", "controller"],
                    ),
                },
                "topology": _obj(
                    {
                        "chain": _obj({"outputs": _idx, "inputs": _idx}, ["outputs", "inputs"]),
                        "edges": {
                            "type": "array",
                            "items": _obj(
                                {"src": {"type": "integer", "minimum": 0}, "dst": {"type": "integer", "minimum": 0}, "outputs": _idx, "inputs": _idx},
                                ["src", "dst", "outputs", "inputs"],
                            ),
                        },
                    }
                ),
            },
            ["blocks"],
        ),
        "certificates": _obj(
            {
                "barrier": {
                    "type": "array",
                    "items": _obj(
                        {
                            "block": {"type": "string"},
                            "flavor": {"enum": [AUGMENTED, ESTIMATOR]},
                            "trusted": {"type": "boolean"},
                            "B": {"type": ["string", "null"]},
                            "alpha": _gain,
                            "rho": _gain,
                            "kappa": _num,
                            "psi": _num,
                            "gamma": _num,
                            "lambda": _num,
                            "eps": {"type": "number", "minimum": 0},
                            "innovation_band": _num_or_vec,
                            "output_region": _region,
                            "source": {"type": "string"},
                        },
                        ["block", "alpha", "rho", "kappa", "psi", "gamma", "lambda"],
                    ),
                },
                "simulation": {
                    "type": "array",
                    "items": _obj(
                        {
                            "block": {"type": "string"},
                            "trusted": {"type": "boolean"},
                            "phi": {"type": ["string", "null"]},
                            "M": _mat,
                            "pi_tilde": {"type": "number"},
                            "eps_gain": _gain,
                            "varrho": _gain,
                            "mu": _num,
                            "c": _num,
                        },
                        ["block", "eps_gain", "varrho", "mu", "c"],
                    ),
                },
            }
        ),
        "verification": _obj(
            {
                "resolution": {"type": "integer", "minimum": 2},
                "tolerance": {"type": "number", "minimum": 0},
                "ssf_tolerance": {"type": ["number", "null"], "minimum": 0},
                "lipschitz": {"type": ["number", "null"], "minimum": 0},
                "max_points": {"type": "integer", "minimum": 1},
                "spotcheck": _obj(
                    {
                        "samples": {"type": "integer", "minimum": 1},
                        "inner": {"type": "integer", "minimum": 2},
                        "seed": {"type": "integer", "minimum": 0},
                    }
                ),
            }
        ),
        "simulation": _obj(
            {
                "trials": {"type": "integer", "minimum": 1},
                "horizon": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "initial": {"enum": ["fixed", "grid", "uniform"]},
                "initial_point": _vec,
                "grid_points": {"type": "integer", "minimum": 1},
                "estimator_init": {"enum": ["equal", "offset", "uniform"]},
                "estimator_offset": _vec,
                "chunk": {"type": "integer", "minimum": 1},
                "exit_mode": {"enum": ["product", "any"]},
                "left_domain_is_exit": {"type": "boolean"},
                "kernel": {"enum": ["auto", "cython", "numpy"]},
                "csv_trials": {"type": "integer", "minimum": 1},
            }
        ),
        "bound": _obj(
            {
                "horizon": {"type": "integer", "minimum": 0},
                "eps": {"type": "number", "minimum": 0},
                "phi0": {"type": "number", "minimum": 0},
            }
        ),
    },
    ["schema_version", "system"],
)


# ------------------------------------------------------------- locations
def _line_index(text: str) -> dict:
    """Map key paths (tuples of keys / indices) to 1-based source lines."""
    out: dict = {}

    def walk(node, path):
        out.setdefault(path, node.start_mark.line + 1)
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = path + (k.value,)
                out[p] = k.start_mark.line + 1
                walk(v, p)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, path + (i,))

    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return out
    if root is not None:
        walk(root, ())
    return out


def _fmt_path(path) -> str:
    s = ""
    for p in path:
        s += f"[{p}]" if isinstance(p, int) else (f".{p}" if s else str(p))
    return s or "<root>"


class _Ctx:
    def __init__(self, source: str, lines: dict):
        self.source, self.lines = source, lines

    def error(self, path, msg) -> ConfigError:
        path = tuple(path)
        line = None
        for k in range(len(path), -1, -1):
            if path[:k] in self.lines:
                line = self.lines[path[:k]]
                break
        where = f"{self.source}:{line}" if line else self.source
        return ConfigError(f"{where}: {_fmt_path(path)}: {msg}")


# ------------------------------------------------------------ the model
@dataclass
class ProjectConfig:
    raw: dict
    network: NetworkSpec
    block_template: list[int]
    templates: list[str]
    barrier: list[BarrierCertificate | None]
    barrier_opts: list[dict]
    simulation_certs: list[SimulationCertificate | None]
    ssf_opts: list[dict]
    verification: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)
    bound: dict = field(default_factory=dict)
    source: str = "<string>"

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    def template_block(self, t: int) -> Block:
        return self.network.blocks[self.block_template.index(t)]


def config_hash(raw: dict) -> str:
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _region(data) -> RegionSpec | None:
    return None if data is None else RegionSpec.from_list(data)


def _polys(items) -> list[Polynomial]:
    return [Polynomial.from_text(s) for s in items]


def _build_block(d: dict, ctx: _Ctx, path) -> Block:
    P, E, C = d["plant"], d["estimator"], d["controller"]
    pp = path + ("plant",)
    R = P["regions"]
    regions = dict(
        state_region=_region(R["state"]),
        internal_input_region=_region(R.get("internal_input")),
        initial_region=_region(R.get("initial")),
        unsafe_region=_region(R.get("unsafe")),
    )
    noise = dict(process_std=P.get("process_std", 0.0), measurement_std=P.get("measurement_std", 0.0))
    if ("A" in P) == ("transition" in P):
        raise ctx.error(pp, "give either matrices (A, B, C2, ...) or polynomial 'transition', not both or neither")
    if "A" in P:
        for k in ("B", "C2"):
            if k not in P:
                raise ctx.error(pp, f"linear plant needs key {k!r}")
        for k in ("transition", "internal_output", "output_matrix", "external_input_dim", "internal_input_dim"):
            if k in P:
                raise ctx.error(pp + (k,), "not allowed with the matrix form")
        plant = SubsystemSpec.linear(
            P["A"], P["B"], P["C2"], Aw=P.get("Aw"), C1=P.get("C1"), state_region=regions.pop("state_region"),
            output_offset=P.get("output_offset"), name=d["name"], **noise, **regions,
        )
    else:
        if "output_matrix" not in P:
            raise ctx.error(pp, "polynomial plant needs key 'output_matrix'")
        for k in ("B", "C2", "Aw", "C1"):
            if k in P:
                raise ctx.error(pp + (k,), "not allowed with the polynomial form")
        plant = SubsystemSpec(
            transition=_polys(P["transition"]),
            internal_output=_polys(P.get("internal_output", [])),
            output_matrix=P["output_matrix"],
            output_offset=P.get("output_offset"),
            external_input_dim=P.get("external_input_dim", 1),
            internal_input_dim=P.get("internal_input_dim", 0),
            name=d["name"],
            **noise,
            **regions,
        )
    ep = path + ("estimator",)
    if ("K" in E) == ("transition" in E):
        raise ctx.error(ep, "give either an observer gain 'K' or a polynomial 'transition'")
    if "K" in E:
        if "A" not in P:
            raise ctx.error(ep + ("K",), "an observer gain needs a plant in matrix form")
        est = EstimatorSpec.observer(P["A"], P["B"], E["K"], P["C2"], Aw=P.get("Aw"), c2=P.get("output_offset"))
    else:
        est = EstimatorSpec(tuple(_polys(E["transition"])))
    cp = path + ("controller",)
    if ("Fx" in C) == ("laws" in C):
        raise ctx.error(cp, "give either affine gains 'Fx' (with optional 'Fw', 'offset') or polynomial 'laws'")
    sat = C.get("saturation")
    if "Fx" in C:
        ctrl = ControllerSpec.affine(C["Fx"], C.get("Fw"), C.get("offset"), sat)
    else:
        for k in ("Fw", "offset"):
            if k in C:
                raise ctx.error(cp + (k,), "only allowed with affine gains 'Fx'")
        ctrl = ControllerSpec(tuple(_polys(C["laws"])), sat)
    return Block(plant, est, ctrl)


def _check_unit(ctx, path, v, sym):
    if not 0 < v < 1:
        raise ctx.error(path, f"{sym} must lie in (0,1), got {v}")


def _barrier(d: dict, ctx: _Ctx, path) -> tuple[BarrierCertificate, dict]:
    _check_unit(ctx, path + ("kappa",), d["kappa"], "κ̄")
    if not d["lambda"] > 0:
        raise ctx.error(path + ("lambda",), f"λ̄ (lambda) must be > 0, got {d['lambda']}")
    for k in ("psi", "gamma"):
        if d[k] < 0:
            raise ctx.error(path + (k,), f"must be >= 0, got {d[k]}")
    trusted = d.get("trusted", False)
    if "B" not in d and not trusted:
        raise ctx.error(path, "missing key 'B' (barrier polynomial terms); set 'trusted: true' for constants-only certificates")
    text = d.get("B")
    if text is None and not trusted:
        raise ctx.error(path + ("B",), "barrier polynomial terms are empty; set 'trusted: true' for constants-only certificates")
    B = None
    if text is not None:
        try:
            B = Polynomial.from_text(text)
        except ValueError as exc:
            raise ctx.error(path + ("B",), str(exc)) from None
    flavor = d.get("flavor", AUGMENTED)
    if flavor == ESTIMATOR and "eps" not in d:
        raise ctx.error(path, "estimator-flavor certificate needs key 'eps' (unsafe-set inflation)")
    cert = BarrierCertificate(
        B, GainFn.from_value(d["alpha"]), GainFn.from_value(d["rho"]), float(d["kappa"]), float(d["psi"]),
        float(d["gamma"]), float(d["lambda"]), flavor,
    )
    opts = {
        "trusted": trusted,
        "eps": d.get("eps", 0.0),
        "innovation_band": d.get("innovation_band"),
        "output_region": _region(d.get("output_region")),
    }
    return cert, opts


def _simulation(d: dict, ctx: _Ctx, path) -> tuple[SimulationCertificate, dict]:
    _check_unit(ctx, path + ("mu",), d["mu"], "μ̄ (mu)")
    if d["c"] < 0:
        raise ctx.error(path + ("c",), f"must be >= 0, got {d['c']}")
    trusted = d.get("trusted", False)
    phi, M = d.get("phi"), d.get("M")
    if phi is not None and M is not None:
        raise ctx.error(path, "give either 'phi' or 'M', not both")
    if phi is None and M is None and not trusted:
        raise ctx.error(path, "missing key 'phi' or 'M'; set 'trusted: true' for constants-only certificates")
    if M is not None and "pi_tilde" not in d:
        raise ctx.error(path, "matrix simulation function needs key 'pi_tilde'")
    args = (GainFn.from_value(d["eps_gain"]), GainFn.from_value(d["varrho"]), float(d["mu"]), float(d["c"]))
    if M is not None:
        cert = SimulationCertificate.from_matrix(M, *args)
    else:
        cert = SimulationCertificate(None if phi is None else Polynomial.from_text(phi), *args)
    return cert, {"trusted": trusted, "pi_tilde": d.get("pi_tilde")}


def _edges(raw_top, n: int) -> list[Edge]:
    if not raw_top:
        return []
    out = []
    if "chain" in raw_top:
        c = raw_top["chain"]
        out += chain_edges(n, c["outputs"], c["inputs"])
    for e in raw_top.get("edges", []):
        out.append(Edge(e["src"], e["dst"], e["outputs"], e["inputs"]))
    return out


def parse_config(text: str, source: str = "<string>") -> ProjectConfig:
    """Parse, validate and build a project config from YAML text."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark else source
        raise ConfigError(f"{where}: invalid YAML: {getattr(exc, 'problem', exc)}") from None
    return build_config(raw, source, _line_index(text))


def build_config(raw: Any, source: str = "<dict>", lines: dict | None = None) -> ProjectConfig:
    ctx = _Ctx(source, lines or {})
    if not isinstance(raw, dict):
        raise ctx.error((), "top level must be a mapping")
    v = jsonschema.Draft202012Validator(SCHEMA)
    errs = sorted(v.iter_errors(raw), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errs:
        e = jsonschema.exceptions.best_match(errs)
        path = tuple(e.absolute_path)
        msg = e.message
        if e.validator == "additionalProperties":
            msg = "unknown key " + msg.split("(")[-1].rstrip(")").replace(" were unexpected", "").replace(" was unexpected", "")
        elif e.validator == "required":
            msg = "missing key " + msg.replace(" is a required property", "")
        elif e.validator == "const" and path == ("schema_version",):
            msg = f"unsupported schema_version {raw.get('schema_version')!r}; expected {SCHEMA_VERSION}"
        raise ctx.error(path, msg)
    raw = copy.deepcopy(raw)

    templates, blocks, owner = [], [], []
    for t, bd in enumerate(raw["system"]["blocks"]):
        path = ("system", "blocks", t)
        if bd["name"] in templates:
            raise ctx.error(path + ("name",), f"duplicate block name {bd['name']!r}")
        templates.append(bd["name"])
        try:
            blk = _build_block(bd, ctx, path)
        except ConfigError:
            raise
        except PocbfError as exc:
            raise ctx.error(path, str(exc)) from None
        blocks += [blk] * bd.get("count", 1)
        owner += [t] * bd.get("count", 1)
    try:
        net = build_interconnection(blocks, _edges(raw["system"].get("topology"), len(blocks)))
    except PocbfError as exc:
        raise ctx.error(("system", "topology"), str(exc)) from None

    certs = raw.get("certificates", {}) or {}
    bar: list = [None] * len(templates)
    bar_opts: list = [{} for _ in templates]
    sim: list = [None] * len(templates)
    sim_opts: list = [{} for _ in templates]
    for kind, store, opts, make in (("barrier", bar, bar_opts, _barrier), ("simulation", sim, sim_opts, _simulation)):
        for i, d in enumerate(certs.get(kind, [])):
            path = ("certificates", kind, i)
            if d["block"] not in templates:
                raise ctx.error(path + ("block",), f"unknown block {d['block']!r}; known: {templates}")
            t = templates.index(d["block"])
            if store[t] is not None:
                raise ctx.error(path + ("block",), f"second {kind} certificate for block {d['block']!r}")
            try:
                store[t], opts[t] = make(d, ctx, path)
            except ConfigError:
                raise
            except PocbfError as exc:
                raise ctx.error(path, str(exc)) from None
            blk = blocks[owner.index(t)]
            if kind == "barrier" and store[t].flavor == AUGMENTED and blk.plant.internal_input_dim and blk.plant.internal_input_region is None:
                raise ctx.error(("system", "blocks", t, "plant", "regions"), "certificates need an 'internal_input' region")
            if kind == "simulation" and store[t].M is not None and store[t].M.shape[0] != blk.plant.state_dim:
                raise ctx.error(path + ("M",), f"M is {store[t].M.shape[0]}x{store[t].M.shape[0]}, state is {blk.plant.state_dim}-d")
    if raw.get("simulation", {}).get("initial") == "fixed" and "initial_point" not in raw["simulation"]:
        raise ctx.error(("simulation",), "initial: fixed needs key 'initial_point'")
    return ProjectConfig(
        raw=raw,
        network=net,
        block_template=owner,
        templates=templates,
        barrier=bar,
        barrier_opts=bar_opts,
        simulation_certs=sim,
        ssf_opts=sim_opts,
        verification=dict(raw.get("verification", {})),
        simulation=dict(raw.get("simulation", {})),
        bound=dict(raw.get("bound", {})),
        source=source,
    )


def load_config(path) -> ProjectConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config(text, str(path))


# ------------------------------------------------------------- emission
class _Dumper(yaml.SafeDumper):
    pass


def _str_rep(dumper, s):
    style = "|" if "\n" in s else None
    return dumper.represent_scalar("tag:yaml.org,2002:str", s, style=style)


def _list_rep(dumper, seq):
    flow = all(not isinstance(v, (dict, str)) for v in seq)
    return dumper.represent_sequence("tag:yaml.org,2002:seq", seq, flow_style=flow)


_Dumper.add_representer(str, _str_rep)
_Dumper.add_representer(list, _list_rep)


def dump_config(raw: dict) -> str:
    return yaml.dump(raw, Dumper=_Dumper, sort_keys=False, width=120, allow_unicode=True)


# ----------------------------------------------------------- ACC platoon
ACC_FIXTURES = ("reference", "quadratic", "quartic")
REFERENCE_ACC = {"alpha": 1e-5, "rho": 2e-8, "gamma": 0.12, "lambda": 1.0, "kappa": 0.95, "psi": 0.001}
REFERENCE_SSF = {
    "M": [[0.0257, 0.0259], [0.0259, 0.0262]],
    "pi_tilde": 1.0,
    "eps_gain": {"coef": 0.3, "power": 2.0},
    "varrho": {"coef": 0.002, "power": 2.0},
    "mu": 0.4,
    "c": 1e-5,
}
ACC_EPS = 0.01


def load_fixture(name: str, variant: int = 1) -> dict:
    """A shipped certificate fixture (``quadratic`` or ``quartic``) for a controller variant.

    Variant 1 fixtures are augmented-flavor barriers, variant 2 fixtures are
    estimator-flavor barriers (file suffix ``_estimator``).
    """
    stem = f"acc_{name}" if variant == 1 else f"acc_{name}_estimator"
    try:
        text = resources.files("pocbf").joinpath("data", f"{stem}.yaml").read_text()
    except FileNotFoundError:
        raise ConfigError(f"no shipped certificate fixture named {name!r}") from None
    return yaml.safe_load(text)


def _m(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def acc_config(
    N: int,
    tau: float = 0.01,
    variant: int = 1,
    sigma1: float = ACC_SIGMA,
    sigma2: float = ACC_SIGMA,
    certificate: str = "reference",
    trials: int = 10_000,
) -> dict:
    """Raw config for the vehicle platoon.

    ``certificate="reference"`` attaches the reference constants as a trusted,
    constants-only certificate; ``quadratic``/``quartic`` attach the shipped
    grid-verified barriers for the chosen controller variant.
    """
    if N < 1:
        raise ConfigError(f"platoon needs N >= 1, got {N}")
    if variant not in ACC_CONTROLLERS:
        raise ConfigError(f"controller variant must be 1 or 2, got {variant}")
    if certificate not in ACC_FIXTURES:
        raise ConfigError(f"unknown certificate {certificate!r}; choose from {ACC_FIXTURES}")
    kd, kv, kp, k0 = ACC_CONTROLLERS[variant]
    block = {
        "name": "vehicle",
        "count": int(N),
        "plant": {
            "A": _m(ACC_A),
            "B": _m(ACC_B),
            "C2": _m(ACC_C2),
            "Aw": _m(acc_aw(tau)),
            "C1": _m(ACC_C1),
            "process_std": float(sigma1),
            "measurement_std": float(sigma2),
            "regions": {
                "state": ACC_X.to_list(),
                "internal_input": ACC_W.to_list(),
                "initial": ACC_XA.to_list(),
                "unsafe": ACC_XB.to_list(),
            },
        },
        "estimator": {"K": [[ACC_K[0]], [ACC_K[1]]]},
        "controller": {"Fx": [[kd, kv]], "Fw": [[0.0, kp]], "offset": [k0], "saturation": [[-1.0, 1.0]]},
    }
    flavor = AUGMENTED if variant == 1 else ESTIMATOR
    if certificate == "reference":
        bar = {"block": "vehicle", "flavor": flavor, "trusted": True, "B": None, "source": "reference constants"}
        bar.update({k: REFERENCE_ACC[k] for k in ("alpha", "rho", "kappa", "psi", "gamma", "lambda")})
    else:
        fx = load_fixture(certificate, variant)
        bar = {"block": "vehicle", "flavor": fx["flavor"], "B": fx["B"]}
        bar.update({k: fx[k] for k in ("alpha", "rho", "kappa", "psi", "gamma", "lambda")})
        if "innovation_band" in fx:
            bar["innovation_band"] = fx["innovation_band"]
        bar["source"] = f"shipped fixture acc_{certificate}" + ("_estimator" if variant == 2 else "")
    if flavor == ESTIMATOR:
        bar["eps"] = fx.get("eps", ACC_EPS) if certificate != "reference" else ACC_EPS
    raw = {
        "schema_version": SCHEMA_VERSION,
        "description": f"vehicle platoon, N={N}, tau={tau}, controller variant {variant}",
        "system": {"blocks": [block], "topology": {"chain": {"outputs": [0], "inputs": [1]}}},
        "certificates": {"barrier": [bar]},
        "verification": {"resolution": 21, "tolerance": 0.0, "ssf_tolerance": None, "spotcheck": {"samples": 200, "inner": 4000, "seed": 0}},
        "simulation": {
            "trials": int(trials),
            "horizon": 10,
            "seed": 0,
            "initial": "grid",
            "grid_points": 3,
            "estimator_init": "equal",
            "exit_mode": "product",
            "kernel": "auto",
        },
        "bound": {"horizon": 10},
    }
    if variant == 2:
        raw["certificates"]["simulation"] = [{"block": "vehicle", **copy.deepcopy(REFERENCE_SSF)}]
        raw["bound"].update({"eps": ACC_EPS, "phi0": 0.0})
    return raw
