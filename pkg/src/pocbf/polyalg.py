"""Sparse multivariate polynomials with exact Gaussian expectation.

Polynomials are keyed by variable *names*. A term is stored as a dense
exponent tuple aligned with the sorted variable tuple, so iteration order
(and therefore every report built from it) is byte-stable.

Text format, one term per line::

    1.5 * x0^2 * xh1
    -0.07
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from numbers import Real
from typing import Iterable, Iterator, Mapping

import numpy as np

from .errors import (
    InvalidParameterError,
    MissingAssignmentError,
    SubstitutionArityError,
)

#: Coefficients with absolute value at or below this are dropped.
ZERO_TOL = 1e-15


class VarKind(enum.Enum):
    STATE = "state"
    ESTIMATE = "estimator-state"
    EXTERNAL_INPUT = "external-input"
    INTERNAL_INPUT = "internal-input"
    INTERNAL_INPUT_ESTIMATE = "internal-input-estimate"
    NOISE = "noise"
    OUTPUT = "output"


@dataclass(frozen=True)
class Var:
    name: str
    kind: VarKind

    def poly(self) -> "Polynomial":
        return Polynomial.variable(self.name)


class VarSpace:
    """Registry that pins each variable name to a single kind."""

    def __init__(self, variables: Iterable[Var] = ()):
        self._kinds: dict[str, VarKind] = {}
        for v in variables:
            self.add(v)

    def add(self, var: Var) -> Var:
        known = self._kinds.get(var.name)
        if known is not None and known is not var.kind:
            raise InvalidParameterError(
                f"variable {var.name!r} already declared as {known.value}, "
                f"cannot redeclare as {var.kind.value}"
            )
        self._kinds[var.name] = var.kind
        return var

    def kind(self, name: str) -> VarKind:
        return self._kinds[name]

    def names(self, kind: VarKind | None = None) -> list[str]:
        return sorted(n for n, k in self._kinds.items() if kind is None or k is kind)

    def __contains__(self, name: str) -> bool:
        return name in self._kinds


def _double_factorial(k: int) -> int:
    out = 1
    while k > 1:
        out *= k
        k -= 2
    return out


def gaussian_moment(k: int, sigma: float) -> float:
    """E[z^k] for z ~ N(0, sigma^2)."""
    if k % 2:
        return 0.0
    if k == 0:
        return 1.0
    return _double_factorial(k - 1) * sigma**k


class Polynomial:
    """Immutable multivariate polynomial with float coefficients."""

    __slots__ = ("_vars", "_terms", "_index")

    def __init__(self, variables: Iterable[str] = (), terms: Mapping[tuple, float] | None = None):
        vs = tuple(variables)
        if list(vs) != sorted(set(vs)):
            raise ValueError("variables must be sorted and unique")
        self._vars: tuple[str, ...] = vs
        self._index = {v: i for i, v in enumerate(vs)}
        clean: dict[tuple[int, ...], float] = {}
        for exps, c in (terms or {}).items():
            if len(exps) != len(vs):
                raise ValueError("exponent tuple length does not match variables")
            c = float(c)
            if abs(c) > ZERO_TOL:
                clean[tuple(int(e) for e in exps)] = c
        self._terms = dict(sorted(clean.items()))

    # ----------------------------------------------------------- builders
    @classmethod
    def constant(cls, c: float) -> "Polynomial":
        return cls((), {(): c})

    @classmethod
    def zero(cls) -> "Polynomial":
        return cls()

    @classmethod
    def variable(cls, name: str) -> "Polynomial":
        return cls((name,), {(1,): 1.0})

    @classmethod
    def from_monomials(cls, items: Iterable[tuple[Mapping[str, int], float]]) -> "Polynomial":
        """Build from ``(exponent map, coefficient)`` pairs; repeats are summed."""
        items = list(items)
        names = sorted({v for mono, _ in items for v, e in mono.items() if e})
        idx = {v: i for i, v in enumerate(names)}
        acc: dict[tuple[int, ...], float] = {}
        for mono, c in items:
            exps = [0] * len(names)
            for v, e in mono.items():
                if e < 0:
                    raise InvalidParameterError(f"negative exponent on {v}")
                if e:
                    exps[idx[v]] += int(e)
            key = tuple(exps)
            acc[key] = acc.get(key, 0.0) + float(c)
        return cls(names, acc)

    @classmethod
    def linear(cls, coeffs: Mapping[str, float], const: float = 0.0) -> "Polynomial":
        items = [({v: 1}, c) for v, c in coeffs.items()]
        items.append(({}, const))
        return cls.from_monomials(items)

    # --------------------------------------------------------- properties
    @property
    def variables(self) -> tuple[str, ...]:
        """Names of variables that actually occur with a nonzero exponent."""
        used = set()
        for exps in self._terms:
            used.update(v for v, e in zip(self._vars, exps) if e)
        return tuple(v for v in self._vars if v in used)

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self._terms), default=0)

    @property
    def nterms(self) -> int:
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def terms(self) -> Iterator[tuple[dict[str, int], float]]:
        for exps, c in self._terms.items():
            yield {v: e for v, e in zip(self._vars, exps) if e}, c

    def coefficient(self, mono: Mapping[str, int] | None = None) -> float:
        mono = {v: e for v, e in (mono or {}).items() if e}
        if any(v not in self._index for v in mono):
            return 0.0
        key = tuple(mono.get(v, 0) for v in self._vars)
        return self._terms.get(key, 0.0)

    def constant_term(self) -> float:
        return self.coefficient({})

    def degree_in(self, name: str) -> int:
        i = self._index.get(name)
        if i is None:
            return 0
        return max((e[i] for e in self._terms), default=0)

    # ------------------------------------------------------------ algebra
    def _aligned(self, names: tuple[str, ...]) -> dict[tuple[int, ...], float]:
        if names == self._vars:
            return self._terms
        pos = [names.index(v) for v in self._vars]
        out = {}
        for exps, c in self._terms.items():
            full = [0] * len(names)
            for p, e in zip(pos, exps):
                full[p] = e
            out[tuple(full)] = c
        return out

    @staticmethod
    def _coerce(other) -> "Polynomial":
        if isinstance(other, Polynomial):
            return other
        if isinstance(other, Real):
            return Polynomial.constant(float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        names = tuple(sorted(set(self._vars) | set(other._vars)))
        acc = dict(self._aligned(names))
        for k, c in other._aligned(names).items():
            acc[k] = acc.get(k, 0.0) + c
        return Polynomial(names, acc)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self._vars, {k: -c for k, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Real):
            return Polynomial(self._vars, {k: c * other for k, c in self._terms.items()})
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        names = tuple(sorted(set(self._vars) | set(other._vars)))
        a = self._aligned(names)
        b = other._aligned(names)
        acc: dict[tuple[int, ...], float] = {}
        for ka, ca in a.items():
            for kb, cb in b.items():
                k = tuple(x + y for x, y in zip(ka, kb))
                acc[k] = acc.get(k, 0.0) + ca * cb
        return Polynomial(names, acc)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Real):
            return NotImplemented
        return self * (1.0 / float(other))

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            return NotImplemented
        out = Polynomial.constant(1.0)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __eq__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        names = tuple(sorted(set(self._vars) | set(other._vars)))
        return self._aligned(names) == other._aligned(names)

    def __hash__(self):
        return hash(tuple(sorted((tuple(sorted(m.items())), c) for m, c in self.terms())))

    def almost_equal(self, other: "Polynomial", tol: float = 1e-12) -> bool:
        diff = self - other
        return all(abs(c) <= tol for _, c in diff.terms())

    # --------------------------------------------------------- evaluation
    def __call__(self, point: Mapping[str, float]):
        return self.eval(point)

    def eval(self, point: Mapping[str, float]):
        """Evaluate at ``point`` (name -> scalar or numpy array)."""
        used = self.variables
        missing = [v for v in used if v not in point]
        if missing:
            raise MissingAssignmentError(f"no value assigned to variable(s) {missing}")
        if not self._terms:
            return 0.0
        vals = [point[v] if v in point else 0.0 for v in self._vars]
        powers: list[dict[int, object]] = [{} for _ in self._vars]
        total = 0.0
        for exps, c in self._terms.items():
            t = c
            for i, e in enumerate(exps):
                if e:
                    cache = powers[i]
                    pw = cache.get(e)
                    if pw is None:
                        pw = cache[e] = vals[i] ** e if e > 1 else vals[i]
                    t = t * pw
            total = total + t
        return total

    def partial_eval(self, point: Mapping[str, float]) -> "Polynomial":
        """Fix the variables present in ``point``; return the remaining polynomial."""
        keep = tuple(v for v in self._vars if v not in point)
        keep_pos = [self._index[v] for v in keep]
        fix_pos = [(self._index[v], float(point[v])) for v in self._vars if v in point]
        acc: dict[tuple[int, ...], float] = {}
        for exps, c in self._terms.items():
            for i, x in fix_pos:
                if exps[i]:
                    c *= x ** exps[i]
            k = tuple(exps[i] for i in keep_pos)
            acc[k] = acc.get(k, 0.0) + c
        return Polynomial(keep, acc)

    def linear_part(self) -> tuple[float, dict[str, float]]:
        """Return ``(constant, {var: coeff})``; fails if degree exceeds one."""
        if self.degree > 1:
            raise SubstitutionArityError(f"polynomial of degree {self.degree} is not affine")
        const = 0.0
        coeffs: dict[str, float] = {}
        for mono, c in self.terms():
            if not mono:
                const = c
            else:
                (v,) = mono
                coeffs[v] = c
        return const, coeffs

    # ------------------------------------------------------- substitution
    def substitute(self, mapping: Mapping[str, "Polynomial | float"], *, partial: bool = False) -> "Polynomial":
        """Replace variables by polynomials and expand.

        With ``partial=False`` every occurring variable needs an entry.
        """
        used = self.variables
        if not partial:
            missing = [v for v in used if v not in mapping]
            if missing:
                raise SubstitutionArityError(f"no substitution for variable(s) {missing}")
        subs = {}
        for v in self._vars:
            if v in mapping:
                r = mapping[v]
                subs[v] = r if isinstance(r, Polynomial) else Polynomial.constant(float(r))
            else:
                subs[v] = Polynomial.variable(v)
        cache: dict[tuple[str, int], Polynomial] = {}

        def power(v: str, e: int) -> Polynomial:
            key = (v, e)
            if key not in cache:
                cache[key] = subs[v] if e == 1 else power(v, e - 1) * subs[v]
            return cache[key]

        # accumulate raw dictionaries to avoid re-normalising on every add
        acc: dict[tuple, float] = {}
        for exps, c in self._terms.items():
            term = Polynomial.constant(c)
            for v, e in zip(self._vars, exps):
                if e:
                    term = term * power(v, e)
            for mono, tc in term.terms():
                key = tuple(sorted(mono.items()))
                acc[key] = acc.get(key, 0.0) + tc
        return Polynomial.from_monomials((dict(k), c) for k, c in acc.items())

    # -------------------------------------------------------- text format
    def to_text(self) -> str:
        lines = []
        for mono, c in self.terms():
            parts = [repr(c)]
            for v in sorted(mono):
                e = mono[v]
                parts.append(v if e == 1 else f"{v}^{e}")
            lines.append(" * ".join(parts))
        return "\n".join(lines) if lines else "0.0"

    @classmethod
    def from_text(cls, text: str | Iterable[str]) -> "Polynomial":
        lines = text.splitlines() if isinstance(text, str) else list(text)
        items = []
        for lineno, raw in enumerate(lines, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = [t.strip() for t in line.split("*")]
            try:
                coeff = float(tokens[0])
            except ValueError:
                raise ValueError(f"line {lineno}: expected a numeric coefficient, got {tokens[0]!r}") from None
            mono: dict[str, int] = {}
            for tok in tokens[1:]:
                name, _, exp = tok.partition("^")
                name = name.strip()
                if not name.isidentifier():
                    raise ValueError(f"line {lineno}: bad variable name {name!r}")
                try:
                    e = int(exp) if exp else 1
                except ValueError:
                    raise ValueError(f"line {lineno}: bad exponent {exp!r}") from None
                mono[name] = mono.get(name, 0) + e
            items.append((mono, coeff))
        return cls.from_monomials(items)

    def __repr__(self):
        return f"Polynomial({self.to_text()!r})"

    __str__ = to_text


def poly_vector(names: Iterable[str]) -> list[Polynomial]:
    return [Polynomial.variable(n) for n in names]


def eval_poly(p: Polynomial, point: Mapping[str, float]) -> float:
    return p.eval(point)


def affine_substitute(p: Polynomial, mapping: Mapping[str, "Polynomial | float"]) -> Polynomial:
    """Substitute an affine expression for each variable of ``p`` and expand."""
    for v, r in mapping.items():
        if isinstance(r, Polynomial) and r.degree > 1:
            raise SubstitutionArityError(f"substitution for {v!r} has degree {r.degree}, expected <= 1")
    return p.substitute(mapping)


def gaussian_expectation(p: Polynomial, sigmas: Mapping[str, float]) -> Polynomial:
    """Integrate independent zero-mean Gaussian variables out of ``p``.

    ``sigmas`` maps noise variable name to its standard deviation. Names not
    occurring in ``p`` are ignored.
    """
    for v, s in sigmas.items():
        if not (s >= 0):
            raise InvalidParameterError(f"noise {v!r} has standard deviation {s}; must be >= 0")
    noise = {v: float(s) for v, s in sigmas.items()}
    items = []
    for mono, c in p.terms():
        rest = {}
        for v, e in mono.items():
            if v in noise:
                c *= gaussian_moment(e, noise[v])
                if c == 0.0:
                    break
            else:
                rest[v] = e
        else:
            items.append((rest, c))
    return Polynomial.from_monomials(items)
