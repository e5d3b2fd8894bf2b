"""Uniform grids over box unions and grid extremization of polynomials."""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DimensionMismatchError, GridTooLargeError, InvalidParameterError
from .polyalg import Polynomial
from .regions import BoxRegion, RegionSpec

#: Total grid-point budget for one extremization or verification call.
DEFAULT_MAX_POINTS = 6_000_000_000
#: Points evaluated per chunk in :func:`extremize_on_grid`.
CHUNK = 1 << 18


def axis_points(lo: float, hi: float, resolution: int) -> np.ndarray:
    """``resolution`` uniform points on [lo, hi] plus the midpoint."""
    if resolution < 2:
        raise InvalidParameterError(f"resolution must be >= 2, got {resolution}")
    if lo == hi:
        return np.array([lo])
    pts = np.linspace(lo, hi, resolution)
    pts[0], pts[-1] = lo, hi
    mid = 0.5 * (lo + hi)
    if not np.any(pts == mid):
        pts = np.sort(np.append(pts, mid))
    return pts


def _resolutions(resolution, dim: int) -> list[int]:
    if isinstance(resolution, (int, np.integer)):
        return [int(resolution)] * dim
    res = [int(r) for r in resolution]
    if len(res) != dim:
        raise DimensionMismatchError(f"{len(res)} resolutions given for a {dim}-d region")
    return res


def box_axes(box: BoxRegion, resolution) -> list[np.ndarray]:
    return [axis_points(a, b, r) for a, b, r in zip(box.lo, box.hi, _resolutions(resolution, box.dim))]


def grid_size(region: RegionSpec, resolution) -> int:
    return sum(math.prod(len(a) for a in box_axes(b, resolution)) for b in region.boxes)


def mesh(axes: Sequence[np.ndarray], start: int = 0, stop: int | None = None) -> list[np.ndarray]:
    """Flattened C-order coordinates of the product grid, rows ``start:stop``."""
    shape = tuple(len(a) for a in axes)
    total = math.prod(shape)
    stop = total if stop is None else min(stop, total)
    idx = np.unravel_index(np.arange(start, stop), shape) if shape else ()
    return [a[i] for a, i in zip(axes, idx)]


@dataclass(frozen=True)
class GridExtrema:
    min: float
    max: float
    argmin: dict
    argmax: dict
    points: int


def _better(val, pt, best_val, best_pt, sign) -> bool:
    if best_val is None:
        return True
    if sign * val < sign * best_val:
        return True
    return val == best_val and pt < best_pt


def extremize_on_grid(
    p: Polynomial,
    region: RegionSpec,
    resolution,
    variables: Sequence[str] | None = None,
    *,
    max_points: int = DEFAULT_MAX_POINTS,
    workers: int = 1,
) -> GridExtrema:
    """Min and max of ``p`` over a uniform grid of ``region``.

    ``variables`` fixes which coordinate of the region each variable reads;
    it defaults to ``p.variables``. Ties go to the lexicographically smallest
    grid point, so the result does not depend on ``workers``.
    """
    variables = tuple(p.variables if variables is None else variables)
    if len(variables) != region.dim:
        raise DimensionMismatchError(
            f"polynomial over {len(variables)} variables {variables} vs {region.dim}-d region"
        )
    extra = set(p.variables) - set(variables)
    if extra:
        raise DimensionMismatchError(f"variables {sorted(extra)} are not covered by the region")
    total = grid_size(region, resolution)
    if total > max_points:
        raise GridTooLargeError(f"grid has {total} points, budget is {max_points}")

    jobs = []
    for box in region.boxes:
        axes = box_axes(box, resolution)
        n = math.prod(len(a) for a in axes)
        for s in range(0, n, CHUNK):
            jobs.append((axes, s, min(s + CHUNK, n)))

    def run(job):
        axes, s, e = job
        coords = mesh(axes, s, e)
        vals = np.broadcast_to(np.asarray(p.eval(dict(zip(variables, coords))), dtype=float), (e - s,))
        i_lo, i_hi = int(np.argmin(vals)), int(np.argmax(vals))
        pt = lambda i: tuple(float(c[i]) for c in coords)
        return float(vals[i_lo]), pt(i_lo), float(vals[i_hi]), pt(i_hi)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    lo_v = lo_p = hi_v = hi_p = None
    for vmin, pmin, vmax, pmax in results:
        if _better(vmin, pmin, lo_v, lo_p, +1):
            lo_v, lo_p = vmin, pmin
        if _better(vmax, pmax, hi_v, hi_p, -1):
            hi_v, hi_p = vmax, pmax
    return GridExtrema(lo_v, hi_v, dict(zip(variables, lo_p)), dict(zip(variables, hi_p)), total)


class SplitPoly:
    """A polynomial written as ``sum_j g_j(outer) * h_j(inner)``.

    Evaluating on a product of an outer and an inner point set is then one
    matrix product ``G @ H.T``.
    """

    def __init__(self, p: Polynomial, outer: Sequence[str], inner: Sequence[str]):
        outer, inner = tuple(outer), tuple(inner)
        if set(outer) & set(inner):
            raise ValueError("outer and inner variable sets overlap")
        missing = set(p.variables) - set(outer) - set(inner)
        if missing:
            raise DimensionMismatchError(f"variables {sorted(missing)} are neither outer nor inner")
        self.outer, self.inner = outer, inner
        groups: dict[tuple[int, ...], list[tuple[dict, float]]] = {}
        for mono, c in p.terms():
            key = tuple(mono.get(v, 0) for v in inner)
            groups.setdefault(key, []).append(({v: e for v, e in mono.items() if v in outer}, c))
        self.inner_exps = sorted(groups)
        self.outer_polys = [Polynomial.from_monomials(groups[k]) for k in self.inner_exps]

    def outer_matrix(self, values: Mapping[str, np.ndarray], n: int) -> np.ndarray:
        G = np.empty((n, len(self.outer_polys)))
        for j, g in enumerate(self.outer_polys):
            G[:, j] = g.eval(values)
        return G

    def inner_matrix(self, values: Mapping[str, np.ndarray], n: int) -> np.ndarray:
        H = np.ones((n, len(self.inner_exps)))
        for j, exps in enumerate(self.inner_exps):
            for v, e in zip(self.inner, exps):
                if e:
                    H[:, j] *= values[v] ** e
        return H


#: Residual-matrix entries evaluated per chunk in :func:`product_scan`.
ENTRY_BUDGET = 1 << 22


def _box_list(region: RegionSpec | None) -> list[BoxRegion | None]:
    return [None] if region is None else list(region.boxes)


def product_scan(
    fn,
    outer: RegionSpec | None,
    outer_names: Sequence[str],
    inner: RegionSpec | None,
    inner_names: Sequence[str],
    resolution,
    *,
    max_points: int = DEFAULT_MAX_POINTS,
    workers: int = 1,
) -> tuple[list, int]:
    """Apply ``fn(O, I)`` to blocks of the product grid ``outer x inner``.

    ``O`` and ``I`` map variable names to coordinate arrays of length ``no``
    and ``ni``; ``fn`` sees each outer block against the whole inner grid of
    one inner box. Returns ``(results, total_points)`` with results in a fixed
    job order, independent of ``workers``.
    """
    outer_names, inner_names = tuple(outer_names), tuple(inner_names)
    for reg, nm in ((outer, outer_names), (inner, inner_names)):
        d = 0 if reg is None else reg.dim
        if d != len(nm):
            raise DimensionMismatchError(f"{d}-d region given for variables {nm}")
    obox = [(b, box_axes(b, resolution) if b is not None else []) for b in _box_list(outer)]
    ibox = [(b, box_axes(b, resolution) if b is not None else []) for b in _box_list(inner)]
    size = lambda axes: math.prod(len(a) for a in axes)
    total = sum(size(oa) * size(ia) for _, oa in obox for _, ia in ibox)
    if total > max_points:
        raise GridTooLargeError(f"grid has {total} points, budget is {max_points}")

    jobs = []
    for _, ia in ibox:
        ni = size(ia)
        rows = max(1, ENTRY_BUDGET // ni)
        for _, oa in obox:
            no = size(oa)
            for s in range(0, no, rows):
                jobs.append((oa, s, min(s + rows, no), ia))

    inner_cache: dict[int, dict] = {}

    def inner_values(ia):
        key = id(ia)
        if key not in inner_cache:
            inner_cache[key] = dict(zip(inner_names, mesh(ia)))
        return inner_cache[key]

    for _, ia in ibox:
        inner_values(ia)

    def run(job):
        oa, s, e, ia = job
        O = dict(zip(outer_names, mesh(oa, s, e)))
        return fn(O, inner_values(ia), e - s, size(ia))

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    return results, total


@dataclass(frozen=True)
class ScanMax:
    value: float
    witness: dict
    points: int


def scan_max(
    residual,
    outer: RegionSpec | None,
    outer_names: Sequence[str],
    inner: RegionSpec | None = None,
    inner_names: Sequence[str] = (),
    resolution=21,
    **kw,
) -> ScanMax:
    """Largest value of ``residual(O, I, no, ni)`` (an ``(no, ni)`` array).

    The witness is the lexicographically smallest maximizer in the order
    ``outer_names + inner_names``.
    """
    names = tuple(outer_names) + tuple(inner_names)

    def fn(O, I, no, ni):
        r = np.broadcast_to(np.asarray(residual(O, I, no, ni), dtype=float), (no, ni))
        flat = int(np.argmax(r))
        a, b = divmod(flat, ni)
        pt = tuple(float(O[v][a]) for v in outer_names) + tuple(float(I[v][b]) for v in inner_names)
        return float(r[a, b]), pt

    results, total = product_scan(fn, outer, outer_names, inner, inner_names, resolution, **kw)
    best_v = best_p = None
    for v, p in results:
        if np.isnan(v):
            v = np.inf
        if _better(v, p, best_v, best_p, -1):
            best_v, best_p = v, p
    return ScanMax(best_v, dict(zip(names, best_p)), total)
