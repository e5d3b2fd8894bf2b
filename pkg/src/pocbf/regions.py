"""Axis-aligned boxes and finite unions of boxes."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatchError, InvalidParameterError


@dataclass(frozen=True)
class BoxRegion:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi):
            raise DimensionMismatchError("box lower and upper corners differ in length")
        for i, (a, b) in enumerate(zip(lo, hi)):
            if not a <= b:
                raise InvalidParameterError(f"box coordinate {i}: lo={a} exceeds hi={b}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def from_intervals(cls, intervals: Iterable[Sequence[float]]) -> "BoxRegion":
        iv = [tuple(i) for i in intervals]
        return cls(tuple(a for a, _ in iv), tuple(b for _, b in iv))

    @property
    def dim(self) -> int:
        return len(self.lo)

    def intervals(self) -> list[list[float]]:
        return [[a, b] for a, b in zip(self.lo, self.hi)]

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))

    def grow(self, eps: float) -> "BoxRegion":
        return BoxRegion(tuple(a - eps for a in self.lo), tuple(b + eps for b in self.hi))

    def intersect(self, other: "BoxRegion") -> "BoxRegion | None":
        if other.dim != self.dim:
            raise DimensionMismatchError(f"cannot intersect {self.dim}-d and {other.dim}-d boxes")
        lo = tuple(max(a, c) for a, c in zip(self.lo, other.lo))
        hi = tuple(min(b, d) for b, d in zip(self.hi, other.hi))
        if any(a > b for a, b in zip(lo, hi)):
            return None
        return BoxRegion(lo, hi)

    def product(self, other: "BoxRegion") -> "BoxRegion":
        return BoxRegion(self.lo + other.lo, self.hi + other.hi)

    def corners(self) -> list[tuple[float, ...]]:
        return list(itertools.product(*zip(self.lo, self.hi)))


@dataclass(frozen=True)
class RegionSpec:
    """Union of boxes sharing one dimension."""

    boxes: tuple[BoxRegion, ...]

    def __post_init__(self):
        boxes = tuple(self.boxes)
        if not boxes:
            raise InvalidParameterError("a region needs at least one box")
        dims = {b.dim for b in boxes}
        if len(dims) != 1:
            raise DimensionMismatchError(f"region boxes have mixed dimensions {sorted(dims)}")
        object.__setattr__(self, "boxes", boxes)

    @classmethod
    def box(cls, intervals: Iterable[Sequence[float]]) -> "RegionSpec":
        return cls((BoxRegion.from_intervals(intervals),))

    @classmethod
    def from_list(cls, data) -> "RegionSpec":
        """Parse ``[[[lo, hi], ...], ...]`` (list of boxes of intervals)."""
        return cls(tuple(BoxRegion.from_intervals(b) for b in data))

    def to_list(self) -> list:
        return [b.intervals() for b in self.boxes]

    @property
    def dim(self) -> int:
        return self.boxes[0].dim

    def contains(self, x) -> bool:
        return any(b.contains(x) for b in self.boxes)

    def product(self, other: "RegionSpec") -> "RegionSpec":
        return RegionSpec(tuple(a.product(b) for a in self.boxes for b in other.boxes))

    def intersect(self, other: "RegionSpec") -> "RegionSpec | None":
        out = []
        for a in self.boxes:
            for b in other.boxes:
                c = a.intersect(b)
                if c is not None:
                    out.append(c)
        return RegionSpec(tuple(out)) if out else None

    def is_subset_of(self, other: "RegionSpec") -> bool:
        """Sufficient test: every box lies inside a single box of ``other``."""
        return all(
            any(all(c <= a for a, c in zip(b.lo, o.lo)) and all(d >= h for h, d in zip(b.hi, o.hi)) for o in other.boxes)
            for b in self.boxes
        )


def product_regions(regions: Sequence[RegionSpec]) -> RegionSpec:
    out = regions[0]
    for r in regions[1:]:
        out = out.product(r)
    return out


def inflate_unsafe(region: RegionSpec, eps: float, domain: RegionSpec | None = None) -> RegionSpec:
    """Grow every box by ``eps`` in the infinity norm, then clip to ``domain``."""
    if not eps >= 0:
        raise InvalidParameterError(f"inflation radius must be >= 0, got {eps}")
    grown = RegionSpec(tuple(b.grow(eps) for b in region.boxes))
    if domain is None:
        return grown
    clipped = grown.intersect(domain)
    if clipped is None:
        raise InvalidParameterError("inflated region does not meet the domain")
    return clipped
