"""Rectangle primitives, the intersection predicate and work counters."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Iterable, NamedTuple, Sequence, Union

import numpy as np

# Slots of the int64 counter vector that kernels fill in.
CMP, TESTED, MINIJOINS, RESULTS, DUPS = range(5)
N_COUNTERS = 5


@dataclass(frozen=True, slots=True)
class Rect:
    """Object MBR with identifier.  Intervals are closed: [xl, xu] x [yl, yu]."""

    id: int
    xl: float
    xu: float
    yl: float
    yu: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.xl, self.xu, self.yl, self.yu)):
            raise ValueError(f"rect {self.id}: non-finite coordinate")
        if self.xl > self.xu or self.yl > self.yu:
            raise ValueError(f"rect {self.id}: inverted interval")
        if self.id < 0:
            raise ValueError(f"rect id must be unsigned, got {self.id}")


@dataclass(frozen=True, slots=True)
class Window:
    """Query rectangle (no identifier)."""

    xl: float
    xu: float
    yl: float
    yu: float

    def __post_init__(self):
        if self.xl > self.xu or self.yl > self.yu:
            raise ValueError("window with inverted interval")

    @classmethod
    def of(cls, r: Union[Rect, "Window"]) -> "Window":
        return cls(r.xl, r.xu, r.yl, r.yu)

    def clipped(self) -> "Window | None":
        """Intersection with the unit square, or None if empty."""
        xl, xu = max(self.xl, 0.0), min(self.xu, 1.0)
        yl, yu = max(self.yl, 0.0), min(self.yu, 1.0)
        if xl > xu or yl > yu:
            return None
        return Window(xl, xu, yl, yu)


class Point(NamedTuple):
    x: float
    y: float


@dataclass
class Metrics:
    """Instrumented work counters.  One instance per execution context."""

    coordinate_comparisons: int = 0
    pairs_tested: int = 0
    minijoins_executed: int = 0
    results_emitted: int = 0
    duplicates_eliminated: int = 0

    def reset(self) -> None:
        for f in fields(self):
            setattr(self, f.name, 0)

    def add_counts(self, counts) -> None:
        """Accumulate a kernel counter vector (see CMP..DUPS)."""
        c = [int(v) for v in counts]
        self.coordinate_comparisons += c[CMP]
        self.pairs_tested += c[TESTED]
        self.minijoins_executed += c[MINIJOINS]
        self.results_emitted += c[RESULTS]
        self.duplicates_eliminated += c[DUPS]

    def __iadd__(self, other: "Metrics") -> "Metrics":
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def new_counts() -> np.ndarray:
    return np.zeros(N_COUNTERS, dtype=np.int64)


def intersects(r, s, m: Metrics | None = None) -> bool:
    """Closed-interval MBR intersection; touching edges intersect.

    Evaluates ``xu < s.xl``, ``xl > s.xu``, ``yu < s.yl``, ``yl > s.yu`` in that
    order and stops at the first one that proves disjointness; each evaluated
    comparison is added to ``m.coordinate_comparisons``.
    """
    n = 1
    disjoint = r.xu < s.xl
    if not disjoint:
        n += 1
        disjoint = r.xl > s.xu
    if not disjoint:
        n += 1
        disjoint = r.yu < s.yl
    if not disjoint:
        n += 1
        disjoint = r.yl > s.yu
    if m is not None:
        m.coordinate_comparisons += n
    return not disjoint


def reference_point(r, q) -> Point:
    """Lower corner of ``r`` intersected with ``q``.

    Raises ValueError if the two do not intersect.
    """
    if not intersects(r, q):
        raise ValueError("reference point of non-intersecting rectangles")
    return Point(max(r.xl, q.xl), max(r.yl, q.yl))


class RectArray:
    """Columnar collection of rectangles (struct of arrays)."""

    __slots__ = ("ids", "xl", "xu", "yl", "yu")

    def __init__(self, ids, xl, xu, yl, yu):
        self.ids = np.ascontiguousarray(ids, dtype=np.uint64)
        self.xl = np.ascontiguousarray(xl, dtype=np.float64)
        self.xu = np.ascontiguousarray(xu, dtype=np.float64)
        self.yl = np.ascontiguousarray(yl, dtype=np.float64)
        self.yu = np.ascontiguousarray(yu, dtype=np.float64)
        n = self.ids.shape[0]
        if any(a.shape != (n,) for a in (self.xl, self.xu, self.yl, self.yu)):
            raise ValueError("column length mismatch")

    @classmethod
    def empty(cls) -> "RectArray":
        z = np.empty(0)
        return cls(np.empty(0, np.uint64), z, z, z, z)

    @classmethod
    def from_rects(cls, rects: Iterable[Rect]) -> "RectArray":
        rects = list(rects)
        if not rects:
            return cls.empty()
        cols = list(zip(*((r.id, r.xl, r.xu, r.yl, r.yu) for r in rects)))
        return cls(np.array(cols[0], dtype=np.uint64), *cols[1:])

    @classmethod
    def coerce(cls, data: Union["RectArray", Sequence[Rect]]) -> "RectArray":
        return data if isinstance(data, RectArray) else cls.from_rects(data)

    def __len__(self) -> int:
        return self.ids.shape[0]

    def __getitem__(self, key):
        if isinstance(key, (int, np.integer)):
            return Rect(int(self.ids[key]), float(self.xl[key]), float(self.xu[key]),
                        float(self.yl[key]), float(self.yu[key]))
        return RectArray(self.ids[key], self.xl[key], self.xu[key], self.yl[key], self.yu[key])

    def __iter__(self):
        for k in range(len(self)):
            yield self[k]

    def __repr__(self) -> str:
        return f"RectArray(n={len(self)})"

    def to_rects(self) -> list:
        return list(self)

    def columns(self):
        return self.ids, self.xl, self.xu, self.yl, self.yu

    def concat(self, other: "RectArray") -> "RectArray":
        return RectArray(*(np.concatenate([a, b]) for a, b in zip(self.columns(), other.columns())))

    def validate(self) -> None:
        """Check interval order, finiteness and unit-square containment."""
        coords = (self.xl, self.xu, self.yl, self.yu)
        if not all(np.isfinite(c).all() for c in coords):
            raise ValueError("non-finite coordinate")
        bad = np.flatnonzero((self.xl > self.xu) | (self.yl > self.yu))
        if bad.size:
            raise ValueError(f"rect {int(self.ids[bad[0]])}: inverted interval")
        out = (self.xl < 0) | (self.xu > 1) | (self.yl < 0) | (self.yu > 1)
        bad = np.flatnonzero(out)
        if bad.size:
            raise ValueError(f"rect {int(self.ids[bad[0]])}: outside the unit square")

    def extents(self):
        """Mean x and y extents."""
        if not len(self):
            return 0.0, 0.0
        return float(np.mean(self.xu - self.xl)), float(np.mean(self.yu - self.yl))
