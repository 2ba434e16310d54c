"""Rectangle datasets: CSV I/O, normalization, synthetic data and query workloads."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import RectArray, Window

ZIPF_BUCKETS = 1024
QUERY_AREAS = (0.01, 0.05, 0.1, 0.5, 1.0)
GEN_AREAS = (0.0, 1e-14, 1e-12, 1e-10, 1e-8, 1e-6)


@dataclass(frozen=True)
class DatasetStats:
    cardinality: int
    avg_x_extent: float
    avg_y_extent: float
    bbox: tuple  # (xmin, ymin, xmax, ymax) before normalization

    @classmethod
    def of(cls, data: RectArray, bbox=None) -> "DatasetStats":
        ex, ey = data.extents()
        if bbox is None:
            bbox = _bbox(data)
        return cls(len(data), ex, ey, tuple(float(v) for v in bbox))


@dataclass(frozen=True)
class GenSpec:
    cardinality: int
    area: float = 1e-10
    distribution: str = "uniform"
    ratio_range: tuple = (0.25, 4.0)
    seed: int = 0
    clip: bool = True

    def __post_init__(self):
        if self.cardinality < 0:
            raise ValueError("cardinality must be >= 0")
        if self.area < 0:
            raise ValueError("area must be >= 0")
        lo, hi = self.ratio_range
        if not (0 < lo <= hi):
            raise ValueError("ratio range must satisfy 0 < lo <= hi")
        if self.distribution not in ("uniform", "zipf"):
            raise ValueError(f"unknown distribution {self.distribution!r}")


def _bbox(data: RectArray):
    if not len(data):
        return (0.0, 0.0, 1.0, 1.0)
    return (float(data.xl.min()), float(data.yl.min()), float(data.xu.max()), float(data.yu.max()))


def _looks_numeric(field: str) -> bool:
    try:
        float(field)
        return True
    except ValueError:
        return False


def read_csv(path, header: Optional[bool] = None) -> RectArray:
    """Parse ``id,xl,yl,xu,yu`` lines without normalizing.

    ``header=None`` skips the first line only if it is not numeric.
    """
    ids, xl, yl, xu, yu = [], [], [], [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if lineno == 1 and (header or (header is None and not _looks_numeric(row[0]))):
                continue
            if len(row) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            try:
                rid = int(row[0])
                a, b, c, d = (float(v) for v in row[1:])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if rid < 0:
                raise ValueError(f"{path}:{lineno}: negative id")
            if not np.isfinite([a, b, c, d]).all():
                raise ValueError(f"{path}:{lineno}: non-finite coordinate")
            if a > c or b > d:
                raise ValueError(f"{path}:{lineno}: inverted interval")
            ids.append(rid)
            xl.append(a)
            yl.append(b)
            xu.append(c)
            yu.append(d)
    return RectArray(np.array(ids, dtype=np.uint64), xl, xu, yl, yu)


def joint_bounds(*datasets: RectArray) -> tuple:
    """Bounding box covering every dataset (for normalizing join inputs together)."""
    boxes = [_bbox(d) for d in datasets if len(d)]
    if not boxes:
        return (0.0, 0.0, 1.0, 1.0)
    b = np.array(boxes)
    return (b[:, 0].min(), b[:, 1].min(), b[:, 2].max(), b[:, 3].max())


def normalize(data: RectArray, bounds=None) -> RectArray:
    """Min-max scale into the unit square, per dimension.

    Data already inside [0, 1]^2 is returned unchanged, which makes the
    operation idempotent.  ``bounds`` = (xmin, ymin, xmax, ymax) overrides
    the data's own box so several inputs can share one mapping.
    """
    if bounds is None:
        bounds = _bbox(data)
    xmin, ymin, xmax, ymax = (float(v) for v in bounds)
    if xmin >= 0.0 and ymin >= 0.0 and xmax <= 1.0 and ymax <= 1.0:
        return data
    sx = (xmax - xmin) or 1.0
    sy = (ymax - ymin) or 1.0

    def scale(v, lo, s):
        return np.clip((v - lo) / s, 0.0, 1.0)

    return RectArray(data.ids, scale(data.xl, xmin, sx), scale(data.xu, xmin, sx),
                     scale(data.yl, ymin, sy), scale(data.yu, ymin, sy))


def load_csv(path, header: Optional[bool] = None, bounds=None):
    """Read, normalize and summarize a CSV file; returns ``(rects, stats)``."""
    raw = read_csv(path, header)
    box = _bbox(raw) if bounds is None else bounds
    data = normalize(raw, box)
    return data, DatasetStats.of(data, box)


def write_csv(path, data: RectArray, header: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow(["id", "xl", "yl", "xu", "yu"])
        for row in zip(data.ids.tolist(), data.xl.tolist(), data.yl.tolist(),
                       data.xu.tolist(), data.yu.tolist()):
            w.writerow([row[0]] + [repr(v) for v in row[1:]])


def _zipf_coords(rng, n: int) -> np.ndarray:
    ranks = np.arange(1, ZIPF_BUCKETS + 1)
    p = 1.0 / ranks
    p /= p.sum()
    bucket = rng.choice(ZIPF_BUCKETS, size=n, p=p)
    return (bucket + rng.random(n)) / ZIPF_BUCKETS


def generate(spec: GenSpec) -> RectArray:
    """Equal-area rectangles with random aspect ratio, deterministic per seed."""
    rng = np.random.default_rng(spec.seed)
    n = spec.cardinality
    if spec.distribution == "uniform":
        cx, cy = rng.random(n), rng.random(n)
    else:
        cx, cy = _zipf_coords(rng, n), _zipf_coords(rng, n)
    lo, hi = spec.ratio_range
    rho = rng.uniform(lo, hi, n)
    w = np.sqrt(spec.area * rho)
    h = np.sqrt(spec.area / rho)
    xl, xu = cx - w / 2, cx + w / 2
    yl, yu = cy - h / 2, cy + h / 2
    if spec.clip:
        xl, xu = np.clip(xl, 0, 1), np.clip(xu, 0, 1)
        yl, yu = np.clip(yl, 0, 1), np.clip(yu, 0, 1)
    return RectArray(np.arange(n, dtype=np.uint64), xl, xu, yl, yu)


def gen_windows(data: RectArray, count: int, rel_area: float = 0.1, seed: int = 0) -> list:
    """Square windows of ``rel_area`` percent of the domain.

    Each is centered on a randomly drawn data rectangle's center, so the
    workload follows the data distribution and every window has a hit.
    """
    if not len(data):
        raise ValueError("cannot place windows on an empty dataset")
    if rel_area <= 0:
        raise ValueError("relative area must be positive")
    rng = np.random.default_rng(seed)
    side = float(np.sqrt(rel_area / 100.0))
    pick = rng.integers(0, len(data), size=count)
    cx = (data.xl[pick] + data.xu[pick]) / 2
    cy = (data.yl[pick] + data.yu[pick]) / 2
    return [Window(max(x - side / 2, 0.0), min(x + side / 2, 1.0),
                   max(y - side / 2, 0.0), min(y + side / 2, 1.0))
            for x, y in zip(cx.tolist(), cy.tolist())]


def windows_array(windows: Sequence) -> np.ndarray:
    """(n, 4) array of (xl, xu, yl, yu)."""
    return np.array([(w.xl, w.xu, w.yl, w.yu) for w in windows], dtype=np.float64).reshape(-1, 4)
