"""Per-level classification and coordinate targets for annotated polygons.

Every annotation is assigned to the feature levels whose text-level range
contains its area/perimeter ratio. On each assigned level, cells whose
center lies inside the (resampled) polygon become positive and store the
vertex offsets from that center, divided by the level's grid size.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError, InvalidInputError, ParseError
from .geometry import Polygon, contains_points, perimeter, resample, signed_area

POSITIVE = 1
NEGATIVE = 0
IGNORE = -1


@dataclass(frozen=True)
class LevelSpec:
    index: int
    map_size: int
    grid_size: float
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise InvalidArgumentError(f"level {self.index}: lower bound must be below upper bound")
        if not self.grid_size > 0:
            raise InvalidArgumentError(f"level {self.index}: grid size must be positive")
        if self.map_size < 1:
            raise InvalidArgumentError(f"level {self.index}: map size must be positive")

    def cell_center(self, row: int, col: int):
        return (col + 0.5) * self.grid_size, (row + 0.5) * self.grid_size

    def cell_centers(self) -> np.ndarray:
        """``(map_size**2, 2)`` pixel centers in row-major cell order."""
        idx = (np.arange(self.map_size) + 0.5) * self.grid_size
        gx, gy = np.meshgrid(idx, idx)
        return np.stack([gx.ravel(), gy.ravel()], axis=1)


# map size, grid size (stride), text-level lower and upper bound for L0..L6
DEFAULT_LEVELS = tuple(
    LevelSpec(k, m, g, lo, hi)
    for k, (m, g, lo, hi) in enumerate(
        [
            (64, 8, 1.2, 10.0),
            (32, 16, 7.2, 20.0),
            (16, 32, 14.4, 35.2),
            (8, 64, 28.8, 49.0),
            (6, 85, 38.9, 85.4),
            (4, 128, 57.6, 140.8),
            (2, 256, 115.2, 268.8),
        ]
    )
)


@dataclass(frozen=True)
class Annotation:
    polygon: Polygon
    ignore: bool = False
    text: Optional[str] = None

    def __post_init__(self):
        if not isinstance(self.polygon, Polygon):
            object.__setattr__(self, "polygon", Polygon(self.polygon))


@dataclass
class LevelMaps:
    """Targets of a single level.

    ``category`` holds POSITIVE / NEGATIVE / IGNORE, ``offsets`` the
    normalized vertex offsets (NaN off positive cells) and ``instance`` the
    index of the annotation owning each positive cell (-1 elsewhere).
    """

    spec: LevelSpec
    category: np.ndarray
    offsets: np.ndarray
    instance: np.ndarray


@dataclass
class TargetMaps:
    n: int
    levels: list = field(default_factory=list)

    def positives(self) -> Iterator[tuple]:
        """Yield ``(level, row, col, instance, offsets)`` for every positive cell."""
        for lm in self.levels:
            rows, cols = np.nonzero(lm.category == POSITIVE)
            for r, c in zip(rows.tolist(), cols.tolist()):
                yield lm.spec.index, r, c, int(lm.instance[r, c]), lm.offsets[r, c]

    def level(self, k: int) -> LevelMaps:
        for lm in self.levels:
            if lm.spec.index == k:
                return lm
        raise KeyError(k)

    def to_text(self) -> str:
        """One JSON record per positive cell, ordered by level then row-major cell."""
        lines = [
            json.dumps({"level": k, "row": r, "col": c, "instance": i, "offsets": off.tolist()})
            for k, r, c, i, off in self.positives()
        ]
        return "".join(line + "\n" for line in lines)

    @classmethod
    def from_text(cls, text: str, levels: Sequence[LevelSpec] = DEFAULT_LEVELS) -> "TargetMaps":
        records = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                records.append((int(rec["level"]), int(rec["row"]), int(rec["col"]),
                                int(rec.get("instance", -1)), [float(x) for x in rec["offsets"]]))
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(f"bad target record: {exc}", lineno) from None
        width = {len(r[4]) for r in records}
        if len(width) > 1 or any(w % 2 for w in width):
            raise ParseError("offset records disagree on vertex count")
        n = width.pop() // 2 if width else 3
        maps = empty_maps(levels, n)
        for k, r, c, inst, off in records:
            lm = maps.level(k)
            lm.category[r, c] = POSITIVE
            lm.instance[r, c] = inst
            lm.offsets[r, c] = off
        return maps


def empty_maps(levels: Sequence[LevelSpec], n: int) -> TargetMaps:
    out = TargetMaps(n=n)
    for spec in levels:
        ms = spec.map_size
        out.levels.append(
            LevelMaps(
                spec=spec,
                category=np.zeros((ms, ms), dtype=np.int8),
                offsets=np.full((ms, ms, 2 * n), np.nan),
                instance=np.full((ms, ms), -1, dtype=np.int64),
            )
        )
    return out


def text_level(poly, levels: Sequence[LevelSpec] = DEFAULT_LEVELS) -> set:
    """Indices of every level whose [lower, upper] range holds |area| / perimeter."""
    p = perimeter(poly)
    if p <= 0:
        raise InvalidInputError("polygon has zero perimeter")
    ratio = abs(signed_area(poly)) / p
    return {spec.index for spec in levels if spec.lower <= ratio <= spec.upper}


def encode(
    annotations: Iterable[Annotation],
    levels: Sequence[LevelSpec] = DEFAULT_LEVELS,
    n: int = 4,
) -> TargetMaps:
    """Build target maps for one image.

    When two instances cover the same cell, the one with the smaller area
    keeps it (earlier annotation on equal area). Cells inside an ignore
    annotation (its original outline, on its own levels) that no instance
    claimed are set to IGNORE.
    """
    if int(n) != n or n < 3:
        raise InvalidArgumentError(f"vertex count must be an integer >= 3, got {n}")
    annotations = list(annotations)
    maps = empty_maps(levels, n)
    by_index = {lm.spec.index: lm for lm in maps.levels}
    owner_area = {k: np.full((lm.spec.map_size,) * 2, np.inf) for k, lm in by_index.items()}

    ignored = []
    for idx, ann in enumerate(annotations):
        poly = ann.polygon
        if poly.perimeter <= 0:
            continue
        assigned = text_level(poly, levels)
        if not assigned:
            continue
        if ann.ignore:
            # no offsets are stored for don't-care regions, so keep their full outline
            ignored.append((poly.vertices, assigned))
            continue
        sampled = resample(poly, n).vertices
        area = poly.area
        for k in sorted(assigned):
            lm = by_index[k]
            spec = lm.spec
            centers = spec.cell_centers()
            inside = contains_points(sampled, centers).reshape(spec.map_size, spec.map_size)
            claim = inside & (area < owner_area[k])
            if not claim.any():
                continue
            rows, cols = np.nonzero(claim)
            cell_xy = centers.reshape(spec.map_size, spec.map_size, 2)[rows, cols]
            off = (sampled[None, :, :] - cell_xy[:, None, :]) / spec.grid_size
            lm.offsets[rows, cols] = off.reshape(len(rows), 2 * n)
            lm.category[rows, cols] = POSITIVE
            lm.instance[rows, cols] = idx
            owner_area[k][rows, cols] = area

    for outline, assigned in ignored:
        for k in assigned:
            lm = by_index[k]
            inside = contains_points(outline, lm.spec.cell_centers()).reshape(lm.category.shape)
            lm.category[inside & (lm.category != POSITIVE)] = IGNORE
    return maps


def decode_cell(offsets, cell, levels: Sequence[LevelSpec] = DEFAULT_LEVELS) -> Polygon:
    """Invert the offset normalization at ``cell = (level, row, col)``."""
    k, row, col = cell
    spec = next((s for s in levels if s.index == k), None)
    if spec is None:
        raise InvalidArgumentError(f"unknown level {k}")
    off = np.asarray(offsets, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(off)):
        raise InvalidInputError("offsets must be finite")
    cx, cy = spec.cell_center(row, col)
    return Polygon(off * spec.grid_size + (cx, cy), normalize=False)
