"""Inference side: score thresholding, per-cell decoding, polygon NMS and scoring."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import InvalidInputError
from .geometry import Polygon, polygon_iou
from .labelgen import DEFAULT_LEVELS, Annotation, LevelSpec, decode_cell

SCORE_THRESHOLD = 0.7
NMS_IOU = 0.3
MATCH_IOU = 0.5


@dataclass(frozen=True)
class Detection:
    polygon: Polygon
    confidence: float
    level: int = -1
    cell: tuple = (-1, -1)

    def __post_init__(self):
        if not isinstance(self.polygon, Polygon):
            object.__setattr__(self, "polygon", Polygon(self.polygon, normalize=False))
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidInputError(f"confidence must lie in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class EvalReport:
    """Counts from one or more images; ratios are derived on demand.

    Reports add up count-wise, so per-image reports can be summed before the
    ratios are taken.
    """

    true_positives: int = 0
    false_positives: int = 0
    false_negatives: int = 0
    ignored: int = 0
    iou_sum: float = 0.0

    @property
    def precision(self) -> float:
        n = self.true_positives + self.false_positives
        return self.true_positives / n if n else 0.0

    @property
    def recall(self) -> float:
        n = self.true_positives + self.false_negatives
        return self.true_positives / n if n else 0.0

    @property
    def f_measure(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    @property
    def mean_iou(self) -> float:
        return self.iou_sum / self.true_positives if self.true_positives else 0.0

    def __add__(self, other: "EvalReport") -> "EvalReport":
        if other == 0:
            return self
        return EvalReport(
            self.true_positives + other.true_positives,
            self.false_positives + other.false_positives,
            self.false_negatives + other.false_negatives,
            self.ignored + other.ignored,
            self.iou_sum + other.iou_sum,
        )

    __radd__ = __add__

    def as_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f_measure": self.f_measure,
            "mean_iou": self.mean_iou,
            "true_positives": self.true_positives,
            "false_positives": self.false_positives,
            "false_negatives": self.false_negatives,
            "ignored": self.ignored,
        }


Maps = Union[Sequence[np.ndarray], Mapping[int, np.ndarray]]


def _per_level(maps: Maps, levels: Sequence[LevelSpec], what: str) -> list:
    if isinstance(maps, Mapping):
        return [maps.get(spec.index) for spec in levels]
    maps = list(maps)
    if len(maps) != len(levels):
        raise InvalidInputError(f"got {len(maps)} {what} maps for {len(levels)} levels")
    return maps


def decode_detections(
    scores: Maps,
    coords: Maps,
    levels: Sequence[LevelSpec] = DEFAULT_LEVELS,
    threshold: float = SCORE_THRESHOLD,
) -> list:
    """One :class:`Detection` per cell whose score exceeds ``threshold``.

    ``scores`` and ``coords`` are given per level, either as sequences aligned
    with ``levels`` or as mappings keyed by level index (missing levels are
    skipped). Score maps are ``(map_size, map_size)``; coordinate maps are
    ``(map_size, map_size, 2n)`` normalized offsets.
    """
    out = []
    for spec, s, c in zip(levels, _per_level(scores, levels, "score"), _per_level(coords, levels, "coordinate")):
        if s is None:
            continue
        s = np.asarray(s, dtype=np.float64)
        c = np.asarray(c, dtype=np.float64)
        ms = spec.map_size
        if s.shape != (ms, ms) or c.ndim != 3 or c.shape[:2] != (ms, ms) or c.shape[2] % 2:
            raise InvalidInputError(
                f"level {spec.index}: score map {s.shape} / coordinate map {c.shape} do not fit map size {ms}"
            )
        rows, cols = np.nonzero(s > threshold)
        for r, col in zip(rows.tolist(), cols.tolist()):
            poly = decode_cell(c[r, col], (spec.index, r, col), levels)
            out.append(Detection(poly, float(s[r, col]), spec.index, (r, col)))
    return out


def nms(dets: Sequence[Detection], iou_threshold: float = NMS_IOU, resolution: int = 512) -> list:
    """Greedy polygon NMS by descending confidence (stable on ties).

    A detection is dropped when its IoU with any kept one exceeds ``iou_threshold``.
    """
    order = sorted(range(len(dets)), key=lambda i: -dets[i].confidence)
    kept = []
    for i in order:
        cand = dets[i]
        if all(polygon_iou(cand.polygon, k.polygon, resolution) <= iou_threshold for k in kept):
            kept.append(cand)
    return kept


def evaluate(
    preds: Sequence[Detection],
    gts: Sequence[Annotation],
    match_iou: float = MATCH_IOU,
    resolution: int = 512,
) -> EvalReport:
    """Score one image with greedy one-to-one matching.

    Predictions are visited by descending confidence. Among the still
    unmatched regular ground truths and all don't-care regions, the one with
    the highest IoU (lowest index on ties) is taken. If it reaches
    ``match_iou`` the prediction is a true positive, or is discarded when the
    region is don't-care; otherwise it is a false positive.
    """
    order = sorted(range(len(preds)), key=lambda i: -preds[i].confidence)
    care = [i for i, g in enumerate(gts) if not g.ignore]
    matched = set()
    tp = fp = ignored = 0
    iou_sum = 0.0
    for i in order:
        poly = preds[i].polygon
        best, best_iou = None, -1.0
        for gi, g in enumerate(gts):
            if gi in matched:
                continue
            iou = polygon_iou(poly, g.polygon, resolution)
            if iou > best_iou:
                best, best_iou = gi, iou
        if best is not None and best_iou >= match_iou:
            if gts[best].ignore:
                ignored += 1
            else:
                matched.add(best)
                tp += 1
                iou_sum += best_iou
        else:
            fp += 1
    fn = len(care) - len(matched)
    return EvalReport(tp, fp, fn, ignored, iou_sum)
