"""Pixel-based arbitrary-shape text detection: geometry, targets, losses and evaluation."""

from .detect import Detection, EvalReport, decode_detections, evaluate, nms
from .errors import InvalidArgumentError, InvalidInputError, ParseError
from .fit import AblationReport, FitDivergedError, FitResult, ablation_study, fit_polygon
from .geometry import (
    Frame,
    Polygon,
    bounding_frame,
    contains,
    contains_points,
    convex_iou,
    grid_iou,
    is_convex,
    is_simple,
    perimeter,
    polygon_iou,
    rasterize_hard,
    rasterize_soft,
    resample,
    signed_area,
)
from .labelgen import DEFAULT_LEVELS, Annotation, LevelSpec, TargetMaps, decode_cell, encode, text_level
from .losses import LossConfig, LossValue, acc_loss, cls_loss, reg_loss, sample_candidates, total_loss

__version__ = "0.1.0"

__all__ = [
    "AblationReport", "Annotation", "DEFAULT_LEVELS", "Detection", "EvalReport", "FitDivergedError",
    "FitResult", "Frame", "InvalidArgumentError", "InvalidInputError", "LevelSpec", "LossConfig",
    "LossValue", "ParseError", "Polygon", "TargetMaps", "ablation_study", "acc_loss", "bounding_frame",
    "cls_loss", "contains", "contains_points", "convex_iou", "decode_cell", "decode_detections", "encode",
    "evaluate", "fit_polygon", "grid_iou", "is_convex", "is_simple", "nms", "perimeter", "polygon_iou",
    "rasterize_hard", "rasterize_soft", "reg_loss", "resample", "sample_candidates", "signed_area",
    "text_level", "total_loss",
]
