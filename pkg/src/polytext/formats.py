"""Annotation parsers, record serialization, PGM masks and the config file.

Annotation formats
------------------
``icdar2015-quad``
    ``x1,y1,x2,y2,x3,y3,x4,y4,transcription`` per line; ``###`` marks a
    don't-care region. The transcription may itself contain commas.
``curved-14pt``
    28 comma-separated numbers per line (14 vertices).
``polygon-json``
    A JSON array of ``{"points": [[x, y], ...], "ignore": bool, "text": str|null}``.

Config file
-----------
An INI document with ``[loss]``, ``[detect]`` and ``[labelgen]`` sections
whose keys are the field names of :class:`Settings`, plus an optional
``[levels]`` section of ``L<k> = map_size, grid_size, lower, upper`` rows
that replaces the default level table.
"""

from __future__ import annotations

import configparser
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .detect import MATCH_IOU, NMS_IOU, SCORE_THRESHOLD, Detection, EvalReport
from .errors import InvalidArgumentError, InvalidInputError, ParseError
from .geometry import Polygon
from .labelgen import DEFAULT_LEVELS, Annotation, LevelSpec
from .losses import LossConfig

FORMATS = ("icdar2015-quad", "curved-14pt", "polygon-json")


def _number(tok: str, lineno: int) -> float:
    try:
        val = float(tok)
    except ValueError:
        raise ParseError(f"not a number: {tok.strip()!r}", lineno) from None
    if not np.isfinite(val):
        raise ParseError(f"non-finite coordinate {tok.strip()!r}", lineno)
    return val


def _polygon(coords, lineno) -> Polygon:
    try:
        return Polygon(np.asarray(coords, dtype=np.float64).reshape(-1, 2))
    except InvalidInputError as exc:
        raise ParseError(str(exc), lineno) from None


def _lines(contents: str):
    for lineno, line in enumerate(contents.lstrip("﻿").splitlines(), 1):
        if line.strip():
            yield lineno, line.strip()


def parse_icdar_quad(contents: str) -> list:
    out = []
    for lineno, line in _lines(contents):
        parts = line.split(",")
        if len(parts) < 9:
            raise ParseError(f"expected 8 coordinates and a transcription, got {len(parts)} fields", lineno)
        coords = [_number(tok, lineno) for tok in parts[:8]]
        text = ",".join(parts[8:])
        out.append(Annotation(_polygon(coords, lineno), ignore=text.strip() == "###", text=text))
    return out


def parse_curved_14pt(contents: str) -> list:
    out = []
    for lineno, line in _lines(contents):
        parts = line.split(",")
        if len(parts) != 28:
            raise ParseError(f"expected 28 values, got {len(parts)}", lineno)
        out.append(Annotation(_polygon([_number(tok, lineno) for tok in parts], lineno)))
    return out


def _annotation_from_record(rec, where) -> Annotation:
    if not isinstance(rec, dict):
        raise ParseError("record is not an object", where)
    pts = rec.get("points")
    if not isinstance(pts, list) or len(pts) < 3:
        raise ParseError("'points' must be a list of at least 3 [x, y] pairs", where)
    for p in pts:
        if (not isinstance(p, (list, tuple)) or len(p) != 2
                or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in p)):
            raise ParseError(f"bad point {p!r}", where)
    ignore = rec.get("ignore", False)
    if not isinstance(ignore, bool):
        raise ParseError("'ignore' must be a boolean", where)
    text = rec.get("text")
    if text is not None and not isinstance(text, str):
        raise ParseError("'text' must be a string or null", where)
    return Annotation(_polygon(pts, where), ignore=ignore, text=text)


def parse_polygon_json(contents: str) -> list:
    """Parse the canonical polygon document; errors name the 1-based record index."""
    try:
        doc = json.loads(contents)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    if not isinstance(doc, list):
        raise ParseError("document must be a JSON array of records")
    return [_annotation_from_record(rec, i) for i, rec in enumerate(doc, 1)]


def annotation_record(ann: Annotation) -> dict:
    return {"points": ann.polygon.vertices.tolist(), "ignore": ann.ignore, "text": ann.text}


def write_polygon_json(annotations: Iterable[Annotation]) -> str:
    return json.dumps([annotation_record(a) for a in annotations], indent=1) + "\n"


PARSERS = {
    "icdar2015-quad": parse_icdar_quad,
    "curved-14pt": parse_curved_14pt,
    "polygon-json": parse_polygon_json,
}


def parse_annotations(contents: str, fmt: str) -> list:
    try:
        parser = PARSERS[fmt]
    except KeyError:
        raise InvalidArgumentError(f"unknown annotation format {fmt!r}; expected one of {', '.join(FORMATS)}") from None
    return parser(contents)


@dataclass(frozen=True)
class DatasetSpec:
    format: str
    root: str
    n: int = 4
    levels: Optional[tuple] = None

    def __post_init__(self):
        if self.format not in PARSERS:
            raise InvalidArgumentError(f"unknown annotation format {self.format!r}")
        if int(self.n) != self.n or self.n < 3:
            raise InvalidArgumentError("n must be an integer >= 3")

    @property
    def level_table(self) -> tuple:
        return self.levels if self.levels is not None else DEFAULT_LEVELS

    def files(self) -> list:
        root = Path(self.root)
        if root.is_file():
            return [root]
        return sorted(p for p in root.iterdir() if p.is_file() and not p.name.startswith("."))

    def load(self) -> dict:
        """Map every annotation file under ``root`` to its parsed annotations."""
        out = {}
        for path in self.files():
            try:
                out[str(path)] = parse_annotations(path.read_text(encoding="utf-8"), self.format)
            except ParseError as exc:
                raise ParseError(f"{path}: {exc}") from None
        return out


def write_mask_pgm(mask, path) -> None:
    """Plain-text PGM (P2), maxval 255, each cell rounded half-up from ``value * 255``."""
    m = np.asarray(mask, dtype=np.float64)
    if m.ndim != 2 or not np.isfinite(m).all() or m.min(initial=0) < 0 or m.max(initial=0) > 1:
        raise InvalidInputError("mask must be a 2-D array with values in [0, 1]")
    levels = np.floor(m * 255 + 0.5).astype(int)
    h, w = levels.shape
    lines = [f"P2 {w} {h} 255"] + [" ".join(map(str, row)) for row in levels.tolist()]
    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write mask to {os.fspath(path)}: {exc.strerror or exc}") from exc


def read_mask_pgm(path) -> np.ndarray:
    tokens = Path(path).read_text(encoding="ascii").split()
    if len(tokens) < 4 or tokens[0] != "P2":
        raise ParseError(f"{path}: not a plain PGM file")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    vals = np.array([int(t) for t in tokens[4:]], dtype=np.float64)
    if vals.size != w * h:
        raise ParseError(f"{path}: expected {w * h} samples, found {vals.size}")
    return vals.reshape(h, w) / maxval


def detection_record(det: Detection) -> dict:
    return {
        "points": det.polygon.vertices.tolist(),
        "confidence": det.confidence,
        "level": det.level,
        "cell": list(det.cell),
    }


def detection_from_record(rec: dict, where=None) -> Detection:
    try:
        return Detection(
            Polygon(rec["points"], normalize=False),
            float(rec["confidence"]),
            int(rec.get("level", -1)),
            tuple(int(x) for x in rec.get("cell", (-1, -1))),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad detection record: {exc}", where) from None


def dump_detections(dets: Iterable[Detection]) -> str:
    return "".join(json.dumps(detection_record(d)) + "\n" for d in dets)


def load_detections(contents: str) -> list:
    out = []
    for lineno, line in _lines(contents):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", lineno) from None
        out.append(detection_from_record(rec, lineno))
    return out


def report_record(report: EvalReport) -> dict:
    return report.as_dict()


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class Settings:
    loss: LossConfig = field(default_factory=LossConfig)
    score_threshold: float = SCORE_THRESHOLD
    nms_iou: float = NMS_IOU
    match_iou: float = MATCH_IOU
    n: int = 4
    levels: tuple = DEFAULT_LEVELS


_DETECT_KEYS = ("score_threshold", "nms_iou", "match_iou")


def _fmt(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def dump_config(settings: Settings = Settings(), include_levels: bool = False) -> str:
    """Serialize settings to the INI schema described in the module docstring."""
    lines = ["[loss]"]
    lines += [f"{k} = {_fmt(v)}" for k, v in asdict(settings.loss).items()]
    lines += ["", "[detect]"]
    lines += [f"{k} = {_fmt(getattr(settings, k))}" for k in _DETECT_KEYS]
    lines += ["", "[labelgen]", f"n = {settings.n}"]
    if include_levels:
        lines += ["", "[levels]"]
        lines += [f"L{s.index} = {s.map_size}, {_fmt(float(s.grid_size))}, {_fmt(s.lower)}, {_fmt(s.upper)}"
                  for s in settings.levels]
    return "\n".join(lines) + "\n"


def _coerce(kind, raw: str, key: str):
    try:
        if kind is int:
            return int(raw)
        return float(raw)
    except ValueError:
        raise ParseError(f"config key {key!r}: cannot read {raw!r} as {kind.__name__}") from None


def load_config(text: str, base: Settings = Settings()) -> Settings:
    """Overlay the values found in ``text`` on ``base``. Unknown keys are errors."""
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ParseError(f"config: {exc}") from None
    known = {"loss", "detect", "labelgen", "levels"}
    for section in cp.sections():
        if section not in known:
            raise ParseError(f"unknown config section [{section}]")

    loss_kw = {}
    if cp.has_section("loss"):
        types = {f.name: f.type for f in fields(LossConfig)}
        for key, raw in cp.items("loss"):
            if key not in types:
                raise ParseError(f"unknown key {key!r} in [loss]")
            loss_kw[key] = _coerce(int if types[key] in (int, "int") else float, raw, key)
    top = {}
    if cp.has_section("detect"):
        for key, raw in cp.items("detect"):
            if key not in _DETECT_KEYS:
                raise ParseError(f"unknown key {key!r} in [detect]")
            top[key] = _coerce(float, raw, key)
    if cp.has_section("labelgen"):
        for key, raw in cp.items("labelgen"):
            if key != "n":
                raise ParseError(f"unknown key {key!r} in [labelgen]")
            top["n"] = _coerce(int, raw, key)
    if cp.has_section("levels"):
        specs = []
        for key, raw in cp.items("levels"):
            if not key.lower().startswith("l") or not key[1:].isdigit():
                raise ParseError(f"level keys look like L0, L1, ...; got {key!r}")
            parts = [p.strip() for p in raw.split(",")]
            if len(parts) != 4:
                raise ParseError(f"level {key}: expected map_size, grid_size, lower, upper")
            specs.append(LevelSpec(int(key[1:]), _coerce(int, parts[0], key), _coerce(float, parts[1], key),
                                   _coerce(float, parts[2], key), _coerce(float, parts[3], key)))
        top["levels"] = tuple(sorted(specs, key=lambda s: s.index))
    return replace(base, loss=replace(base.loss, **loss_kw), **top)


def level_table(levels: Sequence[LevelSpec]) -> list:
    return [asdict(s) for s in levels]
