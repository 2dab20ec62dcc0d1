"""Command-line entry point: ``polytext <command> ...``.

Reports go to stdout as one JSON object per line. On failure a single JSON
line ``{"error": <type>, "message": <text>}`` is written to stderr and the
exit status is 1 (2 for usage errors, as argparse does).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import detect, fit, formats, geometry, labelgen, losses
from .errors import ParseError
from .gradcheck import numerical_gradient, relative_error

LOSS_FLAGS = {
    "lambda_cls": float,
    "lambda_reg": float,
    "lambda_acc_initial": float,
    "lambda_acc_final": float,
    "lambda_acc_switch_iteration": int,
    "alpha": float,
    "gamma": float,
    "tau": float,
    "mask_resolution": int,
    "candidate_count": int,
    "candidate_min_iou": float,
}


def _emit(record) -> None:
    sys.stdout.write(json.dumps(record) + "\n")


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text(encoding="utf-8")


def _settings(args) -> formats.Settings:
    settings = formats.Settings()
    if args.config:
        settings = formats.load_config(_read(args.config), settings)
    overrides = {k: getattr(args, k) for k in LOSS_FLAGS if getattr(args, k, None) is not None}
    top = {k: getattr(args, k) for k in ("score_threshold", "nms_iou", "match_iou", "n")
           if getattr(args, k, None) is not None}
    return replace(settings, loss=replace(settings.loss, **overrides), **top)


def _polygons(path: str) -> list:
    return [a.polygon for a in formats.parse_polygon_json(_read(path))]


def _pairs(args):
    preds, gts = _polygons(args.pred), _polygons(args.gt)
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predicted polygons but {len(gts)} targets")
    return preds, gts


# ------------------------------------------------------------------ commands


def cmd_labelgen(args, settings):
    spec = formats.DatasetSpec(args.format, args.annotations, settings.n, settings.levels)
    files = spec.load()
    multi = len(files) > 1 or Path(args.annotations).is_dir()
    for source, anns in files.items():
        maps = labelgen.encode(anns, spec.level_table, spec.n)
        for k, r, c, inst, off in maps.positives():
            rec = {"level": k, "row": r, "col": c, "instance": inst, "offsets": off.tolist()}
            if multi:
                rec = {"source": source, **rec}
            _emit(rec)


def cmd_loss(args, settings):
    cfg = settings.loss
    preds, gts = _pairs(args)
    pv = [p.vertices for p in preds]
    gv = [g.vertices for g in gts]
    reg, shifts = losses.reg_loss(pv, gv)
    _emit({"loss": "reg", "value": reg.value, "grad_norm": reg.grad_norm(), "shifts": shifts})
    acc_value, acc_grads = 0.0, []
    for p, g in zip(pv, gv):
        lv = losses.acc_loss(p, g, cfg)
        acc_value += lv.value
        acc_grads.append(lv.gradients["pred"])
    acc = losses.LossValue(acc_value, {"pred": np.array(acc_grads)})
    _emit({"loss": "acc", "value": acc.value, "grad_norm": acc.grad_norm()})
    total = losses.total_loss(losses.LossValue(0.0), reg, acc, cfg, args.iteration)
    _emit({"loss": "total", "value": total.value, "grad_norm": total.grad_norm(), "iteration": args.iteration})


def cmd_gradcheck(args, settings):
    cfg = settings.loss
    preds, gts = _pairs(args)
    for idx, (p, g) in enumerate(zip(preds, gts)):
        p, g = p.vertices, g.vertices
        reg, _ = losses.reg_loss([p], [g])
        num = numerical_gradient(lambda x: losses.reg_loss([x], [g])[0].value, p, args.h)
        err = relative_error(reg.gradients["pred"][0], num)
        _emit({"pair": idx, "loss": "reg", "relative_error": err, "passed": err < 1e-3})

        frame = losses.mask_frame(p, g, cfg.mask_resolution)
        acc = losses.acc_loss(p, g, cfg, frame)
        h = args.h * frame.width
        num = numerical_gradient(lambda x: losses.acc_loss(x, g, cfg, frame).value, p, h)
        err = relative_error(acc.gradients["pred"], num)
        _emit({"pair": idx, "loss": "acc", "relative_error": err, "passed": err < 5e-2})


def cmd_fit(args, settings):
    init = _polygons(args.init)[0].vertices
    target = _polygons(args.target)[0].vertices
    res = fit.fit_polygon(init, target, args.losses, settings.loss, args.steps, args.step_size,
                          args.start_iteration)
    if args.trajectory:
        Path(args.trajectory).write_text(res.to_csv(), encoding="utf-8")
    _emit({"steps": res.steps, "converged": res.converged, "final_loss": res.losses[-1],
           "final_iou": res.final_iou, "final": res.final.tolist()})


def cmd_ablation(args, settings):
    report = fit.ablation_study(args.trials, args.seed, settings.loss, args.steps, args.step_size, args.sigma)
    _emit(report.summary())


def _maps_from_records(text: str, levels, default_score: float):
    scores, coords = {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            k, r, c = int(rec["level"]), int(rec["row"]), int(rec["col"])
            off = np.asarray(rec["offsets"], dtype=np.float64)
            score = float(rec.get("score", default_score))
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(f"bad map record: {exc}", lineno) from None
        spec = next((s for s in levels if s.index == k), None)
        if spec is None:
            raise ParseError(f"unknown level {k}", lineno)
        if k not in scores:
            scores[k] = np.zeros((spec.map_size, spec.map_size))
            coords[k] = np.zeros((spec.map_size, spec.map_size, off.size))
        if coords[k].shape[2] != off.size:
            raise ParseError("offset records disagree on vertex count", lineno)
        scores[k][r, c] = score
        coords[k][r, c] = off
    return scores, coords


def cmd_decode(args, settings):
    scores, coords = _maps_from_records(_read(args.maps), settings.levels, args.default_score)
    dets = detect.decode_detections(scores, coords, settings.levels, settings.score_threshold)
    sys.stdout.write(formats.dump_detections(dets))


def cmd_nms(args, settings):
    dets = formats.load_detections(_read(args.detections))
    sys.stdout.write(formats.dump_detections(detect.nms(dets, settings.nms_iou)))


def cmd_eval(args, settings):
    dets = formats.load_detections(_read(args.pred))
    gts = formats.parse_annotations(_read(args.gt), args.format)
    _emit(detect.evaluate(dets, gts, settings.match_iou).as_dict())


def cmd_render(args, settings):
    poly = _polygons(args.polygon)[args.index]
    if args.frame:
        x, y, w, h = (float(t) for t in args.frame.split(","))
        frame = geometry.Frame((x, y), w, h, args.resolution)
    else:
        frame = geometry.bounding_frame([poly], args.resolution)
    if args.soft:
        tau = args.tau * frame.width / frame.resolution
        mask, _ = geometry.rasterize_soft(poly, frame, tau)
    else:
        mask = geometry.rasterize_hard(poly, frame)
    formats.write_mask_pgm(mask, args.out)
    _emit({"out": args.out, "resolution": frame.resolution, "occupied": float(mask.sum())})


def cmd_config(args, settings):
    sys.stdout.write(formats.dump_config(settings, include_levels=args.levels))


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polytext", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="INI config file; command-line flags take precedence")
    sub = parser.add_subparsers(dest="command", required=True)

    def loss_flags(p):
        for name, kind in LOSS_FLAGS.items():
            p.add_argument("--" + name.replace("_", "-"), dest=name, type=kind, default=None)

    p = sub.add_parser("labelgen", help="annotations -> positive-cell target records")
    p.add_argument("annotations", help="annotation file or directory")
    p.add_argument("--format", choices=formats.FORMATS, default="polygon-json")
    p.add_argument("--n", type=int, default=None, help="vertices per resampled polygon")
    p.set_defaults(func=cmd_labelgen)

    p = sub.add_parser("loss", help="evaluate losses on predicted/target polygon files")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--iteration", type=int, default=0)
    loss_flags(p)
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("gradcheck", help="compare analytic loss gradients with finite differences")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--h", type=float, default=1e-5)
    loss_flags(p)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("fit", help="gradient descent from one polygon toward another")
    p.add_argument("--init", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--losses", default="both", help="reg, acc or both")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--step-size", type=float, default=0.05)
    p.add_argument("--start-iteration", type=int, default=0)
    p.add_argument("--trajectory", help="write per-step loss/IoU CSV here")
    loss_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("ablation", help="paired reg vs reg+acc study")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--step-size", type=float, default=fit.ABLATION_STEP_SIZE)
    p.add_argument("--sigma", type=float, default=0.2, help="perturbation std as a fraction of diameter")
    loss_flags(p)
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("decode", help="map records -> detections")
    p.add_argument("maps", help="records with level/row/col/offsets and optional score")
    p.add_argument("--score-threshold", type=float, default=None)
    p.add_argument("--default-score", type=float, default=1.0, help="score for records without one")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("nms", help="polygon non-maximum suppression")
    p.add_argument("detections")
    p.add_argument("--nms-iou", type=float, default=None)
    p.set_defaults(func=cmd_nms)

    p = sub.add_parser("eval", help="precision / recall / F-measure / mean IoU")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--format", choices=formats.FORMATS, default="polygon-json")
    p.add_argument("--match-iou", type=float, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="rasterize a polygon to a PGM mask")
    p.add_argument("polygon")
    p.add_argument("--out", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--frame", help="x,y,width,height; default is the padded bounding square")
    p.add_argument("--soft", action="store_true")
    p.add_argument("--tau", type=float, default=1.0, help="soft temperature in cells")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("config", help="print the effective configuration")
    p.add_argument("--levels", action="store_true", help="include the level table")
    loss_flags(p)
    p.set_defaults(func=cmd_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = _settings(args)
        args.func(args, settings)
    except (ValueError, OSError, KeyError, IndexError) as exc:
        msg = " ".join(str(exc).split())
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": msg}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
