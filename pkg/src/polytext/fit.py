"""Gradient descent directly on polygon vertices.

Used to check that the losses pull predictions toward their targets and to
run the paired reg vs. reg+acc comparison on synthetic quadrilaterals.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .geometry import is_convex, is_simple, polygon_iou
from .losses import LossConfig, LossValue, acc_loss, reg_loss, total_loss

logger = logging.getLogger(__name__)

IOU_RESOLUTION = 256
CONVERGENCE_TOL = 1e-8
CONVERGENCE_WINDOW = 10
# Small enough that the regression-only arm is still short of convergence
# after 500 steps, which is the regime where the accuracy term matters.
ABLATION_STEP_SIZE = 0.01

LossSelection = Union[str, Iterable[str]]


class FitDivergedError(FloatingPointError):
    """Raised when a descent step produces a non-finite gradient."""


@dataclass
class FitResult:
    losses: list
    ious: list
    final: np.ndarray
    final_iou: float
    steps: int
    converged: bool

    @property
    def trajectory(self):
        return list(zip(self.losses, self.ious))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["step", "loss", "iou"])
        for step, (loss, iou) in enumerate(self.trajectory):
            writer.writerow([step, repr(loss), repr(iou)])
        return buf.getvalue()


def parse_losses(losses: LossSelection) -> frozenset:
    if isinstance(losses, str):
        names = {"both": {"reg", "acc"}}.get(losses, set(losses.replace("+", ",").split(",")))
    else:
        names = set(losses)
    names = {s.strip() for s in names if s.strip()}
    unknown = names - {"reg", "acc"}
    if unknown or not names:
        raise ValueError(f"loss selection must be drawn from reg/acc, got {sorted(names) or 'nothing'}")
    return frozenset(names)


def objective(vertices, target, losses: frozenset, config: LossConfig, iteration: int) -> LossValue:
    """Weighted fit objective; gradient key ``"vertices"``."""
    zero = LossValue(0.0, {})
    reg = acc = zero
    if "reg" in losses:
        lv, _ = reg_loss([vertices], [target])
        reg = LossValue(lv.value, {"vertices": lv.gradients["pred"][0]})
    if "acc" in losses:
        lv = acc_loss(vertices, target, config)
        acc = LossValue(lv.value, {"vertices": lv.gradients["pred"]})
    out = total_loss(zero, reg, acc, config, iteration)
    out.gradients.setdefault("vertices", np.zeros_like(np.asarray(vertices, dtype=np.float64)))
    return out


def fit_polygon(
    init,
    target,
    losses: LossSelection = "both",
    config: LossConfig = LossConfig(),
    steps: int = 500,
    step_size: float = 0.05,
    start_iteration: int = 0,
) -> FitResult:
    """Plain gradient descent ``v <- v - step_size * grad`` from ``init`` toward ``target``.

    Loss and IoU are recorded before every update. The run stops early once
    the loss moved less than 1e-8 across the last 10 recorded steps.
    ``start_iteration`` offsets the iteration counter seen by the accuracy
    weight schedule.
    """
    v = np.array(init, dtype=np.float64)
    tgt = np.array(target, dtype=np.float64)
    if v.shape != tgt.shape:
        raise ValueError(f"init has shape {v.shape} but target has {tgt.shape}")
    if not step_size > 0:
        raise ValueError("step_size must be positive")
    selected = parse_losses(losses)

    loss_hist, iou_hist = [], []
    converged = False
    for step in range(steps):
        lv = objective(v, tgt, selected, config, start_iteration + step)
        loss_hist.append(lv.value)
        iou_hist.append(polygon_iou(v, tgt, IOU_RESOLUTION))
        if (len(loss_hist) > CONVERGENCE_WINDOW
                and abs(loss_hist[-1] - loss_hist[-1 - CONVERGENCE_WINDOW]) < CONVERGENCE_TOL):
            converged = True
            break
        g = lv.gradients["vertices"]
        if not np.all(np.isfinite(g)):
            raise FitDivergedError(f"non-finite gradient at step {step}: loss={lv.value!r}, vertices={v.tolist()}")
        with np.errstate(over="ignore", invalid="ignore"):
            nxt = v - step_size * g
        if not np.all(np.isfinite(nxt)):
            raise FitDivergedError(f"update overflowed at step {step}: loss={lv.value!r}, vertices={v.tolist()}")
        v = nxt

    final_iou = iou_hist[-1] if converged else polygon_iou(v, tgt, IOU_RESOLUTION)
    return FitResult(loss_hist, iou_hist, v, final_iou, len(loss_hist), converged)


def random_quadrilateral(rng: np.random.Generator) -> np.ndarray:
    """Convex, clockwise, text-like quadrilateral in grid units (a few cells across)."""
    while True:
        w = rng.uniform(2.0, 6.0)
        h = rng.uniform(0.8, 2.0)
        box = np.array([[-w, -h], [w, -h], [w, h], [-w, h]]) / 2
        box += rng.uniform(-0.1, 0.1, box.shape) * h
        theta = rng.uniform(-np.pi / 4, np.pi / 4)
        c, s = np.cos(theta), np.sin(theta)
        quad = box @ np.array([[c, s], [-s, c]]) + rng.uniform(-1.0, 1.0, 2)
        if is_convex(quad) and is_simple(quad):
            return quad


def diameter(vertices) -> float:
    v = np.asarray(vertices, dtype=np.float64)
    return float(np.max(np.linalg.norm(v[:, None] - v[None], axis=-1)))


@dataclass
class AblationReport:
    arms: tuple
    final_ious: dict = field(default_factory=dict)

    def mean_iou(self, arm) -> float:
        return float(np.mean(self.final_ious[arm]))

    @property
    def difference(self) -> float:
        """Mean paired difference, last arm minus first."""
        first, last = self.arms[0], self.arms[-1]
        return float(np.mean(np.asarray(self.final_ious[last]) - np.asarray(self.final_ious[first])))

    def summary(self) -> dict:
        out = {"trials": len(self.final_ious[self.arms[0]])}
        for arm in self.arms:
            out[f"mean_iou[{arm}]"] = self.mean_iou(arm)
        out["paired_difference"] = self.difference
        return out


def ablation_study(
    trials: int = 100,
    seed: int = 0,
    config: LossConfig = LossConfig(),
    steps: int = 500,
    step_size: float = ABLATION_STEP_SIZE,
    sigma: float = 0.2,
    arms: Sequence[LossSelection] = ("reg", "reg+acc"),
    start_iteration: Optional[int] = None,
) -> AblationReport:
    """Paired comparison of loss selections on perturbed random quadrilaterals.

    Every trial draws one target and one Gaussian perturbation (standard
    deviation ``sigma`` times the target's diameter) from a stream seeded by
    ``(seed, trial)``; all arms start from that same polygon. The accuracy
    weight defaults to its post-switch value.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    if start_iteration is None:
        start_iteration = config.lambda_acc_switch_iteration
    names = tuple(arms)
    report = AblationReport(arms=names, final_ious={a: [] for a in names})
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        target = random_quadrilateral(rng)
        init = target + rng.normal(0.0, sigma * diameter(target), target.shape)
        for arm in names:
            res = fit_polygon(init, target, arm, config, steps, step_size, start_iteration)
            report.final_ious[arm].append(res.final_iou)
        logger.debug("trial %d: %s", trial, {a: report.final_ious[a][-1] for a in names})
    return report
