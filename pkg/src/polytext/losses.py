"""Training losses with analytic gradients.

* :func:`cls_loss` - focal loss over a score grid.
* :func:`reg_loss` - smooth-L1 vertex loss minimized over cyclic shifts of the
  ground-truth vertex list, so no canonical first vertex is needed.
* :func:`acc_loss` - mean L1 between a soft-rendered prediction mask and the
  hard ground-truth mask.
* :func:`total_loss` - weighted sum with the scheduled accuracy weight.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError
from .geometry import Frame, bounding_frame, rasterize_hard, rasterize_soft

SCORE_EPS = 1e-7


@dataclass(frozen=True)
class LossConfig:
    lambda_cls: float = 40.0
    lambda_reg: float = 1.0
    lambda_acc_initial: float = 0.01
    lambda_acc_final: float = 1.0
    lambda_acc_switch_iteration: int = 60000
    alpha: float = 0.25
    gamma: float = 2.0
    # soft-raster temperature in units of one mask cell
    tau: float = 1.0
    mask_resolution: int = 64
    candidate_count: int = 256
    candidate_min_iou: float = 0.5

    def __post_init__(self):
        for name in ("lambda_cls", "lambda_reg", "lambda_acc_initial", "lambda_acc_final"):
            if getattr(self, name) < 0:
                raise InvalidArgumentError(f"{name} must be >= 0")
        if self.gamma < 0:
            raise InvalidArgumentError("gamma must be >= 0")
        if not 0 < self.alpha < 1:
            raise InvalidArgumentError("alpha must lie in (0, 1)")
        if self.mask_resolution < 8:
            raise InvalidArgumentError("mask_resolution must be >= 8")
        if not self.tau > 0:
            raise InvalidArgumentError("tau must be positive")
        if self.candidate_count < 0 or self.lambda_acc_switch_iteration < 0:
            raise InvalidArgumentError("counts must be non-negative")

    def lambda_acc(self, iteration: int) -> float:
        if iteration < self.lambda_acc_switch_iteration:
            return self.lambda_acc_initial
        return self.lambda_acc_final

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class LossValue:
    value: float
    gradients: Dict[str, np.ndarray] = field(default_factory=dict)

    def grad_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(g * g)) for g in self.gradients.values())))


def smooth_l1(x):
    """Elementwise smooth-L1 and its derivative: 0.5 x^2 below |x| = 1, |x| - 0.5 above."""
    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x)
    small = ax < 1.0
    value = np.where(small, 0.5 * x * x, ax - 0.5)
    deriv = np.where(small, x, np.sign(x))
    return value, deriv


def _cyclic_index(n: int) -> np.ndarray:
    # row j lists gt indices (j + i) % n for i = 0..n-1
    return (np.arange(n)[:, None] + np.arange(n)[None, :]) % n


def reg_loss(pred: Sequence, gt: Sequence):
    """Starting-point-independent vertex regression loss.

    ``pred`` and ``gt`` are equally long sequences of ``(n, 2)`` vertex
    arrays. For each pair the smooth-L1 sum is evaluated against every cyclic
    shift of the ground-truth list and the smallest is kept. Gradients flow
    through that minimizing shift only (lowest shift on ties).

    Returns the :class:`LossValue` (gradient key ``"pred"``, shape
    ``(m, n, 2)``) and the chosen shift of every pair.
    """
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape[:1] != g.shape[:1]:
        raise InvalidArgumentError(f"{len(p)} predictions but {len(g)} targets")
    if p.size == 0:
        return LossValue(0.0, {"pred": np.zeros(p.shape)}), []
    if p.ndim != 3 or p.shape != g.shape or p.shape[2] != 2:
        raise InvalidArgumentError(f"vertex arrays disagree: {p.shape} vs {g.shape}")
    m, n, _ = p.shape
    shifted = g[:, _cyclic_index(n)]
    val, der = smooth_l1(p[:, None] - shifted)
    per_shift = val.reshape(m, n, 2 * n).sum(axis=2)
    best = np.argmin(per_shift, axis=1)
    rows = np.arange(m)
    value = float(per_shift[rows, best].sum())
    return LossValue(value, {"pred": der[rows, best]}), best.tolist()


def mask_frame(pred, gt, resolution: int = 64) -> Frame:
    """Square frame around both polygons with 5% padding on every side."""
    return bounding_frame([pred, gt], resolution=resolution, pad=0.05, square=True)


def acc_loss(pred, gt, config: LossConfig = LossConfig(), frame: Optional[Frame] = None) -> LossValue:
    """Mean absolute difference between soft(pred) and hard(gt) masks.

    The frame is built from the inputs unless given, and is held constant
    when differentiating. Gradient key is ``"pred"`` with shape ``(n, 2)``.
    """
    if frame is None:
        frame = mask_frame(pred, gt, config.mask_resolution)
    tau = config.tau * frame.width / frame.resolution
    soft, jac = rasterize_soft(pred, frame, tau)
    hard = rasterize_hard(gt, frame)
    cells = soft.size
    value = float(np.abs(soft - hard).sum() / cells)
    sign = np.where(hard > 0.5, -1.0, 1.0)
    grad = np.einsum("rc,rcnk->nk", sign, jac) / cells
    return LossValue(value, {"pred": grad})


def cls_loss(pred_scores, targets, alpha: float = 0.25, gamma: float = 2.0) -> LossValue:
    """Focal loss summed over non-ignored cells.

    ``targets`` holds 1 (text), 0 (background) or -1 (ignored). Scores are
    clamped to ``[1e-7, 1 - 1e-7]``; clamped cells get zero gradient.
    """
    y = np.asarray(pred_scores, dtype=np.float64)
    t = np.asarray(targets)
    if y.shape != t.shape:
        raise InvalidArgumentError(f"score shape {y.shape} does not match target shape {t.shape}")
    p = np.clip(y, SCORE_EPS, 1.0 - SCORE_EPS)
    pos = t == 1
    neg = t == 0
    log_p, log_q = np.log(p), np.log1p(-p)
    q = 1.0 - p
    loss_pos = -alpha * q**gamma * log_p
    loss_neg = -(1.0 - alpha) * p**gamma * log_q
    value = float(loss_pos[pos].sum() + loss_neg[neg].sum())

    if gamma == 0:
        d_pos = -alpha / p
        d_neg = (1.0 - alpha) / q
    else:
        d_pos = alpha * (gamma * q ** (gamma - 1) * log_p - q**gamma / p)
        d_neg = -(1.0 - alpha) * (gamma * p ** (gamma - 1) * log_q - p**gamma / q)
    grad = np.where(pos, d_pos, 0.0) + np.where(neg, d_neg, 0.0)
    grad = np.where((y == p), grad, 0.0)
    return LossValue(value, {"scores": grad})


def sample_candidates(pairs, config: LossConfig = LossConfig(), seed: int = 0) -> list:
    """Uniform random subset of ``(pred, gt, iou)`` pairs with iou above the threshold.

    At most ``candidate_count`` pairs are returned, in their input order.
    """
    eligible = [i for i, pair in enumerate(pairs) if pair[2] > config.candidate_min_iou]
    k = min(config.candidate_count, len(eligible))
    if k == 0:
        return []
    rng = np.random.default_rng(seed)
    picked = np.sort(rng.choice(len(eligible), size=k, replace=False))
    return [pairs[eligible[i]] for i in picked]


def total_loss(cls: LossValue, reg: LossValue, acc: LossValue, config: LossConfig = LossConfig(),
               iteration: int = 0) -> LossValue:
    """Weighted sum of the three components; gradients with equal keys are added."""
    weights = (config.lambda_cls, config.lambda_reg, config.lambda_acc(iteration))
    value = 0.0
    grads: Dict[str, np.ndarray] = {}
    for w, part in zip(weights, (cls, reg, acc)):
        value += w * part.value
        for key, g in part.gradients.items():
            if key in grads:
                grads[key] = grads[key] + w * g
            else:
                grads[key] = w * np.asarray(g, dtype=np.float64)
    return LossValue(value, grads)
