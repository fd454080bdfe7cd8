"""BEVLoss and its components, each returning ``(value, gradient)``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .classes import NUM_CLASSES
from .evaluation import DEFAULT_GATE, match_objects
from .geometry import DepthBinning
from .lift import expected_depth
from .objects import BevObject

PROB_EPS = 1e-7
SMOOTH_L1_DELTA = 1.0


@dataclass(frozen=True)
class LossWeights:
    seg: float = 1.0
    obj: float = 2.0
    depth: float = 0.5
    reg: float = 0.01

    def __post_init__(self) -> None:
        if min(self.seg, self.obj, self.depth, self.reg) < 0:
            raise ValueError("loss weights must be non-negative")


# --------------------------------------------------------------------------
# segmentation


def focal_loss(
    pred_probs,
    target,
    gamma: float = 2.0,
    alpha: float = 0.25,
    validate: bool = True,
) -> tuple[float, np.ndarray]:
    """Mean focal loss over cells and its gradient w.r.t. ``pred_probs``.

    Probabilities are clamped to ``[1e-7, 1 - 1e-7]``; the gradient is zero
    where the clamp is active.
    """
    p = np.asarray(pred_probs, dtype=float)
    t = np.asarray(target).astype(np.int64)
    if p.shape[:-1] != t.shape:
        raise ValueError(f"probabilities {p.shape} do not match targets {t.shape}")
    K = p.shape[-1]
    if t.size and (t.min() < 0 or t.max() >= K):
        raise ValueError("target class out of range")
    if validate and not np.allclose(p.sum(axis=-1), 1.0, rtol=0.0, atol=1e-6):
        raise ValueError("probability rows must sum to one")
    N = t.size
    pt_raw = np.take_along_axis(p, t[..., None], axis=-1)[..., 0]
    pt = np.clip(pt_raw, PROB_EPS, 1.0 - PROB_EPS)
    q = 1.0 - pt
    logp = np.log(pt)
    loss = -alpha * q**gamma * logp
    # perfect predictions contribute exactly zero
    loss = np.where(pt_raw >= 1.0, 0.0, loss)
    dpt = alpha * (-(q**gamma) / pt)
    if gamma != 0:
        dpt = dpt + alpha * gamma * q ** (gamma - 1.0) * logp
    dpt = np.where((pt_raw > PROB_EPS) & (pt_raw < 1.0 - PROB_EPS), dpt, 0.0) / N
    grad = np.zeros_like(p)
    np.put_along_axis(grad, t[..., None], dpt[..., None], axis=-1)
    return float(loss.sum() / N), grad


# --------------------------------------------------------------------------
# detection


def smooth_l1(r, delta: float = SMOOTH_L1_DELTA) -> tuple[np.ndarray, np.ndarray]:
    r = np.asarray(r, dtype=float)
    a = np.abs(r)
    val = np.where(a < delta, 0.5 * r * r / delta, a - 0.5 * delta)
    grad = np.where(a < delta, r / delta, np.sign(r))
    return val, grad


def _neg_log(x: float) -> tuple[float, float]:
    """-log(x) and its derivative, flat below PROB_EPS."""
    if x <= PROB_EPS:
        return -math.log(PROB_EPS), 0.0
    return -math.log(x), -1.0 / x


def detection_loss(
    preds: Sequence[BevObject],
    targets: Sequence[BevObject],
    gate: float = DEFAULT_GATE,
    num_classes: int = NUM_CLASSES,
    delta: float = SMOOTH_L1_DELTA,
) -> tuple[float, np.ndarray]:
    """Matched localisation + class + existence terms, plus false-positive and miss penalties.

    The prediction's class distribution puts its confidence on its own class
    and spreads the rest evenly over the other classes.  The sum is averaged
    over association slots (matches + unmatched preds + unmatched targets).
    Gradient rows are ``(d/dx, d/dy, d/dconfidence)`` per prediction.
    """
    grad = np.zeros((len(preds), 3))
    m = match_objects(preds, targets, gate)
    slots = len(m.pairs) + len(m.unmatched_preds) + len(m.unmatched_targets)
    if slots == 0:
        return 0.0, grad
    total = 0.0
    for i, j, _ in m.pairs:
        p, t = preds[i], targets[j]
        v, g = smooth_l1(np.array([p.x - t.x, p.y - t.y]), delta)
        total += float(v.sum())
        grad[i, :2] += g
        c = p.confidence
        if p.class_id == t.class_id:
            ce, dce = _neg_log(c)
        else:
            ce, dce = _neg_log(1.0 - c)
            ce += math.log(max(num_classes - 1, 1))
            dce = -dce
        bce, dbce = _neg_log(c)
        total += ce + bce
        grad[i, 2] += dce + dbce
    for i in m.unmatched_preds:
        v, d = _neg_log(1.0 - preds[i].confidence)
        total += v
        grad[i, 2] -= d
    total += len(m.unmatched_targets)
    return total / slots, grad / slots


# --------------------------------------------------------------------------
# depth


def depth_l1_loss(pred_depth, target_depth, valid_mask=None) -> tuple[float, np.ndarray]:
    pred = np.asarray(pred_depth, dtype=float)
    target = np.asarray(target_depth, dtype=float)
    if pred.shape != target.shape:
        raise ValueError("prediction and target depth shapes differ")
    valid = np.ones(pred.shape, dtype=bool) if valid_mask is None else np.asarray(valid_mask, dtype=bool)
    n = int(np.count_nonzero(valid))
    if n == 0:
        raise ValueError("valid mask is empty")
    r = np.where(valid, pred - np.where(valid, target, 0.0), 0.0)
    return float(np.abs(r).sum() / n), np.sign(r) / n


def depth_consistency_loss(dist, mono_depth, bins: DepthBinning, valid_mask=None) -> tuple[float, np.ndarray]:
    """Mean |expected depth - monocular depth|, gradient w.r.t. the distribution."""
    dist = np.asarray(dist, dtype=float)
    mono = np.asarray(mono_depth, dtype=float)
    if dist.shape[:-1] != mono.shape:
        raise ValueError("distribution and depth map shapes differ")
    valid = np.ones(mono.shape, dtype=bool) if valid_mask is None else np.asarray(valid_mask, dtype=bool)
    if np.any(valid & ~(mono > 0)):
        raise ValueError("monocular depth must be positive")
    n = int(np.count_nonzero(valid))
    if n == 0:
        raise ValueError("valid mask is empty")
    r = np.where(valid, expected_depth(dist, bins) - np.where(valid, mono, 0.0), 0.0)
    grad = (np.sign(r) / n)[..., None] * bins.centers
    return float(np.abs(r).sum() / n), grad


# --------------------------------------------------------------------------
# regularisation and the weighted sum


def l2_regularization(params) -> tuple[float, np.ndarray]:
    p = np.asarray(params, dtype=float)
    return 0.5 * float(np.dot(p.ravel(), p.ravel())), p.copy()


@dataclass
class LossInputs:
    seg_probs: np.ndarray
    seg_target: np.ndarray
    det_preds: Sequence[BevObject]
    det_targets: Sequence[BevObject]
    pred_depth: np.ndarray
    target_depth: np.ndarray
    depth_dist: np.ndarray
    mono_depth: np.ndarray
    params: np.ndarray
    bins: DepthBinning = field(default_factory=DepthBinning)
    depth_valid: np.ndarray | None = None
    gamma: float = 2.0
    alpha: float = 0.25
    gate: float = DEFAULT_GATE
    num_classes: int = NUM_CLASSES


@dataclass
class LossBreakdown:
    seg: float
    obj: float
    depth: float
    consistency: float
    reg: float
    total: float
    gradients: dict[str, np.ndarray] = field(default_factory=dict, repr=False)


def combine(seg: float, obj: float, depth: float, consistency: float, reg: float, weights: LossWeights) -> float:
    return weights.seg * seg + weights.obj * obj + weights.depth * (depth + consistency) + weights.reg * reg


def bev_loss(inputs: LossInputs, weights: LossWeights = LossWeights()) -> LossBreakdown:
    seg, g_seg = focal_loss(inputs.seg_probs, inputs.seg_target, inputs.gamma, inputs.alpha)
    obj, g_obj = detection_loss(inputs.det_preds, inputs.det_targets, inputs.gate, inputs.num_classes)
    dep, g_dep = depth_l1_loss(inputs.pred_depth, inputs.target_depth, inputs.depth_valid)
    con, g_con = depth_consistency_loss(inputs.depth_dist, inputs.mono_depth, inputs.bins, inputs.depth_valid)
    reg, g_reg = l2_regularization(inputs.params)
    return LossBreakdown(
        seg=seg,
        obj=obj,
        depth=dep,
        consistency=con,
        reg=reg,
        total=combine(seg, obj, dep, con, reg, weights),
        gradients={
            "seg": weights.seg * g_seg,
            "obj": weights.obj * g_obj,
            "depth": weights.depth * g_dep,
            "consistency": weights.depth * g_con,
            "reg": weights.reg * g_reg,
        },
    )
