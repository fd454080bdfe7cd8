"""Central finite-difference checks for the loss gradients."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .geometry import DepthBinning
from .losses import (
    SMOOTH_L1_DELTA,
    depth_consistency_loss,
    depth_l1_loss,
    detection_loss,
    focal_loss,
    l2_regularization,
)
from .evaluation import match_objects
from .objects import BevObject

STEP = 1e-5
REL_FLOOR = 1e-8


@dataclass
class GradCheck:
    component: str
    max_rel_error: float = 0.0
    checked: int = 0
    skipped: int = 0

    def update(self, analytic: float, numeric: float) -> None:
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), REL_FLOOR)
        self.max_rel_error = max(self.max_rel_error, err)
        self.checked += 1


def central_difference(f: Callable[[np.ndarray], float], x: np.ndarray, idx, h: float = STEP) -> float:
    xp = x.copy()
    xm = x.copy()
    xp[idx] += h
    xm[idx] -= h
    return (f(xp) - f(xm)) / (2.0 * h)


def check_focal(rng: np.random.Generator, out: GradCheck) -> None:
    K = int(rng.integers(2, 6))
    shape = (int(rng.integers(2, 5)), int(rng.integers(2, 5)))
    logits = rng.normal(size=shape + (K,))
    p = np.exp(logits) / np.exp(logits).sum(-1, keepdims=True)
    t = rng.integers(0, K, size=shape)
    gamma = float(rng.choice([0.0, 1.0, 2.0, 2.5]))
    alpha = float(rng.uniform(0.1, 1.0))
    _, g = focal_loss(p, t, gamma, alpha)

    def f(x):
        return focal_loss(x, t, gamma, alpha, validate=False)[0]

    for idx in np.ndindex(p.shape):
        out.update(g[idx], central_difference(f, p, idx))


def _objects_from(arr: np.ndarray, template: list[BevObject]) -> list[BevObject]:
    return [replace(o, x=float(a[0]), y=float(a[1]), confidence=float(a[2])) for o, a in zip(template, arr)]


def check_detection(rng: np.random.Generator, out: GradCheck, gate: float = 2.0) -> None:
    n_t = int(rng.integers(1, 5))
    targets = [
        BevObject(float(x), float(y), 0.0, 4.5, 2.0, int(rng.integers(2, 6)), 1.0)
        for x, y in rng.uniform(-20, 20, size=(n_t, 2))
    ]
    preds = []
    for t in targets:
        if rng.uniform() < 0.8:
            cls = t.class_id if rng.uniform() < 0.8 else int(rng.integers(2, 6))
            dx, dy = rng.normal(0.0, 0.8, size=2)
            preds.append(BevObject(t.x + dx, t.y + dy, 0.0, 4.5, 2.0, cls, float(rng.uniform(0.05, 0.95))))
    for _ in range(int(rng.integers(0, 3))):
        x, y = rng.uniform(-20, 20, size=2)
        preds.append(BevObject(float(x), float(y), 0.0, 4.5, 2.0, 2, float(rng.uniform(0.05, 0.95))))
    if not preds:
        return
    x0 = np.array([[p.x, p.y, p.confidence] for p in preds])
    _, g = detection_loss(preds, targets, gate)
    base = match_objects(preds, targets, gate).pairs
    base_pairs = {(i, j) for i, j, _ in base}

    def f(x):
        return detection_loss(_objects_from(x, preds), targets, gate)[0]

    for idx in np.ndindex(x0.shape):
        i, k = idx
        skip = False
        for sgn in (1.0, -1.0):
            xs = x0.copy()
            xs[idx] += sgn * STEP
            pairs = {(a, b) for a, b, _ in match_objects(_objects_from(xs, preds), targets, gate).pairs}
            if pairs != base_pairs:
                skip = True
        if k < 2:
            for a, b, _ in base:
                if a == i:
                    r = x0[i, k] - (targets[b].x if k == 0 else targets[b].y)
                    skip |= abs(abs(r) - SMOOTH_L1_DELTA) < 2 * STEP
        if skip:
            out.skipped += 1
            continue
        out.update(g[idx], central_difference(f, x0, idx))


def check_depth_l1(rng: np.random.Generator, out: GradCheck) -> None:
    shape = (int(rng.integers(2, 6)), int(rng.integers(2, 6)))
    pred = rng.uniform(1, 60, size=shape)
    target = rng.uniform(1, 60, size=shape)
    valid = rng.uniform(size=shape) < 0.8
    valid.flat[0] = True
    _, g = depth_l1_loss(pred, target, valid)
    for idx in np.ndindex(shape):
        if abs(pred[idx] - target[idx]) < 2 * STEP:
            out.skipped += 1
            continue
        out.update(g[idx], central_difference(lambda x: depth_l1_loss(x, target, valid)[0], pred, idx))


def check_consistency(rng: np.random.Generator, out: GradCheck, bins: DepthBinning = DepthBinning()) -> None:
    shape = (int(rng.integers(1, 4)), int(rng.integers(1, 4)))
    dist = rng.dirichlet(np.full(bins.count, 0.3), size=shape)
    mono = rng.uniform(bins.d_min, bins.d_max, size=shape)
    _, g = depth_consistency_loss(dist, mono, bins)
    r = dist @ bins.centers - mono
    for idx in np.ndindex(dist.shape):
        if abs(r[idx[:-1]]) < 2 * STEP * bins.d_max:
            out.skipped += 1
            continue
        out.update(g[idx], central_difference(lambda x: depth_consistency_loss(x, mono, bins)[0], dist, idx))


def check_l2(rng: np.random.Generator, out: GradCheck) -> None:
    p = rng.normal(size=int(rng.integers(1, 20)))
    _, g = l2_regularization(p)
    for idx in np.ndindex(p.shape):
        out.update(g[idx], central_difference(lambda x: l2_regularization(x)[0], p, idx))


CHECKS = {
    "seg": check_focal,
    "obj": check_detection,
    "depth": check_depth_l1,
    "consistency": check_consistency,
    "reg": check_l2,
}


def run_grad_checks(seed: int = 0, instances: int = 100) -> dict[str, GradCheck]:
    rng = np.random.default_rng(seed)
    results = {}
    for name, fn in CHECKS.items():
        res = GradCheck(name)
        for _ in range(instances):
            fn(rng, res)
        results[name] = res
    return results
