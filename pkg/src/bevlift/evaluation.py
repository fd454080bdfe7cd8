"""Assignment, matching and BEV detection/segmentation metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .classes import NAMES, OBJECT_CLASSES, ROAD
from .ipm import SemanticBevMap
from .objects import BevObject, footprint_corners

DEFAULT_GATE = 2.0
AP_THRESHOLDS = (0.5, 0.75, 0.9)


# --------------------------------------------------------------------------
# Hungarian assignment


@dataclass(frozen=True)
class Assignment:
    pairs: tuple[tuple[int, int], ...]  # sorted by row
    total: float


def _solve_rows_le_cols(a: np.ndarray) -> list[int]:
    """Shortest augmenting path with potentials, O(n^2 m), n <= m.

    Returns the column assigned to every row.
    """
    n, m = a.shape
    inf = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (m + 1)
    p = [0] * (m + 1)  # p[j]: row (1-based) holding column j, 0 = free
    way = [0] * (m + 1)
    rows = a.tolist()
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = rows[i0 - 1]
            ui0 = u[i0]
            delta = inf
            j1 = -1
            for j in range(1, m + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    col_of = [-1] * n
    for j in range(1, m + 1):
        if p[j]:
            col_of[p[j] - 1] = j - 1
    return col_of


def hungarian(cost) -> Assignment:
    """Minimum-cost assignment covering ``min(n, m)`` rows or columns."""
    c = np.asarray(cost, dtype=float)
    if c.ndim != 2:
        raise ValueError("cost matrix must be 2-D")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix contains NaN or Inf")
    n, m = c.shape
    if n == 0 or m == 0:
        return Assignment((), 0.0)
    if n <= m:
        pairs = [(i, j) for i, j in enumerate(_solve_rows_le_cols(c))]
    else:
        pairs = sorted((i, j) for j, i in enumerate(_solve_rows_le_cols(c.T)))
    total = 0.0
    for i, j in pairs:
        total += float(c[i, j])
    return Assignment(tuple(pairs), total)


# --------------------------------------------------------------------------
# object matching


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple[tuple[int, int, float], ...]
    unmatched_preds: tuple[int, ...]
    unmatched_targets: tuple[int, ...]


def distance_matrix(preds: Sequence[BevObject], targets: Sequence[BevObject]) -> np.ndarray:
    if not preds or not targets:
        return np.zeros((len(preds), len(targets)))
    P = np.array([[o.x, o.y] for o in preds])
    T = np.array([[o.x, o.y] for o in targets])
    return np.sqrt(((P[:, None, :] - T[None, :, :]) ** 2).sum(-1))


def match_objects(
    preds: Sequence[BevObject], targets: Sequence[BevObject], gate: float = DEFAULT_GATE
) -> MatchResult:
    """Hungarian matching on center distance; pairs beyond ``gate`` are dissolved."""
    if not gate > 0:
        raise ValueError("gate must be positive")
    D = distance_matrix(preds, targets)
    kept = []
    for i, j in hungarian(D).pairs:
        if D[i, j] <= gate:
            kept.append((i, j, float(D[i, j])))
    mp = {i for i, _, _ in kept}
    mt = {j for _, j, _ in kept}
    return MatchResult(
        pairs=tuple(kept),
        unmatched_preds=tuple(i for i in range(len(preds)) if i not in mp),
        unmatched_targets=tuple(j for j in range(len(targets)) if j not in mt),
    )


def position_error(match: MatchResult) -> float | None:
    """Mean matched center distance; ``None`` when nothing matched."""
    if not match.pairs:
        return None
    return sum(c for _, _, c in match.pairs) / len(match.pairs)


def recall(match: MatchResult, n_targets: int) -> float | None:
    if n_targets <= 0:
        return None
    return len(match.pairs) / n_targets


# --------------------------------------------------------------------------
# segmentation


def segmentation_iou(
    pred: SemanticBevMap, gt: SemanticBevMap, class_id: int, region: np.ndarray | None = None
) -> float | None:
    """Class-mask IoU, optionally restricted to ``region``; ``None`` for an empty union."""
    if pred.grid != gt.grid or pred.labels.shape != gt.labels.shape:
        raise ValueError("prediction and ground truth use different grids")
    p = pred.labels == class_id
    g = gt.labels == class_id
    if region is not None:
        region = np.asarray(region, dtype=bool)
        p = p & region
        g = g & region
    union = np.count_nonzero(p | g)
    if union == 0:
        return None
    return np.count_nonzero(p & g) / union


# --------------------------------------------------------------------------
# rotated rectangles


def polygon_area(poly: np.ndarray) -> float:
    """Signed shoelace area (positive for counter-clockwise)."""
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def clip_polygon(subject: np.ndarray, clipper: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman: ``subject`` clipped by the convex CCW ``clipper``."""
    out = [tuple(p) for p in subject]
    n = len(clipper)
    for k in range(n):
        if not out:
            break
        ax, ay = clipper[k]
        bx, by = clipper[(k + 1) % n]
        ex, ey = bx - ax, by - ay

        def side(p):
            return ex * (p[1] - ay) - ey * (p[0] - ax)

        inp, out = out, []
        prev = inp[-1]
        s_prev = side(prev)
        for cur in inp:
            s_cur = side(cur)
            if s_cur >= 0:
                if s_prev < 0:
                    out.append(_cross_point(prev, cur, s_prev, s_cur))
                out.append(cur)
            elif s_prev >= 0:
                out.append(_cross_point(prev, cur, s_prev, s_cur))
            prev, s_prev = cur, s_cur
    return np.array(out, dtype=float).reshape(-1, 2)


def _cross_point(p, q, sp, sq):
    t = sp / (sp - sq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def rotated_rect_iou(a: BevObject, b: BevObject) -> float:
    pa, pb = footprint_corners(a), footprint_corners(b)
    area_a, area_b = polygon_area(pa), polygon_area(pb)
    if area_a <= 1e-12 or area_b <= 1e-12:
        raise ValueError("degenerate rectangle")
    inter = max(polygon_area(clip_polygon(pa, pb)), 0.0)
    union = area_a + area_b - inter
    return min(max(inter / union, 0.0), 1.0)


# --------------------------------------------------------------------------
# average precision


def average_precision(
    preds: Sequence[BevObject], targets: Sequence[BevObject], iou_threshold: float
) -> float | None:
    """101-point interpolated AP with confidence-ranked greedy matching.

    A prediction may only claim a target of its own class.  ``None`` when there
    are neither predictions nor targets.
    """
    if not targets:
        return None if not preds else 0.0
    if not preds:
        return 0.0
    order = sorted(range(len(preds)), key=lambda i: -preds[i].confidence)
    used = [False] * len(targets)
    tp = np.zeros(len(preds))
    for rank, i in enumerate(order):
        best, best_j = -1.0, -1
        for j, t in enumerate(targets):
            if used[j] or t.class_id != preds[i].class_id:
                continue
            iou = rotated_rect_iou(preds[i], t)
            if iou >= iou_threshold and iou > best:
                best, best_j = iou, j
        if best_j >= 0:
            used[best_j] = True
            tp[rank] = 1.0
    ctp = np.cumsum(tp)
    prec = ctp / np.arange(1, len(preds) + 1)
    rec = ctp / len(targets)
    ap = 0.0
    for r in np.linspace(0.0, 1.0, 101):
        sel = prec[rec >= r - 1e-12]
        ap += sel.max() if sel.size else 0.0
    return ap / 101.0


# --------------------------------------------------------------------------
# report


def _pct(x: float | None) -> float | None:
    return None if x is None else 100.0 * x


@dataclass
class MetricsReport:
    seg_iou: dict[str, float | None] = field(default_factory=dict)  # percent
    ap: dict[tuple[str, float], float | None] = field(default_factory=dict)  # percent
    recall: dict[str, float | None] = field(default_factory=dict)  # percent
    mean_position_error: float | None = None  # meters

    def rows(self) -> list[tuple[str, str, str, float | None]]:
        out = [("seg_iou", cls, "", v) for cls, v in self.seg_iou.items()]
        out += [("ap", cls, f"{thr:g}", v) for (cls, thr), v in self.ap.items()]
        out += [("recall", cls, "", v) for cls, v in self.recall.items()]
        out.append(("position_error", "all", "", self.mean_position_error))
        return out

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[str, str, str, float | None]]) -> "MetricsReport":
        rep = cls()
        for metric, name, thr, value in rows:
            if metric == "seg_iou":
                rep.seg_iou[name] = value
            elif metric == "ap":
                rep.ap[(name, float(thr))] = value
            elif metric == "recall":
                rep.recall[name] = value
            elif metric == "position_error":
                rep.mean_position_error = value
            else:
                raise ValueError(f"unknown metric {metric!r}")
        return rep


def evaluate(
    pred_objects: Sequence[BevObject],
    gt_objects: Sequence[BevObject],
    pred_labels: SemanticBevMap | None = None,
    gt_labels: SemanticBevMap | None = None,
    gate: float = DEFAULT_GATE,
    seg_classes: Sequence[int] = (ROAD,),
    object_classes: Sequence[int] = OBJECT_CLASSES,
    thresholds: Sequence[float] = AP_THRESHOLDS,
    region: np.ndarray | None = None,
) -> MetricsReport:
    rep = MetricsReport()
    if pred_labels is not None and gt_labels is not None:
        for c in seg_classes:
            rep.seg_iou[NAMES[c]] = _pct(segmentation_iou(pred_labels, gt_labels, c, region))
    costs = []
    for c in object_classes:
        P = [o for o in pred_objects if o.class_id == c]
        T = [o for o in gt_objects if o.class_id == c]
        for thr in thresholds:
            rep.ap[(NAMES[c], thr)] = _pct(average_precision(P, T, thr))
        m = match_objects(P, T, gate)
        rep.recall[NAMES[c]] = _pct(recall(m, len(T)))
        costs += [d for _, _, d in m.pairs]
    rep.mean_position_error = sum(costs) / len(costs) if costs else None
    return rep
