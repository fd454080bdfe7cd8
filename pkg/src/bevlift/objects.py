"""Placing 2D detections in BEV and encoding them as extra BEV channels."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .classes import DEFAULT_FOOTPRINTS
from .geometry import CameraModel, camera_to_vehicle, unproject_pixel
from .splat import BevGridSpec, cell_index


class UnplaceableDetection(ValueError):
    """No usable depth at a detection's bottom-center pixel."""


@dataclass(frozen=True)
class Detection2D:
    camera_name: str
    bbox: tuple[float, float, float, float]  # u_min, v_min, u_max, v_max
    class_id: int
    confidence: float

    def __post_init__(self) -> None:
        bbox = tuple(float(b) for b in self.bbox)
        object.__setattr__(self, "bbox", bbox)
        u0, v0, u1, v1 = bbox
        if not (u0 < u1 and v0 < v1):
            raise ValueError(f"degenerate bbox {bbox}")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError("confidence must lie in [0, 1]")

    @property
    def bottom_center(self) -> tuple[float, float]:
        u0, _, u1, v1 = self.bbox
        return 0.5 * (u0 + u1), v1


@dataclass(frozen=True)
class BevObject:
    x: float
    y: float
    yaw: float
    length: float
    width: float
    class_id: int
    confidence: float = 1.0

    def __post_init__(self) -> None:
        if not (self.length > 0 and self.width > 0):
            raise ValueError("footprint dimensions must be positive")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError("confidence must lie in [0, 1]")

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


def footprint_for(class_id: int) -> tuple[float, float]:
    return DEFAULT_FOOTPRINTS.get(class_id, (1.0, 1.0))


def center_depth_offset(length: float, width: float) -> float:
    """Mean depth from the nearest bottom corner of a box to its center.

    Averages ``(L/2)|cos a| + (W/2)|sin a|`` over a uniformly random relative
    heading ``a``.
    """
    return (length + width) / math.pi


def bilinear_depth_lookup(depth: np.ndarray) -> Callable[[float, float], float]:
    """Bilinear sampler over a dense depth map indexed ``[v, u]``.

    Non-finite or non-positive neighbours are dropped and the remaining weights
    renormalised; NaN comes back when nothing usable is left.
    """
    depth = np.asarray(depth, dtype=float)
    h, w = depth.shape

    def lookup(u: float, v: float) -> float:
        if not (0.0 <= u <= w - 1 and 0.0 <= v <= h - 1):
            return math.nan
        u0, v0 = min(int(math.floor(u)), w - 1), min(int(math.floor(v)), h - 1)
        u1, v1 = min(u0 + 1, w - 1), min(v0 + 1, h - 1)
        fu, fv = u - u0, v - v0
        acc = wsum = 0.0
        for vv, uu, wt in (
            (v0, u0, (1 - fu) * (1 - fv)),
            (v0, u1, fu * (1 - fv)),
            (v1, u0, (1 - fu) * fv),
            (v1, u1, fu * fv),
        ):
            d = depth[vv, uu]
            if wt > 0 and math.isfinite(d) and d > 0:
                acc += wt * d
                wsum += wt
        return acc / wsum if wsum > 0 else math.nan

    return lookup


def detection_to_bev(
    det: Detection2D,
    depth_at: Callable[[float, float], float],
    cam: CameraModel,
    footprint: tuple[float, float] | None = None,
    depth_offset: float = 0.0,
) -> BevObject:
    """Unproject the bbox bottom-center at its looked-up depth.

    ``depth_offset`` pushes the point further along the same pixel ray; pass
    :func:`center_depth_offset` of the footprint to aim at the object center
    instead of its nearest visible edge.
    """
    intr = cam.intrinsics
    u0, v0, u1, v1 = det.bbox
    if u0 < 0 or v0 < 0 or u1 > intr.width - 1 or v1 > intr.height - 1:
        raise ValueError(f"bbox {det.bbox} exceeds the {intr.width}x{intr.height} image")
    u, v = det.bottom_center
    d = depth_at(u, v)
    if d is None or not math.isfinite(d) or d <= 0:
        raise UnplaceableDetection(f"no positive depth at ({u}, {v}) in camera {cam.name!r}")
    p = camera_to_vehicle(unproject_pixel(u, v, d + depth_offset, intr), cam.extrinsics)
    length, width = footprint if footprint is not None else footprint_for(det.class_id)
    return BevObject(
        x=float(p[0]),
        y=float(p[1]),
        yaw=0.0,
        length=length,
        width=width,
        class_id=det.class_id,
        confidence=det.confidence,
    )


def embed_objects(objects: Sequence[BevObject], grid: BevGridSpec, num_classes: int) -> np.ndarray:
    """(nx, ny, K + 2) channels: confidence-scaled class one-hot, confidence, log area.

    Collisions keep the maximum per channel; the log-area channel follows the
    most confident object (larger area on exact ties), which keeps the result
    independent of input order.
    """
    K = num_classes
    out = np.zeros((grid.nx, grid.ny, K + 2))
    best = np.full((grid.nx, grid.ny), -1.0)
    for obj in objects:
        cell = cell_index((obj.x, obj.y), grid)
        if cell is None:
            continue
        if not (0 <= obj.class_id < K):
            raise ValueError(f"class id {obj.class_id} outside [0, {K})")
        ix, iy = cell
        c = obj.confidence
        out[ix, iy, obj.class_id] = max(out[ix, iy, obj.class_id], c)
        out[ix, iy, K] = max(out[ix, iy, K], c)
        log_area = math.log(obj.length * obj.width)
        if c > best[ix, iy] or (c == best[ix, iy] and log_area > out[ix, iy, K + 1]):
            best[ix, iy] = c
            out[ix, iy, K + 1] = log_area
    return out


def footprint_corners(obj: BevObject) -> np.ndarray:
    """(4, 2) counter-clockwise corners of the yaw-rotated footprint."""
    hl, hw = obj.length / 2.0, obj.width / 2.0
    local = np.array([[hl, -hw], [hl, hw], [-hl, hw], [-hl, -hw]])
    c, s = math.cos(obj.yaw), math.sin(obj.yaw)
    R = np.array([[c, -s], [s, c]])
    return local @ R.T + np.array([obj.x, obj.y])
