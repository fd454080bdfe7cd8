"""Inverse perspective mapping baseline: per-pixel ray casting onto z = 0."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .geometry import CameraModel, pixel_rays
from .splat import BevGridSpec, cell_indices

DOWN_EPS = 1e-9


@dataclass
class SemanticBevMap:
    labels: np.ndarray = field(repr=False)  # (nx, ny) int, 0 = unknown/empty
    grid: BevGridSpec


def _check_height(cam: CameraModel) -> None:
    if not cam.extrinsics.t[2] > 0:
        raise ValueError(f"camera {cam.name!r} is not above the ground plane")


def ground_points(u, v, cam: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    """Batched ground intersections: ``points (..., 3), valid (...)``."""
    _check_height(cam)
    d = pixel_rays(u, v, cam)
    o = cam.extrinsics.t
    dz = d[..., 2]
    valid = dz < -DOWN_EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(valid, -o[2] / dz, np.nan)
    valid &= t > 0
    pts = o + t[..., None] * d
    pts[..., 2] = np.where(valid, 0.0, np.nan)
    return pts, valid


def ground_intersection(u: float, v: float, cam: CameraModel) -> np.ndarray | None:
    pts, valid = ground_points(np.float64(u), np.float64(v), cam)
    if not bool(valid):
        return None
    return pts


def _samples(labels: np.ndarray, cam: CameraModel, grid: BevGridSpec):
    h, w = labels.shape
    intr = cam.intrinsics
    if (w, h) != (intr.width, intr.height):
        raise ValueError(f"image {w}x{h} does not match camera {cam.name!r}")
    v, u = np.mgrid[0:h, 0:w].astype(float)
    pts, valid = ground_points(u, v, cam)
    ix, iy, ok = cell_indices(pts, grid)
    keep = (valid & ok).ravel()
    dist = np.linalg.norm(pts - cam.extrinsics.t, axis=-1).ravel()
    key = (ix * grid.ny + iy).ravel()
    return key[keep], dist[keep], labels.ravel()[keep]


def _nearest_wins(keys, dists, labels, grid: BevGridSpec) -> np.ndarray:
    out = np.zeros(grid.nx * grid.ny, dtype=np.int64)
    if keys.size:
        # lexsort is stable, so ties fall back to camera order then pixel order
        order = np.lexsort((dists, keys))
        k = keys[order]
        first = np.r_[True, k[1:] != k[:-1]]
        out[k[first]] = labels[order][first]
    return out.reshape(grid.nx, grid.ny)


def ipm_rasterize(labels, cam: CameraModel, grid: BevGridSpec) -> SemanticBevMap:
    labels = np.asarray(labels).astype(np.int64)
    keys, dists, labs = _samples(labels, cam, grid)
    return SemanticBevMap(_nearest_wins(keys, dists, labs, grid), grid)


def ipm_rasterize_rig(
    images: Mapping[str, np.ndarray], cameras: Sequence[CameraModel], grid: BevGridSpec
) -> SemanticBevMap:
    """Fuse several cameras under the same nearest-observation rule."""
    parts = [_samples(np.asarray(images[c.name]).astype(np.int64), c, grid) for c in cameras]
    if not parts:
        return SemanticBevMap(np.zeros(grid.shape, dtype=np.int64), grid)
    keys, dists, labs = (np.concatenate(p) for p in zip(*parts))
    return SemanticBevMap(_nearest_wins(keys, dists, labs, grid), grid)


def ipm_coverage(cameras: Sequence[CameraModel], grid: BevGridSpec) -> np.ndarray:
    """Cells that receive at least one pixel's ground intersection."""
    mask = np.zeros(grid.nx * grid.ny, dtype=bool)
    for cam in cameras:
        intr = cam.intrinsics
        keys, _, _ = _samples(np.zeros((intr.height, intr.width), dtype=np.int64), cam, grid)
        mask[keys] = True
    return mask.reshape(grid.shape)
