"""Lift, splat and object embedding over a whole rig."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import classes
from .geometry import CameraRig, DepthBinning, FeatureGridSpec, build_frustum
from .ipm import SemanticBevMap
from .lift import depth_map_to_distribution, lift_outer
from .objects import (
    BevObject,
    Detection2D,
    UnplaceableDetection,
    bilinear_depth_lookup,
    center_depth_offset,
    detection_to_bev,
    embed_objects,
    footprint_for,
)
from .splat import BevFeatureMap, BevGridSpec, splat_sorted

log = logging.getLogger(__name__)


@dataclass
class PipelineResult:
    features: BevFeatureMap
    labels: SemanticBevMap
    objects: list[BevObject] = field(default_factory=list)
    object_channels: np.ndarray | None = field(default=None, repr=False)

    def stacked(self) -> np.ndarray:
        """Splatted class mass followed by the object channels, (nx, ny, 2K + 2)."""
        return np.concatenate([self.features.values, self.object_channels], axis=-1)


def anchor_pixels(grid: FeatureGridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Integer pixel indices (rows, cols) nearest to the feature-cell anchors."""
    u, v = grid.anchors()
    return np.floor(v).astype(np.int64), np.floor(u).astype(np.int64)


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels).astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError("label outside the class range")
    return np.eye(num_classes)[labels]


def camera_inputs(depth: np.ndarray, semantic: np.ndarray, grid: FeatureGridSpec, bins: DepthBinning, num_classes: int):
    """Depth distribution and one-hot features sampled at the feature anchors.

    Sky and depths beyond the last bin carry zero features.
    """
    rows, cols = anchor_pixels(grid)
    d = np.asarray(depth, dtype=float)[rows, cols]
    valid = np.isfinite(d) & (d > 0) & (d <= bins.d_max)
    dist = depth_map_to_distribution(np.where(valid, d, bins.d_max), bins)
    feat = one_hot(np.asarray(semantic)[rows, cols], num_classes) * valid[..., None]
    return dist, feat


def semantic_head(features: BevFeatureMap, window: int = 1) -> SemanticBevMap:
    """Argmax over per-class splatted mass; cells without mass stay 0.

    ``window > 1`` first sums the mass over a centred ``window x window``
    neighbourhood, which fills the cells that fall between depth-bin samples.
    """
    v = features.values
    if window > 1:
        if window % 2 == 0:
            raise ValueError("head window must be odd")
        r = window // 2
        padded = np.pad(v, ((r, r), (r, r), (0, 0)))
        v = sliding_window_view(padded, (window, window), axis=(0, 1)).sum(axis=(-2, -1))
    labels = np.argmax(v, axis=-1)
    labels = np.where(v.sum(axis=-1) > 0, labels, 0)
    return SemanticBevMap(labels.astype(np.int64), features.grid)


def place_detections(
    rig: CameraRig,
    depth_maps: Mapping[str, np.ndarray],
    detections: Sequence[Detection2D],
    recenter: bool = True,
) -> list[BevObject]:
    lookups = {}
    out = []
    for det in detections:
        cam = rig[det.camera_name]
        if det.camera_name not in lookups:
            lookups[det.camera_name] = bilinear_depth_lookup(depth_maps[det.camera_name])
        fp = footprint_for(det.class_id)
        offset = center_depth_offset(*fp) if recenter else 0.0
        try:
            out.append(detection_to_bev(det, lookups[det.camera_name], cam, fp, offset))
        except UnplaceableDetection as exc:
            log.debug("skipping detection: %s", exc)
    return out


def run_pipeline(
    rig: CameraRig,
    depth_maps: Mapping[str, np.ndarray],
    semantic_images: Mapping[str, np.ndarray],
    detections: Sequence[Detection2D] = (),
    bins: DepthBinning = DepthBinning(),
    grid: BevGridSpec = BevGridSpec(),
    stride: int = 8,
    num_classes: int = classes.NUM_CLASSES,
    recenter: bool = True,
    head_window: int = 3,
) -> PipelineResult:
    frustums, lifted = [], []
    for cam in rig:
        fgrid = FeatureGridSpec.for_image(cam.intrinsics.width, cam.intrinsics.height, stride)
        dist, feat = camera_inputs(depth_maps[cam.name], semantic_images[cam.name], fgrid, bins, num_classes)
        frustums.append(build_frustum(cam, bins, fgrid))
        lifted.append(lift_outer(dist, feat))
    features = splat_sorted(frustums, lifted, grid, channels=num_classes)
    del lifted
    objects = place_detections(rig, depth_maps, detections, recenter)
    return PipelineResult(
        features=features,
        labels=semantic_head(features, head_window),
        objects=objects,
        object_channels=embed_objects(objects, grid, num_classes),
    )
