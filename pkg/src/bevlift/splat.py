"""Scatter-sum pooling of lifted frustum features onto the BEV grid.

Two implementations share one accumulation order, ascending
``(camera, i, j, k)`` within every cell, so their outputs are bitwise equal:

* :func:`splat_reference` walks every point in that order.
* :func:`splat_sorted` stable-sorts points by flat cell key and reduces each
  key segment in rank order, vectorised across segments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import FrustumGrid


@dataclass(frozen=True)
class BevGridSpec:
    x_min: float = -50.0
    x_max: float = 50.0
    y_min: float = -50.0
    y_max: float = 50.0
    resolution: float = 0.5

    def __post_init__(self) -> None:
        for lo, hi in ((self.x_min, self.x_max), (self.y_min, self.y_max)):
            n = (hi - lo) / self.resolution
            if not (hi > lo) or abs(n - round(n)) > 1e-9:
                raise ValueError("grid extent must be a positive multiple of the resolution")

    @property
    def nx(self) -> int:
        return int(round((self.x_max - self.x_min) / self.resolution))

    @property
    def ny(self) -> int:
        return int(round((self.y_max - self.y_min) / self.resolution))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """(nx, ny) arrays of cell-center x and y."""
        xs = self.x_min + (np.arange(self.nx) + 0.5) * self.resolution
        ys = self.y_min + (np.arange(self.ny) + 0.5) * self.resolution
        return np.meshgrid(xs, ys, indexing="ij")


@dataclass
class BevFeatureMap:
    values: np.ndarray = field(repr=False)  # (nx, ny, C)
    grid: BevGridSpec

    @property
    def channels(self) -> int:
        return self.values.shape[-1]


def cell_index(p_veh, grid: BevGridSpec) -> tuple[int, int] | None:
    """Half-open cell containing ``p_veh`` (z ignored); ``None`` when outside."""
    x, y = float(p_veh[0]), float(p_veh[1])
    ix = math.floor((x - grid.x_min) / grid.resolution)
    iy = math.floor((y - grid.y_min) / grid.resolution)
    if 0 <= ix < grid.nx and 0 <= iy < grid.ny:
        return ix, iy
    return None


def cell_indices(points, grid: BevGridSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised :func:`cell_index`: ``ix, iy, in_range`` for (..., >=2) points."""
    p = np.asarray(points, dtype=float)
    ix = np.floor((p[..., 0] - grid.x_min) / grid.resolution)
    iy = np.floor((p[..., 1] - grid.y_min) / grid.resolution)
    ok = (ix >= 0) & (ix < grid.nx) & (iy >= 0) & (iy < grid.ny) & np.isfinite(ix) & np.isfinite(iy)
    ix = np.where(ok, ix, -1).astype(np.int64)
    iy = np.where(ok, iy, -1).astype(np.int64)
    return ix, iy, ok


def _check_inputs(frustums: Sequence[FrustumGrid], lifted: Sequence[np.ndarray]) -> int | None:
    if len(frustums) != len(lifted):
        raise ValueError(f"{len(frustums)} frustums but {len(lifted)} lifted tensors")
    C = None
    for fr, lf in zip(frustums, lifted):
        lf = np.asarray(lf)
        if lf.ndim != 4 or fr.points.shape[:3] != lf.shape[:3]:
            raise ValueError(f"frustum {fr.points.shape} does not match lifted features {lf.shape}")
        if C is None:
            C = lf.shape[3]
        elif lf.shape[3] != C:
            raise ValueError("channel count differs between cameras")
    return C


def splat_reference(
    frustums: Sequence[FrustumGrid],
    lifted: Sequence[np.ndarray],
    grid: BevGridSpec,
    channels: int | None = None,
) -> BevFeatureMap:
    """Plain point-by-point loop in ``(camera, i, j, k)`` order."""
    C = _check_inputs(frustums, lifted)
    C = C if C is not None else (channels or 1)
    out = np.zeros((grid.nx, grid.ny, C))
    for fr, lf in zip(frustums, lifted):
        lf = np.asarray(lf, dtype=float)
        ix, iy, ok = cell_indices(fr.points, grid)
        h, w, D = ok.shape
        for i in range(h):
            for j in range(w):
                for k in range(D):
                    if ok[i, j, k]:
                        out[ix[i, j, k], iy[i, j, k]] += lf[i, j, k]
    return BevFeatureMap(out, grid)


def splat_sorted(
    frustums: Sequence[FrustumGrid],
    lifted: Sequence[np.ndarray],
    grid: BevGridSpec,
    channels: int | None = None,
) -> BevFeatureMap:
    C = _check_inputs(frustums, lifted)
    C = C if C is not None else (channels or 1)
    out = np.zeros((grid.nx * grid.ny, C))
    if not frustums:
        return BevFeatureMap(out.reshape(grid.nx, grid.ny, C), grid)

    keys, feats = [], []
    for fr, lf in zip(frustums, lifted):
        ix, iy, ok = cell_indices(fr.points.reshape(-1, 3), grid)
        keys.append((ix * grid.ny + iy)[ok])
        feats.append(np.asarray(lf, dtype=float).reshape(-1, C)[ok])
    key = np.concatenate(keys)
    val = np.concatenate(feats)
    if key.size == 0:
        return BevFeatureMap(out.reshape(grid.nx, grid.ny, C), grid)

    order = np.argsort(key, kind="stable")
    key = key[order]
    starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
    lengths = np.diff(np.r_[starts, key.size])
    # rank of each sorted point inside its segment
    rank = np.arange(key.size) - np.repeat(starts, lengths)
    # group by rank; within one rank every key is distinct, so fancy += is safe
    by_rank = np.argsort(rank, kind="stable")
    rank_bounds = np.searchsorted(rank[by_rank], np.arange(lengths.max() + 1))
    src = order[by_rank]
    dst = key[by_rank]
    for r in range(lengths.max()):
        lo, hi = rank_bounds[r], rank_bounds[r + 1]
        out[dst[lo:hi]] += val[src[lo:hi]]
    return BevFeatureMap(out.reshape(grid.nx, grid.ny, C), grid)


def bev_mass(bev: BevFeatureMap, channel: int) -> float:
    C = bev.values.shape[-1]
    if not (0 <= channel < C):
        raise ValueError(f"channel {channel} out of range for {C} channels")
    return float(bev.values[..., channel].sum())
