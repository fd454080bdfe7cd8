"""Depth distributions and depth-weighted feature lifting."""

from __future__ import annotations

import numpy as np

from .geometry import DepthBinning

ROW_SUM_TOL = 1e-6


def _finite(a: np.ndarray, what: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{what} contains NaN or Inf")
    return a


def depth_softmax(logits) -> np.ndarray:
    """Softmax over the trailing (depth) axis with max subtraction."""
    z = _finite(logits, "depth logits")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def lift_outer(dist, feat) -> np.ndarray:
    """Outer product per feature cell: (h, w, D) x (h, w, C) -> (h, w, D, C)."""
    dist = np.asarray(dist, dtype=float)
    feat = np.asarray(feat, dtype=float)
    if dist.ndim != 3 or feat.ndim != 3 or dist.shape[:2] != feat.shape[:2]:
        raise ValueError(f"shape mismatch: dist {dist.shape} vs features {feat.shape}")
    return dist[..., :, None] * feat[..., None, :]


def depth_map_to_distribution(depth, bins: DepthBinning) -> np.ndarray:
    """Two-bin linear split of dense depth onto the bin centers.

    Depths outside ``[d_min, d_max]`` collapse onto the nearest end bin.
    """
    depth = np.asarray(depth, dtype=float)
    if not np.all(np.isfinite(depth)) or np.any(depth <= 0):
        raise ValueError("depth must be positive and finite")
    centers = bins.centers
    D = bins.count
    out = np.zeros(depth.shape + (D,))
    if D == 1:
        out[..., 0] = 1.0
        return out
    d = np.clip(depth, bins.d_min, bins.d_max)
    k = np.searchsorted(centers, d, side="right") - 1
    k = np.clip(k, 0, D - 2)
    lo = centers[k]
    hi = centers[k + 1]
    w_hi = (d - lo) / (hi - lo)
    w_lo = 1.0 - w_hi
    np.put_along_axis(out, k[..., None], w_lo[..., None], axis=-1)
    np.put_along_axis(out, (k + 1)[..., None], w_hi[..., None], axis=-1)
    return out


def expected_depth(dist, bins: DepthBinning) -> np.ndarray:
    dist = np.asarray(dist, dtype=float)
    if dist.shape[-1] != bins.count:
        raise ValueError(f"distribution has {dist.shape[-1]} bins, binning has {bins.count}")
    return dist @ bins.centers


def check_distribution(dist, tol: float = ROW_SUM_TOL) -> None:
    dist = np.asarray(dist, dtype=float)
    if np.any(dist < 0):
        raise ValueError("distribution has negative entries")
    if not np.allclose(dist.sum(axis=-1), 1.0, rtol=0.0, atol=tol):
        raise ValueError("distribution rows do not sum to one")
