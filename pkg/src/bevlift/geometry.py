"""Pinhole cameras, quaternion extrinsics and frustum lattices.

Frames:
    vehicle  x forward, y left, z up
    camera   z forward, x right, y down

Pixel (row r, col c) is sampled at u = c, v = r.  Extrinsics map camera-frame
points into the vehicle frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

CAMERA_NAMES = (
    "front",
    "front-left",
    "front-right",
    "rear",
    "rear-left",
    "rear-right",
    "side-left",
)

UNIT_TOL = 1e-9
BEHIND_EPS = 1e-9


@dataclass(frozen=True)
class Quaternion:
    w: float
    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        n = self.norm()
        if not math.isfinite(n) or abs(n - 1.0) > UNIT_TOL:
            raise ValueError(f"quaternion is not unit length (|q| = {n!r})")

    def norm(self) -> float:
        return math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)

    @classmethod
    def normalized(cls, w: float, x: float, y: float, z: float) -> "Quaternion":
        n = math.sqrt(w * w + x * x + y * y + z * z)
        if n == 0.0 or not math.isfinite(n):
            raise ValueError("cannot normalize a zero or non-finite quaternion")
        return cls(w / n, x / n, y / n, z / n)

    @classmethod
    def from_axis_angle(cls, axis: Sequence[float], angle: float) -> "Quaternion":
        ax = np.asarray(axis, dtype=float)
        ax = ax / np.linalg.norm(ax)
        s = math.sin(angle / 2.0)
        return cls.normalized(math.cos(angle / 2.0), ax[0] * s, ax[1] * s, ax[2] * s)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.w, self.x, self.y, self.z)


def quat_to_matrix(q: Quaternion | Sequence[float]) -> np.ndarray:
    """Rotation matrix of a unit quaternion ``(w, x, y, z)``.

    Scaling by ``2 / |q|^2`` keeps the result orthonormal to machine precision
    for inputs that are unit only up to ``UNIT_TOL``.
    """
    if isinstance(q, Quaternion):
        w, x, y, z = q.as_tuple()
    else:
        w, x, y, z = (float(c) for c in q)
    n2 = w * w + x * x + y * y + z * z
    if not math.isfinite(n2) or abs(math.sqrt(n2) - 1.0) > UNIT_TOL:
        raise ValueError(f"quaternion is not unit length (|q|^2 = {n2!r})")
    s = 2.0 / n2
    return np.array(
        [
            [1.0 - s * (y * y + z * z), s * (x * y - w * z), s * (x * z + w * y)],
            [s * (x * y + w * z), 1.0 - s * (x * x + z * z), s * (y * z - w * x)],
            [s * (x * z - w * y), s * (y * z + w * x), 1.0 - s * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R: np.ndarray) -> Quaternion:
    """Inverse of :func:`quat_to_matrix` (Shepperd's method), with w >= 0."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        w = 0.25 * s
        x = (R[2, 1] - R[1, 2]) / s
        y = (R[0, 2] - R[2, 0]) / s
        z = (R[1, 0] - R[0, 1]) / s
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        w = (R[2, 1] - R[1, 2]) / s
        x = 0.25 * s
        y = (R[0, 1] + R[1, 0]) / s
        z = (R[0, 2] + R[2, 0]) / s
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        w = (R[0, 2] - R[2, 0]) / s
        x = (R[0, 1] + R[1, 0]) / s
        y = 0.25 * s
        z = (R[1, 2] + R[2, 1]) / s
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        w = (R[1, 0] - R[0, 1]) / s
        x = (R[0, 2] + R[2, 0]) / s
        y = (R[1, 2] + R[2, 1]) / s
        z = 0.25 * s
    if w < 0:
        w, x, y, z = -w, -x, -y, -z
    return Quaternion.normalized(w, x, y, z)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if int(self.width) != self.width or int(self.height) != self.height:
            raise ValueError("image size must be integral")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class CameraExtrinsics:
    """Camera-to-vehicle rigid transform."""

    rotation: Quaternion
    translation: tuple[float, float, float]

    def __post_init__(self) -> None:
        t = tuple(float(c) for c in self.translation)
        if len(t) != 3 or not all(math.isfinite(c) for c in t):
            raise ValueError("translation must be a finite 3-vector")
        object.__setattr__(self, "translation", t)

    @cached_property
    def R(self) -> np.ndarray:
        R = quat_to_matrix(self.rotation)
        R.flags.writeable = False
        return R

    @cached_property
    def t(self) -> np.ndarray:
        t = np.array(self.translation, dtype=float)
        t.flags.writeable = False
        return t

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous form."""
        E = np.eye(4)
        E[:3, :3] = self.R
        E[:3, 3] = self.t
        return E


@dataclass(frozen=True)
class CameraModel:
    name: str
    intrinsics: CameraIntrinsics
    extrinsics: CameraExtrinsics

    @property
    def center(self) -> np.ndarray:
        return self.extrinsics.t


@dataclass(frozen=True)
class CameraRig:
    cameras: tuple[CameraModel, ...]

    def __post_init__(self) -> None:
        cams = tuple(self.cameras)
        if not cams:
            raise ValueError("a rig needs at least one camera")
        names = [c.name for c in cams]
        if len(set(names)) != len(names):
            raise ValueError(f"camera names must be unique: {names}")
        object.__setattr__(self, "cameras", cams)

    def __iter__(self) -> Iterator[CameraModel]:
        return iter(self.cameras)

    def __len__(self) -> int:
        return len(self.cameras)

    def __getitem__(self, key: int | str) -> CameraModel:
        if isinstance(key, str):
            for cam in self.cameras:
                if cam.name == key:
                    return cam
            raise KeyError(key)
        return self.cameras[key]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.cameras]


@dataclass(frozen=True)
class DepthBinning:
    d_min: float = 1.0
    d_max: float = 60.0
    count: int = 60

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("need at least one depth bin")
        if not (0 < self.d_min <= self.d_max):
            raise ValueError("require 0 < d_min <= d_max")
        if self.count == 1 and self.d_min != self.d_max:
            raise ValueError("a single bin requires d_min == d_max")
        if self.count > 1 and self.d_min == self.d_max:
            raise ValueError("multiple bins require d_min < d_max")

    @cached_property
    def centers(self) -> np.ndarray:
        c = np.linspace(self.d_min, self.d_max, self.count)
        c.flags.writeable = False
        return c

    @property
    def spacing(self) -> float:
        return 0.0 if self.count == 1 else (self.d_max - self.d_min) / (self.count - 1)


@dataclass(frozen=True)
class FeatureGridSpec:
    h_cells: int
    w_cells: int
    stride: int = 8

    @classmethod
    def for_image(cls, width: int, height: int, stride: int = 8) -> "FeatureGridSpec":
        if stride <= 0 or width % stride or height % stride:
            raise ValueError(f"stride {stride} does not divide image size {width}x{height}")
        return cls(h_cells=height // stride, w_cells=width // stride, stride=stride)

    def anchors(self) -> tuple[np.ndarray, np.ndarray]:
        """Pixel coordinates (u, v) of feature-cell centers, each shaped (h, w)."""
        u = (np.arange(self.w_cells) + 0.5) * self.stride
        v = (np.arange(self.h_cells) + 0.5) * self.stride
        return np.broadcast_to(u[None, :], (self.h_cells, self.w_cells)), np.broadcast_to(
            v[:, None], (self.h_cells, self.w_cells)
        )


@dataclass(frozen=True)
class FrustumGrid:
    points: np.ndarray = field(repr=False)  # (h, w, D, 3), vehicle frame
    camera_name: str


def unproject_pixel(u, v, d, intr: CameraIntrinsics) -> np.ndarray:
    """Camera-frame point at depth ``d`` along the ray through pixel (u, v).

    Broadcasts over array inputs; the last axis of the result holds (x, y, z).
    """
    d = np.asarray(d, dtype=float)
    if np.any(~(d > 0)):
        raise ValueError("depth must be positive")
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    x = d * (u - intr.cx) / intr.fx
    y = d * (v - intr.cy) / intr.fy
    x, y, z = np.broadcast_arrays(x, y, d)
    return np.stack([x, y, z], axis=-1)


def _rigid(R: np.ndarray, t: np.ndarray, p: np.ndarray) -> np.ndarray:
    # Elementwise on purpose: scalar and batched calls must agree bit for bit.
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    return np.stack(
        [
            R[0, 0] * x + R[0, 1] * y + R[0, 2] * z + t[0],
            R[1, 0] * x + R[1, 1] * y + R[1, 2] * z + t[1],
            R[2, 0] * x + R[2, 1] * y + R[2, 2] * z + t[2],
        ],
        axis=-1,
    )


def camera_to_vehicle(p_cam, ext: CameraExtrinsics) -> np.ndarray:
    return _rigid(ext.R, ext.t, np.asarray(p_cam, dtype=float))


def vehicle_to_camera(p_veh, ext: CameraExtrinsics) -> np.ndarray:
    p = np.asarray(p_veh, dtype=float) - ext.t
    return _rigid(ext.R.T, np.zeros(3), p)


def project_points(p_veh, cam: CameraModel) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Batched projection: returns ``u, v, depth, in_front``.

    ``u`` and ``v`` are NaN where the point is behind the camera.
    """
    pc = vehicle_to_camera(p_veh, cam.extrinsics)
    z = pc[..., 2]
    front = z > BEHIND_EPS
    intr = cam.intrinsics
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(front, intr.fx * pc[..., 0] / z + intr.cx, np.nan)
        v = np.where(front, intr.fy * pc[..., 1] / z + intr.cy, np.nan)
    return u, v, z, front


def vehicle_to_pixel(p_veh, cam: CameraModel) -> tuple[float, float, float] | None:
    """Project one vehicle-frame point; ``None`` means behind the camera."""
    u, v, z, front = project_points(np.asarray(p_veh, dtype=float).reshape(3), cam)
    if not bool(front):
        return None
    return float(u), float(v), float(z)


def pixel_rays(u, v, cam: CameraModel) -> np.ndarray:
    """Vehicle-frame ray directions scaled so the ray parameter equals camera depth."""
    intr = cam.intrinsics
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    dc = np.stack(np.broadcast_arrays((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, np.ones_like(u)), axis=-1)
    return _rigid(cam.extrinsics.R, np.zeros(3), dc)


def build_frustum(cam: CameraModel, bins: DepthBinning, grid: FeatureGridSpec) -> FrustumGrid:
    intr = cam.intrinsics
    if grid.stride <= 0 or intr.width % grid.stride or intr.height % grid.stride:
        raise ValueError(f"stride {grid.stride} does not divide image size {intr.width}x{intr.height}")
    if grid.h_cells != intr.height // grid.stride or grid.w_cells != intr.width // grid.stride:
        raise ValueError("feature grid does not match the camera image size")
    u, v = grid.anchors()
    d = bins.centers
    p_cam = unproject_pixel(u[..., None], v[..., None], d[None, None, :], intr)
    pts = camera_to_vehicle(p_cam, cam.extrinsics)
    pts.flags.writeable = False
    return FrustumGrid(points=pts, camera_name=cam.name)
