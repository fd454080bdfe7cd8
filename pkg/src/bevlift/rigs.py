"""Stock 6- and 7-camera surround rigs."""

from __future__ import annotations

import math

import numpy as np

from .geometry import (
    CameraExtrinsics,
    CameraIntrinsics,
    CameraModel,
    CameraRig,
    matrix_to_quat,
)

# camera axes (x right, y down, z forward) expressed in the vehicle frame for a
# level, forward-looking camera
_BASE = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])

# name: (yaw deg, mount position, horizontal fov deg)
_LAYOUT = {
    "front": (0.0, (1.7, 0.0, 1.5), 70.0),
    "front-left": (55.0, (1.5, 0.5, 1.5), 70.0),
    "front-right": (-55.0, (1.5, -0.5, 1.5), 70.0),
    "rear": (180.0, (-1.0, 0.0, 1.5), 110.0),
    "rear-left": (110.0, (-0.3, 0.5, 1.5), 70.0),
    "rear-right": (-110.0, (-0.3, -0.5, 1.5), 70.0),
    "side-left": (90.0, (0.5, 0.9, 1.5), 70.0),
}

SIX = ("front", "front-left", "front-right", "rear", "rear-left", "rear-right")
SEVEN = SIX + ("side-left",)


def camera_from_pose(
    name: str,
    yaw_deg: float,
    position,
    hfov_deg: float = 70.0,
    pitch_deg: float = 0.0,
    width: int = 1280,
    height: int = 720,
) -> CameraModel:
    """Square-pixel camera at ``position`` looking along ``yaw``, pitched down by ``pitch``."""
    fx = (width / 2.0) / math.tan(math.radians(hfov_deg) / 2.0)
    intr = CameraIntrinsics(fx=fx, fy=fx, cx=width / 2.0, cy=height / 2.0, width=width, height=height)
    yaw, pitch = math.radians(yaw_deg), math.radians(pitch_deg)
    cz, sz = math.cos(yaw), math.sin(yaw)
    cy, sy = math.cos(pitch), math.sin(pitch)
    Rz = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    Ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    q = matrix_to_quat(Rz @ Ry @ _BASE)
    return CameraModel(name, intr, CameraExtrinsics(q, tuple(position)))


def default_rig(n_cameras: int = 6, width: int = 1280, height: int = 720) -> CameraRig:
    if n_cameras == 6:
        names = SIX
    elif n_cameras == 7:
        names = SEVEN
    else:
        raise ValueError("stock rigs have 6 or 7 cameras")
    cams = []
    for name in names:
        yaw, pos, fov = _LAYOUT[name]
        cams.append(camera_from_pose(name, yaw, pos, fov, width=width, height=height))
    return CameraRig(tuple(cams))
