"""Deterministic synthetic worlds and an analytic ray-casting renderer.

A scene is a flat ground plane with one axis-aligned road rectangle and a set
of yaw-rotated boxes resting on the ground.  Rendering casts one ray per pixel
(u = column, v = row) and keeps the nearest hit among the boxes and the
ground.  The same world also yields the ground-truth BEV label map and objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import classes
from .geometry import CameraModel, CameraRig, FeatureGridSpec, pixel_rays, project_points
from .ipm import SemanticBevMap
from .objects import BevObject, Detection2D, footprint_corners
from .rigs import default_rig
from .splat import BevGridSpec, cell_indices

GROUND = -1
NOTHING = -2
DOWN_EPS = 1e-9


class SceneGenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SceneObject:
    class_id: int
    center: tuple[float, float, float]
    dims: tuple[float, float, float]  # length, width, height
    yaw: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "dims", tuple(float(c) for c in self.dims))
        if min(self.dims) <= 0:
            raise ValueError("object dimensions must be positive")
        if abs(self.center[2] - self.dims[2] / 2.0) > 1e-9:
            raise ValueError("objects must rest on the ground (center z = height / 2)")

    def footprint(self) -> BevObject:
        return BevObject(
            x=self.center[0],
            y=self.center[1],
            yaw=self.yaw,
            length=self.dims[0],
            width=self.dims[1],
            class_id=self.class_id,
            confidence=1.0,
        )

    def corners(self) -> np.ndarray:
        """(8, 3) box corners in the vehicle frame."""
        fp = footprint_corners(self.footprint())
        h = self.dims[2]
        return np.vstack([np.c_[fp, np.zeros(4)], np.c_[fp, np.full(4, h)]])


@dataclass(frozen=True)
class Scene:
    seed: int
    objects: tuple[SceneObject, ...]
    road: tuple[float, float, float, float]  # x_min, y_min, x_max, y_max
    rig: CameraRig


@dataclass(frozen=True)
class SceneParams:
    count_range: tuple[int, int] = (5, 10)
    radius: float = 40.0
    # vehicle, pedestrian, cyclist, traffic sign
    class_weights: tuple[float, float, float, float] = (0.55, 0.2, 0.15, 0.1)
    # half-extents of the keep-out box around the ego vehicle and its cameras
    ego_half_extent: tuple[float, float] = (2.5, 1.25)
    road_width: tuple[float, float] = (14.0, 26.0)
    road_length: float = 140.0
    max_rejections: int = 10_000

    def __post_init__(self) -> None:
        lo, hi = self.count_range
        if not (0 <= lo <= hi):
            raise ValueError("invalid object count range")
        if self.radius <= 0:
            raise ValueError("placement radius must be positive")
        if len(self.class_weights) != 4 or min(self.class_weights) < 0 or sum(self.class_weights) <= 0:
            raise ValueError("need four non-negative class weights")


def _overlap(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating-axis test for two convex polygons (touching counts as overlap)."""
    for poly in (a, b):
        edges = np.roll(poly, -1, axis=0) - poly
        for e in edges:
            n = np.array([-e[1], e[0]])
            pa, pb = a @ n, b @ n
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


def generate_scene(seed: int, params: SceneParams = SceneParams(), rig: CameraRig | None = None) -> Scene:
    rng = np.random.default_rng(seed)
    rig = rig if rig is not None else default_rig(6)

    width = rng.uniform(*params.road_width)
    offset = rng.uniform(-0.25, 0.25) * width
    half = params.road_length / 2.0
    along_x = bool(rng.integers(2))
    if along_x:
        road = (-half, offset - width / 2.0, half, offset + width / 2.0)
    else:
        road = (offset - width / 2.0, -half, offset + width / 2.0, half)

    ex, ey = params.ego_half_extent
    placed: list[np.ndarray] = [np.array([[ex, -ey], [ex, ey], [-ex, ey], [-ex, -ey]])]
    objects: list[SceneObject] = []
    n = int(rng.integers(params.count_range[0], params.count_range[1] + 1))
    weights = np.asarray(params.class_weights, dtype=float)
    weights = weights / weights.sum()
    rejections = 0
    while len(objects) < n:
        cls = classes.OBJECT_CLASSES[int(rng.choice(4, p=weights))]
        r = params.radius * math.sqrt(rng.uniform())
        theta = rng.uniform(-math.pi, math.pi)
        yaw = rng.uniform(-math.pi, math.pi)
        length, w = classes.DEFAULT_FOOTPRINTS[cls]
        h = classes.DEFAULT_HEIGHTS[cls]
        obj = SceneObject(cls, (r * math.cos(theta), r * math.sin(theta), h / 2.0), (length, w, h), yaw)
        fp = footprint_corners(obj.footprint())
        if any(_overlap(fp, other) for other in placed):
            rejections += 1
            if rejections >= params.max_rejections:
                raise SceneGenerationError(f"could not place {n} objects after {rejections} rejections")
            continue
        placed.append(fp)
        objects.append(obj)
    return Scene(seed=int(seed), objects=tuple(objects), road=tuple(float(v) for v in road), rig=rig)


# --------------------------------------------------------------------------
# ray casting


def _ray_box(o: np.ndarray, d: np.ndarray, obj: SceneObject) -> np.ndarray:
    """Entry parameter of rays ``o + t d`` into the box (inf on a miss)."""
    cx, cy, _ = obj.center
    length, width, height = obj.dims
    c, s = math.cos(obj.yaw), math.sin(obj.yaw)
    ox, oy, oz = o[0] - cx, o[1] - cy, o[2]
    lox, loy = c * ox + s * oy, -s * ox + c * oy
    ldx, ldy = c * d[..., 0] + s * d[..., 1], -s * d[..., 0] + c * d[..., 1]
    ldz = d[..., 2]
    t_near = np.full(ldz.shape, -np.inf)
    t_far = np.full(ldz.shape, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        for org, dirn, lo, hi in (
            (lox, ldx, -length / 2, length / 2),
            (loy, ldy, -width / 2, width / 2),
            (oz, ldz, 0.0, height),
        ):
            t1 = (lo - org) / dirn
            t2 = (hi - org) / dirn
            t_near = np.maximum(t_near, np.minimum(t1, t2))
            t_far = np.minimum(t_far, np.maximum(t1, t2))
    hit = (t_near <= t_far) & (t_near > 0)
    return np.where(hit, t_near, np.inf)


def _window(obj: SceneObject, cam: CameraModel) -> tuple[int, int, int, int] | None:
    """Pixel window (r0, r1, c0, c1) that can contain the object, None if off-screen."""
    intr = cam.intrinsics
    u, v, _, front = project_points(obj.corners(), cam)
    if not front.all():
        return 0, intr.height, 0, intr.width
    c0, c1 = int(math.floor(u.min())) - 1, int(math.ceil(u.max())) + 2
    r0, r1 = int(math.floor(v.min())) - 1, int(math.ceil(v.max())) + 2
    c0, r0 = max(c0, 0), max(r0, 0)
    c1, r1 = min(c1, intr.width), min(r1, intr.height)
    if c0 >= c1 or r0 >= r1:
        return None
    return r0, r1, c0, c1


def cast_rays(scene: Scene, cam: CameraModel, u, v, objects: Sequence[int] | None = None):
    """Nearest hit for rays through pixels (u, v).

    Returns ``depth`` (camera z; inf on a miss), ``hit`` (object index, GROUND
    or NOTHING) and the hit points in the vehicle frame.
    """
    if not cam.extrinsics.t[2] > 0:
        raise ValueError(f"camera {cam.name!r} is not above the ground plane")
    d = pixel_rays(u, v, cam)
    o = cam.extrinsics.t
    dz = d[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        depth = np.where(dz < -DOWN_EPS, -o[2] / dz, np.inf)
    hit = np.where(np.isfinite(depth), GROUND, NOTHING)
    idx = range(len(scene.objects)) if objects is None else objects
    for k in idx:
        t = _ray_box(o, d, scene.objects[k])
        closer = t < depth
        depth = np.where(closer, t, depth)
        hit = np.where(closer, k, hit)
    pts = o + np.where(np.isfinite(depth), depth, np.nan)[..., None] * d
    return depth, hit, pts


@dataclass
class CameraRender:
    camera_name: str
    depth: np.ndarray = field(repr=False)  # (h, w), inf for sky
    semantic: np.ndarray = field(repr=False)  # (h, w) class ids
    object_id: np.ndarray = field(repr=False)  # (h, w) object index, GROUND or NOTHING
    detections: list[Detection2D] = field(default_factory=list)


def _in_road(pts: np.ndarray, road) -> np.ndarray:
    x0, y0, x1, y1 = road
    x, y = pts[..., 0], pts[..., 1]
    return (x >= x0) & (x < x1) & (y >= y0) & (y < y1)


def _labels(scene: Scene, hit: np.ndarray, pts: np.ndarray) -> np.ndarray:
    lut = np.array([o.class_id for o in scene.objects] + [classes.BACKGROUND], dtype=np.int64)
    sem = lut[np.where(hit >= 0, hit, len(scene.objects))]
    road = (hit == GROUND) & _in_road(pts, scene.road)
    return np.where(road, classes.ROAD, sem)


def render_camera(scene: Scene, cam: CameraModel, min_pixels: int = 50) -> CameraRender:
    """Depth, semantics, object ids and perfect detections from one traversal."""
    intr = cam.intrinsics
    h, w = intr.height, intr.width
    v, u = np.mgrid[0:h, 0:w].astype(float)
    # ground and sky first, then boxes only inside their projected windows
    depth, hit, _ = cast_rays(scene, cam, u, v, objects=())
    for k, obj in enumerate(scene.objects):
        win = _window(obj, cam)
        if win is None:
            continue
        r0, r1, c0, c1 = win
        t = _ray_box(cam.extrinsics.t, pixel_rays(u[r0:r1, c0:c1], v[r0:r1, c0:c1], cam), obj)
        sub_d, sub_h = depth[r0:r1, c0:c1], hit[r0:r1, c0:c1]
        closer = t < sub_d
        sub_d[closer] = t[closer]
        sub_h[closer] = k
    d = pixel_rays(u, v, cam)
    pts = cam.extrinsics.t + np.where(np.isfinite(depth), depth, np.nan)[..., None] * d
    sem = _labels(scene, hit, pts)
    out = CameraRender(cam.name, depth, sem, hit)
    out.detections = _detections(scene, cam, hit, min_pixels)
    return out


def render_depth(scene: Scene, cam: CameraModel) -> np.ndarray:
    return render_camera(scene, cam).depth


def render_semantic(scene: Scene, cam: CameraModel) -> np.ndarray:
    return render_camera(scene, cam).semantic


def _detections(scene: Scene, cam: CameraModel, hit: np.ndarray, min_pixels: int) -> list[Detection2D]:
    dets = []
    for k, obj in enumerate(scene.objects):
        rows, cols = np.nonzero(hit == k)
        if rows.size < min_pixels:
            continue
        u0, u1, v0, v1 = cols.min(), cols.max(), rows.min(), rows.max()
        if u0 == u1 or v0 == v1:
            continue
        dets.append(Detection2D(cam.name, (u0, v0, u1, v1), obj.class_id, 1.0))
    return dets


def perfect_detections(scene: Scene, cam: CameraModel, min_pixels: int = 50) -> list[Detection2D]:
    return render_camera(scene, cam, min_pixels).detections


def render_rig(scene: Scene, rig: CameraRig | None = None, min_pixels: int = 50) -> dict[str, CameraRender]:
    rig = rig if rig is not None else scene.rig
    return {cam.name: render_camera(scene, cam, min_pixels) for cam in rig}


# --------------------------------------------------------------------------
# visibility


def pixel_samples(cam: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    intr = cam.intrinsics
    v, u = np.mgrid[0 : intr.height, 0 : intr.width].astype(float)
    return u, v


def feature_samples(cam: CameraModel, stride: int = 8) -> tuple[np.ndarray, np.ndarray]:
    grid = FeatureGridSpec.for_image(cam.intrinsics.width, cam.intrinsics.height, stride)
    return grid.anchors()


def visible_ground_mask(
    scene: Scene,
    cameras: Sequence[CameraModel],
    grid: BevGridSpec,
    sampler: Callable[[CameraModel], tuple[np.ndarray, np.ndarray]] = pixel_samples,
    max_depth: float = math.inf,
) -> np.ndarray:
    """BEV cells holding the ground hit of at least one sample ray.

    A ray counts when its nearest hit is the ground plane within ``max_depth``.
    """
    mask = np.zeros(grid.shape, dtype=bool)
    for cam in cameras:
        u, v = sampler(cam)
        depth, hit, pts = cast_rays(scene, cam, u, v)
        ok = (hit == GROUND) & (depth <= max_depth)
        ix, iy, inside = cell_indices(pts[ok], grid)
        mask[ix[inside], iy[inside]] = True
    return mask


def visible_fraction(scene: Scene, cam: CameraModel, object_id: np.ndarray, k: int) -> tuple[int, float]:
    """Visible pixel count of object ``k`` and the share left unoccluded.

    The share compares the full render against the object rendered alone;
    0.0 when the object is not in view at all.
    """
    win = _window(scene.objects[k], cam)
    if win is None:
        return 0, 0.0
    r0, r1, c0, c1 = win
    v, u = np.mgrid[r0:r1, c0:c1].astype(float)
    alone = np.isfinite(_ray_box(cam.extrinsics.t, pixel_rays(u, v, cam), scene.objects[k]))
    n_alone = int(np.count_nonzero(alone))
    n_vis = int(np.count_nonzero(object_id[r0:r1, c0:c1] == k))
    return n_vis, (n_vis / n_alone if n_alone else 0.0)


# --------------------------------------------------------------------------
# ground truth


def rasterize_polygon(poly: np.ndarray, grid: BevGridSpec) -> np.ndarray:
    """Cells whose centers fall inside a convex counter-clockwise polygon."""
    mask = np.zeros(grid.shape, dtype=bool)
    ix, iy, _ = cell_indices(np.clip(poly, [grid.x_min, grid.y_min], [grid.x_max - 1e-9, grid.y_max - 1e-9]), grid)
    i0, i1 = ix.min(), ix.max() + 1
    j0, j1 = iy.min(), iy.max() + 1
    xs = grid.x_min + (np.arange(i0, i1) + 0.5) * grid.resolution
    ys = grid.y_min + (np.arange(j0, j1) + 0.5) * grid.resolution
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    inside = np.ones(X.shape, dtype=bool)
    n = len(poly)
    for a in range(n):
        ax, ay = poly[a]
        bx, by = poly[(a + 1) % n]
        inside &= (bx - ax) * (Y - ay) - (by - ay) * (X - ax) >= 0
    mask[i0:i1, j0:j1] = inside
    return mask


def ground_truth_bev(scene: Scene, grid: BevGridSpec) -> tuple[SemanticBevMap, list[BevObject]]:
    labels = np.zeros(grid.shape, dtype=np.int64)
    x0, y0, x1, y1 = scene.road
    road = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)
    labels[rasterize_polygon(road, grid)] = classes.ROAD
    objs = []
    for obj in scene.objects:
        fp = obj.footprint()
        labels[rasterize_polygon(footprint_corners(fp), grid)] = obj.class_id
        objs.append(fp)
    return SemanticBevMap(labels, grid), objs
