import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from bevlift import classes
from bevlift.evaluation import clip_polygon, polygon_area
from bevlift.geometry import CameraRig, project_points
from bevlift.objects import footprint_corners
from bevlift.rigs import camera_from_pose, default_rig
from bevlift.scenes import (
    GROUND,
    NOTHING,
    Scene,
    SceneGenerationError,
    SceneObject,
    SceneParams,
    cast_rays,
    generate_scene,
    ground_truth_bev,
    perfect_detections,
    rasterize_polygon,
    render_camera,
    render_depth,
    render_rig,
    render_semantic,
    visible_fraction,
    visible_ground_mask,
)
from bevlift.splat import BevGridSpec

GRID = BevGridSpec()
SMALL = default_rig(6, width=160, height=96)
FRONT = camera_from_pose("front", 0.0, (0.0, 0.0, 1.5), width=320, height=192)


def scene_with(*objects, road=(-70.0, -7.0, 70.0, 7.0), rig=SMALL):
    return Scene(seed=0, objects=tuple(objects), road=road, rig=rig)


def box(x, y, cls=classes.VEHICLE, yaw=0.0, dims=None):
    L, W = classes.DEFAULT_FOOTPRINTS[cls] if dims is None else dims[:2]
    H = classes.DEFAULT_HEIGHTS[cls] if dims is None else dims[2]
    return SceneObject(cls, (x, y, H / 2), (L, W, H), yaw)


# generation -------------------------------------------------------------------


def test_same_seed_same_scene():
    assert generate_scene(5) == generate_scene(5)
    assert generate_scene(5) != generate_scene(6)


def test_empty_count_range():
    assert generate_scene(1, SceneParams(count_range=(0, 0))).objects == ()


def test_seed_42_layout():
    sc = generate_scene(42, SceneParams(count_range=(5, 10), radius=40.0))
    assert 5 <= len(sc.objects) <= 10
    for o in sc.objects:
        assert math.hypot(o.center[0], o.center[1]) <= 40.0
        assert o.center[2] == o.dims[2] / 2
    fps = [footprint_corners(o.footprint()) for o in sc.objects]
    for a in range(len(fps)):
        for b in range(a + 1, len(fps)):
            assert polygon_area(clip_polygon(fps[a], fps[b])) <= 1e-12


def test_objects_avoid_ego_box():
    ego = np.array([[2.5, -1.25], [2.5, 1.25], [-2.5, 1.25], [-2.5, -1.25]])
    for seed in range(10):
        for o in generate_scene(seed).objects:
            assert polygon_area(clip_polygon(footprint_corners(o.footprint()), ego)) <= 1e-12


def test_generation_gives_up():
    params = SceneParams(count_range=(50, 50), radius=3.0, max_rejections=200)
    with pytest.raises(SceneGenerationError):
        generate_scene(0, params)


def test_scene_object_validation():
    with pytest.raises(ValueError):
        SceneObject(2, (0, 0, 5.0), (4.5, 2, 1.6), 0)
    with pytest.raises(ValueError):
        SceneObject(2, (0, 0, 0.0), (4.5, 2, 0.0), 0)


# rendering --------------------------------------------------------------------


def test_empty_scene_level_camera():
    sc = scene_with(road=(0, 0, 1, 1))
    depth = render_depth(sc, FRONT)
    cy = int(FRONT.intrinsics.cy)
    assert np.isinf(depth[: cy + 1]).all()
    assert np.isfinite(depth[cy + 1 :]).all()
    sem = render_semantic(sc, FRONT)
    assert (sem == classes.BACKGROUND).all()


def test_nadir_depth_equals_height():
    cam = camera_from_pose("down", 0.0, (0, 0, 2.0), pitch_deg=90.0, width=64, height=64)
    depth = render_depth(scene_with(), cam)
    assert_allclose(depth[32, 32], 2.0, rtol=1e-12)


def test_box_ahead_front_face():
    # front face of a box whose center sits 10 + L/2 ahead of the camera
    sc = scene_with(box(10.0 + 2.25, 0.0))
    r = render_camera(sc, FRONT)
    rows, cols = np.nonzero(r.object_id == 0)
    assert rows.size > 0
    assert_allclose(r.depth[r.object_id == 0], 10.0, atol=1e-9)
    assert (r.semantic[r.object_id == 0] == classes.VEHICLE).all()


def test_render_consistency():
    sc = generate_scene(3, rig=SMALL)
    for r in render_rig(sc).values():
        obj = r.object_id >= 0
        assert np.isfinite(r.depth[obj]).all() and (r.depth[np.isfinite(r.depth)] > 0).all()
        assert ((r.semantic >= classes.VEHICLE) == obj).all()
        assert (np.isinf(r.depth) == (r.object_id == NOTHING)).all()


def test_render_matches_full_traversal():
    # windowed box tests must agree with testing every box on every pixel
    sc = generate_scene(4, rig=SMALL)
    cam = SMALL["front-left"]
    r = render_camera(sc, cam)
    v, u = np.mgrid[0:96, 0:160].astype(float)
    depth, hit, _ = cast_rays(sc, cam, u, v)
    assert_array_equal(r.object_id, hit)
    assert_allclose(r.depth, depth, rtol=0, atol=0)


def test_occluder_wins():
    sc = scene_with(box(12.0, 0.0, classes.VEHICLE), box(6.0, 0.0, classes.PEDESTRIAN))
    r = render_camera(sc, FRONT)
    cx, cy = int(FRONT.intrinsics.cx), int(FRONT.intrinsics.cy)
    assert r.object_id[cy, cx] == 1
    assert r.semantic[cy, cx] == classes.PEDESTRIAN
    assert_allclose(r.depth[cy, cx], 6.0 - 0.3)


def test_road_label_only_inside_road():
    sc = scene_with(road=(0.0, -2.0, 100.0, 2.0))
    sem = render_semantic(sc, FRONT)
    v, u = np.mgrid[0:192, 0:320].astype(float)
    _, hit, pts = cast_rays(sc, FRONT, u, v)
    x, y = pts[..., 0], pts[..., 1]
    inside = (hit == GROUND) & (x >= 0) & (x < 100) & (y >= -2) & (y < 2)
    assert_array_equal(sem == classes.ROAD, inside)


# detections -------------------------------------------------------------------


def test_no_objects_no_detections():
    assert perfect_detections(scene_with(), FRONT) == []


def test_occluded_object_absent():
    # a sign hidden behind a 3 m tall van
    sc = scene_with(box(8.0, 0.0, dims=(4.5, 2.0, 3.0)), box(14.0, 0.0, classes.TRAFFIC_SIGN))
    dets = perfect_detections(sc, FRONT)
    assert [d.class_id for d in dets] == [classes.VEHICLE]


def test_bbox_matches_projected_corners():
    o = box(11.0, 1.0, yaw=0.4)
    sc = scene_with(o)
    (det,) = perfect_detections(sc, FRONT)
    u, v, _, front = project_points(o.corners(), FRONT)
    assert front.all()
    expected = (u.min(), v.min(), u.max(), v.max())
    # visible pixel centres sit inside the silhouette, at most one pixel in
    for got, exp in zip(det.bbox, expected):
        assert abs(got - exp) <= 1.0
    assert det.confidence == 1.0 and det.camera_name == "front"


def test_min_pixel_threshold():
    sc = scene_with(box(45.0, 0.0, classes.TRAFFIC_SIGN))
    assert perfect_detections(sc, FRONT) == []
    assert len(perfect_detections(sc, FRONT, min_pixels=1)) == 1


def test_visible_fraction():
    sc = scene_with(box(8.0, 0.0), box(14.0, 0.0))
    r = render_camera(sc, FRONT)
    n0, f0 = visible_fraction(sc, FRONT, r.object_id, 0)
    n1, f1 = visible_fraction(sc, FRONT, r.object_id, 1)
    assert f0 == 1.0 and n0 > 0
    assert f1 < 0.5


# ground truth -----------------------------------------------------------------


def test_gt_road_only():
    sc = scene_with(road=(-10.0, -3.0, 10.0, 3.0))
    labels, objs = ground_truth_bev(sc, GRID)
    assert objs == []
    expected = np.zeros(GRID.shape, dtype=bool)
    expected[80:120, 94:106] = True
    assert_array_equal(labels.labels == classes.ROAD, expected)
    assert set(np.unique(labels.labels)) == {0, classes.ROAD}


def test_gt_object_position():
    sc = scene_with(box(0.0, 10.0, yaw=math.pi / 2), road=(60, 60, 61, 61))
    labels, objs = ground_truth_bev(sc, GRID)
    ix, iy = np.nonzero(labels.labels == classes.VEHICLE)
    assert iy.min() >= 115 and iy.max() <= 125 and 120 in iy
    assert ix.min() >= 97 and ix.max() <= 102
    assert len(objs) == 1 and objs[0].yaw == math.pi / 2 and objs[0].confidence == 1.0


def test_gt_object_count():
    sc = generate_scene(9)
    assert len(ground_truth_bev(sc, GRID)[1]) == len(sc.objects)


def test_rasterize_polygon_against_point_test():
    rng = np.random.default_rng(0)
    X, Y = GRID.cell_centers()
    for _ in range(20):
        o = box(*rng.uniform(-45, 45, size=2), yaw=rng.uniform(-3, 3), dims=(*rng.uniform(0.3, 8, 2), 1.0))
        poly = footprint_corners(o.footprint())
        c, s = math.cos(o.yaw), math.sin(o.yaw)
        lx = c * (X - o.center[0]) + s * (Y - o.center[1])
        ly = -s * (X - o.center[0]) + c * (Y - o.center[1])
        inside = (np.abs(lx) <= o.dims[0] / 2 + 1e-9) & (np.abs(ly) <= o.dims[1] / 2 + 1e-9)
        got = rasterize_polygon(poly, GRID)
        # only cells whose centres sit on the boundary may disagree
        diff = got != inside
        edge = (np.abs(np.abs(lx) - o.dims[0] / 2) < 1e-6) | (np.abs(np.abs(ly) - o.dims[1] / 2) < 1e-6)
        assert not (diff & ~edge).any()


def test_visible_ground_mask_excludes_occluded_ground():
    sc = scene_with(box(8.0, 0.0), rig=CameraRig((FRONT,)))
    mask = visible_ground_mask(sc, [FRONT], GRID)
    assert mask[100 + 2 * 5, 100]  # 5 m ahead, in front of the car
    assert not mask[100 + 2 * 12, 100]  # directly behind the car
    free = visible_ground_mask(scene_with(rig=CameraRig((FRONT,))), [FRONT], GRID)
    assert free[100 + 2 * 12, 100]
    assert not (mask & ~free).any()
