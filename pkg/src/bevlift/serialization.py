"""JSON and CSV forms of rigs, scenes, detections, objects and metrics."""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Any, Sequence

from .evaluation import MetricsReport
from .geometry import CameraExtrinsics, CameraIntrinsics, CameraModel, CameraRig, Quaternion
from .objects import BevObject, Detection2D
from .scenes import Scene, SceneObject


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2) + "\n"


# rig


def camera_to_dict(cam: CameraModel) -> dict:
    i, e = cam.intrinsics, cam.extrinsics
    return {
        "name": cam.name,
        "fx": i.fx,
        "fy": i.fy,
        "cx": i.cx,
        "cy": i.cy,
        "width": i.width,
        "height": i.height,
        "rotation": list(e.rotation.as_tuple()),
        "translation": list(e.translation),
    }


def camera_from_dict(d: dict) -> CameraModel:
    intr = CameraIntrinsics(
        fx=float(d["fx"]),
        fy=float(d["fy"]),
        cx=float(d["cx"]),
        cy=float(d["cy"]),
        width=int(d["width"]),
        height=int(d["height"]),
    )
    q = Quaternion(*(float(c) for c in d["rotation"]))
    return CameraModel(str(d["name"]), intr, CameraExtrinsics(q, tuple(float(c) for c in d["translation"])))


def rig_to_dict(rig: CameraRig) -> dict:
    return {"cameras": [camera_to_dict(c) for c in rig]}


def rig_from_dict(d: dict | list) -> CameraRig:
    cams = d["cameras"] if isinstance(d, dict) else d
    return CameraRig(tuple(camera_from_dict(c) for c in cams))


# scene


def scene_to_dict(scene: Scene) -> dict:
    return {
        "seed": scene.seed,
        "road": list(scene.road),
        "objects": [
            {"class_id": o.class_id, "center": list(o.center), "dims": list(o.dims), "yaw": o.yaw}
            for o in scene.objects
        ],
        "rig": rig_to_dict(scene.rig),
    }


def scene_from_dict(d: dict) -> Scene:
    objs = tuple(
        SceneObject(int(o["class_id"]), tuple(o["center"]), tuple(o["dims"]), float(o["yaw"])) for o in d["objects"]
    )
    return Scene(seed=int(d["seed"]), objects=objs, road=tuple(float(v) for v in d["road"]), rig=rig_from_dict(d["rig"]))


# detections and objects


def detections_to_list(dets: Sequence[Detection2D]) -> list[dict]:
    return [
        {"camera_name": d.camera_name, "bbox": list(d.bbox), "class_id": d.class_id, "confidence": d.confidence}
        for d in dets
    ]


def detections_from_list(items: list[dict]) -> list[Detection2D]:
    return [
        Detection2D(str(d["camera_name"]), tuple(d["bbox"]), int(d["class_id"]), float(d["confidence"])) for d in items
    ]


def objects_to_list(objs: Sequence[BevObject]) -> list[dict]:
    return [
        {
            "x": o.x,
            "y": o.y,
            "yaw": o.yaw,
            "length": o.length,
            "width": o.width,
            "class_id": o.class_id,
            "confidence": o.confidence,
        }
        for o in objs
    ]


def objects_from_list(items: list[dict]) -> list[BevObject]:
    return [
        BevObject(
            x=float(o["x"]),
            y=float(o["y"]),
            yaw=float(o["yaw"]),
            length=float(o["length"]),
            width=float(o["width"]),
            class_id=int(o["class_id"]),
            confidence=float(o["confidence"]),
        )
        for o in items
    ]


# metrics

CSV_COLUMNS = ("metric", "class", "threshold", "value")


def _fmt(v: float | None) -> str:
    return "nan" if v is None else repr(float(v))


def _parse(s: str) -> float | None:
    v = float(s)
    return None if math.isnan(v) else v


def metrics_to_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for metric, cls, thr, value in report.rows():
        w.writerow((metric, cls, thr, _fmt(value)))
    return buf.getvalue()


def metrics_from_csv(text: str) -> MetricsReport:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError(f"metrics CSV must start with header {','.join(CSV_COLUMNS)}")
    return MetricsReport.from_rows((m, c, t, _parse(v)) for m, c, t, v in rows[1:])


def metrics_to_dict(report: MetricsReport) -> dict:
    return {
        "seg_iou": dict(report.seg_iou),
        "ap": [{"class": c, "threshold": t, "value": v} for (c, t), v in report.ap.items()],
        "recall": dict(report.recall),
        "mean_position_error": report.mean_position_error,
    }


def metrics_from_dict(d: dict) -> MetricsReport:
    return MetricsReport(
        seg_iou=dict(d["seg_iou"]),
        ap={(a["class"], float(a["threshold"])): a["value"] for a in d["ap"]},
        recall=dict(d["recall"]),
        mean_position_error=d["mean_position_error"],
    )
