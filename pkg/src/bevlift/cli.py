"""Command-line front end.

Exit codes: 0 success, 1 processing error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import classes, serialization as ser
from .evaluation import DEFAULT_GATE, evaluate
from .geometry import CameraRig, DepthBinning, FeatureGridSpec, FrustumGrid, build_frustum
from .gradcheck import run_grad_checks
from .ipm import SemanticBevMap, ipm_rasterize_rig
from .pipeline import run_pipeline
from .rigs import default_rig
from .scenes import (
    SceneParams,
    feature_samples,
    generate_scene,
    ground_truth_bev,
    render_rig,
    visible_ground_mask,
)
from .splat import BevGridSpec, splat_reference, splat_sorted
from .tensor_io import TensorFormatError, read_tensor, write_tensor

log = logging.getLogger("bevlift")


def _load_json(path):
    with open(path) as f:
        return json.load(f)


def _write_text(path, text: str) -> None:
    with open(path, "w", newline="") as f:
        f.write(text)


def _rig(args, scene=None) -> CameraRig:
    if getattr(args, "rig", None):
        return ser.rig_from_dict(_load_json(args.rig))
    if scene is not None:
        return scene.rig
    raise ValueError("no rig given (use --rig or a scene that carries one)")


def cmd_gen_scene(args) -> None:
    params = SceneParams(count_range=(args.min_objects, args.max_objects), radius=args.radius)
    scene = generate_scene(args.seed, params, default_rig(args.cameras))
    _write_text(args.out, ser.dumps(ser.scene_to_dict(scene)))


def cmd_render(args) -> None:
    scene = ser.scene_from_dict(_load_json(args.scene))
    rig = _rig(args, scene)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = BevGridSpec()
    for name, r in render_rig(scene, rig, args.min_pixels).items():
        write_tensor(out / f"depth_{name}.tensor", r.depth)
        write_tensor(out / f"semantic_{name}.tensor", r.semantic)
        _write_text(out / f"detections_{name}.json", ser.dumps(ser.detections_to_list(r.detections)))
    gt_map, gt_objs = ground_truth_bev(scene, grid)
    write_tensor(out / "gt_labels.tensor", gt_map.labels)
    _write_text(out / "gt_objects.json", ser.dumps(ser.objects_to_list(gt_objs)))
    region = visible_ground_mask(scene, list(rig), grid, feature_samples, DepthBinning().d_max)
    write_tensor(out / "visible_ground.tensor", region)
    _write_text(out / "rig.json", ser.dumps(ser.rig_to_dict(rig)))


def _inputs_from_dir(path: Path, rig: CameraRig):
    depth, sem, dets = {}, {}, []
    for cam in rig:
        depth[cam.name] = read_tensor(path / f"depth_{cam.name}.tensor").astype(float)
        sem[cam.name] = read_tensor(path / f"semantic_{cam.name}.tensor").astype(np.int64)
        det_file = path / f"detections_{cam.name}.json"
        if det_file.exists():
            dets += ser.detections_from_list(_load_json(det_file))
    return depth, sem, dets


def cmd_pipeline(args) -> None:
    if args.scene:
        scene = ser.scene_from_dict(_load_json(args.scene))
        rig = _rig(args, scene)
        renders = render_rig(scene, rig)
        # same float32 rounding as a render written to disk, so both modes agree
        depth = {k: r.depth.astype(np.float32).astype(float) for k, r in renders.items()}
        sem = {k: r.semantic for k, r in renders.items()}
        dets = [d for r in renders.values() for d in r.detections]
    else:
        inputs = Path(args.inputs)
        if not args.rig and (inputs / "rig.json").exists():
            args.rig = str(inputs / "rig.json")
        rig = _rig(args)
        depth, sem, dets = _inputs_from_dir(inputs, rig)
    res = run_pipeline(rig, depth, sem, dets, recenter=not args.no_recenter, head_window=args.head_window)
    write_tensor(args.out, res.stacked())
    if args.labels:
        write_tensor(args.labels, res.labels.labels)
    if args.objects:
        _write_text(args.objects, ser.dumps(ser.objects_to_list(res.objects)))


def cmd_ipm(args) -> None:
    scene = ser.scene_from_dict(_load_json(args.scene))
    rig = _rig(args, scene)
    cams = [rig["front"]] if args.front_only else list(rig)
    renders = render_rig(scene, CameraRig(tuple(cams)))
    bev = ipm_rasterize_rig({k: r.semantic for k, r in renders.items()}, cams, BevGridSpec())
    write_tensor(args.out, bev.labels)


def _labels(path, grid) -> SemanticBevMap:
    t = read_tensor(path)
    if t.ndim == 3:
        t = np.argmax(t[..., : classes.NUM_CLASSES], axis=-1)
    return SemanticBevMap(t.astype(np.int64), grid)


def cmd_eval(args) -> None:
    grid = BevGridSpec()
    pred = ser.objects_from_list(_load_json(args.pred))
    gt = ser.objects_from_list(_load_json(args.gt))
    pl = _labels(args.pred_labels, grid) if args.pred_labels else None
    gl = _labels(args.gt_labels, grid) if args.gt_labels else None
    region = read_tensor(args.region).astype(bool) if args.region else None
    report = evaluate(pred, gt, pl, gl, gate=args.gate, region=region)
    _write_text(args.out, ser.metrics_to_csv(report))
    if args.json:
        _write_text(args.json, ser.dumps(ser.metrics_to_dict(report)))


def cmd_loss_grad_check(args) -> None:
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("component", "max_rel_error", "checked", "skipped"))
    for r in run_grad_checks(args.seed, args.instances).values():
        w.writerow((r.component, f"{float(r.max_rel_error):.3e}", r.checked, r.skipped))


def cmd_bench(args) -> None:
    rng = np.random.default_rng(args.seed)
    grid = BevGridSpec()
    bins = DepthBinning()
    h, w, D, C = args.h_cells, args.w_cells, bins.count, args.channels
    rig = default_rig(7 if args.cameras > 6 else 6, width=w * 8, height=h * 8)
    cams = [rig[i % len(rig)] for i in range(args.cameras)]
    fgrid = FeatureGridSpec(h, w, 8)
    frustums = [FrustumGrid(build_frustum(c, bins, fgrid).points, f"{c.name}-{i}") for i, c in enumerate(cams)]
    lifted = [rng.random((h, w, D, C)) for _ in cams]
    impls = [("sorted", splat_sorted)] + ([("reference", splat_reference)] if args.reference else [])
    rows = []
    for name, fn in impls:
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            fn(frustums, lifted, grid)
            rows.append((name, args.cameras, args.cameras * h * w * D, C, f"{1000 * (time.perf_counter() - t0):.1f}"))
    text = "impl,cameras,points,channels,millis\n" + "".join(",".join(map(str, r)) + "\n" for r in rows)
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bevlift", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-scene", help="generate a synthetic scene")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--cameras", type=int, choices=(6, 7), default=6)
    s.add_argument("--min-objects", type=int, default=5)
    s.add_argument("--max-objects", type=int, default=10)
    s.add_argument("--radius", type=float, default=40.0)
    s.set_defaults(func=cmd_gen_scene)

    s = sub.add_parser("render", help="render depth, semantics, detections and ground truth")
    s.add_argument("--scene", required=True)
    s.add_argument("--rig")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--min-pixels", type=int, default=50)
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("pipeline", help="lift, splat and embed detections")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--scene")
    src.add_argument("--inputs", help="directory written by `render`")
    s.add_argument("--rig")
    s.add_argument("--out", required=True, help="stacked BEV features tensor")
    s.add_argument("--objects", help="placed objects JSON")
    s.add_argument("--labels", help="BEV label tensor")
    s.add_argument("--head-window", type=int, default=3)
    s.add_argument("--no-recenter", action="store_true")
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("ipm", help="inverse perspective mapping baseline")
    s.add_argument("--scene", required=True)
    s.add_argument("--rig")
    s.add_argument("--out", required=True)
    s.add_argument("--front-only", action="store_true")
    s.set_defaults(func=cmd_ipm)

    s = sub.add_parser("eval", help="metrics for predicted vs ground-truth objects and labels")
    s.add_argument("--pred", required=True, help="predicted objects JSON")
    s.add_argument("--gt", required=True, help="ground-truth objects JSON")
    s.add_argument("--pred-labels")
    s.add_argument("--gt-labels")
    s.add_argument("--region", help="boolean BEV mask tensor restricting segmentation IoU")
    s.add_argument("--gate", type=float, default=DEFAULT_GATE)
    s.add_argument("--out", required=True)
    s.add_argument("--json")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("loss-grad-check", help="finite-difference check of every loss gradient")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--instances", type=int, default=100)
    s.set_defaults(func=cmd_loss_grad_check)

    s = sub.add_parser("bench", help="time the splat implementations")
    s.add_argument("--cameras", type=int, default=7)
    s.add_argument("--repeat", type=int, default=3)
    s.add_argument("--h-cells", type=int, default=90)
    s.add_argument("--w-cells", type=int, default=160)
    s.add_argument("--channels", type=int, default=8)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--reference", action="store_true", help="also time the point-by-point loop (slow)")
    s.add_argument("--out")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (ValueError, KeyError, OSError, TensorFormatError) as exc:
        print(f"bevlift {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
