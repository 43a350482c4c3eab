"""Command-line entry point: ``boxpose {encode,decode,eval,iou,synth,epnp-bench}``.

Exit codes: 0 success, 1 usage error, 2 data/schema error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .decoder import (
    DecoderConfig,
    DegenerateConfigurationError,
    PlaneInconsistentError,
    decode_frame,
    solve_epnp,
)
from .geom import CameraIntrinsics, GeometryError, OrientedBox3, Plane3, Rotation3, box_vertices, geodesic_distance, project
from .metrics import add_metric, average_precision, iou3d, iou3d_mc, rep_metric
from .scenes import random_box_in_view, random_camera
from .synth import CompositeError, ForegroundAsset, PlacementConfig, composite, sample_placement
from .targets import EncoderConfig, GridSpec, encode_targets

logger = logging.getLogger("boxpose")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _box_to_json(box: OrientedBox3) -> dict:
    return {
        "rotation": list(box.rotation.as_quat()),
        "center": box.center.tolist(),
        "size": box.size.tolist(),
    }


def _box_from_json(doc) -> OrientedBox3:
    return OrientedBox3(Rotation3.from_quat(doc["rotation"]), doc["center"], doc["size"])


def _write_json(path, doc):
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


# --- encode -----------------------------------------------------------------

def cmd_encode(args) -> int:
    manifest = io.read_manifest(args.manifest)
    cam = manifest.camera
    grid = GridSpec.for_camera(cam, args.grid_w, args.grid_h)
    cfg = EncoderConfig(sigma_factor=args.sigma_factor, epsilon=args.epsilon, sigma_min=args.sigma_min)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    index = []
    for i, frame in enumerate(manifest.frames):
        targets = encode_targets(frame.boxes(), cam, grid, cfg)
        name = f"{i:05d}_{frame.stem}"
        io.save_array(out / f"{name}.heat.mpt", targets.heat[..., None])
        io.save_array(out / f"{name}.disp.mpt", targets.disp)
        index.append(
            {
                "frame": i,
                "image": frame.image,
                "heat": f"{name}.heat.mpt",
                "disp": f"{name}.disp.mpt",
                "skipped_objects": targets.skipped,
            }
        )
    _write_json(out / "index.json", {"frames": index, "grid": [grid.grid_w, grid.grid_h]})
    logger.info("encoded %d frames into %s", len(index), out)
    return EXIT_OK


# --- decode -----------------------------------------------------------------

def _heat_array(arr: np.ndarray) -> np.ndarray:
    if arr.ndim == 3 and arr.shape[2] == 1:
        return arr[..., 0]
    if arr.ndim != 2:
        raise io.TensorFormatError(f"heatmap must be HxW or HxWx1, got {arr.shape}")
    return arr


def _resolve_plane(args, manifest):
    if args.plane is None:
        return None
    if len(args.plane) == 4:
        return Plane3(args.plane[:3], args.plane[3])
    if len(args.plane) == 0:
        if args.frame is None:
            raise UsageError("--plane without values needs --frame to pick the manifest plane")
        plane = manifest.frames[args.frame].plane3()
        if plane is None:
            raise io.ManifestError(f"frames[{args.frame}].plane: required by --plane")
        return plane
    raise UsageError("--plane takes either no values or NX NY NZ D")


def cmd_decode(args) -> int:
    manifest = io.read_manifest(args.camera)
    cam = manifest.camera
    heat = _heat_array(io.load_array(args.heat)).astype(float)
    disp = io.load_array(args.disp).astype(float)
    grid = GridSpec.for_camera(cam, heat.shape[1], heat.shape[0])
    cfg = DecoderConfig(args.peak_threshold, args.nms_radius, args.max_detections)
    plane = _resolve_plane(args, manifest)
    results = decode_frame(heat, disp, cam, grid, cfg, plane)
    detections = []
    for det, sol, metric in results:
        entry = {
            "peak": [det.peak.gx, det.peak.gy],
            "confidence": det.confidence,
            "vertices2d": det.vertices2d.tolist(),
            "box_up_to_scale": _box_to_json(sol.box()),
            "size_ratios": sol.size_ratios.tolist(),
            "residual": sol.residual,
        }
        if metric is not None:
            entry["box"] = _box_to_json(metric)
        detections.append(entry)
    doc = {"frame": args.frame, "detections": detections}
    _write_json(args.out, doc)
    return EXIT_OK


# --- eval -------------------------------------------------------------------

def _load_detections(paths):
    dets = []
    for path in paths:
        doc = json.loads(Path(path).read_text())
        docs = doc if isinstance(doc, list) else [doc]
        for d in docs:
            if d.get("frame") is None:
                raise io.ManifestError(f"{path}: detections need a frame index (decode --frame)")
            for k, det in enumerate(d["detections"]):
                if "box" not in det:
                    raise io.ManifestError(
                        f"{path}: detections[{k}].box missing; decode with --plane for metric boxes"
                    )
                dets.append((int(d["frame"]), float(det["confidence"]), _box_from_json(det["box"])))
    return dets


def _pose_eval(args, manifest, dets, gts):
    """Per ground truth: best-IoU detection in the same frame, scored by REP or ADD."""
    scores = []
    for frame, gt in gts:
        candidates = [box for f, _, box in dets if f == frame]
        pts_local = box_vertices(OrientedBox3(Rotation3.identity(), np.zeros(3), gt.size))
        best = max(candidates, key=lambda b: iou3d(b, gt), default=None)
        if best is None:
            scores.append({"frame": frame, "success": False, "error": None})
            continue
        est, ref = (best.rotation, best.center), (gt.rotation, gt.center)
        if args.metric == "rep":
            s = rep_metric(est, ref, pts_local, manifest.camera, args.rep_threshold)
        else:
            diameter = float(np.linalg.norm(gt.size))
            s = add_metric(est, ref, pts_local, diameter, args.symmetric, args.add_fraction)
        scores.append({"frame": frame, "success": bool(s.success), "error": s.error})
    rate = float(np.mean([s["success"] for s in scores])) if scores else 0.0
    return {"metric": args.metric, "success_rate": rate, "per_object": scores}


def cmd_eval(args) -> int:
    manifest = io.read_manifest(args.manifest)
    gts = [(i, box) for i, frame in enumerate(manifest.frames) for box in frame.boxes()]
    dets = _load_detections(args.detections)
    if args.metric == "ap3d":
        if not gts:
            raise io.ManifestError("undefined recall: manifest has no ground-truth objects")
        curve = average_precision(dets, gts, args.iou_threshold)
        report = {
            "metric": "ap3d",
            "iou_threshold": args.iou_threshold,
            "ap": curve.ap,
            "num_detections": len(dets),
            "num_gts": len(gts),
            "recall": curve.recall.tolist(),
            "precision": curve.precision.tolist(),
        }
    else:
        report = _pose_eval(args, manifest, dets, gts)
    _write_json(args.report, report)
    return EXIT_OK


# --- iou --------------------------------------------------------------------

def _box_arg(values) -> OrientedBox3:
    qw, qx, qy, qz, cx, cy, cz, sx, sy, sz = values
    return OrientedBox3(Rotation3(qw, qx, qy, qz), [cx, cy, cz], [sx, sy, sz])


def cmd_iou(args) -> int:
    a, b = _box_arg(args.box_a), _box_arg(args.box_b)
    doc = {"iou3d": iou3d(a, b)}
    if args.mc_samples:
        doc["iou3d_mc"] = iou3d_mc(a, b, args.mc_samples, args.seed)
    _write_json("-", doc)
    return EXIT_OK


# --- synth ------------------------------------------------------------------

def _list_pngs(directory) -> list[Path]:
    files = sorted(Path(directory).glob("*.png"))
    if not files:
        raise io.ManifestError(f"{directory}: no PNG files")
    return files


def synth_one(index: int, seed: int, fgs, bgs, cfg: PlacementConfig, alpha_threshold: float):
    """Sample ``index`` of a run; depends only on ``(seed, index)`` and the asset lists."""
    rng = np.random.default_rng([seed, index])
    fi, bi = int(rng.integers(len(fgs))), int(rng.integers(len(bgs)))
    fg = ForegroundAsset(io.read_png(fgs[fi], "RGBA"))
    bg = io.read_png(bgs[bi], "RGB")
    pl = sample_placement(rng, (bg.shape[1], bg.shape[0]), (fg.width, fg.height), cfg)
    return composite(fg, bg, pl, alpha_threshold, (fgs[fi].name, bgs[bi].name), seed)


def cmd_synth(args) -> int:
    fgs, bgs = _list_pngs(args.foregrounds), _list_pngs(args.backgrounds)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = PlacementConfig(args.scale_min, args.scale_max, overhang=args.overhang)

    def work(i):
        sample = synth_one(i, args.seed, fgs, bgs, cfg, args.alpha_threshold)
        io.write_png(out / f"{i:05d}.png", sample.image)
        io.write_png(out / f"{i:05d}_mask.png", sample.mask)
        return sample

    with ThreadPoolExecutor(max_workers=max(1, args.workers)) as pool:
        samples = list(pool.map(work, range(args.count)))

    # Nominal camera: synthetic-2D frames carry no pose labels.
    h, w = samples[0].image.shape[:2] if samples else (480, 640)
    cam = CameraIntrinsics.simple(float(max(w, h)), w / 2, h / 2, w, h)
    frames = []
    for i, s in enumerate(samples):
        pl = s.placement
        frames.append(
            io.Frame(
                image=f"{i:05d}.png",
                mask=f"{i:05d}_mask.png",
                labels={"pose": False, "segmentation": True, "coordinate_map": False},
                extra={
                    "synth": {
                        "foreground": s.source_ids[0],
                        "background": s.source_ids[1],
                        "placement": [pl.tx, pl.ty, pl.rotation_deg, pl.scale],
                        "seed": args.seed,
                        "index": i,
                    }
                },
            )
        )
    io.write_manifest(out / "manifest.json", io.Manifest(cam, frames))
    return EXIT_OK


# --- epnp-bench -------------------------------------------------------------

def run_epnp_bench(trials: int, noise_px: float, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    rot_err, size_err, reproj, times = [], [], [], []
    failures = 0
    for _ in range(trials):
        cam = random_camera(rng)
        box = random_box_in_view(rng, cam)
        uv_true = project(cam, box_vertices(box))
        uv = uv_true + rng.normal(scale=noise_px, size=uv_true.shape) if noise_px > 0 else uv_true
        t0 = time.perf_counter()
        try:
            sol = solve_epnp(uv, cam)
        except DegenerateConfigurationError:
            failures += 1
            continue
        times.append(time.perf_counter() - t0)
        rot_err.append(geodesic_distance(sol.rotation, box.rotation))
        ratios = box.size / box.size.max()
        size_err.append(float(np.max(np.abs(sol.size_ratios - ratios) / ratios)))
        reproj.append(float(np.linalg.norm(project(cam, sol.vertices_cam) - uv, axis=1).mean()))

    def stats(xs):
        xs = np.asarray(xs)
        if xs.size == 0:
            return {"median": None, "mean": None, "max": None}
        return {"median": float(np.median(xs)), "mean": float(xs.mean()), "max": float(xs.max())}

    return {
        "trials": trials,
        "noise_px": noise_px,
        "failures": failures,
        "rotation_error_rad": stats(rot_err),
        "size_ratio_rel_error": stats(size_err),
        "reprojection_px": stats(reproj),
        "solve_time_s": stats(times),
    }


def cmd_epnp_bench(args) -> int:
    report = run_epnp_bench(args.trials, args.noise_px, args.seed)
    print(f"trials={report['trials']} noise_px={report['noise_px']} failures={report['failures']}")
    print(f"{'quantity':<24}{'median':>14}{'mean':>14}{'max':>14}")
    for key in ("rotation_error_rad", "size_ratio_rel_error", "reprojection_px", "solve_time_s"):
        row = report[key]
        cells = "".join(f"{v:>14.3e}" if v is not None else f"{'-':>14}" for v in row.values())
        print(f"{key:<24}{cells}")
    if args.json:
        _write_json(args.json, report)
    return EXIT_OK


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="boxpose", description="Box-vertex pose pipeline tools.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("encode", help="heatmap and displacement targets from manifest ground truth")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--sigma-factor", type=float, default=0.1)
    p.add_argument("--sigma-min", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=0.2)
    p.add_argument("--grid-w", type=int, default=40)
    p.add_argument("--grid-h", type=int, default=30)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="detections and boxes from predicted tensors")
    p.add_argument("--heat", required=True)
    p.add_argument("--disp", required=True)
    p.add_argument("--camera", required=True, help="manifest providing the intrinsics")
    p.add_argument(
        "--plane",
        nargs="*",
        type=float,
        metavar="V",
        help="resolve metric scale: NX NY NZ D, or no values to use the --frame plane from the manifest",
    )
    p.add_argument("--frame", type=int, help="frame index recorded in the output")
    p.add_argument("--peak-threshold", type=float, default=0.5)
    p.add_argument("--nms-radius", type=int, default=1)
    p.add_argument("--max-detections", type=int, default=8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="AP@IoU, REP-5px or ADD-0.1d against manifest ground truth")
    p.add_argument("--manifest", required=True)
    p.add_argument("--detections", required=True, nargs="+")
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument("--metric", choices=["ap3d", "rep", "add"], default="ap3d")
    p.add_argument("--rep-threshold", type=float, default=5.0)
    p.add_argument("--add-fraction", type=float, default=0.1)
    p.add_argument("--symmetric", action="store_true", help="use ADD-S")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval)

    box_help = "QW QX QY QZ CX CY CZ SX SY SZ"
    p = sub.add_parser("iou", help="exact (and optional Monte-Carlo) 3D IoU of two boxes")
    p.add_argument("--box-a", required=True, nargs=10, type=float, metavar="X", help=box_help)
    p.add_argument("--box-b", required=True, nargs=10, type=float, metavar="X", help=box_help)
    p.add_argument("--mc-samples", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_iou)

    p = sub.add_parser("synth", help="composite foreground PNGs onto background PNGs")
    p.add_argument("--foregrounds", required=True)
    p.add_argument("--backgrounds", required=True)
    p.add_argument("--count", required=True, type=int)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--scale-min", type=float, default=0.5)
    p.add_argument("--scale-max", type=float, default=1.5)
    p.add_argument("--overhang", type=float, default=0.0)
    p.add_argument("--alpha-threshold", type=float, default=0.5)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("epnp-bench", help="accuracy and latency of the EPnP solver on random boxes")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--noise-px", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", help="also write the report as JSON")
    p.set_defaults(func=cmd_epnp_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"boxpose: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (io.ManifestError, io.TensorFormatError, CompositeError, GeometryError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"boxpose: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DegenerateConfigurationError, PlaneInconsistentError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"boxpose: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"boxpose: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
