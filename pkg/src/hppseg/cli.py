"""Command-line front end: ``segment``, ``eval``, ``hpp-sim``, ``bench`` and
``ksweep``."""

import argparse
import csv
import dataclasses
import io as _io
import json
import logging
import os
import platform
import statistics
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
from PIL import Image

from . import evaluation, hpp, io, pipeline, subspace
from .core import N_COLORS, normalize_unit
from .pipeline import PipelineConfig
from .synthetic import moving_square

log = logging.getLogger("hppseg")


# --- configuration ---------------------------------------------------------


def _flag(name):
    return "--" + name.replace("_", "-")


def add_config_flags(parser, skip=()):
    """One optional flag per PipelineConfig field; unset flags stay None so
    they do not override the config file."""
    group = parser.add_argument_group("pipeline configuration")
    for f in dataclasses.fields(PipelineConfig):
        if f.name == "seed" or f.name in skip:
            continue
        if f.type in (bool, "bool"):
            group.add_argument(_flag(f.name), dest=f.name, default=None,
                               action=argparse.BooleanOptionalAction)
        else:
            kind = {"int": int, "float": float}.get(f.type, f.type)
            group.add_argument(_flag(f.name), dest=f.name, type=kind, default=None,
                               help=f"default {f.default}")
    group.add_argument("--config", type=Path, help="JSON file of config keys")
    group.add_argument("--seed", type=int, default=None)


def resolve_config(args):
    values = {}
    if getattr(args, "config", None):
        values.update(json.loads(Path(args.config).read_text()))
    for f in dataclasses.fields(PipelineConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return PipelineConfig.from_dict(values)


def resolve_threads(args):
    if getattr(args, "threads", None):
        return max(1, args.threads)
    return pipeline.default_threads()


def build_id():
    try:
        from importlib.metadata import version
        ver = version("artifact")
    except Exception:
        ver = "unknown"
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True,
                             text=True, cwd=Path(__file__).parent, timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{ver}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return ver


def hardware_string():
    return f"{platform.machine()} {platform.processor() or 'cpu'}, {os.cpu_count()} cores, " \
           f"{platform.system()} {platform.release()}, Python {platform.python_version()}"


def boxes_records(boxes):
    return [{"frame": i, **b.to_dict()} for i, b in enumerate(boxes)]


# --- subcommands -----------------------------------------------------------


def cmd_segment(args):
    cfg = resolve_config(args)
    threads = resolve_threads(args)
    video = io.load_frames(args.input)
    log.info("segmenting %d frames of %dx%d with %d threads", len(video), video.width,
             video.height, threads)
    result = pipeline.run_pipeline(video, cfg, debug_stages=args.debug_stages, threads=threads)

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    io.write_masks(out / "masks", result.soft_masks)
    io.write_json(out / "boxes.json", boxes_records(result.boxes))
    io.write_json(out / "timings.json", result.timings)
    if args.debug_stages:
        for name, masks in result.stage_masks.items():
            io.write_masks(out / "stages" / name, masks)
    if args.trimap:
        tri_dir = out / "trimaps"
        tri_dir.mkdir(parents=True, exist_ok=True)
        for i, m in enumerate(result.soft_masks):
            tri = pipeline.export_trimap(m, args.trimap_lo, args.trimap_hi)
            Image.fromarray(tri).save(tri_dir / f"{i:04d}.png")
    manifest = {
        "config": cfg.to_dict(),
        "input": str(Path(args.input).resolve()),
        "output": str(out.resolve()),
        "build": build_id(),
        "stage_seconds_per_frame": result.timings,
        "seed": cfg.seed,
        "frames": len(video),
        "threads": threads,
    }
    io.write_json(out / "manifest.json", manifest)
    print(f"wrote {len(video)} masks to {out / 'masks'}")
    return 0


def _first_box(boxes):
    return {f: bs[0] for f, bs in boxes.items()}


def cmd_eval(args):
    report = {"metric": args.metric, "threshold": args.threshold}
    if args.metric == "corloc":
        if not (args.pred_boxes and args.gt_boxes):
            raise SystemExit("corloc needs --pred-boxes and --gt-boxes")
        pred = _first_box(evaluation.load_boxes(args.pred_boxes))
        gt = evaluation.load_boxes(args.gt_boxes)
        report["corloc"] = evaluation.corloc(pred, gt, args.threshold)
        report["frames"] = len(gt)
    else:
        if not (args.pred_masks and args.gt_masks):
            raise SystemExit(f"{args.metric} needs --pred-masks and --gt-masks")
        level = int(round(255 * args.threshold))
        pred = evaluation.load_mask_dir(args.pred_masks, threshold=level)
        gt = evaluation.load_mask_dir(args.gt_masks)
        frames = sorted(f for f in gt if f in pred)
        if not frames:
            raise SystemExit("no frame indices shared by predicted and ground-truth masks")
        report["frames"] = len(frames)
        if args.metric == "iou":
            report["iou"] = evaluation.average_iou([pred[f] for f in frames],
                                                   [gt[f] for f in frames])
        else:
            report.update(evaluation.prf(np.stack([pred[f] for f in frames]),
                                         np.stack([gt[f] for f in frames])))
    _emit_json(report, args.output)
    return 0


def cmd_hpp_sim(args):
    t0 = time.perf_counter()
    report = hpp.run_suite(args.scenarios, args.support_size, args.seed,
                           satisfy=not args.violate)
    report["seconds"] = time.perf_counter() - t0
    _emit_json(report, args.output)
    if not args.violate and report["holds_count"] != report["scenarios"]:
        return 1
    return 0


def _bench_video(args):
    if args.input:
        return io.load_frames(args.input)
    seed = args.seed if args.seed is not None else 0
    size = max(4, min(args.height, args.width) // 6)
    return moving_square(args.height, args.width, args.frames, size=size, seed=seed).video


def cmd_bench(args):
    cfg = resolve_config(args)
    threads = resolve_threads(args)
    video = _bench_video(args)
    runs = []
    for rep in range(args.repeats):
        t0 = time.perf_counter()
        result = pipeline.run_pipeline(video, cfg, threads=threads)
        wall = (time.perf_counter() - t0) / len(video)
        run = dict(result.timings, total=sum(result.timings.values()), wall=wall)
        log.info("run %d: %s", rep, json.dumps(run))
        runs.append(run)
    stages = {k: statistics.median(r[k] for r in runs) for k in pipeline.STAGE_GROUPS}
    report = {
        "stages": stages,
        "total": sum(stages.values()),
        "wall": statistics.median(r["wall"] for r in runs),
        "runs": runs,
        "repeats": args.repeats,
        "frames": len(video),
        "size": [video.width, video.height],
        "threads": threads,
        "hardware": hardware_string(),
        "unit": "seconds per frame",
    }
    _emit_json(report, args.output)
    return 0


def ksweep(k_values, cfg=None, threads=None, synthetic=None):
    """Rows ``(k, f_measure, sec_per_frame)`` for Step 5 run with each ``k``
    on one fixed synthetic video (Steps 1-4 are computed once)."""
    cfg = cfg or PipelineConfig()
    if synthetic is None:
        synthetic = moving_square(seed=cfg.seed)
    frames, gt = synthetic.video, synthetic.gt_masks
    h, w = frames.shape
    quantized = frames.quantized
    p1 = pipeline.initial_cues(frames.gray, cfg)
    _, s1 = pipeline.pixel_stage(quantized, p1, cfg)
    p2 = subspace.project_masks(s1, cfg.n_mask_components, sigma=cfg.sigma2_frac * min(h, w))
    _, s2 = pipeline.pixel_stage(quantized, p2, cfg)
    rows = []
    for k in k_values:
        if not 1 <= k <= N_COLORS:
            raise ValueError(f"k must lie in [1, {N_COLORS}], got {k}")
        t0 = time.perf_counter()
        s3 = pipeline.patch_stage(quantized, s2, cfg, k=k, threads=threads)
        sec = (time.perf_counter() - t0) / len(frames)
        norm = np.stack([normalize_unit(m, cfg.clip_percentile) for m in s3])
        f = evaluation.video_prf(norm, gt)["f_measure"]
        rows.append((int(k), float(f), float(sec)))
    return rows


def cmd_ksweep(args):
    cfg = resolve_config(args)
    rows = ksweep(args.k_values, cfg, resolve_threads(args))
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["k", "f_measure", "sec_per_frame"])
    for k, f, sec in rows:
        writer.writerow([k, f"{f:.6f}", f"{sec:.6f}"])
    _emit_text(buf.getvalue(), args.output)
    return 0


def _emit_json(obj, path):
    _emit_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", path)


def _emit_text(text, path):
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


# --- parser ----------------------------------------------------------------


def _k_list(text):
    return [int(x) for x in text.replace(",", " ").split()]


def build_parser():
    parser = argparse.ArgumentParser(prog="hppseg",
                                     description="Unsupervised video object segmentation.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    seg = sub.add_parser("segment", help="segment a directory of frames")
    seg.add_argument("input", type=Path, help="directory of numbered PNG/JPEG frames")
    seg.add_argument("-o", "--output", type=Path, required=True)
    seg.add_argument("--threads", type=int, default=None)
    seg.add_argument("--debug-stages", action="store_true",
                     help="also write every intermediate mask under stages/")
    seg.add_argument("--trimap", action="store_true", help="write 3-level trimaps")
    seg.add_argument("--trimap-lo", type=float, default=0.2)
    seg.add_argument("--trimap-hi", type=float, default=0.8)
    add_config_flags(seg)
    seg.set_defaults(func=cmd_segment)

    ev = sub.add_parser("eval", help="score predictions against ground truth")
    ev.add_argument("--pred-boxes", type=Path)
    ev.add_argument("--pred-masks", type=Path)
    ev.add_argument("--gt-boxes", type=Path)
    ev.add_argument("--gt-masks", type=Path)
    ev.add_argument("--metric", choices=("corloc", "iou", "prf"), default="corloc")
    ev.add_argument("--threshold", type=float, default=0.5,
                    help="IoU threshold for corloc, mask binarization level otherwise")
    ev.add_argument("-o", "--output", type=Path)
    ev.add_argument("--seed", type=int, default=None, help="accepted for uniformity; unused")
    ev.set_defaults(func=cmd_eval)

    sim = sub.add_parser("hpp-sim", help="check the HPP proposition on random scenarios")
    sim.add_argument("--scenarios", type=int, default=10000)
    sim.add_argument("--support-size", type=int, default=8)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--violate", action="store_true",
                     help="draw scenarios that break the hypotheses instead")
    sim.add_argument("-o", "--output", type=Path)
    sim.set_defaults(func=cmd_hpp_sim)

    bench = sub.add_parser("bench", help="per-stage timing, median over repeats")
    bench.add_argument("input", type=Path, nargs="?", default=None,
                       help="frame directory (default: synthetic video)")
    bench.add_argument("--width", type=int, default=320)
    bench.add_argument("--height", type=int, default=240)
    bench.add_argument("--frames", type=int, default=100)
    bench.add_argument("--repeats", type=int, default=3)
    bench.add_argument("--threads", type=int, default=None)
    bench.add_argument("-o", "--output", type=Path)
    add_config_flags(bench)
    bench.set_defaults(func=cmd_bench)

    ks = sub.add_parser("ksweep", help="Step-5 quality and time versus k")
    ks.add_argument("--k", dest="k_values", type=_k_list, default=[10, 30, 60, 120],
                    help="comma-separated k values")
    ks.add_argument("--threads", type=int, default=None)
    ks.add_argument("-o", "--output", type=Path)
    add_config_flags(ks, skip=("k",))
    ks.set_defaults(func=cmd_ksweep)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "bench" and args.repeats < 3:
        parser.error("bench needs --repeats >= 3")
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (io.FrameInputError, ValueError, OSError) as exc:
        print(f"hppseg {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
