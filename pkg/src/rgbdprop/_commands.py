"""Implementations behind the CLI subcommands."""

from __future__ import annotations

import json
import os

import numpy as np
from PIL import Image

from . import dataio, metrics, proposals2d, synth
from .config import PipelineConfig
from .geometry import backproject_map
from .pipeline import STAGE_KEYS, OnlinePipeline, downsample_frame
from .plane import estimate_support_plane, suppress_plane


def _config_from_args(args) -> PipelineConfig:
    from .cli import _CONFIG_FIELD_TYPES

    cfg = (
        PipelineConfig.from_file(args.config)
        if getattr(args, "config", None)
        else PipelineConfig()
    )
    overrides = {}
    for name in _CONFIG_FIELD_TYPES:
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return cfg.updated(**overrides) if overrides else cfg.validate()


def dispatch(args) -> int:
    if args.command == "run":
        return cmd_run(args)
    if args.command == "eval":
        return cmd_eval(args)
    if args.command == "synth":
        return cmd_synth(args)
    if args.command == "debug-heatmap":
        return cmd_debug_heatmap(args)
    raise ValueError(f"unknown command {args.command!r}")


# ---------------------------------------------------------------------------


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    manifest = dataio.read_manifest(args.manifest)
    reader = dataio.SequenceReader(manifest)
    os.makedirs(args.out, exist_ok=True)

    if args.resume:
        pipe = OnlinePipeline.load_state(args.resume)
    else:
        pipe = OnlinePipeline(manifest.intrinsics, cfg)

    rows = []
    start_at = pipe.frames_processed
    processed = 0
    for record in reader:
        if processed < start_at:
            processed += 1
            continue
        out = pipe.process_frame(record)
        rows.append(out)
        processed += 1
        if args.max_frames and processed - start_at >= args.max_frames:
            break

    result = pipe.finalize()

    dataio.write_boxes(result.boxes, os.path.join(args.out, "boxes.json"))
    if result.ranked_indices.size:
        dataio.export_ply(
            os.path.join(args.out, "cloud_ranked.ply"),
            pipe.store.positions[result.ranked_indices],
            confidence=result.ranked_scores,
        )
    else:
        dataio.export_ply(
            os.path.join(args.out, "cloud_ranked.ply"), np.empty((0, 3))
        )
    _export_cluster_ply(pipe, result, os.path.join(args.out, "cloud_clusters.ply"))

    with open(os.path.join(args.out, "timing.csv"), "w") as fh:
        fh.write("frame," + ",".join(STAGE_KEYS) + "\n")
        for out in rows:
            cells = [f"{out.timings.get(k, 0.0):.6f}" for k in STAGE_KEYS]
            fh.write(f"{out.frame_index}," + ",".join(cells) + "\n")

    state_path = args.save_state or os.path.join(args.out, "state.npz")
    pipe.save_state(state_path)
    cfg.to_file(os.path.join(args.out, "config.txt"))

    summary = {
        "frames_processed": pipe.frames_processed,
        "frames_skipped": reader.summary.frames_skipped,
        "proposals_clipped": reader.summary.proposals_clipped,
        "proposals_missing": reader.summary.proposals_missing,
        "global_points": len(pipe.store) if pipe.store else 0,
        "ranked_points": int(result.ranked_indices.size),
        "boxes": len(result.boxes),
        "warnings": result.warnings + reader.summary.messages,
        "mean_frame_seconds": (
            float(np.mean([r.timings["total"] for r in rows])) if rows else 0.0
        ),
    }
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    print(
        f"processed {summary['frames_processed']} frames -> "
        f"{summary['boxes']} boxes, {summary['ranked_points']} ranked points"
    )
    return 0


def _export_cluster_ply(pipe, result, path):
    if not result.cleaned_indices.size:
        dataio.export_ply(path, np.empty((0, 3)))
        return
    pts = pipe.store.positions[result.cleaned_indices]
    labels = result.cluster_labels
    palette = np.concatenate([synth.PALETTE, synth.PALETTE * 0.55])
    colors = np.full((pts.shape[0], 3), 0.25)
    clustered = labels >= 0
    colors[clustered] = palette[labels[clustered] % len(palette)]
    dataio.export_ply(path, pts, colors=colors)


# ---------------------------------------------------------------------------


def cmd_eval(args) -> int:
    pred = dataio.read_boxes(args.pred)
    os.makedirs(args.out, exist_ok=True)
    if args.mode == "3d":
        if not args.gt:
            raise dataio.FormatError("--gt is required in 3d mode")
        gt = dataio.read_boxes(args.gt)
        report = metrics.evaluate_boxes([gt], [pred], metrics.iou3d)
    elif args.mode == "points":
        if not args.gt_points:
            raise dataio.FormatError("--gt-points is required in points mode")
        pts, labels = synth.read_gt_points(args.gt_points)
        is_interest = labels >= synth.LABEL_OBJECT_BASE
        report = metrics.evaluate_points(pts, is_interest, pred)
    else:
        report = _eval_2d(args, pred)
    dataio.write_eval_report(report, os.path.join(args.out, f"report_{args.mode}.json"))
    print(report.format_table())
    return 0


def _eval_2d(args, pred):
    """Project 3D boxes into every frame and score against GT 2D boxes."""
    if not (args.manifest and args.state and args.gt_boxes2d_dir):
        raise dataio.FormatError(
            "--manifest, --state and --gt-boxes2d-dir are required in 2d mode"
        )
    manifest = dataio.read_manifest(args.manifest)
    pipe = OnlinePipeline.load_state(args.state)
    members = [pipe.store.positions[box.contains(pipe.store.positions)] for box in pred]

    gt_scenes = []
    out_scenes = []
    names = []
    K = manifest.intrinsics  # GT 2D boxes live in native pixel coordinates
    for record in dataio.SequenceReader(manifest):
        stem = f"{record.index:06d}"
        gt_path = os.path.join(args.gt_boxes2d_dir, stem + ".csv")
        if not os.path.exists(gt_path):
            continue
        gt_boxes = list(synth.read_gt_boxes2d(gt_path).values())
        pred_boxes = []
        for box, pts in zip(pred, members):
            if pts.shape[0] == 0:
                continue
            b2 = metrics.project_box_to_2d(box, pts, K, record.pose)
            if b2 is not None:
                pred_boxes.append(b2)
        gt_scenes.append(gt_boxes)
        out_scenes.append(pred_boxes)
        names.append(f"frame{record.index:04d}")
    return metrics.evaluate_boxes(gt_scenes, out_scenes, metrics.iou2d, names=names)


# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    if args.preset == "pan":
        spec = synth.tabletop_scene(
            n_objects=args.objects,
            seed=args.seed,
            frames=args.frames,
            width=args.width,
            height=args.height,
            trajectory="pan_floor_to_table",
            depth_sigma=args.depth_sigma,
            missing_prob=args.missing_prob,
            proposal_count=args.proposals,
        )
    else:
        spec = synth.tabletop_scene(
            n_objects=args.objects,
            seed=args.seed,
            frames=args.frames,
            width=args.width,
            height=args.height,
            depth_sigma=args.depth_sigma,
            missing_prob=args.missing_prob,
            proposal_count=args.proposals,
        )
    manifest_path = synth.write_sequence(spec, args.out)
    print(f"wrote {spec.frame_count} frames to {manifest_path}")
    return 0


# ---------------------------------------------------------------------------


def cmd_debug_heatmap(args) -> int:
    cfg = _config_from_args(args)
    manifest = dataio.read_manifest(args.manifest)
    record = None
    for rec in dataio.SequenceReader(manifest):
        if rec.index == args.frame:
            record = rec
            break
    if record is None:
        raise dataio.SequenceError(f"frame {args.frame} not found in sequence")
    os.makedirs(args.out, exist_ok=True)

    color, depth, proposals = downsample_frame(record, manifest.intrinsics, cfg.downsample)
    K = (
        manifest.intrinsics.scaled(cfg.downsample)
        if cfg.downsample > 1
        else manifest.intrinsics
    )
    baseline = proposals2d.baseline_heatmap(proposals, K.width, K.height)
    weighted = proposals2d.weighted_heatmap(
        proposals, depth, K, cfg.eps_delta, cfg.eps_min, cfg.eps_max,
        percentiles=cfg.percentiles,
    )
    world_pts, valid = backproject_map(K, record.pose, depth)
    rng = np.random.default_rng([cfg.seed, 211, args.frame])
    est = estimate_support_plane(
        world_pts, valid, weighted,
        iterations=cfg.ransac_iterations, eps_p=cfg.eps_p, top_k=cfg.top_k_planes,
        rng=rng, window=cfg.ransac_window, score_stride=cfg.ransac_score_stride,
        distinct_angle_deg=cfg.plane_distinct_angle_deg,
        distinct_offset=cfg.plane_distinct_offset,
    )
    suppressed = (
        suppress_plane(weighted, est.plane, world_pts, valid, cfg.eps_p)
        if est is not None
        else weighted.copy()
    )

    peak = max(baseline.max(), 1e-12)
    _write_gray(os.path.join(args.out, "heatmap_baseline.png"), baseline / peak)
    _write_gray(os.path.join(args.out, "heatmap_weighted.png"), weighted / peak)
    _write_gray(os.path.join(args.out, "heatmap_suppressed.png"), suppressed / peak)
    overlay = 0.5 * color + 0.5 * dataio.hot_colormap(
        suppressed / max(suppressed.max(), 1e-12)
    ).astype(np.float64) / 255.0
    dataio.write_color_png(os.path.join(args.out, "heatmap_overlay.png"), overlay)
    print(f"wrote heatmap dumps for frame {args.frame} to {args.out}")
    return 0


def _write_gray(path, values):
    arr = np.clip(np.round(values * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)
