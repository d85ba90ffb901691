"""Evaluation: 2D/3D IoU, detection and success rates, point-level PR.

Detection rate scores each ground-truth box by its best-matching output
(an average-recall analogue); success rate scores each output box by its best
ground truth, so redundant proposals are penalized. Point-level precision and
recall count labeled points of interest captured inside output boxes.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import Intrinsics, Pose
from .proposals3d import Box3D


@dataclass(frozen=True)
class EvalBox2D:
    """Pixel-aligned 2D box [x, x+w) x [y, y+h)."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise ValueError("box size must be non-negative")


def iou2d(a: EvalBox2D, b: EvalBox2D) -> float:
    """Intersection over union of two 2D boxes; 0 for an empty union."""
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    inter = max(ix, 0.0) * max(iy, 0.0)
    union = a.w * a.h + b.w * b.h - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def _gravity_aligned_extents(box: Box3D, rotation: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Express a box in another gravity frame via the AABB of its corners.
    corners = box.corners_world() @ rotation
    return corners.min(axis=0), corners.max(axis=0)


def iou3d(a: Box3D, b: Box3D) -> float:
    """Axis-aligned volume IoU of two boxes sharing a gravity frame.

    When the two gravity frames differ, the second box is re-expressed in the
    first one through the axis-aligned hull of its corners (exact for equal
    frames, a tight approximation for nearly equal ones).
    """
    if np.allclose(a.rotation, b.rotation, atol=1e-9):
        lo_b, hi_b = b.min_corner, b.max_corner
    else:
        lo_b, hi_b = _gravity_aligned_extents(b, a.rotation)
    lo = np.maximum(a.min_corner, lo_b)
    hi = np.minimum(a.max_corner, hi_b)
    inter = float(np.prod(np.maximum(hi - lo, 0.0)))
    vol_b = float(np.prod(np.maximum(hi_b - lo_b, 0.0)))
    union = a.volume + vol_b - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def best_iou_per_gt(gt: list, outputs: list, iou_fn) -> np.ndarray:
    """For each ground-truth box, the best IoU over all outputs."""
    return np.array(
        [max((iou_fn(g, o) for o in outputs), default=0.0) for g in gt]
    )


def best_iou_per_output(gt: list, outputs: list, iou_fn) -> np.ndarray:
    """For each output box, the best IoU over all ground truths (modified IoU)."""
    return np.array(
        [max((iou_fn(g, o) for g in gt), default=0.0) for o in outputs]
    )


def detection_rate(
    gt_scenes: list[list],
    output_scenes: list[list],
    threshold: float = 0.5,
    iou_fn=iou2d,
) -> float:
    """Fraction of ground-truth boxes matched at the IoU threshold, averaged
    per scene then over scenes. Scenes without ground truth are skipped."""
    rates = []
    for gt, outs in zip(gt_scenes, output_scenes):
        if len(gt) == 0:
            warnings.warn("scene without ground truth skipped in detection rate")
            continue
        rates.append(float(np.mean(best_iou_per_gt(gt, outs, iou_fn) >= threshold)))
    return float(np.mean(rates)) if rates else 0.0


def success_rate(
    gt_scenes: list[list],
    output_scenes: list[list],
    threshold: float = 0.5,
    iou_fn=iou2d,
) -> float:
    """Fraction of output boxes matching some ground truth at the threshold,
    averaged per scene then over scenes. Scenes without outputs are skipped."""
    rates = []
    for gt, outs in zip(gt_scenes, output_scenes):
        if len(outs) == 0:
            warnings.warn("scene without outputs skipped in success rate")
            continue
        rates.append(
            float(np.mean(best_iou_per_output(gt, outs, iou_fn) >= threshold))
        )
    return float(np.mean(rates)) if rates else 0.0


@dataclass(frozen=True)
class PointPR:
    """Point-level precision/recall of boxes against a labeled cloud."""

    ap: float
    ar: float | None
    tp: int
    fp: int
    n_interest: int
    empty_boxes: bool = False  # no labeled point fell inside any box


def point_pr(
    points: np.ndarray,
    is_interest: np.ndarray,
    boxes: list[Box3D],
) -> PointPR:
    """Count labeled points captured by the boxes (each point counts once).

    Points of interest inside any box are true positives, redundant points
    inside any box are false positives. Precision of an empty capture set is
    reported as 0 with a flag; recall is undefined without interest points.
    """
    points = np.asarray(points, dtype=np.float64)
    is_interest = np.asarray(is_interest, dtype=bool)
    inside = np.zeros(points.shape[0], dtype=bool)
    for box in boxes:
        inside |= box.contains(points)
    tp = int(np.count_nonzero(inside & is_interest))
    fp = int(np.count_nonzero(inside & ~is_interest))
    n_interest = int(np.count_nonzero(is_interest))
    ap = tp / (tp + fp) if (tp + fp) > 0 else 0.0
    ar = tp / n_interest if n_interest > 0 else None
    return PointPR(ap, ar, tp, fp, n_interest, empty_boxes=(tp + fp) == 0)


def f_measure(ap: float, ar: float) -> float:
    """Harmonic mean of precision and recall; 0 when both vanish."""
    if ap < 0 or ar < 0:
        raise ValueError("precision and recall must be non-negative")
    if ap + ar == 0.0:
        return 0.0
    return 2.0 * ap * ar / (ap + ar)


def project_box_to_2d(
    box: Box3D,
    member_points: np.ndarray,
    K: Intrinsics,
    pose: Pose,
) -> EvalBox2D | None:
    """Tight pixel box around the projections of a box's member points.

    Only points projecting in front of the camera and inside the image count;
    returns None when nothing is visible in this view.
    """
    from .geometry import project_points

    uv, z = project_points(K, pose, np.asarray(member_points, dtype=np.float64))
    ok = (
        (z > 0.0)
        & (uv[:, 0] >= 0.0)
        & (uv[:, 0] < K.width)
        & (uv[:, 1] >= 0.0)
        & (uv[:, 1] < K.height)
    )
    if not ok.any():
        return None
    u, v = uv[ok, 0], uv[ok, 1]
    x0 = float(np.floor(u.min()))
    y0 = float(np.floor(v.min()))
    x1 = float(np.floor(u.max()))
    y1 = float(np.floor(v.max()))
    return EvalBox2D(x0, y0, x1 - x0 + 1.0, y1 - y0 + 1.0)


@dataclass
class EvalReport:
    """Per-scene and aggregate evaluation results for one mode."""

    mode: str
    scenes: list[dict] = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "mode": self.mode,
                "scenes": self.scenes,
                "aggregate": self.aggregate,
                "warnings": self.warnings,
            },
            indent=2,
        )

    def format_table(self) -> str:
        """Plain-text table of the aggregate row plus one row per scene."""
        if not self.scenes:
            return "(empty report)"
        cols = [k for k in self.scenes[0] if k != "name"]
        header = ["scene"] + cols
        rows = []
        for s in self.scenes:
            rows.append([str(s.get("name", "?"))] + [_fmt(s.get(c)) for c in cols])
        rows.append(["ALL"] + [_fmt(self.aggregate.get(c)) for c in cols])
        widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
        lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
        lines.append("  ".join("-" * w for w in widths))
        for r in rows:
            lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)))
        return "\n".join(lines)


def _fmt(v) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def evaluate_boxes(
    gt_scenes: list[list],
    output_scenes: list[list],
    iou_fn,
    names: list[str] | None = None,
    threshold: float = 0.5,
) -> EvalReport:
    """Scene-wise IoU / modified IoU / SR / DR report over box lists."""
    mode = "3d" if iou_fn is iou3d else "2d"
    report = EvalReport(mode=mode)
    per_scene = []
    for i, (gt, outs) in enumerate(zip(gt_scenes, output_scenes)):
        name = names[i] if names else f"scene{i:03d}"
        per_gt = best_iou_per_gt(gt, outs, iou_fn)
        per_out = best_iou_per_output(gt, outs, iou_fn)
        scene = {
            "name": name,
            "n_gt": len(gt),
            "n_out": len(outs),
            "iou": float(per_gt.mean()) if len(gt) else None,
            "iou_o": float(per_out.mean()) if len(outs) else None,
            "dr": float(np.mean(per_gt >= threshold)) if len(gt) else None,
            "sr": float(np.mean(per_out >= threshold)) if len(outs) else None,
        }
        if not len(gt):
            report.warnings.append(f"{name}: no ground truth, DR skipped")
        if not len(outs):
            report.warnings.append(f"{name}: no outputs, SR skipped")
        per_scene.append(scene)
    report.scenes = per_scene
    for key in ("iou", "iou_o", "dr", "sr"):
        vals = [s[key] for s in per_scene if s[key] is not None]
        report.aggregate[key] = float(np.mean(vals)) if vals else None
    report.aggregate["n_gt"] = sum(s["n_gt"] for s in per_scene)
    report.aggregate["n_out"] = sum(s["n_out"] for s in per_scene)
    return report


def evaluate_points(
    points: np.ndarray,
    is_interest: np.ndarray,
    boxes: list[Box3D],
    name: str = "scene000",
) -> EvalReport:
    """Point-level PR report (precision, recall, F-measure) for one scene."""
    pr = point_pr(points, is_interest, boxes)
    report = EvalReport(mode="points")
    scene = {
        "name": name,
        "tp": pr.tp,
        "fp": pr.fp,
        "n_interest": pr.n_interest,
        "ap": pr.ap,
        "ar": pr.ar,
        "f": f_measure(pr.ap, pr.ar) if pr.ar is not None else None,
    }
    if pr.empty_boxes:
        report.warnings.append(f"{name}: no labeled point inside any box")
    if pr.ar is None:
        report.warnings.append(f"{name}: no points of interest, recall undefined")
    report.scenes = [scene]
    report.aggregate = {k: v for k, v in scene.items() if k != "name"}
    return report
