"""Online pipeline driver: frames in, fused state and 3D boxes out.

Each frame passes through proposal filtering, plane suppression and fusion
strictly in order; the outputs after frame i depend only on frames seen so
far. The whole state (point store, index map, previous-frame cache, plane
history) can be checkpointed and resumed exactly.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import fusion, plane, proposals2d, proposals3d
from .config import PipelineConfig
from .dataio import FrameRecord
from .geometry import UP_AXIS, Intrinsics, backproject_map
from .proposals3d import Box3D

STAGE_KEYS = (
    "preprocess",
    "proposal_filtering",
    "backprojection",
    "plane_removal",
    "warp_match",
    "alloc_confidence_frequency",
    "alloc_location_color",
    "total",
)


def downsample_frame(
    record: FrameRecord, K: Intrinsics, factor: int
) -> tuple[np.ndarray, np.ndarray, list[proposals2d.Proposal2D]]:
    """Reduce a frame by an integer factor.

    Depth picks every factor-th pixel (nearest neighbor preserves metric
    values across discontinuities), color averages factor x factor blocks,
    proposals rescale in pixel units.
    """
    if factor == 1:
        return record.color, record.depth, record.proposals
    h = (record.depth.shape[0] // factor) * factor
    w = (record.depth.shape[1] // factor) * factor
    depth = record.depth[:h:factor, :w:factor]
    color = record.color[:h, :w].reshape(
        h // factor, factor, w // factor, factor, 3
    ).mean(axis=(1, 3))
    width, height = w // factor, h // factor
    props = []
    for p in record.proposals:
        scaled = proposals2d.Proposal2D(
            p.x // factor,
            p.y // factor,
            max(1, round(p.w / factor)),
            max(1, round(p.h / factor)),
            p.c,
        )
        cp = proposals2d.clip_proposal(scaled, width, height)
        if cp is not None:
            props.append(cp)
    return color, depth, props


@dataclass
class FrameOutput:
    frame_index: int
    timings: dict[str, float]
    n_matched: int = 0
    n_inserted: int = 0
    plane_used: bool = False
    heatmap_summary: proposals2d.HeatmapSummary | None = None


@dataclass
class PipelineResult:
    boxes: list[Box3D]
    members: list[np.ndarray]  # global point indices per box
    ranked_indices: np.ndarray
    ranked_scores: np.ndarray
    cleaned_indices: np.ndarray  # ranked minus residual plane points
    cluster_labels: np.ndarray  # dbscan labels over cleaned points
    support_plane: plane.Plane | None
    warnings: list[str] = field(default_factory=list)


class OnlinePipeline:
    """Sequential driver owning the global heatmap and the plane history."""

    def __init__(self, intrinsics: Intrinsics, config: PipelineConfig | None = None):
        self.config = (config or PipelineConfig()).validate()
        self.native_K = intrinsics
        self.K = (
            intrinsics.scaled(self.config.downsample)
            if self.config.downsample > 1
            else intrinsics
        )
        self.store: fusion.GlobalHeatmap3D | None = None
        self.index_map: np.ndarray | None = None
        self._prev: dict[str, np.ndarray] | None = None
        self.tracker = plane.PlaneTracker(self.config.keyframe_interval)
        self.frames_processed = 0

    # ------------------------------------------------------------------
    def process_frame(self, record: FrameRecord) -> FrameOutput:
        cfg = self.config
        timings: dict[str, float] = {}
        t_start = time.perf_counter()

        t0 = time.perf_counter()
        color, depth, proposals = downsample_frame(record, self.native_K, cfg.downsample)
        timings["preprocess"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        summary = proposals2d.HeatmapSummary()
        heat = proposals2d.weighted_heatmap(
            proposals,
            depth,
            self.K,
            cfg.eps_delta,
            cfg.eps_min,
            cfg.eps_max,
            percentiles=cfg.percentiles,
            summary=summary,
        )
        timings["proposal_filtering"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        world_pts, valid = backproject_map(self.K, record.pose, depth)
        timings["backprojection"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        rng = np.random.default_rng([cfg.seed, 211, self.frames_processed])
        support = self.tracker.update(
            self.frames_processed,
            world_pts,
            valid,
            heat,
            rng,
            iterations=cfg.ransac_iterations,
            eps_p=cfg.eps_p,
            top_k=cfg.top_k_planes,
            window=cfg.ransac_window,
            score_stride=cfg.ransac_score_stride,
            distinct_angle_deg=cfg.plane_distinct_angle_deg,
            distinct_offset=cfg.plane_distinct_offset,
        )
        if support is not None:
            heat = plane.suppress_plane(heat, support, world_pts, valid, cfg.eps_p)
        timings["plane_removal"] = time.perf_counter() - t0

        out = FrameOutput(
            frame_index=self.frames_processed,
            timings=timings,
            plane_used=support is not None,
            heatmap_summary=summary,
        )

        if self.store is None:
            t0 = time.perf_counter()
            self.store, self.index_map = fusion.init_global(
                world_pts, valid, color, heat
            )
            timings["warp_match"] = 0.0
            timings["alloc_confidence_frequency"] = 0.0
            timings["alloc_location_color"] = time.perf_counter() - t0
            out.n_inserted = len(self.store)
        else:
            t0 = time.perf_counter()
            match = fusion.warp_match(
                self.K,
                record.pose,
                self._prev["world_pts"],
                self._prev["valid"],
                self._prev["color"],
                depth,
                color,
                cfg.eps_i,
                cfg.eps_z,
            )
            timings["warp_match"] = time.perf_counter() - t0
            n_before = len(self.store)
            self.index_map = fusion.register_frame(
                self.store,
                self.index_map,
                match,
                world_pts,
                valid,
                color,
                heat,
                timings=timings,
            )
            out.n_matched = match.n_matched
            out.n_inserted = len(self.store) - n_before

        self._prev = {"world_pts": world_pts, "valid": valid, "color": color}
        self.frames_processed += 1
        timings["total"] = time.perf_counter() - t_start
        return out

    # ------------------------------------------------------------------
    def finalize(self) -> PipelineResult:
        """Rank, strip residual plane points, cluster and emit merged boxes.

        Pure over the current state; an online caller may invoke it after any
        frame.
        """
        cfg = self.config
        warnings: list[str] = []
        if self.store is None or len(self.store) == 0:
            return PipelineResult(
                [], [], np.empty(0, np.int64), np.empty(0), np.empty(0, np.int64),
                np.empty(0, np.int64), None, ["empty pipeline state"],
            )
        candidates = proposals3d.frequency_filter(self.store, self.frames_processed)
        ranked = proposals3d.rank_points(self.store, cfg.tau, cfg.eps_rank, candidates)
        removal = proposals3d.final_plane_removal(
            self.store.positions,
            ranked,
            self.tracker.entries,
            cfg.eps_p,
            cfg.plane_group_angle_deg,
            cfg.plane_group_offset,
        )
        if removal.skipped:
            warnings.append("no plane history; residual plane removal skipped")
        if removal.support_plane is not None:
            n_c = removal.support_plane.canonical().n
        else:
            n_c = UP_AXIS
            warnings.append("no supporting plane; boxes aligned to world up")

        pts = self.store.positions[removal.indices]
        labels = proposals3d.dbscan(pts, cfg.dbscan_eps, cfg.dbscan_min_pts)
        boxes: list[Box3D] = []
        members: list[np.ndarray] = []
        for cid in range(labels.max() + 1 if labels.size else 0):
            mask = labels == cid
            boxes.append(proposals3d.fit_box(pts[mask], n_c))
            members.append(removal.indices[mask])
        boxes, members = proposals3d.merge_boxes(boxes, members)
        kept = [
            (b, m) for b, m in zip(boxes, members) if b.volume >= cfg.min_box_volume
        ]
        boxes = [b for b, _ in kept]
        members = [m for _, m in kept]
        return PipelineResult(
            boxes=boxes,
            members=members,
            ranked_indices=ranked.indices,
            ranked_scores=ranked.scores,
            cleaned_indices=removal.indices,
            cluster_labels=labels,
            support_plane=removal.support_plane,
            warnings=warnings,
        )

    # ------------------------------------------------------------------
    def save_state(self, path: str):
        """Checkpoint the full state; resuming reproduces a run exactly."""
        if self.store is None:
            store_state = fusion.GlobalHeatmap3D().state_arrays()
            index_map = np.empty((0, 0), dtype=np.int64)
            prev = {
                "world_pts": np.empty((0, 0, 3)),
                "valid": np.empty((0, 0), dtype=bool),
                "color": np.empty((0, 0, 3)),
            }
        else:
            store_state = self.store.state_arrays()
            index_map = self.index_map
            prev = self._prev
        entries = self.tracker.entries
        planes = np.array(
            [[*e.plane.n, e.plane.b] for e in entries], dtype=np.float64
        ).reshape(len(entries), 4)
        current = self.tracker.current
        np.savez_compressed(
            path,
            config=json.dumps(
                {k: getattr(self.config, k) for k in self.config.__dataclass_fields__}
            ),
            intrinsics=np.array(
                [
                    self.native_K.fx,
                    self.native_K.fy,
                    self.native_K.cx,
                    self.native_K.cy,
                    self.native_K.width,
                    self.native_K.height,
                ]
            ),
            frames_processed=np.int64(self.frames_processed),
            index_map=index_map,
            prev_world_pts=prev["world_pts"],
            prev_valid=prev["valid"],
            prev_color=prev["color"],
            track_frames=np.array([e.frame_index for e in entries], dtype=np.int64),
            track_planes=planes,
            track_heat=np.array([e.heat for e in entries]),
            track_inliers=np.array([e.inlier_count for e in entries], dtype=np.int64),
            current_plane=(
                np.array([*current.n, current.b]) if current is not None else np.zeros(0)
            ),
            **store_state,
        )

    @classmethod
    def load_state(cls, path: str) -> "OnlinePipeline":
        data = np.load(path, allow_pickle=False)
        cfg = PipelineConfig(**json.loads(str(data["config"])))
        fx, fy, cx, cy, w, h = data["intrinsics"]
        pipe = cls(Intrinsics(fx, fy, cx, cy, int(w), int(h)), cfg)
        pipe.frames_processed = int(data["frames_processed"])
        if pipe.frames_processed > 0:
            pipe.store = fusion.GlobalHeatmap3D.from_state(
                {
                    k: data[k]
                    for k in ("positions", "colors", "confidence", "frequency", "frame_count")
                }
            )
            pipe.index_map = data["index_map"]
            pipe._prev = {
                "world_pts": data["prev_world_pts"],
                "valid": data["prev_valid"],
                "color": data["prev_color"],
            }
        entries = []
        for i in range(data["track_frames"].shape[0]):
            p = data["track_planes"][i]
            entries.append(
                plane.KeyframePlane(
                    int(data["track_frames"][i]),
                    plane.Plane(p[:3], p[3]),
                    float(data["track_heat"][i]),
                    int(data["track_inliers"][i]),
                )
            )
        pipe.tracker.entries = entries
        cur = data["current_plane"]
        pipe.tracker.current = plane.Plane(cur[:3], cur[3]) if cur.size else None
        return pipe


def run_pipeline(
    frames, intrinsics: Intrinsics, config: PipelineConfig | None = None
) -> tuple[OnlinePipeline, list[FrameOutput], PipelineResult]:
    """Run every frame through a fresh pipeline and finalize."""
    pipe = OnlinePipeline(intrinsics, config)
    outputs = [pipe.process_frame(rec) for rec in frames]
    return pipe, outputs, pipe.finalize()
