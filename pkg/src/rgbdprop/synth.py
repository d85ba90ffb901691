"""Deterministic synthetic RGB-D tabletop sequences with exact ground truth.

Scenes are built from analytic primitives (an infinite floor plane, a solid
table block, axis-aligned boxes and spheres resting on the table) and rendered
by per-pixel ray intersection, so depth, per-pixel labels, poses, 3D ground
truth boxes and a labeled surface point cloud are all exact. A proposal
emitter stands in for a 2D objectness generator: jittered ground-truth boxes
plus distractor boxes with rank-decaying confidence.

World frame: y is up, the floor is y = 0, the table top is y = table_height.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import dataio
from .dataio import FrameRecord
from .geometry import Intrinsics, Pose
from .metrics import EvalBox2D
from .proposals2d import Proposal2D, clip_proposal
from .proposals3d import Box3D

LABEL_EMPTY = 0
LABEL_FLOOR = 1
LABEL_TABLE = 2
LABEL_OBJECT_BASE = 10

PALETTE = np.array(
    [
        [0.85, 0.15, 0.15],
        [0.15, 0.55, 0.85],
        [0.20, 0.75, 0.25],
        [0.90, 0.75, 0.10],
        [0.70, 0.25, 0.75],
        [0.10, 0.75, 0.70],
        [0.95, 0.45, 0.10],
        [0.45, 0.30, 0.85],
    ]
)
FLOOR_COLOR = np.array([0.42, 0.42, 0.42])
TABLE_COLOR = np.array([0.55, 0.38, 0.22])


@dataclass(frozen=True)
class ObjectSpec:
    """One tabletop object: an axis-aligned box or a sphere."""

    kind: str  # "box" | "sphere"
    size: tuple  # box: (sx, sy, sz); sphere: (radius,)
    position: tuple  # (x, z) center on the table top
    color_id: int = 0

    def __post_init__(self):
        if self.kind not in ("box", "sphere"):
            raise ValueError(f"unknown object kind {self.kind!r}")


@dataclass
class SceneSpec:
    seed: int = 0
    width: int = 320
    height: int = 240
    fx: float = 260.0
    fy: float = 260.0
    floor_y: float = 0.0
    table_center: tuple = (0.0, 0.0)  # (x, z)
    table_size: tuple = (1.0, 1.0)  # (x extent, z extent)
    table_height: float = 0.75
    objects: list[ObjectSpec] = field(default_factory=list)
    trajectory: str = "orbit"  # "orbit" | "pan_floor_to_table"
    orbit_radius: float = 1.55
    camera_height: float = 1.9
    angular_span: float = 2.0 * np.pi
    angular_start: float = 0.0
    frame_count: int = 60
    max_depth: float = 10.0
    depth_sigma: float = 0.0
    missing_prob: float = 0.0
    pose_noise_rot: float = 0.0  # radians, off by default
    pose_noise_trans: float = 0.0
    # proposal model
    proposal_count: int = 200
    proposals_per_object: int = 8
    proposal_jitter: float = 2.0  # pixels
    gt_confidence: tuple = (0.65, 1.0)
    distractor_base_confidence: float = 0.3
    distractor_decay: float = 80.0  # rank scale of the confidence decay
    distractor_spread: float = 0.45  # center spread in units of object size
    distractor_uniform_frac: float = 0.05
    distractors_avoid_gt: bool = False
    # ground-truth cloud sampling
    gt_points_per_object: int = 1500
    gt_points_table: int = 1500
    gt_points_floor: int = 1000

    @property
    def cx(self) -> float:
        return (self.width - 1) / 2.0

    @property
    def cy(self) -> float:
        return (self.height - 1) / 2.0

    def intrinsics(self) -> Intrinsics:
        return Intrinsics(self.fx, self.fy, self.cx, self.cy, self.width, self.height)

    def object_label(self, i: int) -> int:
        return LABEL_OBJECT_BASE + i


def _rng(spec: SceneSpec, *salt) -> np.random.Generator:
    return np.random.default_rng([spec.seed, *salt])


def tabletop_scene(
    n_objects: int = 4, seed: int = 0, frames: int = 60, **overrides
) -> SceneSpec:
    """Convenience preset: n objects spread over the table top."""
    rng = np.random.default_rng([seed, 101])
    objects = []
    radius = 0.22
    for i in range(n_objects):
        angle = 2.0 * np.pi * i / n_objects + rng.uniform(-0.15, 0.15)
        px = radius * np.cos(angle)
        pz = radius * np.sin(angle)
        if i % 3 == 2:
            size = (float(rng.uniform(0.04, 0.06)),)
            kind = "sphere"
        else:
            size = tuple(float(rng.uniform(0.08, 0.14)) for _ in range(3))
            kind = "box"
        objects.append(ObjectSpec(kind, size, (float(px), float(pz)), color_id=i))
    return SceneSpec(seed=seed, objects=objects, frame_count=frames, **overrides)


# ---------------------------------------------------------------------------
# camera trajectory


def _look_at(eye: np.ndarray, target: np.ndarray) -> Pose:
    z = target - eye
    z = z / np.linalg.norm(z)
    x = np.cross(z, np.array([0.0, 1.0, 0.0]))
    if np.linalg.norm(x) < 1e-9:  # looking straight up/down
        x = np.cross(z, np.array([0.0, 0.0, 1.0]))
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    R_wc = np.stack([x, y, z], axis=1)
    return Pose.from_camera_to_world(R_wc, eye)


def camera_pose(spec: SceneSpec, frame_index: int) -> Pose:
    """True world-to-camera pose of one frame."""
    tx, tz = spec.table_center
    top = np.array([tx, spec.table_height, tz])
    n = max(spec.frame_count, 1)
    s = frame_index / max(n - 1, 1)
    if spec.trajectory == "orbit":
        angle = spec.angular_start + spec.angular_span * s
        eye = np.array(
            [
                tx + spec.orbit_radius * np.cos(angle),
                spec.camera_height,
                tz + spec.orbit_radius * np.sin(angle),
            ]
        )
        return _look_at(eye, top)
    if spec.trajectory == "pan_floor_to_table":
        # start on bare floor away from the table, settle on the table early
        # enough that most keyframes dwell on it
        eye = np.array([tx + spec.orbit_radius, spec.camera_height, tz])
        ramp = min(1.0, s / 0.25)
        far_floor = np.array([tx + spec.orbit_radius + 2.0, spec.floor_y, tz])
        target = (1.0 - ramp) * far_floor + ramp * top
        return _look_at(eye, target)
    raise ValueError(f"unknown trajectory {spec.trajectory!r}")


def reported_pose(spec: SceneSpec, frame_index: int) -> Pose:
    """The pose handed to the pipeline: the true pose plus optional
    estimation error (the frames themselves always render from the truth)."""
    pose = camera_pose(spec, frame_index)
    if spec.pose_noise_rot <= 0.0 and spec.pose_noise_trans <= 0.0:
        return pose
    rng = _rng(spec, 31, frame_index)
    from scipy.spatial.transform import Rotation

    dr = Rotation.from_rotvec(rng.normal(0.0, spec.pose_noise_rot, size=3)).as_matrix()
    dt = rng.normal(0.0, spec.pose_noise_trans, size=3)
    return Pose(dr @ pose.R, dr @ pose.t + dt)


# ---------------------------------------------------------------------------
# primitives


def _object_bounds(spec: SceneSpec, obj: ObjectSpec) -> tuple[np.ndarray, np.ndarray]:
    x, z = obj.position
    if obj.kind == "box":
        sx, sy, sz = obj.size
        lo = np.array([x - sx / 2, spec.table_height, z - sz / 2])
        hi = np.array([x + sx / 2, spec.table_height + sy, z + sz / 2])
    else:
        (r,) = obj.size
        c = np.array([x, spec.table_height + r, z])
        lo, hi = c - r, c + r
    return lo, hi


def _intersect_box(o, d, lo, hi):
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - o) / d
        t2 = (hi - o) / d
    tmin = np.nanmax(np.minimum(t1, t2), axis=-1)
    tmax = np.nanmin(np.maximum(t1, t2), axis=-1)
    hit = (tmax >= tmin) & (tmax > 1e-9)
    t = np.where(tmin > 1e-9, tmin, tmax)
    t = np.where(hit, t, np.inf)
    return t


def _box_face_shade(points, lo, hi):
    """Shading factor of box surface points: 1 on top/bottom, 0.62 on sides."""
    d = np.stack(
        [
            np.abs(points[:, 0] - lo[0]),
            np.abs(points[:, 0] - hi[0]),
            np.abs(points[:, 1] - lo[1]),
            np.abs(points[:, 1] - hi[1]),
            np.abs(points[:, 2] - lo[2]),
            np.abs(points[:, 2] - hi[2]),
        ],
        axis=-1,
    )
    face = d.argmin(axis=-1)
    return np.where((face == 2) | (face == 3), 1.0, 0.62)


def _intersect_sphere(o, d, center, radius):
    oc = o - center
    a = np.sum(d * d, axis=-1)
    b = 2.0 * np.sum(d * oc, axis=-1)
    c = float(oc @ oc) - radius * radius
    disc = b * b - 4.0 * a * c
    hit = disc >= 0.0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t1 = (-b - sq) / (2.0 * a)
    t2 = (-b + sq) / (2.0 * a)
    t = np.where(t1 > 1e-9, t1, t2)
    return np.where(hit & (t > 1e-9), t, np.inf)


@dataclass
class SynthFrame:
    """Rendered frame plus the exact per-pixel ground truth.

    ``pose`` is the pose reported to consumers (with estimation error when the
    pose-noise knobs are on); ``true_pose`` always matches the rendering.
    """

    index: int
    timestamp: float
    color: np.ndarray
    depth: np.ndarray
    pose: Pose
    true_pose: Pose
    labels: np.ndarray  # per-pixel label before noise


def render_frame(spec: SceneSpec, frame_index: int) -> SynthFrame:
    """Ray-cast one frame: nearest-hit depth, flat shading, exact labels.

    Depth noise and missing-depth dropout are applied after labeling, so the
    label map always reflects the true geometry.
    """
    K = spec.intrinsics()
    pose = camera_pose(spec, frame_index)
    eye = pose.camera_center
    R_wc = pose.R.T

    u = np.arange(spec.width, dtype=np.float64)
    v = np.arange(spec.height, dtype=np.float64)
    uu, vv = np.meshgrid(u, v)
    d_cam = np.stack(
        [(uu - K.cx) / K.fx, (vv - K.cy) / K.fy, np.ones_like(uu)], axis=-1
    )
    d_w = d_cam @ R_wc.T  # ray parameter equals camera-frame depth

    best_t = np.full((spec.height, spec.width), np.inf)
    labels = np.full((spec.height, spec.width), LABEL_EMPTY, dtype=np.int64)

    # floor plane y = floor_y
    dy = d_w[..., 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_floor = (spec.floor_y - eye[1]) / dy
    t_floor = np.where((np.abs(dy) > 1e-12) & (t_floor > 1e-9), t_floor, np.inf)
    closer = t_floor < best_t
    best_t = np.where(closer, t_floor, best_t)
    labels = np.where(closer, LABEL_FLOOR, labels)

    # table block from floor to table top
    tx, tz = spec.table_center
    sx, sz = spec.table_size
    lo = np.array([tx - sx / 2, spec.floor_y, tz - sz / 2])
    hi = np.array([tx + sx / 2, spec.table_height, tz + sz / 2])
    t_table = _intersect_box(eye, d_w, lo, hi)
    closer = t_table < best_t
    best_t = np.where(closer, t_table, best_t)
    labels = np.where(closer, LABEL_TABLE, labels)

    for i, obj in enumerate(spec.objects):
        if obj.kind == "box":
            lo, hi = _object_bounds(spec, obj)
            t_obj = _intersect_box(eye, d_w, lo, hi)
        else:
            (r,) = obj.size
            center = np.array(
                [obj.position[0], spec.table_height + r, obj.position[1]]
            )
            t_obj = _intersect_sphere(eye, d_w, center, r)
        closer = t_obj < best_t
        best_t = np.where(closer, t_obj, best_t)
        labels = np.where(closer, spec.object_label(i), labels)

    beyond = best_t > spec.max_depth
    labels = np.where(beyond, LABEL_EMPTY, labels)
    depth = np.where(beyond, 0.0, best_t)

    # flat shading per surface orientation (light from above): horizontal
    # faces stay at full brightness, vertical faces darken, so different
    # faces of one body are distinguishable like on real furniture
    hit = np.where(depth > 0.0, depth, 1.0)[..., None] * d_w + eye
    shade = np.ones((spec.height, spec.width))
    tx, tz = spec.table_center
    table_lo = np.array([tx - spec.table_size[0] / 2, spec.floor_y, tz - spec.table_size[1] / 2])
    table_hi = np.array([tx + spec.table_size[0] / 2, spec.table_height, tz + spec.table_size[1] / 2])
    mask = labels == LABEL_TABLE
    shade[mask] = _box_face_shade(hit[mask], table_lo, table_hi)
    for i, obj in enumerate(spec.objects):
        mask = labels == spec.object_label(i)
        if not mask.any():
            continue
        if obj.kind == "box":
            lo, hi = _object_bounds(spec, obj)
            shade[mask] = _box_face_shade(hit[mask], lo, hi)
        else:
            (r,) = obj.size
            cy = spec.table_height + r
            shade[mask] = 0.62 + 0.38 * np.abs(hit[mask][:, 1] - cy) / r

    color = np.zeros((spec.height, spec.width, 3))
    color[labels == LABEL_FLOOR] = FLOOR_COLOR
    color[labels == LABEL_TABLE] = TABLE_COLOR
    for i in range(len(spec.objects)):
        color[labels == spec.object_label(i)] = PALETTE[
            spec.objects[i].color_id % len(PALETTE)
        ]
    color *= shade[..., None]

    if spec.depth_sigma > 0.0 or spec.missing_prob > 0.0:
        rng = _rng(spec, 17, frame_index)
        hit = depth > 0.0
        if spec.depth_sigma > 0.0:
            noise = rng.normal(0.0, spec.depth_sigma, size=depth.shape)
            depth = np.where(hit, np.maximum(depth + noise, 1e-4), depth)
        if spec.missing_prob > 0.0:
            drop = rng.uniform(size=depth.shape) < spec.missing_prob
            depth = np.where(drop, 0.0, depth)

    return SynthFrame(
        index=frame_index,
        timestamp=frame_index / 30.0,
        color=color,
        depth=depth,
        pose=reported_pose(spec, frame_index),
        true_pose=pose,
        labels=labels,
    )


# ---------------------------------------------------------------------------
# proposals


def gt_boxes_2d(spec: SceneSpec, labels: np.ndarray, min_pixels: int = 4) -> dict[int, EvalBox2D]:
    """Exact 2D boxes of the visible objects, keyed by object index."""
    out = {}
    for i in range(len(spec.objects)):
        ys, xs = np.nonzero(labels == spec.object_label(i))
        if ys.size < min_pixels:
            continue
        out[i] = EvalBox2D(
            float(xs.min()),
            float(ys.min()),
            float(xs.max() - xs.min() + 1),
            float(ys.max() - ys.min() + 1),
        )
    return out


def _box2d_iou(a: tuple, b: EvalBox2D) -> float:
    ax, ay, aw, ah = a
    ix = min(ax + aw, b.x + b.w) - max(ax, b.x)
    iy = min(ay + ah, b.y + b.h) - max(ay, b.y)
    inter = max(ix, 0.0) * max(iy, 0.0)
    union = aw * ah + b.w * b.h - inter
    return inter / union if union > 0 else 0.0


def emit_proposals(
    spec: SceneSpec,
    frame_index: int,
    labels: np.ndarray,
    count: int | None = None,
) -> list[Proposal2D]:
    """Proposal list for one frame: jittered ground-truth boxes plus
    distractors.

    Ground-truth-derived proposals (a fixed number per visible object) carry
    high confidence and are drawn from a stream independent of the distractor
    stream, so changing ``count`` only adds or removes distractors.
    Distractor confidence decays with rank, mimicking how objectness
    generators order their output; most distractors scatter around scene
    content, a small fraction is uniform.
    """
    if count is None:
        count = spec.proposal_count
    W, H = spec.width, spec.height
    gt = gt_boxes_2d(spec, labels)
    if not gt:
        # featureless views (bare floor or walls) attract few detections
        count = max(8, count // 4)
    rng_gt = _rng(spec, 53, frame_index, 0)
    proposals: list[Proposal2D] = []
    for i in sorted(gt):
        b = gt[i]
        for _ in range(spec.proposals_per_object):
            jx, jy, jw, jh = rng_gt.normal(0.0, spec.proposal_jitter, size=4)
            p = (
                int(round(b.x + jx)),
                int(round(b.y + jy)),
                max(1, int(round(b.w + jw))),
                max(1, int(round(b.h + jh))),
            )
            conf = float(rng_gt.uniform(*spec.gt_confidence))
            cp = clip_proposal(Proposal2D(p[0], p[1], p[2], p[3], conf), W, H)
            if cp is not None:
                proposals.append(cp)
            if len(proposals) >= count:
                return proposals

    rng_d = _rng(spec, 53, frame_index, 1)
    rank = 0
    attempts = 0
    max_attempts = 80 * max(count, 1)
    while len(proposals) < count and attempts < max_attempts:
        attempts += 1
        uniform = (not gt) or (rng_d.uniform() < spec.distractor_uniform_frac)
        if uniform:
            w = int(rng_d.integers(2, max(3, W // 3)))
            h = int(rng_d.integers(2, max(3, H // 3)))
            x = int(rng_d.integers(-w // 2, W - w // 2))
            y = int(rng_d.integers(-h // 2, H - h // 2))
        else:
            i = int(rng_d.choice(sorted(gt)))
            b = gt[i]
            scale_w = rng_d.uniform(0.35, 1.5)
            scale_h = rng_d.uniform(0.35, 1.5)
            w = max(2, int(round(b.w * scale_w)))
            h = max(2, int(round(b.h * scale_h)))
            cx = b.x + b.w / 2 + rng_d.normal(0.0, spec.distractor_spread * b.w)
            cy = b.y + b.h / 2 + rng_d.normal(0.0, spec.distractor_spread * b.h)
            x = int(round(cx - w / 2))
            y = int(round(cy - h / 2))
        conf = max(
            1e-4,
            spec.distractor_base_confidence
            * np.exp(-rank / spec.distractor_decay)
            * rng_d.uniform(0.6, 1.0),
        )
        cp = clip_proposal(Proposal2D(x, y, w, h, float(conf)), W, H)
        if cp is None:
            continue
        if spec.distractors_avoid_gt and any(
            _box2d_iou((cp.x, cp.y, cp.w, cp.h), b) > 0.0 for b in gt.values()
        ):
            continue
        proposals.append(cp)
        rank += 1
    return proposals


# ---------------------------------------------------------------------------
# ground truth


def gt_boxes_3d(spec: SceneSpec) -> list[Box3D]:
    """Exact gravity-aligned box per object (identity gravity rotation)."""
    boxes = []
    for obj in spec.objects:
        lo, hi = _object_bounds(spec, obj)
        boxes.append(Box3D(np.eye(3), lo, hi, cluster_size=0))
    return boxes


def _sample_box_surface(rng, lo, hi, n, skip_bottom=True):
    ext = hi - lo
    # face order: x-, x+, y-, y+, z-, z+
    areas = np.array(
        [
            ext[1] * ext[2],
            ext[1] * ext[2],
            ext[0] * ext[2],
            ext[0] * ext[2],
            ext[0] * ext[1],
            ext[0] * ext[1],
        ]
    )
    if skip_bottom:
        areas[2] = 0.0  # the resting face is unobservable
    probs = areas / areas.sum()
    faces = rng.choice(6, size=n, p=probs)
    pts = lo + rng.uniform(size=(n, 3)) * ext
    for f, axis, value in ((0, 0, lo[0]), (1, 0, hi[0]), (2, 1, lo[1]),
                           (3, 1, hi[1]), (4, 2, lo[2]), (5, 2, hi[2])):
        pts[faces == f, axis] = value
    return pts


def _sample_sphere_surface(rng, center, radius, n):
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return center + radius * d


def emit_ground_truth(spec: SceneSpec) -> tuple[list[Box3D], np.ndarray, np.ndarray]:
    """GT boxes plus a labeled point cloud sampled from primitive surfaces.

    Table points avoid object footprints and floor points avoid the table
    footprint (those regions are unobservable), so the labels partition the
    cloud cleanly.
    """
    rng = _rng(spec, 97)
    points = []
    labels = []
    footprints = []
    for i, obj in enumerate(spec.objects):
        lo, hi = _object_bounds(spec, obj)
        footprints.append((lo, hi))
        if obj.kind == "box":
            pts = _sample_box_surface(rng, lo, hi, spec.gt_points_per_object)
        else:
            (r,) = obj.size
            center = np.array([obj.position[0], spec.table_height + r, obj.position[1]])
            pts = _sample_sphere_surface(rng, center, r, spec.gt_points_per_object)
        points.append(pts)
        labels.append(np.full(pts.shape[0], spec.object_label(i)))

    tx, tz = spec.table_center
    sx, sz = spec.table_size
    table_pts = []
    while len(table_pts) < spec.gt_points_table:
        x = rng.uniform(tx - sx / 2, tx + sx / 2)
        z = rng.uniform(tz - sz / 2, tz + sz / 2)
        if any(lo[0] <= x <= hi[0] and lo[2] <= z <= hi[2] for lo, hi in footprints):
            continue
        table_pts.append([x, spec.table_height, z])
    points.append(np.array(table_pts))
    labels.append(np.full(len(table_pts), LABEL_TABLE))

    floor_pts = []
    while len(floor_pts) < spec.gt_points_floor:
        x = rng.uniform(tx - 2.5, tx + 2.5)
        z = rng.uniform(tz - 2.5, tz + 2.5)
        if abs(x - tx) <= sx / 2 and abs(z - tz) <= sz / 2:
            continue
        floor_pts.append([x, spec.floor_y, z])
    points.append(np.array(floor_pts))
    labels.append(np.full(len(floor_pts), LABEL_FLOOR))

    return gt_boxes_3d(spec), np.concatenate(points), np.concatenate(labels)


# ---------------------------------------------------------------------------
# frame records and on-disk sequences


def make_frame_record(
    spec: SceneSpec, frame_index: int, proposal_count: int | None = None
) -> tuple[FrameRecord, np.ndarray]:
    """In-memory FrameRecord plus the per-pixel label map."""
    frame = render_frame(spec, frame_index)
    proposals = emit_proposals(spec, frame_index, frame.labels, proposal_count)
    record = FrameRecord(
        index=frame_index,
        timestamp=frame.timestamp,
        color=frame.color,
        depth=frame.depth,
        pose=frame.pose,
        proposals=proposals,
    )
    return record, frame.labels


def write_sequence(spec: SceneSpec, out_dir: str, depth_scale: float = 5000.0) -> str:
    """Render and write a full sequence plus ground truth; returns the
    manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    for sub in ("color", "depth", "proposals", "gt_boxes2d"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)

    K = spec.intrinsics()
    dataio.write_intrinsics(os.path.join(out_dir, "intrinsics.txt"), K, depth_scale)

    poses = []
    frame_rows = []
    for i in range(spec.frame_count):
        frame = render_frame(spec, i)
        stem = f"{i:06d}"
        dataio.write_color_png(os.path.join(out_dir, "color", stem + ".png"), frame.color)
        dataio.write_depth_png(
            os.path.join(out_dir, "depth", stem + ".png"), frame.depth, depth_scale
        )
        proposals = emit_proposals(spec, i, frame.labels)
        dataio.write_proposals(
            os.path.join(out_dir, "proposals", stem + ".csv"), proposals
        )
        with open(os.path.join(out_dir, "gt_boxes2d", stem + ".csv"), "w") as fh:
            fh.write("object,x,y,w,h\n")
            for obj_i, b in sorted(gt_boxes_2d(spec, frame.labels).items()):
                fh.write(f"{obj_i},{b.x!r},{b.y!r},{b.w!r},{b.h!r}\n")
        poses.append((frame.timestamp, frame.pose))
        frame_rows.append((frame.timestamp, f"color/{stem}.png", f"depth/{stem}.png"))

    dataio.write_trajectory(os.path.join(out_dir, "trajectory.txt"), poses)
    with open(os.path.join(out_dir, "frames.csv"), "w") as fh:
        fh.write("timestamp,color,depth\n")
        for ts, cpath, dpath in frame_rows:
            fh.write(f"{ts!r},{cpath},{dpath}\n")

    boxes, gt_points, gt_labels = emit_ground_truth(spec)
    dataio.write_boxes(boxes, os.path.join(out_dir, "gt_boxes.json"))
    with open(os.path.join(out_dir, "gt_points.csv"), "w") as fh:
        fh.write("x,y,z,label\n")
        for p, lab in zip(gt_points, gt_labels):
            fh.write(f"{float(p[0])!r},{float(p[1])!r},{float(p[2])!r},{int(lab)}\n")

    manifest = {
        "name": os.path.basename(os.path.normpath(out_dir)),
        "intrinsics": "intrinsics.txt",
        "trajectory": "trajectory.txt",
        "frames": "frames.csv",
        "proposals_dir": "proposals",
        "pose_tolerance": 0.02,
        "ground_truth": {
            "boxes": "gt_boxes.json",
            "points": "gt_points.csv",
            "boxes2d_dir": "gt_boxes2d",
        },
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    import json

    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest_path


def read_gt_points(path: str) -> tuple[np.ndarray, np.ndarray]:
    """Load the labeled ground-truth cloud written by :func:`write_sequence`."""
    pts = []
    labels = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or (lineno == 1 and line.startswith("x")):
                continue
            parts = line.split(",")
            pts.append([float(parts[0]), float(parts[1]), float(parts[2])])
            labels.append(int(parts[3]))
    return np.array(pts), np.array(labels, dtype=np.int64)


def read_gt_boxes2d(path: str) -> dict[int, EvalBox2D]:
    """Load one frame's exact 2D ground-truth boxes."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or (lineno == 1 and line.startswith("object")):
                continue
            parts = line.split(",")
            out[int(parts[0])] = EvalBox2D(
                float(parts[1]), float(parts[2]), float(parts[3]), float(parts[4])
            )
    return out
