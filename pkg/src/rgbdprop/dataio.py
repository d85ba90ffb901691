"""Sequence ingestion and result serialization.

On-disk sequence layout (all paths relative to the manifest's directory):

- ``manifest.json``       sequence description (see :func:`read_manifest`)
- ``intrinsics.txt``      key=value lines: fx, fy, cx, cy, width, height,
                          depth_scale
- ``trajectory.txt``      one camera-to-world pose per line:
                          ``timestamp tx ty tz qx qy qz qw``
- ``frames.csv``          ``timestamp,color,depth`` rows in time order
- ``color/*.png``         8-bit RGB
- ``depth/*.png``         16-bit grayscale, meters = value / depth_scale,
                          0 = missing
- ``proposals/*.csv``     per-frame proposal rows ``x,y,w,h,c``

Results: boxes as JSON, point clouds as binary little-endian PLY, evaluation
reports as JSON.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from scipy.spatial.transform import Rotation

from .geometry import Intrinsics, Pose
from .proposals2d import Proposal2D, clip_proposal
from .proposals3d import Box3D


class SequenceError(RuntimeError):
    """Fatal problem with a sequence on disk."""


class FormatError(ValueError):
    """Malformed file content; the message carries the location."""


# ---------------------------------------------------------------------------
# intrinsics


def read_intrinsics(path: str) -> tuple[Intrinsics, float]:
    """Parse the intrinsics key=value file; returns (intrinsics, depth_scale)."""
    values: dict[str, float] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected key = value")
            key, _, raw = line.partition("=")
            try:
                values[key.strip()] = float(raw.strip())
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: bad number {raw.strip()!r}") from exc
    required = ("fx", "fy", "cx", "cy", "width", "height", "depth_scale")
    missing = [k for k in required if k not in values]
    if missing:
        raise FormatError(f"{path}: missing keys {missing}")
    if values["depth_scale"] <= 0:
        raise FormatError(f"{path}: depth_scale must be positive")
    K = Intrinsics(
        fx=values["fx"],
        fy=values["fy"],
        cx=values["cx"],
        cy=values["cy"],
        width=int(values["width"]),
        height=int(values["height"]),
    )
    return K, values["depth_scale"]


def write_intrinsics(path: str, K: Intrinsics, depth_scale: float):
    with open(path, "w") as fh:
        fh.write(f"fx = {float(K.fx)!r}\n")
        fh.write(f"fy = {float(K.fy)!r}\n")
        fh.write(f"cx = {float(K.cx)!r}\n")
        fh.write(f"cy = {float(K.cy)!r}\n")
        fh.write(f"width = {int(K.width)}\n")
        fh.write(f"height = {int(K.height)}\n")
        fh.write(f"depth_scale = {float(depth_scale)!r}\n")


# ---------------------------------------------------------------------------
# trajectory


def read_trajectory(path: str) -> list[tuple[float, Pose]]:
    """Read camera-to-world poses and return world-to-camera Poses.

    Quaternions are normalized on load. Lines starting with ``#`` are
    comments.
    """
    entries: list[tuple[float, Pose]] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 8:
                raise FormatError(f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: bad number in pose line") from exc
            ts, tx, ty, tz, qx, qy, qz, qw = vals
            q = np.array([qx, qy, qz, qw])
            norm = np.linalg.norm(q)
            if norm < 1e-12:
                raise FormatError(f"{path}:{lineno}: zero quaternion")
            R_wc = Rotation.from_quat(q / norm).as_matrix()
            entries.append((ts, Pose.from_camera_to_world(R_wc, np.array([tx, ty, tz]))))
    entries.sort(key=lambda e: e[0])
    return entries


def write_trajectory(path: str, entries: list[tuple[float, Pose]]):
    """Write world-to-camera Poses as camera-to-world trajectory lines."""
    with open(path, "w") as fh:
        for ts, pose in entries:
            R_wc = pose.R.T
            c = pose.camera_center
            q = [float(v) for v in Rotation.from_matrix(R_wc).as_quat()]
            cells = [float(ts), float(c[0]), float(c[1]), float(c[2]), *q]
            fh.write(" ".join(repr(v) for v in cells) + "\n")


# ---------------------------------------------------------------------------
# images


def write_depth_png(path: str, depth_m: np.ndarray, scale: float):
    raw = np.round(depth_m * scale)
    if np.any(raw > 65535) or np.any(raw < 0):
        raise ValueError("depth out of 16-bit range at the given scale")
    Image.fromarray(raw.astype(np.uint16)).save(path)


def read_depth_png(path: str, scale: float) -> np.ndarray:
    arr = np.asarray(Image.open(path))
    if arr.dtype not in (np.uint16, np.int32, np.uint8):
        raise FormatError(f"{path}: unsupported depth dtype {arr.dtype}")
    return arr.astype(np.float64) / scale


def write_color_png(path: str, color: np.ndarray):
    arr = np.clip(np.round(color * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def read_color_png(path: str) -> np.ndarray:
    img = Image.open(path).convert("RGB")
    return np.asarray(img).astype(np.float64) / 255.0


# ---------------------------------------------------------------------------
# proposals


def read_proposals(path: str, width: int, height: int) -> tuple[list[Proposal2D], int]:
    """Load per-frame proposal rows ``x,y,w,h,c``.

    A header row is allowed. Boxes are clipped to image bounds and the number
    of clipped-or-dropped rows is returned alongside the proposals.
    """
    proposals: list[Proposal2D] = []
    clipped = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if lineno == 1 and parts and not _is_number(parts[0]):
                continue  # header
            if len(parts) != 5:
                raise FormatError(f"{path}:{lineno}: expected 5 columns")
            try:
                x, y, w, h = (int(float(p)) for p in parts[:4])
                c = float(parts[4])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-numeric value") from exc
            if w < 1 or h < 1:
                raise FormatError(f"{path}:{lineno}: non-positive box size")
            if c < 0 or not math.isfinite(c):
                raise FormatError(f"{path}:{lineno}: bad confidence")
            p = Proposal2D(x, y, w, h, c)
            cp = clip_proposal(p, width, height)
            if cp is None:
                clipped += 1
                continue
            if cp is not p:
                clipped += 1
            proposals.append(cp)
    return proposals, clipped


def write_proposals(path: str, proposals: list[Proposal2D]):
    with open(path, "w") as fh:
        fh.write("x,y,w,h,c\n")
        for p in proposals:
            fh.write(f"{p.x},{p.y},{p.w},{p.h},{float(p.c)!r}\n")


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


# ---------------------------------------------------------------------------
# boxes JSON


def write_boxes(boxes: list[Box3D], path: str):
    """Serialize boxes: gravity rotation (row-major), corners, cluster size."""
    payload = {"boxes": [_box_to_dict(i, b) for i, b in enumerate(boxes)]}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _box_to_dict(i: int, b: Box3D) -> dict:
    for name, arr in (
        ("rotation", b.rotation),
        ("min_corner", b.min_corner),
        ("max_corner", b.max_corner),
    ):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"boxes[{i}].{name}: non-finite value")
    return {
        "rotation": [float(v) for v in b.rotation.reshape(-1)],
        "min_corner": [float(v) for v in b.min_corner],
        "max_corner": [float(v) for v in b.max_corner],
        "corners_world": [[float(v) for v in row] for row in b.corners_world()],
        "cluster_size": int(b.cluster_size),
    }


def read_boxes(path: str) -> list[Box3D]:
    """Parse a boxes file, validating shapes and finiteness with field paths."""
    with open(path) as fh:
        payload = json.load(fh)
    if not isinstance(payload, dict) or "boxes" not in payload:
        raise FormatError(f"{path}: expected an object with a 'boxes' array")
    boxes = []
    for i, item in enumerate(payload["boxes"]):
        where = f"{path}: boxes[{i}]"
        rotation = _check_floats(item, "rotation", 9, where)
        lo = _check_floats(item, "min_corner", 3, where)
        hi = _check_floats(item, "max_corner", 3, where)
        size = item.get("cluster_size", 0)
        if not isinstance(size, int) or size < 0:
            raise FormatError(f"{where}.cluster_size: expected a non-negative integer")
        boxes.append(
            Box3D(np.array(rotation).reshape(3, 3), np.array(lo), np.array(hi), size)
        )
    return boxes


def _check_floats(item: dict, key: str, n: int, where: str) -> list[float]:
    if key not in item:
        raise FormatError(f"{where}.{key}: missing")
    vals = item[key]
    if not isinstance(vals, list) or len(vals) != n:
        raise FormatError(f"{where}.{key}: expected {n} numbers")
    out = []
    for j, v in enumerate(vals):
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
            raise FormatError(f"{where}.{key}[{j}]: not a finite number")
        out.append(float(v))
    return out


# ---------------------------------------------------------------------------
# PLY


def hot_colormap(values: np.ndarray) -> np.ndarray:
    """Map values in [0, 1] to a black-red-yellow-white ramp as uint8 RGB."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    r = np.clip(3.0 * v, 0.0, 1.0)
    g = np.clip(3.0 * v - 1.0, 0.0, 1.0)
    b = np.clip(3.0 * v - 2.0, 0.0, 1.0)
    return (np.stack([r, g, b], axis=-1) * 255.0).round().astype(np.uint8)


def export_ply(
    path: str,
    positions: np.ndarray,
    colors: np.ndarray | None = None,
    confidence: np.ndarray | None = None,
):
    """Write a binary little-endian PLY with x, y, z and RGB.

    ``colors`` are floats in [0, 1]; alternatively ``confidence`` values are
    rendered through the hot colormap (the maximum maps to the hottest color).
    """
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    n = positions.shape[0]
    if confidence is not None:
        conf = np.asarray(confidence, dtype=np.float64)
        peak = conf.max() if n and conf.max() > 0 else 1.0
        rgb = hot_colormap(conf / peak)
    elif colors is not None:
        rgb = np.clip(np.round(np.asarray(colors) * 255.0), 0, 255).astype(np.uint8)
    else:
        rgb = np.full((n, 3), 200, dtype=np.uint8)
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {n}\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "property uchar red\n"
        "property uchar green\n"
        "property uchar blue\n"
        "end_header\n"
    )
    rec = np.empty(
        n,
        dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
               ("red", "u1"), ("green", "u1"), ("blue", "u1")],
    )
    rec["x"], rec["y"], rec["z"] = positions.T.astype(np.float32)
    rec["red"], rec["green"], rec["blue"] = rgb.T
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(rec.tobytes())


def read_ply(path: str) -> tuple[np.ndarray, np.ndarray]:
    """Read a PLY written by :func:`export_ply`; returns (positions, rgb)."""
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply\n") or end < 0:
        raise FormatError(f"{path}: not a PLY file")
    header = data[:end].decode("ascii").splitlines()
    if "format binary_little_endian 1.0" not in header:
        raise FormatError(f"{path}: expected binary little-endian PLY")
    n = 0
    for line in header:
        if line.startswith("element vertex"):
            n = int(line.split()[-1])
    rec = np.frombuffer(
        data[end + len(b"end_header\n"):],
        dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
               ("red", "u1"), ("green", "u1"), ("blue", "u1")],
        count=n,
    )
    pos = np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.float64)
    rgb = np.stack([rec["red"], rec["green"], rec["blue"]], axis=1)
    return pos, rgb


# ---------------------------------------------------------------------------
# sequences


@dataclass
class FrameEntry:
    timestamp: float
    color_path: str
    depth_path: str


@dataclass
class SequenceManifest:
    root: str
    name: str
    intrinsics: Intrinsics
    depth_scale: float
    frames: list[FrameEntry]
    trajectory_path: str
    proposals_dir: str | None
    pose_tolerance: float = 0.02
    ground_truth: dict = field(default_factory=dict)


def read_manifest(path: str) -> SequenceManifest:
    root = os.path.dirname(os.path.abspath(path))
    with open(path) as fh:
        data = json.load(fh)
    for key in ("intrinsics", "trajectory", "frames"):
        if key not in data:
            raise FormatError(f"{path}: missing key {key!r}")
    K, depth_scale = read_intrinsics(os.path.join(root, data["intrinsics"]))
    frames = _read_frames_csv(os.path.join(root, data["frames"]))
    if not frames:
        raise SequenceError(f"{path}: frame list is empty")
    return SequenceManifest(
        root=root,
        name=data.get("name", os.path.basename(root)),
        intrinsics=K,
        depth_scale=depth_scale,
        frames=frames,
        trajectory_path=os.path.join(root, data["trajectory"]),
        proposals_dir=(
            os.path.join(root, data["proposals_dir"])
            if data.get("proposals_dir")
            else None
        ),
        pose_tolerance=float(data.get("pose_tolerance", 0.02)),
        ground_truth={
            k: os.path.join(root, v)
            for k, v in data.get("ground_truth", {}).items()
        },
    )


def _read_frames_csv(path: str) -> list[FrameEntry]:
    frames = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if lineno == 1 and not _is_number(parts[0]):
                continue
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: expected timestamp,color,depth")
            frames.append(FrameEntry(float(parts[0]), parts[1], parts[2]))
    frames.sort(key=lambda f: f.timestamp)
    return frames


@dataclass
class FrameRecord:
    """One RGB-D observation ready for the pipeline."""

    index: int
    timestamp: float
    color: np.ndarray  # (H, W, 3) in [0, 1]
    depth: np.ndarray  # (H, W) meters, 0 = missing
    pose: Pose  # world -> camera
    proposals: list[Proposal2D]


@dataclass
class LoadSummary:
    frames_loaded: int = 0
    frames_skipped: int = 0
    proposals_clipped: int = 0
    proposals_missing: int = 0
    messages: list[str] = field(default_factory=list)


class SequenceReader:
    """Iterates a sequence in timestamp order, pairing frames with poses.

    Poses are matched by nearest timestamp; a frame whose nearest pose is
    further than the manifest tolerance is skipped and counted in the
    summary. Missing image files abort with the frame index.
    """

    def __init__(self, manifest: SequenceManifest):
        self.manifest = manifest
        self.summary = LoadSummary()
        self._poses = read_trajectory(manifest.trajectory_path)
        if not self._poses:
            raise SequenceError(f"{manifest.trajectory_path}: no poses")
        self._pose_ts = np.array([ts for ts, _ in self._poses])

    def _nearest_pose(self, ts: float) -> tuple[float, Pose]:
        i = int(np.argmin(np.abs(self._pose_ts - ts)))
        return abs(self._pose_ts[i] - ts), self._poses[i][1]

    def _frame_proposals(self, entry: FrameEntry, index: int) -> list[Proposal2D]:
        if self.manifest.proposals_dir is None:
            return []
        stem = os.path.splitext(os.path.basename(entry.color_path))[0]
        path = os.path.join(self.manifest.proposals_dir, stem + ".csv")
        if not os.path.exists(path):
            self.summary.proposals_missing += 1
            self.summary.messages.append(f"frame {index}: no proposals file {path}")
            return []
        K = self.manifest.intrinsics
        props, clipped = read_proposals(path, K.width, K.height)
        self.summary.proposals_clipped += clipped
        return props

    def __iter__(self):
        m = self.manifest
        for index, entry in enumerate(m.frames):
            gap, pose = self._nearest_pose(entry.timestamp)
            if gap > m.pose_tolerance:
                self.summary.frames_skipped += 1
                self.summary.messages.append(
                    f"frame {index}: nearest pose {gap:.4f}s away, skipped"
                )
                continue
            color_path = os.path.join(m.root, entry.color_path)
            depth_path = os.path.join(m.root, entry.depth_path)
            for p in (color_path, depth_path):
                if not os.path.exists(p):
                    raise SequenceError(f"frame {index}: missing file {p}")
            record = FrameRecord(
                index=index,
                timestamp=entry.timestamp,
                color=read_color_png(color_path),
                depth=read_depth_png(depth_path, m.depth_scale),
                pose=pose,
                proposals=self._frame_proposals(entry, index),
            )
            self.summary.frames_loaded += 1
            yield record


def write_eval_report(report, path: str):
    with open(path, "w") as fh:
        fh.write(report.to_json())
        fh.write("\n")
