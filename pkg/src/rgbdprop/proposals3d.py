"""From the fused 3D heatmap to ranked points, clusters and 3D boxes.

Points surviving a frequency floor are ranked by pseudo-average confidence
c / (f + tau); residual supporting-plane points are stripped using the plane
history; the survivors are clustered with DBSCAN; each cluster gets a tight
gravity-aligned box; intersecting boxes merge; tiny boxes are culled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .fusion import GlobalHeatmap3D
from .geometry import UP_AXIS, rotation_to_gravity
from .plane import KeyframePlane, Plane

NOISE = -1


def frequency_floor(total_frames: int) -> int:
    """Minimum observation count to keep a point: min(5, ceil(5% of frames))."""
    return min(5, math.ceil(0.05 * total_frames))


def frequency_filter(store: GlobalHeatmap3D, total_frames: int) -> np.ndarray:
    """Indices of points seen at least the floor number of times."""
    return np.flatnonzero(store.frequency >= frequency_floor(total_frames))


def pseudo_average(conf: np.ndarray, freq: np.ndarray, tau: float) -> np.ndarray:
    return conf / (freq + tau)


@dataclass(frozen=True)
class RankedCloud:
    """Selected global point indices with their pseudo-average scores."""

    indices: np.ndarray
    scores: np.ndarray


def rank_points(
    store: GlobalHeatmap3D,
    tau: float,
    eps: float,
    candidates: np.ndarray | None = None,
) -> RankedCloud:
    """Keep candidate points whose pseudo-average confidence reaches ``eps``."""
    if candidates is None:
        candidates = np.arange(len(store), dtype=np.int64)
    scores = pseudo_average(
        store.confidence[candidates], store.frequency[candidates], tau
    )
    keep = scores >= eps
    return RankedCloud(candidates[keep], scores[keep])


@dataclass
class PlaneGroup:
    members: list[KeyframePlane] = field(default_factory=list)
    representative: Plane | None = None

    @property
    def heat(self) -> float:
        return sum(m.heat for m in self.members)

    def refit(self) -> Plane:
        """Representative plane: mean of member parameters, renormalized."""
        normals = np.stack([m.plane.canonical().n for m in self.members])
        offsets = np.array([m.plane.canonical().b for m in self.members])
        n = normals.mean(axis=0)
        n = n / np.linalg.norm(n)
        return Plane(n, float(offsets.mean()))


def group_planes(
    entries: list[KeyframePlane],
    angle_deg: float = 10.0,
    offset: float = 0.05,
) -> list[PlaneGroup]:
    """Group keyframe planes by parameter proximity.

    Planes join the first existing group whose current representative is
    within ``angle_deg`` of their normal and ``offset`` of their offset;
    otherwise they start a new group. Signs are canonicalized first.
    """
    groups: list[PlaneGroup] = []
    angle_rad = np.deg2rad(angle_deg)
    for entry in entries:
        plane = entry.plane.canonical()
        placed = False
        for g in groups:
            rep = g.representative
            if plane.angle_to(rep) <= angle_rad and abs(plane.b - rep.b) <= offset:
                g.members.append(entry)
                g.representative = g.refit()
                placed = True
                break
        if not placed:
            groups.append(PlaneGroup(members=[entry], representative=plane))
    return groups


@dataclass
class FinalPlaneRemoval:
    indices: np.ndarray
    support_plane: Plane | None
    groups: list[PlaneGroup]
    skipped: bool = False  # empty plane history: nothing was removed


def final_plane_removal(
    positions: np.ndarray,
    ranked: RankedCloud,
    entries: list[KeyframePlane],
    eps_p: float,
    group_angle_deg: float = 10.0,
    group_offset: float = 0.05,
) -> FinalPlaneRemoval:
    """Strip ranked points lying on the supporting plane.

    The keyframe plane history is grouped in parameter space (a rotating
    camera may have tracked the floor before the table); the group with the
    largest accumulated heat history is the supporting plane. Its refit
    representative removes any ranked point passing the inlier test.
    """
    if not entries:
        return FinalPlaneRemoval(ranked.indices, None, [], skipped=True)
    groups = group_planes(entries, group_angle_deg, group_offset)
    support = max(groups, key=lambda g: g.heat)
    plane = support.representative
    dist = np.abs(plane.signed_distance(positions[ranked.indices]))
    keep = dist >= eps_p
    return FinalPlaneRemoval(ranked.indices[keep], plane, groups)


def dbscan(points: np.ndarray, eps_radius: float, min_pts: int) -> np.ndarray:
    """Density-based clustering; returns per-point labels, -1 for noise.

    Core points have at least ``min_pts`` neighbors within ``eps_radius``
    (closed ball, the point itself included). Clusters are grown from core
    points in index order with a FIFO frontier; neighbor queries go through a
    k-d tree, keeping the average case at n log n.
    """
    n = points.shape[0]
    labels = np.full(n, NOISE, dtype=np.int64)
    if n == 0:
        return labels
    tree = cKDTree(points)
    neighbors = tree.query_ball_point(points, eps_radius)
    core = np.array([len(nb) >= min_pts for nb in neighbors])
    visited = np.zeros(n, dtype=bool)
    cluster = 0
    for seed in range(n):
        if visited[seed] or not core[seed]:
            continue
        labels[seed] = cluster
        visited[seed] = True
        frontier = list(neighbors[seed])
        head = 0
        while head < len(frontier):
            j = frontier[head]
            head += 1
            if labels[j] == NOISE:
                labels[j] = cluster
            if visited[j]:
                continue
            visited[j] = True
            if core[j]:
                frontier.extend(neighbors[j])
        cluster += 1
    return labels


@dataclass(eq=False)
class Box3D:
    """Gravity-aligned 3D bounding box.

    ``rotation`` maps gravity-frame coordinates to world coordinates; the
    corners are axis-aligned min/max in the gravity frame.
    """

    rotation: np.ndarray
    min_corner: np.ndarray
    max_corner: np.ndarray
    cluster_size: int = 0

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.min_corner = np.asarray(self.min_corner, dtype=np.float64).reshape(3)
        self.max_corner = np.asarray(self.max_corner, dtype=np.float64).reshape(3)

    @property
    def volume(self) -> float:
        ext = self.max_corner - self.min_corner
        return float(max(ext[0], 0.0) * max(ext[1], 0.0) * max(ext[2], 0.0))

    def corners_world(self) -> np.ndarray:
        """The 8 world-frame corners, ordered by the (x, y, z) min/max bits."""
        corners = np.array(
            [
                [
                    self.max_corner[0] if i & 1 else self.min_corner[0],
                    self.max_corner[1] if i & 2 else self.min_corner[1],
                    self.max_corner[2] if i & 4 else self.min_corner[2],
                ]
                for i in range(8)
            ]
        )
        return corners @ self.rotation.T

    def contains(self, points: np.ndarray, atol: float = 0.0) -> np.ndarray:
        """Inclusive containment test for world points (N, 3)."""
        g = np.asarray(points, dtype=np.float64) @ self.rotation
        return np.all(
            (g >= self.min_corner - atol) & (g <= self.max_corner + atol), axis=1
        )


def fit_box(points: np.ndarray, n_c: np.ndarray = UP_AXIS) -> Box3D:
    """Tight gravity-aligned box around a point cluster.

    Points are rotated so the supporting-plane normal maps to the up axis, the
    axis-aligned extrema are taken there, and the box is carried back to the
    world frame.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] == 0:
        raise ValueError("cannot fit a box to an empty cluster")
    R = rotation_to_gravity(n_c)
    g = pts @ R.T
    return Box3D(R.T, g.min(axis=0), g.max(axis=0), cluster_size=pts.shape[0])


def _overlaps(a: Box3D, b: Box3D) -> bool:
    # Positive overlap volume in the shared gravity frame; touching faces
    # do not count.
    lo = np.maximum(a.min_corner, b.min_corner)
    hi = np.minimum(a.max_corner, b.max_corner)
    return bool(np.all(hi - lo > 0.0))


def merge_boxes(
    boxes: list[Box3D], members: list[np.ndarray] | None = None
) -> tuple[list[Box3D], list[np.ndarray]]:
    """Transitively merge intersecting boxes (all in one gravity frame).

    Returns the merged boxes plus the merged member index sets. The merged box
    of two clusters is the componentwise min/max of their boxes, so no point
    data is needed. Output boxes are pairwise non-intersecting.
    """
    if members is None:
        members = [np.empty(0, dtype=np.int64) for _ in boxes]
    boxes = list(boxes)
    members = [np.asarray(m) for m in members]
    merged = True
    while merged:
        merged = False
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                if _overlaps(boxes[i], boxes[j]):
                    a, b = boxes[i], boxes[j]
                    combined = Box3D(
                        a.rotation,
                        np.minimum(a.min_corner, b.min_corner),
                        np.maximum(a.max_corner, b.max_corner),
                        cluster_size=a.cluster_size + b.cluster_size,
                    )
                    mem = np.concatenate([members[i], members[j]])
                    boxes = [boxes[k] for k in range(len(boxes)) if k not in (i, j)]
                    members = [
                        members[k] for k in range(len(members)) if k not in (i, j)
                    ]
                    boxes.append(combined)
                    members.append(mem)
                    merged = True
                    break
            if merged:
                break
    return boxes, members


def volume_filter(boxes: list[Box3D], min_volume: float = 1e-6) -> list[Box3D]:
    """Keep boxes whose volume reaches ``min_volume`` (boundary inclusive)."""
    return [b for b in boxes if b.volume >= min_volume]
