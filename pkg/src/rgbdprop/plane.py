"""Supporting-plane detection, keyframe tracking and heatmap suppression.

The dominant horizontal surface under the objects (table, floor) is found by
RANSAC over locally sampled pixel triples, candidate planes are ranked by
inlier count, and among the top distinct candidates the one accumulating the
most 2D heat is chosen. Its pixels get zero confidence before fusion. Plane
parameters live in world coordinates, so between keyframes the stored plane
applies directly to any view's backprojected pixels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DegenerateSampleError(ValueError):
    """Raised when three sample points are (near-)collinear."""


@dataclass(frozen=True)
class Plane:
    """Plane n.x + b = 0 with unit normal n."""

    n: np.ndarray
    b: float

    def __post_init__(self):
        n = np.asarray(self.n, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("plane normal must be unit length")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "b", float(self.b))

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.n + self.b

    def canonical(self) -> "Plane":
        """Flip the sign so the normal points along +y when possible.

        The plane (n, b) and (-n, -b) describe the same surface; grouping and
        gravity alignment need one deterministic representative.
        """
        n, b = self.n, self.b
        key = (n[1], n[0], n[2])
        for k in key:
            if k > 0:
                return self
            if k < 0:
                return Plane(-n, -b)
        return self

    def angle_to(self, other: "Plane") -> float:
        """Angle in radians between the two plane orientations (sign-free)."""
        c = abs(float(np.clip(self.n @ other.n, -1.0, 1.0)))
        return float(np.arccos(c))


def fit_plane_3pts(x1: np.ndarray, x2: np.ndarray, x3: np.ndarray) -> Plane:
    """Plane through three points via the normalized cross product."""
    x1 = np.asarray(x1, dtype=np.float64)
    v = np.cross(np.asarray(x2, dtype=np.float64) - x1, np.asarray(x3, dtype=np.float64) - x1)
    norm = np.linalg.norm(v)
    if norm < 1e-12:
        raise DegenerateSampleError("sample points are collinear")
    n = v / norm
    return Plane(n, -float(n @ x1))


def plane_inliers(plane: Plane, points: np.ndarray, eps_p: float) -> np.ndarray:
    """Indices of points with |n.x + b| strictly below ``eps_p``."""
    return np.flatnonzero(np.abs(plane.signed_distance(points)) < eps_p)


def refit_plane_lsq(points: np.ndarray) -> Plane:
    """Total-least-squares plane through a point set (centroid + SVD)."""
    pts = np.asarray(points, dtype=np.float64)
    centroid = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - centroid, full_matrices=False)
    n = vt[-1]
    n = n / np.linalg.norm(n)
    return Plane(n, -float(n @ centroid))


@dataclass(frozen=True)
class PlaneCandidate:
    """RANSAC candidate scored on the pixel subsample."""

    plane: Plane
    inlier_count: int
    heat: float


def _same_plane(a: Plane, b: Plane, angle_rad: float, offset: float) -> bool:
    # Compare with the sign of b flipped to match a's orientation.
    if a.n @ b.n >= 0.0:
        nb, bb = b.n, b.b
    else:
        nb, bb = -b.n, -b.b
    cos = float(np.clip(a.n @ nb, -1.0, 1.0))
    return np.arccos(cos) <= angle_rad and abs(a.b - bb) <= offset


def ransac_top_planes(
    world_pts: np.ndarray,
    valid: np.ndarray,
    heat: np.ndarray,
    iterations: int,
    eps_p: float,
    k: int,
    rng: np.random.Generator,
    window: int = 11,
    score_stride: int = 2,
    distinct_angle_deg: float = 10.0,
    distinct_offset: float = 0.05,
    chunk: int = 512,
) -> list[PlaneCandidate]:
    """Top-k distinct planes by inlier count from locally sampled triples.

    Each iteration draws three pixels from one ``window`` x ``window``
    neighborhood centered on a random valid pixel, fits a plane and counts
    inliers on a stride-subsampled pixel grid. Returns at most ``k`` mutually
    distinct candidates, each carrying the heat accumulated over its subsample
    inliers. Returns an empty list when fewer than three valid pixels exist.
    """
    h, w = valid.shape
    vy, vx = np.nonzero(valid)
    if vy.size < 3:
        return []

    centers = rng.integers(0, vy.size, size=iterations)
    half = window // 2
    offsets = rng.integers(-half, half + 1, size=(iterations, 3, 2))
    py = np.clip(vy[centers][:, None] + offsets[:, :, 0], 0, h - 1)
    px = np.clip(vx[centers][:, None] + offsets[:, :, 1], 0, w - 1)
    ok = valid[py, px].all(axis=1)

    p1 = world_pts[py[:, 0], px[:, 0]]
    p2 = world_pts[py[:, 1], px[:, 1]]
    p3 = world_pts[py[:, 2], px[:, 2]]
    normals = np.cross(p2 - p1, p3 - p1)
    norms = np.linalg.norm(normals, axis=1)
    ok &= norms > 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        normals = normals / norms[:, None]
    offsets_b = -np.einsum("ij,ij->i", normals, p1)
    planes = np.concatenate([normals, offsets_b[:, None]], axis=1)
    planes[~ok] = 0.0  # zero plane has no inliers

    sub_valid = valid[::score_stride, ::score_stride]
    sub_pts = world_pts[::score_stride, ::score_stride][sub_valid]
    sub_heat = heat[::score_stride, ::score_stride][sub_valid]
    hom = np.concatenate([sub_pts, np.ones((sub_pts.shape[0], 1))], axis=1)

    # Hypotheses are shortlisted on a coarser pixel subsample first; the
    # shortlist is then scored exactly on the stride-subsampled grid, which
    # decides the ranking. A plain top-N shortlist would be flooded by
    # duplicates of the dominant plane, so the best coarse representatives of
    # mutually distinct planes are force-included. Scoring runs in float32:
    # the 5 mm threshold sits far above float32 resolution at room scale.
    planes32 = planes.astype(np.float32)
    candidates_idx = np.flatnonzero(ok)
    shortlist = 512
    angle_rad = np.deg2rad(distinct_angle_deg)
    if candidates_idx.size > shortlist and hom.shape[0] > 4000:
        coarse = np.ascontiguousarray(hom[::3].T, dtype=np.float32)
        coarse_counts = np.zeros(iterations, dtype=np.int64)
        for start in range(0, iterations, chunk * 4):
            dist = planes32[start : start + chunk * 4] @ coarse
            np.abs(dist, out=dist)
            coarse_counts[start : start + chunk * 4] = np.count_nonzero(
                dist < eps_p, axis=1
            )
        coarse_counts[~ok] = -1
        order_coarse = np.lexsort((np.arange(iterations), -coarse_counts))
        reps: list[Plane] = []
        rep_idx: list[int] = []
        for idx in order_coarse:
            if coarse_counts[idx] < 3 or len(reps) >= 4 * k:
                break
            plane = Plane(planes[idx, :3], planes[idx, 3])
            if any(_same_plane(plane, r, angle_rad, distinct_offset) for r in reps):
                continue
            reps.append(plane)
            rep_idx.append(idx)
        keep = order_coarse[:shortlist]
        keep = keep[coarse_counts[keep] >= 0]
        candidates_idx = np.unique(np.concatenate([keep, np.array(rep_idx, dtype=np.int64)]))

    hom32 = np.ascontiguousarray(hom.T, dtype=np.float32)
    counts = np.full(iterations, -1, dtype=np.int64)
    for start in range(0, candidates_idx.size, chunk):
        idx = candidates_idx[start : start + chunk]
        dist = planes32[idx] @ hom32
        np.abs(dist, out=dist)
        counts[idx] = np.count_nonzero(dist < eps_p, axis=1)

    order = np.lexsort((np.arange(iterations), -counts))
    selected: list[PlaneCandidate] = []
    for idx in order:
        if counts[idx] < 3:
            break
        plane = Plane(planes[idx, :3], planes[idx, 3])
        if any(_same_plane(plane, c.plane, angle_rad, distinct_offset) for c in selected):
            continue
        inl = np.abs(hom @ planes[idx]) < eps_p
        selected.append(
            PlaneCandidate(plane, int(counts[idx]), float(sub_heat[inl].sum()))
        )
        if len(selected) >= k:
            break
    return selected


def select_support_plane(candidates: list[PlaneCandidate]) -> PlaneCandidate:
    """Candidate with the highest accumulated heat; ties fall back to the
    larger inlier count, then the earlier candidate."""
    if not candidates:
        raise ValueError("no plane candidates")
    best = candidates[0]
    for cand in candidates[1:]:
        if cand.heat > best.heat or (
            cand.heat == best.heat and cand.inlier_count > best.inlier_count
        ):
            best = cand
    return best


def suppress_plane(
    heat: np.ndarray,
    plane: Plane,
    world_pts: np.ndarray,
    valid: np.ndarray,
    eps_p: float,
) -> np.ndarray:
    """Zero the heat of every valid pixel whose 3D point lies on the plane.

    Missing-depth pixels are left untouched; no value ever increases.
    """
    out = heat.copy()
    dist = np.abs(world_pts.reshape(-1, 3) @ plane.n + plane.b).reshape(heat.shape)
    out[valid & (dist < eps_p)] = 0.0
    return out


@dataclass(frozen=True)
class SupportPlaneEstimate:
    plane: Plane
    heat: float
    inlier_count: int


def estimate_support_plane(
    world_pts: np.ndarray,
    valid: np.ndarray,
    heat: np.ndarray,
    iterations: int,
    eps_p: float,
    top_k: int,
    rng: np.random.Generator,
    window: int = 11,
    score_stride: int = 2,
    distinct_angle_deg: float = 10.0,
    distinct_offset: float = 0.05,
) -> SupportPlaneEstimate | None:
    """Full single-frame support-plane estimate.

    Runs RANSAC, picks the hottest of the top candidates, then verifies on all
    valid pixels: inliers are recomputed at full resolution and the plane is
    refit to them once by least squares for noise robustness.
    """
    candidates = ransac_top_planes(
        world_pts,
        valid,
        heat,
        iterations,
        eps_p,
        top_k,
        rng,
        window=window,
        score_stride=score_stride,
        distinct_angle_deg=distinct_angle_deg,
        distinct_offset=distinct_offset,
    )
    if not candidates:
        return None
    chosen = select_support_plane(candidates)
    pts = world_pts[valid]
    inl = plane_inliers(chosen.plane, pts, eps_p)
    plane = chosen.plane
    if inl.size >= 3:
        plane = refit_plane_lsq(pts[inl]).canonical()
        inl = plane_inliers(plane, pts, eps_p)
    full_heat = float(heat[valid].reshape(-1)[inl].sum())
    return SupportPlaneEstimate(plane, full_heat, int(inl.size))


@dataclass(frozen=True)
class KeyframePlane:
    frame_index: int
    plane: Plane
    heat: float
    inlier_count: int


@dataclass
class PlaneTracker:
    """Keyframe history of supporting planes.

    The plane is re-estimated on every ``keyframe_interval``-th frame to absorb
    pose drift; in between, the last keyframe plane is reused (world-frame
    parameters apply to any view directly).
    """

    keyframe_interval: int = 10
    entries: list[KeyframePlane] = field(default_factory=list)
    current: Plane | None = None

    def is_keyframe(self, frame_index: int) -> bool:
        return frame_index % self.keyframe_interval == 0

    def update(
        self,
        frame_index: int,
        world_pts: np.ndarray,
        valid: np.ndarray,
        heat: np.ndarray,
        rng: np.random.Generator,
        iterations: int,
        eps_p: float,
        top_k: int,
        window: int = 11,
        score_stride: int = 2,
        distinct_angle_deg: float = 10.0,
        distinct_offset: float = 0.05,
    ) -> Plane | None:
        """Advance the tracker by one frame and return the plane to suppress."""
        if self.is_keyframe(frame_index):
            est = estimate_support_plane(
                world_pts,
                valid,
                heat,
                iterations,
                eps_p,
                top_k,
                rng,
                window=window,
                score_stride=score_stride,
                distinct_angle_deg=distinct_angle_deg,
                distinct_offset=distinct_offset,
            )
            if est is not None:
                self.current = est.plane
                self.entries.append(
                    KeyframePlane(frame_index, est.plane, est.heat, est.inlier_count)
                )
        return self.current
