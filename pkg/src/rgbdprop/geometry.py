"""Pinhole camera model, rigid transforms, pixel warping and gravity alignment.

Conventions used throughout the package:

- Poses map world coordinates to camera coordinates: ``x_cam = R @ x_world + t``.
- Pixel coordinates are ``(u, v)`` with ``u`` along image columns (x) and
  ``v`` along rows (y); depth images are indexed ``depth[v, u]``.
- Missing depth is encoded as exactly ``0.0`` meters everywhere.
- The world up axis is ``(0, 1, 0)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

UP_AXIS = np.array([0.0, 1.0, 0.0])


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole calibration: focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def scaled(self, factor: int) -> "Intrinsics":
        """Intrinsics of the image downsampled by an integer factor."""
        return Intrinsics(
            fx=self.fx / factor,
            fy=self.fy / factor,
            cx=self.cx / factor,
            cy=self.cy / factor,
            width=self.width // factor,
            height=self.height // factor,
        )


class PoseError(ValueError):
    pass


@dataclass(frozen=True)
class Pose:
    """Rigid world-to-camera transform ``x_cam = R @ x_world + t``."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if R.shape != (3, 3):
            raise PoseError("rotation must be 3x3")
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-9:
            raise PoseError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise PoseError("rotation must have determinant 1")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    @staticmethod
    def from_camera_to_world(R_wc: np.ndarray, center: np.ndarray) -> "Pose":
        """Build from a camera-to-world rotation and the camera center."""
        R_wc = np.asarray(R_wc, dtype=np.float64)
        center = np.asarray(center, dtype=np.float64).reshape(3)
        return Pose(R_wc.T, -R_wc.T @ center)

    @property
    def camera_center(self) -> np.ndarray:
        """Camera origin expressed in world coordinates."""
        return -self.R.T @ self.t

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        """Transform world points (..., 3) into the camera frame."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.R.T + self.t

    def to_world(self, points: np.ndarray) -> np.ndarray:
        """Transform camera-frame points (..., 3) back to world coordinates."""
        pts = np.asarray(points, dtype=np.float64)
        return (pts - self.t) @ self.R


def project(K: Intrinsics, P: Pose, xw: np.ndarray) -> np.ndarray | None:
    """Project one world point to continuous pixel coordinates.

    Returns None when the point is at or behind the camera plane (z <= 0);
    the caller decides whether to drop it.
    """
    xp = P.to_camera(np.asarray(xw, dtype=np.float64).reshape(3))
    z = xp[2]
    if z <= 0.0 or not np.isfinite(z):
        return None
    return np.array([K.fx * xp[0] / z + K.cx, K.fy * xp[1] / z + K.cy])


def project_points(
    K: Intrinsics, P: Pose, points: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Project world points (N, 3) to pixels.

    Returns ``(uv, z)`` where ``uv`` is (N, 2) continuous pixel coordinates and
    ``z`` the camera-frame depths. Entries with ``z <= 0`` hold no meaningful
    pixel; callers mask on the returned depths.
    """
    xp = P.to_camera(points)
    z = xp[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = K.fx * xp[:, 0] / z + K.cx
        v = K.fy * xp[:, 1] / z + K.cy
    return np.stack([u, v], axis=1), z


def backproject(K: Intrinsics, P: Pose, xc: np.ndarray, z: float) -> np.ndarray:
    """Lift a pixel with metric depth to a world point.

    Raises ValueError on invalid depth (z <= 0 encodes missing measurements).
    """
    if not np.isfinite(z) or z <= 0.0:
        raise ValueError(f"invalid depth {z!r}")
    u, v = float(xc[0]), float(xc[1])
    xp = np.array([z * (u - K.cx) / K.fx, z * (v - K.cy) / K.fy, z])
    return P.to_world(xp)


def backproject_map(
    K: Intrinsics, P: Pose, depth: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Backproject a full depth image.

    Returns ``(points, valid)`` where ``points`` is (H, W, 3) world coordinates
    and ``valid`` marks pixels with positive finite depth. Invalid pixels carry
    zeros.
    """
    h, w = depth.shape
    valid = np.isfinite(depth) & (depth > 0.0)
    u = np.arange(w, dtype=np.float64)
    v = np.arange(h, dtype=np.float64)
    uu, vv = np.meshgrid(u, v)
    z = np.where(valid, depth, 0.0)
    xp = np.empty((h, w, 3))
    xp[..., 0] = z * (uu - K.cx) / K.fx
    xp[..., 1] = z * (vv - K.cy) / K.fy
    xp[..., 2] = z
    points = P.to_world(xp.reshape(-1, 3)).reshape(h, w, 3)
    points[~valid] = 0.0
    return points, valid


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest integer with halves away from zero (fixed tie rule)."""
    x = np.asarray(x)
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def warp_pixel(
    K: Intrinsics,
    P_prev: Pose,
    P_cur: Pose,
    xc_prev: np.ndarray,
    z_prev: float,
) -> tuple[tuple[int, int], float] | None:
    """Warp an integer pixel from a previous view into the current view.

    Returns ``((u, v), z_cur)`` with the pixel rounded to the nearest integer
    and the depth of the warped point in the current camera frame, or None when
    the point lands behind the camera or outside the image.
    """
    xw = backproject(K, P_prev, xc_prev, z_prev)
    xp_cur = P_cur.to_camera(xw)
    z = xp_cur[2]
    if z <= 0.0:
        return None
    u = K.fx * xp_cur[0] / z + K.cx
    v = K.fy * xp_cur[1] / z + K.cy
    ui = int(round_half_away(u))
    vi = int(round_half_away(v))
    if not (0 <= ui < K.width and 0 <= vi < K.height):
        return None
    return (ui, vi), float(z)


def skew(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric cross-product matrix of a 3-vector."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_to_gravity(nc: np.ndarray) -> np.ndarray:
    """Rotation aligning a unit normal with the world up axis (0, 1, 0).

    Built from the cross product of the two directions; the (1-c)/s^2 factor
    is evaluated as 1/(1+c), which is singular only for the antipodal input.
    That case returns the 180-degree rotation about the x axis.
    """
    nc = np.asarray(nc, dtype=np.float64).reshape(3)
    if abs(np.linalg.norm(nc) - 1.0) > 1e-6:
        raise ValueError("normal must be a unit vector")
    c = float(nc @ UP_AXIS)
    if c <= -1.0 + 1e-12:
        return np.diag([1.0, -1.0, -1.0])
    v = np.cross(nc, UP_AXIS)
    vx = skew(v)
    return np.eye(3) + vx + (vx @ vx) / (1.0 + c)
