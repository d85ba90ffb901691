"""Global 3D heatmap maintained across frames by image warping.

Every global point stores position, color, accumulated confidence and an
observation counter. A per-pixel index map links the current frame to the
global store; it is carried from frame to frame by warping the previous
frame's pixels into the current view and matching on color and depth
consistency. Matched pixels update their global point, unmatched valid pixels
insert new ones. All commits happen in row-major pixel order, so a run is
deterministic.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .geometry import Intrinsics, Pose, round_half_away

INDEX_NONE = -1


class GlobalHeatmap3D:
    """Growable store of fused 3D points: [x, y, z, r, g, b, c, f]."""

    def __init__(self, capacity: int = 1024):
        self._pos = np.zeros((capacity, 3))
        self._rgb = np.zeros((capacity, 3))
        self._conf = np.zeros(capacity)
        self._freq = np.zeros(capacity, dtype=np.int64)
        self._n = 0
        self.frame_count = 0

    def __len__(self) -> int:
        return self._n

    @property
    def positions(self) -> np.ndarray:
        return self._pos[: self._n]

    @property
    def colors(self) -> np.ndarray:
        return self._rgb[: self._n]

    @property
    def confidence(self) -> np.ndarray:
        return self._conf[: self._n]

    @property
    def frequency(self) -> np.ndarray:
        return self._freq[: self._n]

    def _grow(self, extra: int):
        need = self._n + extra
        if need <= self._pos.shape[0]:
            return
        cap = max(need, 2 * self._pos.shape[0])
        for name in ("_pos", "_rgb", "_conf", "_freq"):
            old = getattr(self, name)
            new = np.zeros((cap,) + old.shape[1:], dtype=old.dtype)
            new[: self._n] = old[: self._n]
            setattr(self, name, new)

    def append(
        self, positions: np.ndarray, colors: np.ndarray, confidence: np.ndarray
    ) -> np.ndarray:
        """Insert new points with unit frequency; returns their indices."""
        n_new = positions.shape[0]
        self._grow(n_new)
        sl = slice(self._n, self._n + n_new)
        self._pos[sl] = positions
        self._rgb[sl] = colors
        self._conf[sl] = confidence
        self._freq[sl] = 1
        self._n += n_new
        return np.arange(sl.start, sl.stop, dtype=np.int64)

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {
            "positions": self.positions.copy(),
            "colors": self.colors.copy(),
            "confidence": self.confidence.copy(),
            "frequency": self.frequency.copy(),
            "frame_count": np.int64(self.frame_count),
        }

    @classmethod
    def from_state(cls, state: dict[str, np.ndarray]) -> "GlobalHeatmap3D":
        store = cls(capacity=max(1024, state["positions"].shape[0]))
        n = state["positions"].shape[0]
        store._pos[:n] = state["positions"]
        store._rgb[:n] = state["colors"]
        store._conf[:n] = state["confidence"]
        store._freq[:n] = state["frequency"]
        store._n = n
        store.frame_count = int(state["frame_count"])
        return store


def init_global(
    world_pts: np.ndarray,
    valid: np.ndarray,
    color: np.ndarray,
    heat: np.ndarray,
) -> tuple[GlobalHeatmap3D, np.ndarray]:
    """Seed the store from the first frame: one point per valid pixel."""
    store = GlobalHeatmap3D()
    index_map = np.full(valid.shape, INDEX_NONE, dtype=np.int64)
    flat = np.flatnonzero(valid)  # row-major
    if flat.size:
        idx = store.append(
            world_pts.reshape(-1, 3)[flat],
            color.reshape(-1, 3)[flat],
            heat.reshape(-1)[flat],
        )
        index_map.reshape(-1)[flat] = idx
    store.frame_count = 1
    return store, index_map


@dataclass
class MatchResult:
    """Per-pixel correspondence from the previous frame into the current one.

    ``prev_flat`` maps each current pixel (row-major flat index) to the flat
    index of its matched previous pixel, or INDEX_NONE.
    """

    prev_flat: np.ndarray
    n_candidates: int
    n_matched: int


def warp_match(
    K: Intrinsics,
    pose_cur: Pose,
    prev_world_pts: np.ndarray,
    prev_valid: np.ndarray,
    prev_color: np.ndarray,
    cur_depth: np.ndarray,
    cur_color: np.ndarray,
    eps_i: float,
    eps_z: float,
) -> MatchResult:
    """Warp previous pixels into the current frame and match them.

    A candidate pair matches when the color difference (Euclidean over RGB in
    [0, 1]) is within ``eps_i`` and the current depth agrees with the warped
    depth within ``eps_z``. When several previous pixels land on one current
    pixel, the smallest warped depth (foreground) wins; remaining ties go to
    the lower previous pixel index.
    """
    h, w = prev_valid.shape
    prev_flat_all = np.flatnonzero(prev_valid)
    out = np.full(h * w, INDEX_NONE, dtype=np.int64)
    if prev_flat_all.size == 0:
        return MatchResult(out.reshape(h, w), 0, 0)

    pts = prev_world_pts.reshape(-1, 3)[prev_flat_all]
    cam = pose_cur.to_camera(pts)
    z = cam[:, 2]
    front = z > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        u = round_half_away(K.fx * cam[:, 0] / z + K.cx)
        v = round_half_away(K.fy * cam[:, 1] / z + K.cy)
    inside = front & (u >= 0) & (u < w) & (v >= 0) & (v < h)

    src = prev_flat_all[inside]
    tgt = (v[inside].astype(np.int64) * w + u[inside].astype(np.int64))
    zwarp = z[inside]

    cur_z = cur_depth.reshape(-1)[tgt]
    dz = np.abs(cur_z - zwarp)
    di = np.linalg.norm(
        cur_color.reshape(-1, 3)[tgt] - prev_color.reshape(-1, 3)[src], axis=1
    )
    good = (cur_z > 0.0) & (dz <= eps_z) & (di <= eps_i)
    src, tgt, zwarp = src[good], tgt[good], zwarp[good]

    if src.size:
        order = np.lexsort((src, zwarp, tgt))
        tgt_sorted = tgt[order]
        first = np.ones(tgt_sorted.size, dtype=bool)
        first[1:] = tgt_sorted[1:] != tgt_sorted[:-1]
        out[tgt_sorted[first]] = src[order][first]
    return MatchResult(out.reshape(h, w), int(inside.sum()), int((out >= 0).sum()))


def register_frame(
    store: GlobalHeatmap3D,
    index_map_prev: np.ndarray,
    match: MatchResult,
    world_pts: np.ndarray,
    valid: np.ndarray,
    color: np.ndarray,
    heat: np.ndarray,
    timings: dict[str, float] | None = None,
) -> np.ndarray:
    """Fold one frame into the global heatmap; returns the new index map.

    Matched pixels accumulate confidence, bump the counter, and pull position
    and color toward the new observation with a frequency-weighted running
    mean. Valid pixels without a match become new points. Pixels without depth
    are ignored entirely.

    When ``timings`` is given, the durations of the confidence/frequency phase
    and of the location/color phase are recorded under
    ``alloc_confidence_frequency`` and ``alloc_location_color``.
    """
    h, w = valid.shape
    index_map = np.full(h * w, INDEX_NONE, dtype=np.int64)
    match_flat = match.prev_flat.reshape(-1)
    cur_flat = np.flatnonzero(valid & (match.prev_flat >= 0))
    idx = index_map_prev.reshape(-1)[match_flat[cur_flat]]
    index_map[cur_flat] = idx

    t0 = time.perf_counter()
    f_old = store._freq[idx].astype(np.float64)
    store._conf[idx] += heat.reshape(-1)[cur_flat]
    store._freq[idx] += 1
    t1 = time.perf_counter()

    denom = (f_old + 1.0)[:, None]
    store._pos[idx] = (store._pos[idx] * f_old[:, None] + world_pts.reshape(-1, 3)[cur_flat]) / denom
    store._rgb[idx] = (store._rgb[idx] * f_old[:, None] + color.reshape(-1, 3)[cur_flat]) / denom

    new_flat = np.flatnonzero(valid & (match.prev_flat < 0))
    if new_flat.size:
        new_idx = store.append(
            world_pts.reshape(-1, 3)[new_flat],
            color.reshape(-1, 3)[new_flat],
            heat.reshape(-1)[new_flat],
        )
        index_map[new_flat] = new_idx
    t2 = time.perf_counter()

    if timings is not None:
        timings["alloc_confidence_frequency"] = timings.get(
            "alloc_confidence_frequency", 0.0
        ) + (t1 - t0)
        timings["alloc_location_color"] = timings.get(
            "alloc_location_color", 0.0
        ) + (t2 - t1)

    store.frame_count += 1
    return index_map.reshape(h, w)
