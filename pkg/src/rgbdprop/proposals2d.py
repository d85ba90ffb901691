"""Per-frame 2D objectness heatmaps with depth-based soft and hard filtering.

A frame's proposals are accumulated into a per-pixel confidence map. Each
proposal window covers the half-open pixel range [x, x+w) x [y, y+h). Two
depth-driven filters refine the map: soft filtering masks background pixels
inside a proposal (per-pixel), hard filtering rejects whole proposals whose
metric cross-section is implausibly small or large.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Intrinsics


@dataclass(frozen=True)
class Proposal2D:
    """One 2D box proposal: top-left corner, size and confidence."""

    x: int
    y: int
    w: int
    h: int
    c: float

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError("proposal width and height must be >= 1")
        if self.c < 0:
            raise ValueError("proposal confidence must be >= 0")


def clip_proposal(p: Proposal2D, width: int, height: int) -> Proposal2D | None:
    """Clip a proposal to image bounds; None when nothing remains."""
    x0 = max(p.x, 0)
    y0 = max(p.y, 0)
    x1 = min(p.x + p.w, width)
    y1 = min(p.y + p.h, height)
    if x1 - x0 < 1 or y1 - y0 < 1:
        return None
    if (x0, y0, x1 - x0, y1 - y0) == (p.x, p.y, p.w, p.h):
        return p
    return Proposal2D(x0, y0, x1 - x0, y1 - y0, p.c)


@dataclass(frozen=True)
class ProposalDepthStats:
    """Depth range statistics over the valid pixels of a proposal window."""

    z_min: float
    z_max: float
    z_mu: float
    delta_z: float
    valid_count: int


@dataclass(frozen=True)
class FilterDecision:
    """Outcome of filtering one proposal: keep/reject plus per-pixel mask."""

    hard_accept: bool
    soft_mask: np.ndarray  # bool over the clipped window, True = foreground


def baseline_heatmap(
    proposals: list[Proposal2D], width: int, height: int
) -> np.ndarray:
    """Accumulate raw proposal confidence per pixel via an integral image.

    Each proposal contributes constant work: four corner updates on a
    difference grid followed by one shared 2D prefix sum.
    """
    grid = np.zeros((height + 1, width + 1))
    for p in proposals:
        cp = clip_proposal(p, width, height)
        if cp is None:
            continue
        grid[cp.y, cp.x] += cp.c
        grid[cp.y, cp.x + cp.w] -= cp.c
        grid[cp.y + cp.h, cp.x] -= cp.c
        grid[cp.y + cp.h, cp.x + cp.w] += cp.c
    return np.cumsum(np.cumsum(grid, axis=0), axis=1)[:height, :width]


def _window(image: np.ndarray, p: Proposal2D) -> np.ndarray:
    return image[p.y : p.y + p.h, p.x : p.x + p.w]


def _stats_from_depths(depths: np.ndarray, percentiles=None) -> ProposalDepthStats:
    if depths.size == 0:
        return ProposalDepthStats(0.0, 0.0, 0.0, 0.0, 0)
    if percentiles is not None:
        lo, hi = percentiles
        z_min = float(np.percentile(depths, lo))
        z_max = float(np.percentile(depths, hi))
    else:
        z_min = float(depths.min())
        z_max = float(depths.max())
    z_mu = 0.5 * (z_min + z_max)
    return ProposalDepthStats(z_min, z_max, z_mu, z_max - z_min, int(depths.size))


def depth_stats(
    p: Proposal2D, depth: np.ndarray, percentiles: tuple[float, float] | None = None
) -> ProposalDepthStats:
    """Min/max/mid depth over the valid (nonzero) pixels of the window.

    ``percentiles`` optionally replaces the exact min/max with a percentile
    clamp for noisy sensors (off by default).
    """
    win = _window(depth, p)
    return _stats_from_depths(win[win > 0.0], percentiles)


def soft_filter(
    p: Proposal2D,
    depth: np.ndarray,
    stats: ProposalDepthStats,
    eps_delta: float,
) -> np.ndarray:
    """Foreground mask over the proposal window.

    A pixel is masked as background exactly when its depth exceeds the window
    mid-depth and the window's depth span exceeds ``eps_delta``. Missing-depth
    pixels stay foreground (they cannot be backprojected later anyway).
    """
    win = _window(depth, p)
    if stats.valid_count == 0 or stats.delta_z <= eps_delta:
        return np.ones(win.shape, dtype=bool)
    return ~(win > stats.z_mu)


def foreground_depth_stats(
    p: Proposal2D,
    depth: np.ndarray,
    soft_mask: np.ndarray,
    percentiles: tuple[float, float] | None = None,
) -> ProposalDepthStats:
    """Depth stats restricted to foreground pixels of the soft mask."""
    win = _window(depth, p)
    return _stats_from_depths(win[soft_mask & (win > 0.0)], percentiles)


def hard_filter(
    p: Proposal2D,
    fg_stats: ProposalDepthStats,
    K: Intrinsics,
    eps_min: float,
    eps_max: float,
) -> bool:
    """Accept or reject a proposal by its estimated metric cross-section.

    The extent along each image axis is the pixel size scaled by the
    foreground mid-depth over the focal length. A proposal is rejected only
    when both extents fall below ``eps_min`` or both exceed ``eps_max``; a
    3 m x 1 cm stick stays accepted. Windows without any depth are rejected.
    """
    if fg_stats.valid_count == 0:
        return False
    ex = p.w * fg_stats.z_mu / K.fx
    ey = p.h * fg_stats.z_mu / K.fy
    if ex < eps_min and ey < eps_min:
        return False
    if ex > eps_max and ey > eps_max:
        return False
    return True


def filter_proposal(
    p: Proposal2D,
    depth: np.ndarray,
    K: Intrinsics,
    eps_delta: float,
    eps_min: float,
    eps_max: float,
    percentiles: tuple[float, float] | None = None,
) -> FilterDecision:
    """Run soft then hard filtering for one clipped proposal."""
    stats = depth_stats(p, depth, percentiles)
    mask = soft_filter(p, depth, stats, eps_delta)
    fg = foreground_depth_stats(p, depth, mask, percentiles)
    return FilterDecision(hard_filter(p, fg, K, eps_min, eps_max), mask)


@dataclass
class HeatmapSummary:
    total: int = 0
    clipped: int = 0
    hard_rejected: int = 0
    soft_filtered: int = 0  # accepted proposals with at least one masked pixel


def weighted_heatmap(
    proposals: list[Proposal2D],
    depth: np.ndarray,
    K: Intrinsics,
    eps_delta: float,
    eps_min: float,
    eps_max: float,
    percentiles: tuple[float, float] | None = None,
    summary: HeatmapSummary | None = None,
) -> np.ndarray:
    """Depth-filtered confidence map: hard-rejected proposals contribute
    nothing, background pixels of the rest are zeroed, remaining pixels
    accumulate the proposal confidence.

    Equals :func:`baseline_heatmap` when every proposal passes both filters
    untouched.
    """
    height, width = depth.shape
    heat = np.zeros((height, width))
    for p in proposals:
        cp = clip_proposal(p, width, height)
        if summary is not None:
            summary.total += 1
            if cp is not p:
                summary.clipped += 1
        if cp is None:
            continue
        decision = filter_proposal(cp, depth, K, eps_delta, eps_min, eps_max, percentiles)
        if not decision.hard_accept:
            if summary is not None:
                summary.hard_rejected += 1
            continue
        if summary is not None and not decision.soft_mask.all():
            summary.soft_filtered += 1
        _window(heat, cp)[decision.soft_mask] += cp.c
    return heat


def _iou_xywh(a: Proposal2D, b: Proposal2D) -> float:
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.w * a.h + b.w * b.h - inter)


def nms_debug(
    proposals: list[Proposal2D], overlap: float = 0.10
) -> list[Proposal2D]:
    """Greedy suppression for display: keep by descending confidence, drop any
    proposal whose IoU with an already kept one exceeds ``overlap``."""
    order = sorted(range(len(proposals)), key=lambda i: (-proposals[i].c, i))
    kept: list[Proposal2D] = []
    for i in order:
        p = proposals[i]
        if all(_iou_xywh(p, q) <= overlap for q in kept):
            kept.append(p)
    return kept
