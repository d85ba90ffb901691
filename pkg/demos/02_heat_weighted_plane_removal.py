"""Why the supporting plane is chosen by heat, not by inlier count.

Builds a frame where the floor covers three times more pixels than the table,
but the table carries the objectness heat. Plain most-inliers RANSAC picks
the floor; weighting candidates by accumulated heat picks the table.

Run:  python3 demos/02_heat_weighted_plane_removal.py
"""

import numpy as np

from rgbdprop.geometry import Intrinsics, Pose, backproject_map
from rgbdprop.plane import ransac_top_planes, select_support_plane

K = Intrinsics(fx=200.0, fy=200.0, cx=79.5, cy=59.5, width=160, height=120)

# fronto-parallel mock-up: left 3/4 "floor" at 2.0 m, right 1/4 "table" at 1.5 m
depth = np.full((120, 160), 2.0)
depth[:, 120:] = 1.5
world_pts, valid = backproject_map(K, Pose.identity(), depth)

# the heatmap concentrates on the table (objects live there)
heat = np.full(valid.shape, 0.2)
heat[:, 120:] = 5.0

candidates = ransac_top_planes(
    world_pts, valid, heat, iterations=10000, eps_p=0.005, k=5,
    rng=np.random.default_rng(0),
)
print("candidates by inlier count:")
for i, c in enumerate(candidates):
    surface = "floor" if abs(abs(c.plane.b) - 2.0) < 0.01 else "table"
    print(
        f"  #{i}: {surface:5s}  inliers {c.inlier_count:6d}  heat {c.heat:9.1f}"
    )

most_inliers = candidates[0]
hottest = select_support_plane(candidates)
print(f"most inliers  -> {'floor' if abs(abs(most_inliers.plane.b) - 2.0) < 0.01 else 'table'}")
print(f"most heat     -> {'floor' if abs(abs(hottest.plane.b) - 2.0) < 0.01 else 'table'}")
print("removing the hottest plane deletes the surface under the objects,")
print("not whichever wall or floor happens to fill the frame")
