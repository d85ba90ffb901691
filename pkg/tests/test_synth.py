import numpy as np
import pytest

from rgbdprop.geometry import backproject_map
from rgbdprop.synth import (
    LABEL_FLOOR,
    LABEL_OBJECT_BASE,
    LABEL_TABLE,
    ObjectSpec,
    SceneSpec,
    camera_pose,
    emit_ground_truth,
    emit_proposals,
    gt_boxes_2d,
    gt_boxes_3d,
    render_frame,
    tabletop_scene,
)


class TestRenderFrame:
    def test_straight_down_floor_depth(self, monkeypatch):
        # camera 2 m above bare floor looking straight down -> uniform 2.0 m
        import rgbdprop.synth as synth

        eye = np.array([3.0, 2.0, 3.0])  # away from the table footprint
        pose = synth._look_at(eye, eye + np.array([0.0, -1.0, 0.0]))
        spec = SceneSpec(objects=[], frame_count=1)
        monkeypatch.setattr(synth, "camera_pose", lambda s, i: pose)
        frame = render_frame(spec, 0)
        floor = frame.labels == LABEL_FLOOR
        assert floor.mean() > 0.99
        assert np.allclose(frame.depth[floor], 2.0, atol=1e-9)

    def test_cube_depth_band(self):
        # rays hitting a 10 cm cube about 1 m away stay in a narrow band
        spec = SceneSpec(
            objects=[ObjectSpec("box", (0.1, 0.1, 0.1), (0.0, 0.0))],
            orbit_radius=1.0,
            camera_height=0.85,
            frame_count=1,
        )
        frame = render_frame(spec, 0)
        mask = frame.labels == LABEL_OBJECT_BASE
        assert mask.sum() > 20
        eye = camera_pose(spec, 0).camera_center
        dist_to_center = np.linalg.norm(eye - np.array([0.0, 0.85, 0.0]))
        assert np.all(frame.depth[mask] > dist_to_center - 0.15)
        assert np.all(frame.depth[mask] < dist_to_center + 0.15)

    def test_missing_depth_fraction(self):
        spec = SceneSpec(objects=[], missing_prob=0.1, width=640, height=480, frame_count=1)
        frame = render_frame(spec, 0)
        rendered = render_frame(
            SceneSpec(objects=[], width=640, height=480, frame_count=1), 0
        )
        had_depth = rendered.depth > 0
        dropped = (frame.depth == 0) & had_depth
        frac = dropped.sum() / had_depth.sum()
        assert abs(frac - 0.1) < 0.01

    def test_noiseless_backprojection_lands_on_primitives(self):
        spec = tabletop_scene(n_objects=3, seed=1, frames=4)
        frame = render_frame(spec, 2)
        pts, valid = backproject_map(spec.intrinsics(), frame.pose, frame.depth)
        # floor points on y=0, table-top points at y=0.75 or on the block sides
        floor = valid & (frame.labels == LABEL_FLOOR)
        assert np.max(np.abs(pts[floor][:, 1])) < 1e-6
        for i, obj in enumerate(spec.objects):
            mask = valid & (frame.labels == spec.object_label(i))
            if not mask.any():
                continue
            p = pts[mask]
            if obj.kind == "sphere":
                (r,) = obj.size
                center = np.array([obj.position[0], spec.table_height + r, obj.position[1]])
                assert np.max(np.abs(np.linalg.norm(p - center, axis=1) - r)) < 1e-6
            else:
                lo, hi = np.array(
                    [
                        obj.position[0] - obj.size[0] / 2,
                        spec.table_height,
                        obj.position[1] - obj.size[2] / 2,
                    ]
                ), np.array(
                    [
                        obj.position[0] + obj.size[0] / 2,
                        spec.table_height + obj.size[1],
                        obj.position[1] + obj.size[2] / 2,
                    ]
                )
                inside = np.all(p >= lo - 1e-6, axis=1) & np.all(p <= hi + 1e-6, axis=1)
                assert inside.all()
                # on the surface: at least one coordinate pinned to a face
                on_face = (
                    (np.abs(p - lo) < 1e-6) | (np.abs(p - hi) < 1e-6)
                ).any(axis=1)
                assert on_face.all()

    def test_deterministic_rendering(self):
        spec = tabletop_scene(n_objects=3, seed=2, frames=3, depth_sigma=0.003, missing_prob=0.05)
        a = render_frame(spec, 1)
        b = render_frame(spec, 1)
        assert np.array_equal(a.depth, b.depth)
        assert np.array_equal(a.color, b.color)
        assert np.array_equal(a.labels, b.labels)

    def test_color_is_flat_per_face(self):
        # one base color per label, modulated only by surface orientation:
        # every pixel's color is a scalar multiple of its label's base color,
        # and box-shaped bodies show at most two shades (top vs. sides)
        spec = tabletop_scene(n_objects=2, seed=3, frames=2)
        frame = render_frame(spec, 0)
        from rgbdprop.synth import PALETTE, TABLE_COLOR

        for lab, base in ((LABEL_TABLE, TABLE_COLOR), (LABEL_OBJECT_BASE, PALETTE[0])):
            colors = frame.color[frame.labels == lab]
            if colors.size == 0:
                continue
            scale = colors / base
            assert np.max(np.abs(scale - scale[:, :1])) < 1e-12
            assert np.unique(scale[:, 0].round(9)).size <= 2

    def test_table_top_and_sides_shade_apart(self):
        # the color gap between horizontal and vertical faces must exceed the
        # fusion color gate so cross-face matches cannot blend rim points
        from rgbdprop.synth import TABLE_COLOR

        gap = np.linalg.norm(TABLE_COLOR - 0.62 * TABLE_COLOR)
        assert gap > 0.05


class TestProposals:
    def test_zero_jitter_zero_distractors_exact_gt(self):
        spec = tabletop_scene(n_objects=3, seed=4, frames=2)
        spec.proposal_jitter = 0.0
        spec.proposals_per_object = 1
        frame = render_frame(spec, 0)
        gt = gt_boxes_2d(spec, frame.labels)
        props = emit_proposals(spec, 0, frame.labels, count=len(gt))
        assert len(props) == len(gt)
        for p, (i, b) in zip(props, sorted(gt.items())):
            assert (p.x, p.y, p.w, p.h) == (b.x, b.y, b.w, b.h)

    def test_counts_match_request(self):
        spec = tabletop_scene(n_objects=3, seed=5, frames=2)
        frame = render_frame(spec, 0)
        for count in (50, 200, 1000):
            props = emit_proposals(spec, 0, frame.labels, count=count)
            assert len(props) == count

    def test_avoid_gt_option(self):
        spec = tabletop_scene(n_objects=2, seed=6, frames=2)
        spec.distractors_avoid_gt = True
        spec.proposals_per_object = 0
        frame = render_frame(spec, 0)
        gt = gt_boxes_2d(spec, frame.labels)
        props = emit_proposals(spec, 0, frame.labels, count=100)
        from rgbdprop.synth import _box2d_iou

        for p in props:
            for b in gt.values():
                assert _box2d_iou((p.x, p.y, p.w, p.h), b) == 0.0

    def test_deterministic(self):
        spec = tabletop_scene(n_objects=3, seed=7, frames=2)
        frame = render_frame(spec, 1)
        a = emit_proposals(spec, 1, frame.labels, count=300)
        b = emit_proposals(spec, 1, frame.labels, count=300)
        assert a == b

    def test_gt_stream_independent_of_count(self):
        spec = tabletop_scene(n_objects=3, seed=8, frames=2)
        frame = render_frame(spec, 0)
        small = emit_proposals(spec, 0, frame.labels, count=50)
        large = emit_proposals(spec, 0, frame.labels, count=500)
        n_gt = spec.proposals_per_object * len(gt_boxes_2d(spec, frame.labels))
        assert small[:n_gt] == large[:n_gt]


class TestGroundTruth:
    def test_cube_object_box_equals_cube(self):
        spec = SceneSpec(objects=[ObjectSpec("box", (0.1, 0.2, 0.3), (0.05, -0.1))])
        [box] = gt_boxes_3d(spec)
        assert np.allclose(box.min_corner, [0.0, 0.75, -0.25])
        assert np.allclose(box.max_corner, [0.1, 0.95, 0.05])
        assert np.allclose(box.rotation, np.eye(3))

    def test_sphere_box_edge_is_diameter(self):
        spec = SceneSpec(objects=[ObjectSpec("sphere", (0.05,), (0.0, 0.0))])
        [box] = gt_boxes_3d(spec)
        assert np.allclose(box.max_corner - box.min_corner, 0.1)

    def test_labels_partition_cloud(self):
        spec = tabletop_scene(n_objects=3, seed=9, frames=2)
        boxes, pts, labels = emit_ground_truth(spec)
        assert pts.shape[0] == labels.shape[0]
        expected = 3 * spec.gt_points_per_object + spec.gt_points_table + spec.gt_points_floor
        assert pts.shape[0] == expected
        assert set(np.unique(labels)) == {
            LABEL_FLOOR,
            LABEL_TABLE,
            LABEL_OBJECT_BASE,
            LABEL_OBJECT_BASE + 1,
            LABEL_OBJECT_BASE + 2,
        }

    def test_object_points_inside_gt_boxes(self):
        spec = tabletop_scene(n_objects=2, seed=10, frames=2)
        boxes, pts, labels = emit_ground_truth(spec)
        for i, box in enumerate(boxes):
            mask = labels == spec.object_label(i)
            assert box.contains(pts[mask], atol=1e-9).all()

    def test_table_points_avoid_footprints(self):
        spec = tabletop_scene(n_objects=3, seed=11, frames=2)
        boxes, pts, labels = emit_ground_truth(spec)
        table = pts[labels == LABEL_TABLE]
        for box in boxes:
            assert not box.contains(table).any()


def test_large_proposal_sets_get_hard_rejections():
    # with ~1000 proposals per frame some distractors are implausibly sized
    # and must be culled by the metric size filter
    from rgbdprop.proposals2d import HeatmapSummary, weighted_heatmap

    spec = tabletop_scene(n_objects=4, seed=16, frames=2)
    frame = render_frame(spec, 0)
    props = emit_proposals(spec, 0, frame.labels, count=1000)
    summary = HeatmapSummary()
    weighted_heatmap(
        props, frame.depth, spec.intrinsics(), 0.5, 0.02, 1.0, summary=summary
    )
    assert summary.total == 1000
    assert summary.hard_rejected > 0
    assert summary.hard_rejected < summary.total


def test_pan_trajectory_looks_at_floor_first():
    spec = tabletop_scene(n_objects=2, seed=12, frames=30, trajectory="pan_floor_to_table")
    first = render_frame(spec, 0)
    last = render_frame(spec, 29)
    assert (first.labels == LABEL_TABLE).mean() < 0.01
    assert (first.labels == LABEL_FLOOR).mean() > 0.5
    assert (last.labels == LABEL_TABLE).mean() > 0.2


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        ObjectSpec("cylinder", (0.1,), (0.0, 0.0))
