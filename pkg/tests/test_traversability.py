import math

import numpy as np
import pytest

from helpers import plane_cloud
from travkit.config import TraversabilityParams
from travkit.reconstruct import OrganizedPointCloud
from travkit.segmentation import UNLABELED, SegmentLabels
from travkit.traversability import (
    GravityVector,
    SurfacePlane,
    TraversabilityClass,
    class_histogram,
    classify_slope,
    classify_step,
    classify_terrain,
    find_dominant_ground,
    fit_all_planes,
    fit_plane_pca,
    gravity_from_tilt,
    min_inliers,
    quality_check,
    slope_angle,
    step_distance,
)

PARAMS = TraversabilityParams(
    alpha_r=math.radians(10),
    alpha_max=math.radians(30),
    alpha_semi=math.radians(45),
    h_max=0.3,
    min_inlier_ratio=0.02,
    quality_min_ratio=0.10,
)

G_CAM = np.array([0.0, 1.0, 0.0])  # untilted camera: gravity along +Y (down)


def rx(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def make_plane(normal, centroid, inliers=5000, segment_id=0):
    normal = np.asarray(normal, float)
    normal = normal / np.linalg.norm(normal)
    centroid = np.asarray(centroid, float)
    return SurfacePlane(
        segment_id=segment_id,
        normal=normal,
        offset=-float(normal @ centroid),
        centroid=centroid,
        inlier_count=inliers,
        eigenvalues=(1.0, 0.5, 0.0),
    )


def cloud_with_labels(point_sets):
    """Pack point lists into a 1-row organized cloud with one segment each."""
    total = sum(len(pts) for pts in point_sets)
    points = np.zeros((1, total, 3))
    labels = np.full((1, total), UNLABELED, dtype=np.int32)
    offset = 0
    for index, pts in enumerate(point_sets):
        pts = np.asarray(pts, float)
        points[0, offset : offset + len(pts)] = pts
        labels[0, offset : offset + len(pts)] = index
        offset += len(pts)
    cloud = OrganizedPointCloud(points, np.ones((1, total), bool))
    return cloud, SegmentLabels(labels, len(point_sets))


class TestGravity:
    def test_untilted_is_negative_z(self):
        np.testing.assert_allclose(gravity_from_tilt(0.0).vector, [0, 0, -1], atol=0)

    def test_quarter_tilt_perpendicular(self):
        g = gravity_from_tilt(math.pi / 2).vector
        assert abs(float(g @ np.array([0, 0, -1.0]))) < 1e-12
        assert np.linalg.norm(g) == pytest.approx(1.0)

    def test_tilt_then_untilt_is_identity(self):
        theta = 0.37
        g = gravity_from_tilt(theta).vector
        restored = rx(-theta) @ g
        np.testing.assert_allclose(restored, [0, 0, -1], atol=1e-9)

    def test_camera_frame_expression_default_rotation(self):
        g_cam = gravity_from_tilt(0.0).in_camera()
        np.testing.assert_allclose(g_cam, [0, 1, 0], atol=1e-12)  # camera "down"

    def test_unit_invariant_enforced(self):
        with pytest.raises(ValueError):
            GravityVector(np.array([0.0, 0.0, -2.0]))


class TestFitPlane:
    def test_fronto_parallel_segment(self):
        # Points on Z = 5 with gravity (0,0,-1): the oriented normal C is
        # +1 and D = -5 (plane passes through the centroid).
        rng = np.random.default_rng(2)
        pts = np.column_stack(
            [rng.uniform(-2, 2, 50), rng.uniform(-2, 2, 50), np.full(50, 5.0)]
        )
        cloud, labels = cloud_with_labels([pts])
        plane = fit_plane_pca(cloud, labels, 0, gravity_cam=np.array([0.0, 0.0, -1.0]))
        assert plane is not None
        np.testing.assert_allclose(np.abs(plane.normal), [0, 0, 1], atol=1e-12)
        assert float(plane.normal @ np.array([0, 0, -1.0])) <= 0
        assert plane.centroid[2] == pytest.approx(5.0)
        assert plane.offset == pytest.approx(5.0 * -plane.normal[2])

    def test_diagonal_plane(self):
        rng = np.random.default_rng(3)
        a = rng.uniform(-1, 1, 60)
        b = rng.uniform(-1, 1, 60)
        # x + y + z = 3 parameterized in-plane
        e1 = np.array([1.0, -1.0, 0.0]) / math.sqrt(2)
        e2 = np.array([1.0, 1.0, -2.0]) / math.sqrt(6)
        pts = np.array([1.0, 1.0, 1.0]) + np.outer(a, e1) + np.outer(b, e2)
        cloud, labels = cloud_with_labels([pts])
        plane = fit_plane_pca(cloud, labels, 0, G_CAM)
        expected = np.array([1.0, 1.0, 1.0]) / math.sqrt(3)
        assert abs(float(plane.normal @ expected)) > 1 - 1e-9
        assert abs(plane.offset) == pytest.approx(math.sqrt(3), abs=1e-9)

    def test_two_point_segment_rejected(self):
        cloud, labels = cloud_with_labels([[(0, 0, 1), (1, 0, 1)], [(0, 0, 2)] * 5])
        assert fit_plane_pca(cloud, labels, 0, G_CAM) is None

    def test_collinear_segment_rejected(self):
        pts = [(float(i), 0.0, 2.0) for i in range(10)]
        cloud, labels = cloud_with_labels([pts])
        assert fit_plane_pca(cloud, labels, 0, G_CAM) is None

    def test_unknown_segment_id_errors(self):
        cloud, labels = cloud_with_labels([[(0, 0, 1), (1, 0, 1), (0, 1, 1)]])
        with pytest.raises(KeyError):
            fit_plane_pca(cloud, labels, 7, G_CAM)

    def test_matches_least_squares_oracle(self):
        # Oracle: total least squares plane via SVD of centered points.
        rng = np.random.default_rng(11)
        for trial in range(8):
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            basis = np.linalg.svd(np.outer(direction, direction))[0][:, 1:]
            coords = rng.uniform(-1, 1, size=(200, 2))
            pts = (
                rng.uniform(-1, 1, 3)
                + coords @ basis.T
                + rng.normal(scale=1e-3, size=(200, 3))
            )
            cloud, labels = cloud_with_labels([pts])
            plane = fit_plane_pca(cloud, labels, 0, G_CAM)

            centroid = pts.mean(axis=0)
            _, _, vt = np.linalg.svd(pts - centroid)
            oracle_normal = vt[-1]
            if float(oracle_normal @ G_CAM) > 0:
                oracle_normal = -oracle_normal
            oracle_offset = -float(oracle_normal @ centroid)

            angle = math.degrees(
                math.acos(min(1.0, abs(float(plane.normal @ oracle_normal))))
            )
            assert angle < 0.1
            assert abs(plane.offset - oracle_offset) < 1e-3

    def test_plane_passes_through_centroid(self):
        rng = np.random.default_rng(4)
        pts = rng.normal(size=(40, 3)) * [2, 2, 0.01] + [0, 0, 4]
        cloud, labels = cloud_with_labels([pts])
        plane = fit_plane_pca(cloud, labels, 0, G_CAM)
        residual = float(plane.normal @ plane.centroid) + plane.offset
        assert abs(residual) < 1e-9
        assert np.linalg.norm(plane.normal) == pytest.approx(1.0, abs=1e-6)
        eig = plane.eigenvalues
        assert eig[0] >= eig[1] >= eig[2] >= 0


class TestSlope:
    def test_level_floor_traversable(self):
        plane = make_plane((0, -1, 0), (0, 1.5, 3.0))
        assert classify_slope(plane, G_CAM, PARAMS) is TraversabilityClass.TRAVERSABLE
        assert slope_angle(plane, G_CAM) == pytest.approx(0.0, abs=1e-12)

    def test_vertical_wall_non_traversable(self):
        plane = make_plane((0, 0, -1), (0, 0, 5.0))
        assert classify_slope(plane, G_CAM, PARAMS) is TraversabilityClass.NON_TRAVERSABLE
        assert slope_angle(plane, G_CAM) == pytest.approx(math.pi / 2, abs=1e-12)

    def test_35_degrees_is_semi_between_30_and_45(self):
        theta = math.radians(35)
        normal = (0.0, -math.cos(theta), -math.sin(theta))
        plane = make_plane(normal, (0, 1.0, 4.0))
        assert slope_angle(plane, G_CAM) == pytest.approx(theta, abs=1e-12)
        assert classify_slope(plane, G_CAM, PARAMS) is TraversabilityClass.SEMI_TRAVERSABLE

    def test_increasing_alpha_max_never_demotes(self):
        theta = math.radians(33)
        plane = make_plane((0, -math.cos(theta), -math.sin(theta)), (0, 1, 3))
        loose = TraversabilityParams(alpha_max=math.radians(40), alpha_semi=math.radians(60))
        tight = TraversabilityParams(alpha_max=math.radians(20), alpha_semi=math.radians(60))
        order = [
            TraversabilityClass.TRAVERSABLE,
            TraversabilityClass.SEMI_TRAVERSABLE,
            TraversabilityClass.NON_TRAVERSABLE,
        ]
        assert order.index(classify_slope(plane, G_CAM, loose)) <= order.index(
            classify_slope(plane, G_CAM, tight)
        )


class TestMinInliers:
    def test_vga_at_two_percent(self):
        assert min_inliers(640, 480, 0.02) == 6144

    def test_zero_ratio_degenerate(self):
        assert min_inliers(640, 480, 0.0) == 0

    def test_hundred_square(self):
        assert min_inliers(100, 100, 0.02) == 200

    def test_fractional_rounds_up(self):
        assert min_inliers(33, 33, 0.02) == 22  # 21.78

    def test_positive_dimensions_required(self):
        with pytest.raises(ValueError):
            min_inliers(0, 10, 0.02)


class TestDominantGround:
    def make(self, sid, inliers, centroid=(0.0, 1.0, 3.0), normal=(0, -1, 0)):
        return make_plane(normal, centroid, inliers=inliers, segment_id=sid)

    def test_single_floor_selected(self):
        planes = {0: self.make(0, 30000)}
        classes = {0: TraversabilityClass.TRAVERSABLE}
        got = find_dominant_ground(planes, classes, (320, 240), G_CAM, PARAMS)
        assert got is planes[0]

    def test_max_inliers_wins(self):
        planes = {0: self.make(0, 5000), 1: self.make(1, 7000)}
        classes = {0: TraversabilityClass.TRAVERSABLE, 1: TraversabilityClass.TRAVERSABLE}
        got = find_dominant_ground(planes, classes, (320, 240), G_CAM, PARAMS)
        assert got.segment_id == 1

    def test_tie_breaks_to_smaller_id(self):
        planes = {0: self.make(0, 7000), 1: self.make(1, 7000)}
        classes = {i: TraversabilityClass.TRAVERSABLE for i in planes}
        got = find_dominant_ground(planes, classes, (320, 240), G_CAM, PARAMS)
        assert got.segment_id == 0

    def test_ceiling_rejected_by_below_camera_rule(self):
        ceiling = self.make(0, 30000, centroid=(0.0, -1.5, 3.0))
        classes = {0: TraversabilityClass.TRAVERSABLE}
        assert find_dominant_ground({0: ceiling}, classes, (320, 240), G_CAM, PARAMS) is None

    def test_small_segments_skipped(self):
        tiny = self.make(0, min_inliers(320, 240, 0.02) - 1)
        classes = {0: TraversabilityClass.TRAVERSABLE}
        assert find_dominant_ground({0: tiny}, classes, (320, 240), G_CAM, PARAMS) is None

    def test_non_traversable_never_dominant(self):
        wall = self.make(0, 50000, normal=(0, 0, -1))
        classes = {0: TraversabilityClass.NON_TRAVERSABLE}
        assert find_dominant_ground({0: wall}, classes, (320, 240), G_CAM, PARAMS) is None


class TestQualityGate:
    def big_cloud(self, valid_count=10000):
        points = np.zeros((100, 100, 3))
        valid = np.zeros((100, 100), bool)
        valid.ravel()[:valid_count] = True
        return OrganizedPointCloud(points, valid)

    def test_no_dominant_rejects(self):
        decision = quality_check(None, self.big_cloud(), PARAMS)
        assert not decision.accepted
        assert "dominant" in decision.reason

    def test_confident_dominant_accepts(self):
        plane = make_plane((0, -1, 0), (0, 1, 3), inliers=4000)
        decision = quality_check(plane, self.big_cloud(), PARAMS)
        assert decision.accepted and decision.reason is None
        assert decision.dominant_fraction == pytest.approx(0.4)

    def test_weak_dominant_rejects(self):
        plane = make_plane((0, -1, 0), (0, 1, 3), inliers=500)
        decision = quality_check(plane, self.big_cloud(), PARAMS)
        assert not decision.accepted
        assert decision.dominant_fraction == pytest.approx(0.05)


class TestStep:
    def test_centroid_on_dominant_passes(self):
        dominant = make_plane((0, -1, 0), (0, 1.0, 3.0))
        plane = make_plane((0, -1, 0), (2.0, 1.0, 7.0), segment_id=1)
        assert step_distance(plane, dominant) == pytest.approx(0.0, abs=1e-12)
        assert classify_step(plane, dominant, PARAMS)

    def test_forty_centimeters_violates_thirty(self):
        dominant = make_plane((0, -1, 0), (0, 1.0, 3.0))
        raised = make_plane((0, -1, 0), (0, 0.6, 5.0), segment_id=1)
        assert step_distance(raised, dominant) == pytest.approx(0.4)
        assert not classify_step(raised, dominant, PARAMS)

    def test_slanted_dominant_perpendicular_distance(self):
        # Dominant plane tilted 20 degrees; place a centroid exactly 0.25 m
        # away along its normal. Oracle: the point-to-plane formula.
        theta = math.radians(20)
        normal = np.array([0.0, -math.cos(theta), -math.sin(theta)])
        anchor = np.array([0.0, 1.0, 2.0])
        dominant = make_plane(normal, anchor)
        probe_centroid = anchor + 0.25 * normal
        probe = make_plane((0, -1, 0), probe_centroid, segment_id=1)
        assert step_distance(probe, dominant) == pytest.approx(0.25, abs=1e-12)
        assert classify_step(probe, dominant, PARAMS)


def grid_scene(floor_rows=18, wall_rows=8, width=40):
    """Tiny organized scene: a floor segment and a wall segment."""
    height = floor_rows + wall_rows
    points = np.zeros((height, width, 3))
    labels = np.full((height, width), UNLABELED, dtype=np.int32)
    xs = np.linspace(-2, 2, width)
    for r in range(wall_rows):
        points[r, :, 0] = xs
        points[r, :, 1] = -1.0 + 0.1 * r
        points[r, :, 2] = 6.0
        labels[r, :] = 1
    for i, r in enumerate(range(wall_rows, height)):
        points[r, :, 0] = xs
        points[r, :, 1] = 1.0
        points[r, :, 2] = 5.0 - 0.2 * i
        labels[r, :] = 0
    cloud = OrganizedPointCloud(points, np.ones((height, width), bool))
    return cloud, SegmentLabels(labels, 2)


class TestClassifyTerrain:
    def params(self, **kw):
        merged = dict(
            alpha_r=math.radians(10),
            alpha_max=math.radians(30),
            alpha_semi=math.radians(45),
            h_max=0.3,
            min_inlier_ratio=0.02,
            quality_min_ratio=0.10,
        )
        merged.update(kw)
        return TraversabilityParams(**merged)

    def test_floor_and_wall_classified(self):
        cloud, labels = grid_scene()
        planes = fit_all_planes(cloud, labels, G_CAM)
        terrain = classify_terrain(
            cloud, np.ones(cloud.shape, bool), labels, planes, G_CAM, self.params()
        )
        assert terrain.quality.accepted
        assert terrain.class_map[20, 5] == TraversabilityClass.TRAVERSABLE.value
        assert terrain.class_map[2, 5] == TraversabilityClass.NON_TRAVERSABLE.value
        assert terrain.dominant.segment_id == 0

    def test_partition_histogram_sums(self):
        cloud, labels = grid_scene()
        planes = fit_all_planes(cloud, labels, G_CAM)
        terrain = classify_terrain(
            cloud, np.ones(cloud.shape, bool), labels, planes, G_CAM, self.params()
        )
        histogram = class_histogram(terrain.class_map)
        assert sum(histogram.values()) == cloud.shape[0] * cloud.shape[1]

    def test_all_invalid_cloud_all_unknown(self):
        points = np.zeros((10, 10, 3))
        cloud = OrganizedPointCloud(points, np.zeros((10, 10), bool))
        labels = SegmentLabels(np.full((10, 10), UNLABELED, np.int32), 0)
        terrain = classify_terrain(
            cloud, np.zeros((10, 10), bool), labels, {}, G_CAM, self.params()
        )
        assert not terrain.quality.accepted
        assert (terrain.class_map == TraversabilityClass.UNKNOWN.value).all()

    def test_rejected_frame_has_no_drivable_classes(self):
        # Wall only: no traversable candidate, so the quality gate rejects.
        cloud, labels = grid_scene(floor_rows=0, wall_rows=20)
        labels = SegmentLabels(np.where(labels.labels == 1, 0, UNLABELED).astype(np.int32), 1)
        planes = fit_all_planes(cloud, labels, G_CAM)
        terrain = classify_terrain(
            cloud, np.ones(cloud.shape, bool), labels, planes, G_CAM, self.params()
        )
        assert not terrain.quality.accepted
        histogram = class_histogram(terrain.class_map)
        assert histogram["traversable"] == 0
        assert histogram["semi_traversable"] == 0
        assert histogram["non_traversable"] == 0
        assert histogram["undecided"] == cloud.valid.sum()

    def test_undersized_segment_undecided(self):
        cloud, labels = grid_scene()
        planes = fit_all_planes(cloud, labels, G_CAM)
        # Raise the floor ratio so the wall (8 rows of 40 px) is undersized.
        params = self.params(min_inlier_ratio=0.4)
        terrain = classify_terrain(
            cloud, np.ones(cloud.shape, bool), labels, planes, G_CAM, params
        )
        assert terrain.class_map[2, 5] == TraversabilityClass.UNDECIDED.value

    def test_step_demotion_only_lowers(self):
        # A smaller elevated platform above the floor: traversable by slope
        # but demoted by the step rule.
        cloud, labels = grid_scene()
        platform_rows = slice(0, 8)
        cloud.points[platform_rows, :, 1] = 0.3  # 0.7 m above the floor plane
        cloud.points[platform_rows, :, 2] = (
            5.0 + 0.1 * np.arange(8)[:, None] * np.ones((1, cloud.shape[1]))
        )
        planes = fit_all_planes(cloud, labels, G_CAM)
        terrain = classify_terrain(
            cloud, np.ones(cloud.shape, bool), labels, planes, G_CAM, self.params()
        )
        platform_report = next(s for s in terrain.segments if s.segment_id == 1)
        assert platform_report.step_distance == pytest.approx(0.7, abs=1e-9)
        assert platform_report.final_class is TraversabilityClass.NON_TRAVERSABLE
        assert terrain.dominant.segment_id == 0

    def test_rigid_motion_invariance(self):
        cloud, labels = grid_scene()
        planes = fit_all_planes(cloud, labels, G_CAM)
        base = classify_terrain(
            cloud, np.ones(cloud.shape, bool), labels, planes, G_CAM, self.params()
        )
        rotation = rx(0.3) @ np.array([[0, 0, 1.0], [1, 0, 0], [0, 1, 0]])
        moved = OrganizedPointCloud(cloud.points @ rotation.T, cloud.valid.copy())
        moved_g = rotation @ G_CAM
        moved_planes = fit_all_planes(moved, labels, moved_g)
        result = classify_terrain(
            moved, np.ones(cloud.shape, bool), labels, moved_planes, moved_g, self.params()
        )
        assert np.array_equal(base.class_map, result.class_map)

    def test_scale_covariance(self):
        cloud, labels = grid_scene()
        planes = fit_all_planes(cloud, labels, G_CAM)
        params = self.params(h_max=0.12)
        base = classify_terrain(
            cloud, np.ones(cloud.shape, bool), labels, planes, G_CAM, params
        )
        scale = 3.0
        bigger = OrganizedPointCloud(cloud.points * scale, cloud.valid.copy())
        big_planes = fit_all_planes(bigger, labels, G_CAM)
        for sid, plane in big_planes.items():
            np.testing.assert_allclose(
                plane.centroid, planes[sid].centroid * scale, atol=1e-9
            )
        scaled_params = self.params(h_max=0.12 * scale)
        scaled = classify_terrain(
            bigger, np.ones(cloud.shape, bool), labels, big_planes, G_CAM, scaled_params
        )
        assert np.array_equal(base.class_map, scaled.class_map)

    def test_dimension_mismatch_rejected(self):
        cloud, labels = grid_scene()
        with pytest.raises(ValueError, match="dimension mismatch"):
            classify_terrain(
                cloud, np.ones((5, 5), bool), labels, {}, G_CAM, self.params()
            )
