"""Shared test utilities: analytic clouds and pipeline stage shortcuts."""

from __future__ import annotations

import numpy as np

from travkit.config import CameraIntrinsics, Config
from travkit.harness import SceneSpec, render_scene, truth_cloud
from travkit.normals import estimate_normals
from travkit.reconstruct import OrganizedPointCloud, triangulate
from travkit.segmentation import SegmentLabels, segment_by_normals
from travkit.stereo import match
from travkit.traversability import (
    TerrainClassification,
    classify_terrain,
    fit_all_planes,
    gravity_from_tilt,
)

TEST_CAM = CameraIntrinsics(
    focal=300.0, principal_point_u=160.0, principal_point_v=120.0, baseline=0.3
)


def ray_grid(width: int, height: int, cam: CameraIntrinsics = TEST_CAM) -> np.ndarray:
    rays = np.empty((height, width, 3))
    rays[..., 0] = (np.arange(width)[None, :] - cam.principal_point_u) / cam.focal
    rays[..., 1] = (np.arange(height)[:, None] - cam.principal_point_v) / cam.focal
    rays[..., 2] = 1.0
    return rays


def plane_cloud(
    normal,
    offset: float,
    width: int = 80,
    height: int = 60,
    cam: CameraIntrinsics = TEST_CAM,
    valid: np.ndarray | None = None,
) -> OrganizedPointCloud:
    """Exact organized cloud of the plane normal . P + offset = 0."""
    normal = np.asarray(normal, dtype=float)
    normal = normal / np.linalg.norm(normal)
    rays = ray_grid(width, height, cam)
    denom = rays @ normal
    if np.any(np.abs(denom) < 1e-9):
        raise ValueError("plane is edge-on somewhere in the image")
    depth = -offset / denom
    if np.any(depth <= 0):
        raise ValueError("plane behind camera")
    points = rays * depth[..., None]
    mask = np.ones((height, width), dtype=bool) if valid is None else valid.copy()
    points = np.where(mask[..., None], points, 0.0)
    return OrganizedPointCloud(points=points, valid=mask)


def geometry_pipeline(
    spec: SceneSpec, config: Config, matched: bool
) -> tuple[TerrainClassification, SegmentLabels, OrganizedPointCloud]:
    """Run reconstruction -> normals -> segmentation -> classification,
    from rendered+matched images or directly from exact truth disparity."""
    if matched:
        left, right, _ = render_scene(spec, config.traversability)
        disparity = match(left, right, config.matcher)
        cloud = triangulate(disparity, config.camera)
    else:
        cloud = truth_cloud(spec)
    normal_map = estimate_normals(
        cloud,
        config.pipeline.normal_window_radius,
        config.pipeline.normal_method,
        config.camera,
    )
    labels = segment_by_normals(cloud, normal_map, config.traversability.alpha_r)
    gravity_cam = gravity_from_tilt(config.camera.tilt_theta).in_camera(config.pipeline.rotation)
    planes = fit_all_planes(cloud, labels, gravity_cam)
    terrain = classify_terrain(
        cloud, normal_map.valid, labels, planes, gravity_cam, config.traversability
    )
    return terrain, labels, cloud


def angle_between_deg(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    cosine = float(np.clip(abs(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b)), -1, 1))
    return float(np.degrees(np.arccos(cosine)))
