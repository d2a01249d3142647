"""Per-segment surface analysis and the five-class terrain labeling.

Each segment is approximated by a PCA plane (Ax + By + Cz + D = 0 through
the centroid). Plane slopes are measured against gravity, the dominant
ground plane is the traversable plane holding the most points below the
camera, a frame-level quality gate rejects clouds without a confident
ground plane, and planes whose centroid sits more than the maximum
climbable step above/below the dominant plane are demoted.

Frame conventions: the cloud lives in the camera frame (X right, Y down,
Z forward). Gravity is expressed in a level reference frame in which the
untilted gravity direction is (0, 0, -1); a fixed rotation (configurable,
see :mod:`travkit.config`) maps camera coordinates into that frame. All
plane math here runs in camera coordinates, against the camera-frame
gravity direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Mapping

import numpy as np

from .config import DEFAULT_CAM_TO_GRAVITY, TraversabilityParams
from .reconstruct import OrganizedPointCloud
from .segmentation import UNLABELED, SegmentLabels

_RANK_REL = 1e-9


class TraversabilityClass(IntEnum):
    TRAVERSABLE = 0
    SEMI_TRAVERSABLE = 1
    NON_TRAVERSABLE = 2
    UNKNOWN = 3
    UNDECIDED = 4


CLASS_NAMES = {
    TraversabilityClass.TRAVERSABLE: "traversable",
    TraversabilityClass.SEMI_TRAVERSABLE: "semi_traversable",
    TraversabilityClass.NON_TRAVERSABLE: "non_traversable",
    TraversabilityClass.UNKNOWN: "unknown",
    TraversabilityClass.UNDECIDED: "undecided",
}

DRIVABLE_CLASSES = (
    TraversabilityClass.TRAVERSABLE,
    TraversabilityClass.SEMI_TRAVERSABLE,
    TraversabilityClass.NON_TRAVERSABLE,
)


@dataclass(frozen=True)
class GravityVector:
    """Unit gravity direction in the level reference frame.

    With no camera tilt the direction is exactly (0, 0, -1); "up" is the
    negated vector.
    """

    vector: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float64)
        norm = np.linalg.norm(vec)
        if not math.isclose(norm, 1.0, abs_tol=1e-6):
            raise ValueError(f"gravity vector must be unit length, got |g| = {norm}")
        object.__setattr__(self, "vector", vec / norm)

    def in_camera(self, cam_to_gravity: np.ndarray | None = None) -> np.ndarray:
        """Express the gravity direction in camera coordinates.

        ``cam_to_gravity`` rotates camera-frame vectors into the gravity
        frame; its transpose brings gravity back into the camera frame.
        """
        rot = (
            np.asarray(DEFAULT_CAM_TO_GRAVITY, dtype=float).reshape(3, 3)
            if cam_to_gravity is None
            else np.asarray(cam_to_gravity, dtype=float)
        )
        return rot.T @ self.vector


def gravity_from_tilt(tilt_theta: float) -> GravityVector:
    """Gravity direction for a camera pitched ``tilt_theta`` below horizontal.

    Rotates the untilted direction (0, 0, -1) about the horizontal axis;
    tilt 0 returns exactly (0, 0, -1). Total over any angle; the config
    layer restricts physical rigs to |tilt| < pi/2.
    """
    return GravityVector(np.array([0.0, math.sin(tilt_theta), -math.cos(tilt_theta)]))


@dataclass
class SurfacePlane:
    """PCA plane of one segment: unit normal oriented against gravity,
    offset D with A*Xc + B*Yc + C*Zc + D = 0, and the PCA eigenvalues in
    descending order."""

    segment_id: int
    normal: np.ndarray          # (3,) unit, camera frame, dot(normal, g_cam) <= 0
    offset: float
    centroid: np.ndarray        # (3,) meters, camera frame
    inlier_count: int
    eigenvalues: tuple[float, float, float]


@dataclass
class SegmentReport:
    """One row of the per-segment classification table."""

    segment_id: int
    inlier_count: int
    normal: tuple[float, float, float] | None
    offset: float | None
    centroid: tuple[float, float, float] | None
    slope_deg: float | None
    step_distance: float | None
    final_class: TraversabilityClass


@dataclass
class QualityDecision:
    accepted: bool
    reason: str | None
    dominant_fraction: float


@dataclass
class TerrainClassification:
    """Pixelwise five-class map plus the per-segment evidence behind it."""

    class_map: np.ndarray  # (H, W) uint8 of TraversabilityClass values
    segments: list[SegmentReport]
    dominant: SurfacePlane | None
    quality: QualityDecision


def fit_plane_pca(
    cloud: OrganizedPointCloud,
    labels: SegmentLabels,
    segment_id: int,
    gravity_cam: np.ndarray,
) -> SurfacePlane | None:
    """Fit the PCA plane of one segment; None when the fit is rejected.

    The normal is the eigenvector of the smallest covariance eigenvalue,
    sign-oriented against gravity (dot(normal, gravity) <= 0). Rejection
    happens for fewer than 3 points or a rank-deficient covariance.
    """
    if not 0 <= segment_id < labels.segment_count:
        raise KeyError(f"unknown segment id {segment_id}")
    mask = (labels.labels == segment_id) & cloud.valid
    pts = cloud.points[mask]
    count = int(pts.shape[0])
    if count < 3:
        return None

    centroid = pts.mean(axis=0)
    centered = pts - centroid
    cov = centered.T @ centered / count
    eigenvalues, eigenvectors = np.linalg.eigh(cov)  # ascending
    if eigenvalues[1] <= max(_RANK_REL * eigenvalues[2], 1e-30):
        return None

    normal = eigenvectors[:, 0]
    g_dot = float(normal @ gravity_cam)
    if g_dot > 0:
        normal = -normal
    elif abs(g_dot) < 1e-12 and float(normal @ centroid) > 0:
        # Vertical surface: orient toward the camera for determinism.
        normal = -normal
    offset = -float(normal @ centroid)
    ordered = np.clip(eigenvalues[::-1], 0.0, None)
    return SurfacePlane(
        segment_id=segment_id,
        normal=normal,
        offset=offset,
        centroid=centroid,
        inlier_count=count,
        eigenvalues=(float(ordered[0]), float(ordered[1]), float(ordered[2])),
    )


def fit_all_planes(
    cloud: OrganizedPointCloud, labels: SegmentLabels, gravity_cam: np.ndarray
) -> dict[int, SurfacePlane | None]:
    """PCA plane (or rejection) for every segment id."""
    return {
        sid: fit_plane_pca(cloud, labels, sid, gravity_cam)
        for sid in range(labels.segment_count)
    }


def slope_angle(plane: SurfacePlane, gravity_cam: np.ndarray) -> float:
    """Angle (radians) between the plane's up-facing normal and "up";
    a level floor has slope 0, a vertical wall pi/2."""
    cosine = float(np.clip(-(plane.normal @ gravity_cam), -1.0, 1.0))
    return math.acos(cosine)


def classify_slope(
    plane: SurfacePlane, gravity_cam: np.ndarray, params: TraversabilityParams
) -> TraversabilityClass:
    """Slope thresholding: <= alpha_max traversable, <= alpha_semi
    semi-traversable, beyond that non-traversable."""
    slope = slope_angle(plane, gravity_cam)
    if slope <= params.alpha_max:
        return TraversabilityClass.TRAVERSABLE
    if slope <= params.alpha_semi:
        return TraversabilityClass.SEMI_TRAVERSABLE
    return TraversabilityClass.NON_TRAVERSABLE


def min_inliers(width: int, height: int, ratio: float) -> int:
    """Minimum segment size: ceil(width * height * ratio).

    The epsilon guard keeps exact products (e.g. 640*480*0.02 = 6144) from
    rounding up through floating-point noise.
    """
    if width <= 0 or height <= 0:
        raise ValueError("image dimensions must be positive")
    return math.ceil(width * height * ratio - 1e-9)


def find_dominant_ground(
    planes: Mapping[int, SurfacePlane | None],
    classes: Mapping[int, TraversabilityClass],
    image_size: tuple[int, int],
    gravity_cam: np.ndarray,
    params: TraversabilityParams,
) -> SurfacePlane | None:
    """The traversable plane with the most inlying points.

    Candidates must be classified traversable, hold at least the minimum
    inlier count for the image size, and lie below the camera along
    gravity (dot(centroid, gravity) > 0). Ties break to the smaller
    segment id; None when no plane qualifies.
    """
    width, height = image_size
    threshold = min_inliers(width, height, params.min_inlier_ratio)
    best: SurfacePlane | None = None
    for sid in sorted(planes):
        plane = planes[sid]
        if plane is None:
            continue
        if classes.get(sid) != TraversabilityClass.TRAVERSABLE:
            continue
        if plane.inlier_count < threshold:
            continue
        if float(plane.centroid @ gravity_cam) <= 0:
            continue
        if best is None or plane.inlier_count > best.inlier_count:
            best = plane
    return best


def quality_check(
    dominant: SurfacePlane | None,
    cloud: OrganizedPointCloud,
    params: TraversabilityParams,
) -> QualityDecision:
    """Frame-level gate: reject clouds without a confident ground plane.

    Rejection means the frame is skipped: every valid pixel is reported
    undecided and no drivability classes are emitted.
    """
    valid_count = int(cloud.valid.sum())
    if dominant is None:
        return QualityDecision(False, "no dominant ground plane", 0.0)
    fraction = dominant.inlier_count / valid_count if valid_count else 0.0
    if fraction < params.quality_min_ratio:
        return QualityDecision(
            False,
            f"dominant plane holds {fraction:.3f} of valid points"
            f" (< {params.quality_min_ratio})",
            fraction,
        )
    return QualityDecision(True, None, fraction)


def step_distance(plane: SurfacePlane, dominant: SurfacePlane) -> float:
    """Perpendicular distance from the plane's centroid to the dominant plane."""
    return float(abs(dominant.normal @ plane.centroid + dominant.offset))


def classify_step(
    plane: SurfacePlane, dominant: SurfacePlane, params: TraversabilityParams
) -> bool:
    """True when the centroid step to the dominant plane is climbable."""
    return step_distance(plane, dominant) <= params.h_max


def class_histogram(class_map: np.ndarray) -> dict[str, int]:
    """Pixel counts per class, keyed by class name; sums to H*W."""
    counts = np.bincount(class_map.ravel(), minlength=len(TraversabilityClass))
    return {CLASS_NAMES[cls]: int(counts[cls.value]) for cls in TraversabilityClass}


def classify_terrain(
    cloud: OrganizedPointCloud,
    normals_valid: np.ndarray,
    labels: SegmentLabels,
    planes: Mapping[int, SurfacePlane | None],
    gravity_cam: np.ndarray,
    params: TraversabilityParams,
) -> TerrainClassification:
    """Produce the per-pixel five-class map and the per-segment table.

    Pixel rules: no valid point -> unknown; valid but unlabeled, in an
    undersized segment, or with a rejected plane fit -> undecided;
    otherwise the segment's slope class, demoted to non-traversable when
    the step test against the dominant plane fails. A frame rejected by
    the quality gate keeps only unknown/undecided pixels.
    """
    if cloud.shape != labels.shape or cloud.shape != normals_valid.shape:
        raise ValueError(
            f"dimension mismatch: cloud {cloud.shape}, labels {labels.shape},"
            f" normals {normals_valid.shape}"
        )
    height, width = cloud.shape
    threshold = min_inliers(width, height, params.min_inlier_ratio)

    slope_classes: dict[int, TraversabilityClass] = {}
    for sid, plane in planes.items():
        if plane is not None:
            slope_classes[sid] = classify_slope(plane, gravity_cam, params)

    dominant = find_dominant_ground(planes, slope_classes, (width, height), gravity_cam, params)
    quality = quality_check(dominant, cloud, params)

    class_map = np.full((height, width), TraversabilityClass.UNKNOWN.value, dtype=np.uint8)
    class_map[cloud.valid] = TraversabilityClass.UNDECIDED.value

    reports: list[SegmentReport] = []
    segment_class = np.full(
        max(labels.segment_count, 1), TraversabilityClass.UNDECIDED.value, dtype=np.uint8
    )
    for sid in range(labels.segment_count):
        plane = planes.get(sid)
        if plane is None:
            reports.append(
                SegmentReport(
                    segment_id=sid,
                    inlier_count=int(((labels.labels == sid) & cloud.valid).sum()),
                    normal=None,
                    offset=None,
                    centroid=None,
                    slope_deg=None,
                    step_distance=None,
                    final_class=TraversabilityClass.UNDECIDED,
                )
            )
            continue

        slope_deg = math.degrees(slope_angle(plane, gravity_cam))
        distance = step_distance(plane, dominant) if dominant is not None else None
        final = slope_classes[sid]
        if final in (TraversabilityClass.TRAVERSABLE, TraversabilityClass.SEMI_TRAVERSABLE):
            if dominant is not None and not classify_step(plane, dominant, params):
                final = TraversabilityClass.NON_TRAVERSABLE
        if plane.inlier_count < threshold or not quality.accepted:
            final = TraversabilityClass.UNDECIDED
        segment_class[sid] = final.value
        reports.append(
            SegmentReport(
                segment_id=sid,
                inlier_count=plane.inlier_count,
                normal=tuple(float(x) for x in plane.normal),
                offset=plane.offset,
                centroid=tuple(float(x) for x in plane.centroid),
                slope_deg=slope_deg,
                step_distance=distance,
                final_class=final,
            )
        )

    if quality.accepted and labels.segment_count:
        labeled = labels.labels != UNLABELED
        class_map[labeled] = segment_class[labels.labels[labeled]]

    return TerrainClassification(
        class_map=class_map,
        segments=reports,
        dominant=dominant,
        quality=quality,
    )
