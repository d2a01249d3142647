"""Triangulation of disparity maps into organized point clouds.

Camera frame convention: X right, Y down, Z forward (meters). For a pixel
(U, V) with disparity d > 0:

    Z = (focal / d) * baseline
    X = ((U - Up) / focal) * Z
    Y = ((V - Vp) / focal) * Z

Pixels with invalid or zero disparity become invalid points, never errors.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import CameraIntrinsics
from .stereo import DisparityMap


@dataclass
class OrganizedPointCloud:
    """Image-shaped grid of camera-frame 3D points with per-point validity."""

    points: np.ndarray  # (H, W, 3) float64; undefined where invalid
    valid: np.ndarray   # (H, W) bool

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid.shape

    @property
    def width(self) -> int:
        return self.valid.shape[1]

    @property
    def height(self) -> int:
        return self.valid.shape[0]

    def valid_points(self) -> np.ndarray:
        """The valid points as a flat (N, 3) array in row-major grid order."""
        return self.points[self.valid]


def triangulate(
    disp: DisparityMap,
    cam: CameraIntrinsics,
    z_max: float | None = None,
) -> OrganizedPointCloud:
    """Back-project a disparity map into an organized point cloud.

    ``z_max`` (meters), when given and positive, invalidates points beyond
    that range; disparities of 1 px map to extreme depths that are usually
    noise dominated.
    """
    height, width = disp.shape
    values = disp.values.astype(np.float64)
    valid = np.isfinite(values) & (values > 0)

    z = np.zeros((height, width), dtype=np.float64)
    np.divide(cam.focal * cam.baseline, values, out=z, where=valid)
    if z_max is not None and z_max > 0:
        valid = valid & (z <= z_max)

    u = np.arange(width, dtype=np.float64)[None, :]
    v = np.arange(height, dtype=np.float64)[:, None]
    points = np.zeros((height, width, 3), dtype=np.float64)
    points[:, :, 0] = (u - cam.principal_point_u) / cam.focal * z
    points[:, :, 1] = (v - cam.principal_point_v) / cam.focal * z
    points[:, :, 2] = z
    points[~valid] = 0.0
    return OrganizedPointCloud(points=points, valid=valid)


def valid_fraction(cloud: OrganizedPointCloud) -> float:
    """Fraction of grid positions holding a valid point, in [0, 1]."""
    return float(cloud.valid.mean())


def write_ply(
    path: str | Path,
    cloud: OrganizedPointCloud,
    colors: np.ndarray | None = None,
) -> int:
    """Write the valid points as ASCII PLY, preserving grid (row-major) order.

    ``colors`` is an optional (H, W, 3) uint8 image sampled per point.
    Returns the number of vertices written.
    """
    mask = cloud.valid
    pts = cloud.points[mask]
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {pts.shape[0]}",
        "property float x",
        "property float y",
        "property float z",
    ]
    if colors is not None:
        lines += ["property uchar red", "property uchar green", "property uchar blue"]
        rgb = colors[mask]
    lines.append("end_header")
    body = []
    if colors is None:
        for x, y, z in pts:
            body.append(f"{x:.6f} {y:.6f} {z:.6f}")
    else:
        for (x, y, z), (r, g, b) in zip(pts, rgb):
            body.append(f"{x:.6f} {y:.6f} {z:.6f} {r} {g} {b}")
    Path(path).write_text("\n".join(lines + body) + "\n")
    return int(pts.shape[0])
