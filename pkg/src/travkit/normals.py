"""Per-pixel surface normals from organized clouds via integral images.

Three methods trade accuracy for speed:

* ``covariance``: 9 channel integral images (X, Y, Z, their squares and
  cross products) plus a validity-count image; the normal is the smallest
  eigenvector of the local 3x3 covariance.
* ``gradient``: channel integral images of X, Y, Z plus counts; the normal
  is the cross product of window-smoothed horizontal and vertical 3D
  gradients.
* ``depth_change``: a single integral image over Z plus counts; smoothed
  depth derivatives are lifted to a 3D normal through the back-projection
  Jacobian (requires the camera intrinsics).

Invalid points inside a window are excluded through the validity-count
integral image. All produced normals are unit length and oriented toward
the camera (dot(normal, point) < 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import CameraIntrinsics
from .reconstruct import OrganizedPointCloud

_DEGENERATE_REL = 1e-9


@dataclass
class NormalMap:
    """Image-shaped grid of unit surface normals with validity."""

    vectors: np.ndarray  # (H, W, 3) float64; undefined where invalid
    valid: np.ndarray    # (H, W) bool

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid.shape


@dataclass
class IntegralImage:
    """Summed-area table over one scalar channel: O(1) window sums."""

    table: np.ndarray  # (H+1, W+1) float64 running sums

    @classmethod
    def build(cls, channel: np.ndarray) -> "IntegralImage":
        height, width = channel.shape
        table = np.zeros((height + 1, width + 1), dtype=np.float64)
        np.cumsum(np.cumsum(channel, axis=0, dtype=np.float64), axis=1, out=table[1:, 1:])
        return cls(table)

    @property
    def shape(self) -> tuple[int, int]:
        return self.table.shape[0] - 1, self.table.shape[1] - 1

    def window_sum(self, top: int, bottom: int, left: int, right: int) -> float:
        """Sum over rows [top, bottom) x cols [left, right); empty windows are 0."""
        height, width = self.shape
        top = max(0, min(top, height))
        bottom = max(top, min(bottom, height))
        left = max(0, min(left, width))
        right = max(left, min(right, width))
        t = self.table
        return float(t[bottom, right] - t[top, right] - t[bottom, left] + t[top, left])

    def window_sums(self, row_lo: int, row_hi: int, col_lo: int, col_hi: int) -> np.ndarray:
        """Per-pixel sums over the offset window [r+row_lo, r+row_hi] x
        [c+col_lo, c+col_hi] (inclusive offsets), clamped at the borders."""
        height, width = self.shape
        rows = np.arange(height)[:, None]
        cols = np.arange(width)[None, :]
        top = np.clip(rows + row_lo, 0, height)
        bottom = np.clip(rows + row_hi + 1, 0, height)
        left = np.clip(cols + col_lo, 0, width)
        right = np.clip(cols + col_hi + 1, 0, width)
        bottom = np.maximum(bottom, top)
        right = np.maximum(right, left)
        t = self.table
        return t[bottom, right] - t[top, right] - t[bottom, left] + t[top, left]


def build_integral(channel: np.ndarray) -> IntegralImage:
    """Build a summed-area table for a scalar image."""
    channel = np.asarray(channel, dtype=np.float64)
    if channel.ndim != 2 or channel.size == 0:
        raise ValueError(f"expected a non-empty 2D channel, got shape {channel.shape}")
    return IntegralImage.build(channel)


def _masked_channels(cloud: OrganizedPointCloud) -> tuple[np.ndarray, np.ndarray]:
    mask = cloud.valid.astype(np.float64)
    pts = np.where(cloud.valid[..., None], cloud.points, 0.0)
    return pts, mask


def _orient_toward_camera(
    vectors: np.ndarray, valid: np.ndarray, reference: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Flip normals to face the camera; drop grazing/undetermined ones."""
    dots = np.einsum("hwc,hwc->hw", vectors, reference)
    scale = np.linalg.norm(reference, axis=2)
    determined = np.abs(dots) > 1e-12 * np.maximum(scale, 1e-300)
    vectors = np.where((dots > 0)[..., None], -vectors, vectors)
    return vectors, valid & determined


def _normalize(vectors: np.ndarray, valid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(vectors, axis=2)
    ok = valid & (norms > 1e-300)
    out = np.zeros_like(vectors)
    np.divide(vectors, norms[..., None], out=out, where=ok[..., None])
    return out, ok


def _reference_points(cloud: OrganizedPointCloud, mean_points: np.ndarray) -> np.ndarray:
    """Center point where valid, else the window mean (for orientation)."""
    return np.where(cloud.valid[..., None], cloud.points, mean_points)


def estimate_normals_covariance(cloud: OrganizedPointCloud, window_radius: int) -> NormalMap:
    """Normals from the smallest eigenvector of the local point covariance.

    Pixels whose (2r+1)^2 neighborhood holds fewer than 3 valid points, or
    whose covariance is rank deficient, are invalid.
    """
    if window_radius < 1:
        raise ValueError("window_radius must be >= 1")
    pts, mask = _masked_channels(cloud)
    r = window_radius

    channels = [pts[..., 0], pts[..., 1], pts[..., 2]]
    names = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]
    integrals = [IntegralImage.build(c) for c in channels]
    integrals += [IntegralImage.build(channels[i] * channels[j]) for i, j in names]
    count_int = IntegralImage.build(mask)

    count = count_int.window_sums(-r, r, -r, r)
    valid = count >= 3
    safe_count = np.where(valid, count, 1.0)

    sums = [ii.window_sums(-r, r, -r, r) for ii in integrals]
    mean = np.stack(sums[:3], axis=-1) / safe_count[..., None]

    cov = np.zeros(cloud.shape + (3, 3), dtype=np.float64)
    for idx, (i, j) in enumerate(names):
        cij = sums[3 + idx] / safe_count - mean[..., i] * mean[..., j]
        cov[..., i, j] = cij
        cov[..., j, i] = cij
    # Keep eigh well posed at pixels that will be masked anyway.
    cov[~valid] = np.eye(3)

    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    normals = eigenvectors[..., :, 0]
    spread_ok = eigenvalues[..., 1] > np.maximum(
        _DEGENERATE_REL * eigenvalues[..., 2], 1e-30
    )
    valid = valid & spread_ok

    normals, valid = _normalize(normals, valid)
    normals, valid = _orient_toward_camera(normals, valid, _reference_points(cloud, mean))
    normals[~valid] = 0.0
    return NormalMap(vectors=normals, valid=valid)


def _half_window_means(
    integrals: list[IntegralImage], count_int: IntegralImage, bounds: tuple[int, int, int, int]
) -> tuple[np.ndarray, np.ndarray]:
    """Mean of each channel over an offset half-window, plus its count."""
    row_lo, row_hi, col_lo, col_hi = bounds
    count = count_int.window_sums(row_lo, row_hi, col_lo, col_hi)
    safe = np.where(count > 0, count, 1.0)
    means = np.stack(
        [ii.window_sums(row_lo, row_hi, col_lo, col_hi) / safe for ii in integrals], axis=-1
    )
    return means, count


def estimate_normals_gradient(cloud: OrganizedPointCloud, window_radius: int) -> NormalMap:
    """Normals from the cross product of smoothed horizontal/vertical
    3D point gradients; near-zero cross products (collinear data) are invalid."""
    if window_radius < 1:
        raise ValueError("window_radius must be >= 1")
    pts, mask = _masked_channels(cloud)
    r = window_radius
    integrals = [IntegralImage.build(pts[..., i]) for i in range(3)]
    count_int = IntegralImage.build(mask)

    right, n_right = _half_window_means(integrals, count_int, (-r, r, 1, r))
    left, n_left = _half_window_means(integrals, count_int, (-r, r, -r, -1))
    bottom, n_bottom = _half_window_means(integrals, count_int, (1, r, -r, r))
    top, n_top = _half_window_means(integrals, count_int, (-r, -1, -r, r))

    grad_h = right - left
    grad_v = bottom - top
    valid = (n_right > 0) & (n_left > 0) & (n_bottom > 0) & (n_top > 0)

    normals = np.cross(grad_h, grad_v)
    cross_scale = np.linalg.norm(grad_h, axis=2) * np.linalg.norm(grad_v, axis=2)
    valid = valid & (np.linalg.norm(normals, axis=2) > 1e-12 * np.maximum(cross_scale, 1e-300))

    full_count = count_int.window_sums(-r, r, -r, r)
    safe = np.where(full_count > 0, full_count, 1.0)
    mean = np.stack(
        [ii.window_sums(-r, r, -r, r) / safe for ii in integrals], axis=-1
    )

    normals, valid = _normalize(normals, valid)
    normals, valid = _orient_toward_camera(normals, valid, _reference_points(cloud, mean))
    normals[~valid] = 0.0
    return NormalMap(vectors=normals, valid=valid)


def estimate_normals_depth_change(
    cloud: OrganizedPointCloud, window_radius: int, cam: CameraIntrinsics
) -> NormalMap:
    """Normals from smoothed depth derivatives alone.

    dZ/du and dZ/dv over the window are converted to a 3D normal through
    the back-projection Jacobian of the pinhole model, so only the Z
    integral image (plus counts) is required.
    """
    if window_radius < 1:
        raise ValueError("window_radius must be >= 1")
    pts, mask = _masked_channels(cloud)
    r = window_radius
    z_int = IntegralImage.build(pts[..., 2])
    count_int = IntegralImage.build(mask)

    right, n_right = _half_window_means([z_int], count_int, (-r, r, 1, r))
    left, n_left = _half_window_means([z_int], count_int, (-r, r, -r, -1))
    bottom, n_bottom = _half_window_means([z_int], count_int, (1, r, -r, r))
    top, n_top = _half_window_means([z_int], count_int, (-r, -1, -r, r))

    # Half-window mean columns sit r+1 apart, giving per-pixel derivatives.
    dz_du = (right[..., 0] - left[..., 0]) / (r + 1)
    dz_dv = (bottom[..., 0] - top[..., 0]) / (r + 1)

    full_count = count_int.window_sums(-r, r, -r, r)
    safe = np.where(full_count > 0, full_count, 1.0)
    z_mean = z_int.window_sums(-r, r, -r, r) / safe

    height, width = cloud.shape
    du = np.arange(width, dtype=np.float64)[None, :] - cam.principal_point_u
    dv = np.arange(height, dtype=np.float64)[:, None] - cam.principal_point_v

    normals = np.empty(cloud.shape + (3,), dtype=np.float64)
    normals[..., 0] = -cam.focal * dz_du
    normals[..., 1] = -cam.focal * dz_dv
    normals[..., 2] = z_mean + du * dz_du + dv * dz_dv

    valid = (n_right > 0) & (n_left > 0) & (n_bottom > 0) & (n_top > 0) & (full_count > 0)

    rays = np.empty_like(normals)
    rays[..., 0] = du / cam.focal
    rays[..., 1] = dv / cam.focal
    rays[..., 2] = 1.0

    normals, valid = _normalize(normals, valid)
    normals, valid = _orient_toward_camera(normals, valid, rays)
    normals[~valid] = 0.0
    return NormalMap(vectors=normals, valid=valid)


def estimate_normals(
    cloud: OrganizedPointCloud,
    window_radius: int,
    method: str = "covariance",
    cam: CameraIntrinsics | None = None,
) -> NormalMap:
    """Dispatch to one of the three estimation methods."""
    if method == "covariance":
        return estimate_normals_covariance(cloud, window_radius)
    if method == "gradient":
        return estimate_normals_gradient(cloud, window_radius)
    if method == "depth_change":
        if cam is None:
            raise ValueError("depth_change normals require camera intrinsics")
        return estimate_normals_depth_change(cloud, window_radius, cam)
    raise ValueError(f"unknown normal method {method!r}")
