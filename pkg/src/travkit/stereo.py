"""Dense stereo matching on rectified pairs.

Two matchers are provided over the same truncated-absolute-difference cost:

* block matcher ("bb"): per-pixel cost aggregated over a square window,
  winner-takes-all along the epipolar row;
* two-pass scanline matcher ("acso"): per-pixel cost optimized by dynamic
  programming along each row, left-to-right plus right-to-left, with
  penalties p1 (|disparity step| = 1) and p2 (larger jumps).

Both search d in [0, max_disparity], resolve cost ties to the smallest
disparity, and invalidate pixels that fail left-right consistency.
Disparity maps store invalid pixels as NaN.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import MatcherParams

#: Cap applied to per-pixel absolute intensity differences before aggregation.
COST_TRUNCATION = 64.0

#: Sentinel cost for infeasible (out-of-image) candidates.
_BIG = np.float32(1.0e9)


@dataclass
class DisparityMap:
    """Per-pixel horizontal displacement; NaN marks pixels with no match."""

    values: np.ndarray  # (H, W) float32, NaN = invalid
    max_disparity: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.values)

    def valid_fraction(self) -> float:
        return float(self.valid.mean())


def _as_float_image(image: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(image)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2D grayscale image, got shape {arr.shape}")
    return arr.astype(np.float32, copy=False)


def _check_pair(left: np.ndarray, right: np.ndarray, params: MatcherParams):
    left = _as_float_image(left, "left")
    right = _as_float_image(right, "right")
    if left.shape != right.shape:
        raise ValueError(f"stereo pair dimensions differ: {left.shape} vs {right.shape}")
    if params.max_disparity >= left.shape[1]:
        raise ValueError(
            f"max_disparity {params.max_disparity} must be smaller than image width {left.shape[1]}"
        )
    return left, right


def _tad_volume(left: np.ndarray, right: np.ndarray, max_disparity: int) -> np.ndarray:
    """Truncated absolute-difference cost volume, shape (D+1, H, W).

    Entries where the right-image sample u-d falls outside the image are
    set to the infeasible sentinel.
    """
    height, width = left.shape
    volume = np.full((max_disparity + 1, height, width), _BIG, dtype=np.float32)
    for d in range(max_disparity + 1):
        diff = np.abs(left[:, d:] - right[:, : width - d])
        volume[d, :, d:] = np.minimum(diff, COST_TRUNCATION)
    return volume


def _box_sums(image: np.ndarray, radius: int) -> np.ndarray:
    """Sum over the (2r+1)^2 window centered at each pixel (zero padded)."""
    height, width = image.shape
    table = np.zeros((height + 1, width + 1), dtype=np.float64)
    np.cumsum(np.cumsum(image, axis=0), axis=1, out=table[1:, 1:])
    rows = np.arange(height)[:, None]
    cols = np.arange(width)[None, :]
    top = np.clip(rows - radius, 0, height)
    bottom = np.clip(rows + radius + 1, 0, height)
    lefts = np.clip(cols - radius, 0, width)
    rights = np.clip(cols + radius + 1, 0, width)
    return (
        table[bottom, rights] - table[top, rights] - table[bottom, lefts] + table[top, lefts]
    ).astype(np.float32)


def _select_disparity(volume: np.ndarray) -> np.ndarray:
    """Winner-takes-all over the disparity axis; ties go to the smaller d."""
    best = np.argmin(volume, axis=0)
    best_cost = np.take_along_axis(volume, best[None], axis=0)[0]
    values = best.astype(np.float32)
    values[best_cost >= _BIG / 2] = np.nan
    return values


def _block_disparity_raw(left: np.ndarray, right: np.ndarray, params: MatcherParams) -> np.ndarray:
    height, width = left.shape
    radius = params.block_radius
    volume = _tad_volume(left, right, params.max_disparity)
    aggregated = np.empty_like(volume)
    cols = np.arange(width)[None, :]
    rows = np.arange(height)[:, None]
    window_ok = (rows >= radius) & (rows < height - radius) & (cols >= radius) & (cols < width - radius)
    for d in range(params.max_disparity + 1):
        slice_ = np.where(volume[d] >= _BIG / 2, 0.0, volume[d])
        sums = _box_sums(slice_, radius)
        feasible = window_ok & (cols - d - radius >= 0)
        aggregated[d] = np.where(feasible, sums, _BIG)
    return _select_disparity(aggregated)


def _scanline_pass(volume: np.ndarray, p1: float, p2: float) -> np.ndarray:
    """One directional DP sweep along rows (left to right), all rows at once."""
    num_d, height, width = volume.shape
    cost = np.ascontiguousarray(volume.transpose(1, 2, 0))  # (H, W, D)
    out = np.empty_like(cost)
    out[:, 0, :] = cost[:, 0, :]
    p1 = np.float32(p1)
    p2 = np.float32(p2)
    up = np.empty((height, num_d), dtype=np.float32)
    down = np.empty((height, num_d), dtype=np.float32)
    for u in range(1, width):
        prev = out[:, u - 1, :]
        min_prev = prev.min(axis=1, keepdims=True)
        up[:, 1:] = prev[:, :-1] + p1
        up[:, 0] = _BIG
        down[:, :-1] = prev[:, 1:] + p1
        down[:, -1] = _BIG
        transition = np.minimum(np.minimum(prev, min_prev + p2), np.minimum(up, down))
        out[:, u, :] = cost[:, u, :] + transition - min_prev
    return out.transpose(2, 0, 1)


def _scanline_disparity_raw(left: np.ndarray, right: np.ndarray, params: MatcherParams) -> np.ndarray:
    volume = _tad_volume(left, right, params.max_disparity)
    forward = _scanline_pass(volume, params.smoothness_p1, params.smoothness_p2)
    backward = _scanline_pass(volume[:, :, ::-1], params.smoothness_p1, params.smoothness_p2)
    total = forward + backward[:, :, ::-1]
    return _select_disparity(total)


def _match_both_views(left, right, params: MatcherParams, raw_matcher) -> DisparityMap:
    """Run a matcher on both views and keep the LR-consistent left map.

    The right-image disparity is obtained by matching the horizontally
    flipped pair with roles swapped, which reuses the left-matcher code
    path unchanged.
    """
    d_left = raw_matcher(left, right, params)
    d_right = raw_matcher(right[:, ::-1], left[:, ::-1], params)[:, ::-1]
    return lr_consistency_filter(
        DisparityMap(d_left, params.max_disparity),
        DisparityMap(d_right, params.max_disparity),
        params.lr_consistency_tol,
    )


def match_block_based(left: np.ndarray, right: np.ndarray, params: MatcherParams) -> DisparityMap:
    """Block matcher: SAD over a (2r+1)^2 window, WTA along the row.

    Pixels whose window exits the image (left or right view) and pixels
    failing LR consistency are invalid.
    """
    left, right = _check_pair(left, right, params)
    return _match_both_views(left, right, params, _block_disparity_raw)


def match_scanline(left: np.ndarray, right: np.ndarray, params: MatcherParams) -> DisparityMap:
    """Two-pass scanline matcher over the per-pixel truncated-AD cost.

    Each row is optimized left-to-right and right-to-left; the two
    directional costs are summed before the per-pixel argmin.
    """
    left, right = _check_pair(left, right, params)
    return _match_both_views(left, right, params, _scanline_disparity_raw)


MATCHERS = {"bb": match_block_based, "acso": match_scanline}


def match(left: np.ndarray, right: np.ndarray, params: MatcherParams) -> DisparityMap:
    """Dispatch to the matcher selected by ``params.algorithm``."""
    return MATCHERS[params.algorithm](left, right, params)


def lr_consistency_filter(d_left: DisparityMap, d_right: DisparityMap, tol: int) -> DisparityMap:
    """Invalidate left disparities that the right view does not confirm.

    Pixel (u, v) keeps d = d_left(u, v) iff d_right(u - d, v) is valid and
    within ``tol`` of d.
    """
    if d_left.shape != d_right.shape:
        raise ValueError(f"disparity map dimensions differ: {d_left.shape} vs {d_right.shape}")
    height, width = d_left.shape
    values = d_left.values.copy()
    valid = np.isfinite(values)
    cols = np.tile(np.arange(width, dtype=np.float32), (height, 1))
    target = np.where(valid, cols - values, -1.0)
    target_idx = np.rint(target).astype(np.int64)
    in_bounds = valid & (target_idx >= 0) & (target_idx < width)
    rows = np.arange(height)[:, None] * np.ones((1, width), dtype=np.int64)
    other = np.full_like(values, np.nan)
    other[in_bounds] = d_right.values[rows[in_bounds], target_idx[in_bounds]]
    consistent = in_bounds & np.isfinite(other) & (np.abs(other - values) <= tol)
    values[~consistent] = np.nan
    return DisparityMap(values, d_left.max_disparity)


def encode_disparity16(dmap: DisparityMap) -> np.ndarray:
    """16-bit storage encoding: invalid pixels 0, valid d stored as d + 1."""
    encoded = np.zeros(dmap.shape, dtype=np.uint16)
    valid = dmap.valid
    encoded[valid] = np.rint(dmap.values[valid]).astype(np.uint16) + 1
    return encoded


def decode_disparity16(encoded: np.ndarray, max_disparity: int) -> DisparityMap:
    """Inverse of :func:`encode_disparity16`."""
    values = encoded.astype(np.float32) - 1.0
    values[encoded == 0] = np.nan
    return DisparityMap(values, max_disparity)
