"""Superpixel surfaces: 4-connected components of agreeing normals.

Two 4-neighbors join the same segment iff both carry a valid point and a
valid normal and their normals agree within the roughness angle:
dot(n1, n2) >= cos(alpha_r). The criterion is pairwise along adjacency, so
distant members of one segment may differ by more; that is the contract of
connected-component labeling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .normals import NormalMap
from .reconstruct import OrganizedPointCloud

UNLABELED = -1


@dataclass
class SegmentLabels:
    """Dense per-pixel segment ids; UNLABELED (-1) marks invalid pixels."""

    labels: np.ndarray  # (H, W) int32
    segment_count: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


def segment_by_normals(
    cloud: OrganizedPointCloud, normals: NormalMap, alpha_r: float
) -> SegmentLabels:
    """Partition valid pixels into normal-agreeing 4-connected segments.

    Ids are dense and assigned in row-major order of each segment's first
    pixel, making repeated runs bit-identical.
    """
    if cloud.shape != normals.shape:
        raise ValueError(f"cloud {cloud.shape} and normals {normals.shape} dimensions differ")
    if not 0 < alpha_r < np.pi / 2:
        raise ValueError("alpha_r must be in (0, pi/2)")

    height, width = cloud.shape
    mask = cloud.valid & normals.valid
    cos_thresh = np.cos(alpha_r)
    vec = normals.vectors

    flat = np.arange(height * width, dtype=np.int64).reshape(height, width)

    h_ok = mask[:, :-1] & mask[:, 1:]
    h_dot = np.einsum("hwc,hwc->hw", vec[:, :-1], vec[:, 1:])
    h_ok &= h_dot >= cos_thresh

    v_ok = mask[:-1, :] & mask[1:, :]
    v_dot = np.einsum("hwc,hwc->hw", vec[:-1, :], vec[1:, :])
    v_ok &= v_dot >= cos_thresh

    src = np.concatenate([flat[:, :-1][h_ok], flat[:-1, :][v_ok]])
    dst = np.concatenate([flat[:, 1:][h_ok], flat[1:, :][v_ok]])

    n_pixels = height * width
    graph = coo_matrix(
        (np.ones(len(src), dtype=np.int8), (src, dst)), shape=(n_pixels, n_pixels)
    )
    _, components = connected_components(graph, directed=False)

    labels = np.full((height, width), UNLABELED, dtype=np.int32)
    mask_flat = mask.ravel()
    comp_masked = components[mask_flat]
    if comp_masked.size == 0:
        return SegmentLabels(labels=labels, segment_count=0)

    # Dense relabeling by first occurrence in row-major order.
    first_pos = np.full(components.max() + 1, n_pixels, dtype=np.int64)
    np.minimum.at(first_pos, comp_masked, np.nonzero(mask_flat)[0])
    used = np.nonzero(first_pos < n_pixels)[0]
    order = used[np.argsort(first_pos[used], kind="stable")]
    remap = np.full(components.max() + 1, UNLABELED, dtype=np.int32)
    remap[order] = np.arange(len(order), dtype=np.int32)

    labels.ravel()[mask_flat] = remap[comp_masked]
    return SegmentLabels(labels=labels, segment_count=int(len(order)))


def segment_sizes(labels: SegmentLabels) -> list[tuple[int, int]]:
    """Pixel count per dense segment id; counts sum to the labeled pixels."""
    ids = labels.labels[labels.labels != UNLABELED]
    if ids.size == 0:
        return []
    counts = np.bincount(ids, minlength=labels.segment_count)
    return [(int(i), int(c)) for i, c in enumerate(counts)]
