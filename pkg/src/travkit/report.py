"""Rendering of frame artifacts: raster dumps, the per-segment text table,
the line-delimited run summary, and the matplotlib report figure.

Visual conventions: disparity renders near = bright (scaled by
255/max_disparity, invalid black); normals as (n+1)/2 per RGB channel;
segment labels as pseudo-random colors keyed by id; the classification
overlay uses green (0,255,0) traversable, blue (0,0,255) semi-traversable,
red (255,0,0) non-traversable, black unknown, and keeps the original
grayscale pixel for undecided.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .segmentation import SegmentLabels, UNLABELED, segment_sizes
from .stereo import DisparityMap
from .normals import NormalMap
from .traversability import CLASS_NAMES, SegmentReport, TraversabilityClass

CLASS_COLORS = {
    TraversabilityClass.TRAVERSABLE: (0, 255, 0),
    TraversabilityClass.SEMI_TRAVERSABLE: (0, 0, 255),
    TraversabilityClass.NON_TRAVERSABLE: (255, 0, 0),
    TraversabilityClass.UNKNOWN: (0, 0, 0),
}


def visualize_disparity(dmap: DisparityMap) -> np.ndarray:
    """8-bit visualization, near (large disparity) bright, invalid black."""
    out = np.zeros(dmap.shape, dtype=np.uint8)
    valid = dmap.valid
    scaled = np.clip(dmap.values[valid] * (255.0 / dmap.max_disparity), 0, 255)
    out[valid] = np.rint(scaled).astype(np.uint8)
    return out


def visualize_normals(nmap: NormalMap) -> np.ndarray:
    """Standard normal-map visualization: channel = (n+1)/2 * 255."""
    out = np.zeros(nmap.shape + (3,), dtype=np.uint8)
    vec = np.clip((nmap.vectors + 1.0) * 0.5 * 255.0, 0, 255)
    out[nmap.valid] = np.rint(vec[nmap.valid]).astype(np.uint8)
    return out


def label_color(segment_id: int) -> tuple[int, int, int]:
    rng = np.random.default_rng(segment_id)
    return tuple(int(c) for c in rng.integers(64, 256, size=3))


def visualize_labels(labels: SegmentLabels) -> np.ndarray:
    """Pseudo-random color per segment id, unlabeled pixels black."""
    out = np.zeros(labels.shape + (3,), dtype=np.uint8)
    if labels.segment_count:
        palette = np.array(
            [label_color(i) for i in range(labels.segment_count)], dtype=np.uint8
        )
        mask = labels.labels != UNLABELED
        out[mask] = palette[labels.labels[mask]]
    return out


def render_overlay(class_map: np.ndarray, left_gray: np.ndarray) -> np.ndarray:
    """Classification overlay with exact class colors; undecided pixels
    keep the original grayscale value."""
    out = np.zeros(class_map.shape + (3,), dtype=np.uint8)
    for cls, color in CLASS_COLORS.items():
        out[class_map == cls.value] = color
    undecided = class_map == TraversabilityClass.UNDECIDED.value
    out[undecided] = left_gray[undecided, None]
    return out


def segment_sizes_text(labels: SegmentLabels) -> str:
    lines = ["segment_id pixel_count"]
    lines += [f"{sid} {count}" for sid, count in segment_sizes(labels)]
    return "\n".join(lines) + "\n"


def segment_table_text(reports: list[SegmentReport]) -> str:
    """Fixed-width per-segment table: geometry, slope, step and class."""
    header = (
        f"{'id':>4} {'inliers':>8} {'nx':>8} {'ny':>8} {'nz':>8} {'D':>9} "
        f"{'cx':>8} {'cy':>8} {'cz':>8} {'slope_deg':>9} {'step_m':>8} class"
    )
    lines = [header]
    for r in reports:
        if r.normal is None:
            lines.append(
                f"{r.segment_id:>4} {r.inlier_count:>8} {'-':>8} {'-':>8} {'-':>8} {'-':>9} "
                f"{'-':>8} {'-':>8} {'-':>8} {'-':>9} {'-':>8} {CLASS_NAMES[r.final_class]}"
            )
            continue
        step = f"{r.step_distance:8.4f}" if r.step_distance is not None else f"{'-':>8}"
        lines.append(
            f"{r.segment_id:>4} {r.inlier_count:>8} "
            f"{r.normal[0]:8.4f} {r.normal[1]:8.4f} {r.normal[2]:8.4f} {r.offset:9.4f} "
            f"{r.centroid[0]:8.3f} {r.centroid[1]:8.3f} {r.centroid[2]:8.3f} "
            f"{r.slope_deg:9.3f} {step} {CLASS_NAMES[r.final_class]}"
        )
    return "\n".join(lines) + "\n"


def save_frame_figure(
    path: str | Path,
    left: np.ndarray,
    disparity_img: np.ndarray,
    labels_img: np.ndarray,
    overlay_img: np.ndarray,
    histogram: dict[str, int],
    title: str = "",
) -> None:
    """Multi-panel report figure rendered to file."""
    fig, axes = plt.subplots(2, 3, figsize=(12, 6.5))
    panels = [
        (left, "left (rectified)", "gray"),
        (disparity_img, "disparity (near = bright)", "gray"),
        (labels_img, "surface segments", None),
        (overlay_img, "traversability", None),
    ]
    for ax, (img, name, cmap) in zip(axes.flat, panels):
        ax.imshow(img, cmap=cmap, interpolation="nearest")
        ax.set_title(name, fontsize=10)
        ax.axis("off")

    ax = axes.flat[4]
    names = list(histogram)
    counts = [histogram[n] for n in names]
    colors = ["#00c000", "#2040ff", "#e02020", "#404040", "#b0b0b0"]
    ax.bar(range(len(names)), counts, color=colors[: len(names)])
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels([n.replace("_", "\n") for n in names], fontsize=7)
    ax.set_title("class histogram (pixels)", fontsize=10)

    axes.flat[5].axis("off")
    if title:
        fig.suptitle(title, fontsize=12)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def summary_line(record: dict) -> str:
    """One machine-readable line of the run summary."""
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def write_summary(path: str | Path, records: list[dict]) -> None:
    Path(path).write_text("\n".join(summary_line(r) for r in records) + "\n")
