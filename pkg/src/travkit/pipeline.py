"""End-to-end frame processing: stereo, reconstruction, normals,
segmentation, surface analysis and artifact emission.

A frame rejected by the point-cloud quality gate is a valid result
(accepted=False, only unknown/undecided pixels), not an error; stage
failures raise :class:`PipelineError` carrying the stage name.
"""

from __future__ import annotations

import logging
import re
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import imgio, report
from .config import Config
from .normals import estimate_normals
from .reconstruct import OrganizedPointCloud, triangulate, valid_fraction, write_ply
from .segmentation import segment_by_normals
from .stereo import DisparityMap, encode_disparity16, match
from .traversability import (
    SurfacePlane,
    TerrainClassification,
    TraversabilityClass,
    class_histogram,
    classify_terrain,
    fit_all_planes,
    gravity_from_tilt,
)

logger = logging.getLogger(__name__)

DUMP_KINDS = ("disparity", "normals", "labels", "overlay", "ply", "report")

_PAIR_PATTERN = re.compile(r"^(\d+)_left\.(pgm|png)$")


class PipelineError(RuntimeError):
    """A stage failure, tagged with the stage that raised it."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        super().__init__(f"stage '{stage}' failed: {cause}")


@dataclass
class FrameResult:
    """Machine-readable outcome of one processed frame."""

    frame_id: str
    width: int
    height: int
    timings_ms: dict[str, float]
    valid_fraction: float
    accepted: bool
    reject_reason: str | None
    class_histogram: dict[str, int]
    dominant: dict | None

    def to_record(self) -> dict:
        return asdict(self)


def _dominant_summary(plane: SurfacePlane | None, terrain: TerrainClassification) -> dict | None:
    if plane is None:
        return None
    slope = next(
        (s.slope_deg for s in terrain.segments if s.segment_id == plane.segment_id), None
    )
    return {
        "segment_id": plane.segment_id,
        "inlier_count": plane.inlier_count,
        "normal": [round(float(x), 6) for x in plane.normal],
        "offset": round(plane.offset, 6),
        "centroid": [round(float(x), 6) for x in plane.centroid],
        "slope_deg": round(slope, 3) if slope is not None else None,
    }


def run_frame(
    left: np.ndarray,
    right: np.ndarray,
    config: Config,
    out_dir: str | Path | None = None,
    dumps: tuple[str, ...] = (),
    matcher: str | None = None,
    frame_id: str = "frame",
) -> FrameResult:
    """Process one rectified stereo pair and emit the requested artifacts.

    ``dumps`` selects artifact kinds from :data:`DUMP_KINDS`; they are only
    written when ``out_dir`` is given. ``matcher`` overrides the configured
    algorithm for this frame.
    """
    left = np.asarray(left)
    right = np.asarray(right)
    if left.shape != right.shape:
        raise PipelineError("input", ValueError(f"pair shapes differ: {left.shape} vs {right.shape}"))
    height, width = left.shape
    config.camera.validate_for_image(width, height)
    unknown = set(dumps) - set(DUMP_KINDS)
    if unknown:
        raise PipelineError("input", ValueError(f"unknown dump kinds: {sorted(unknown)}"))

    matcher_params = config.matcher
    if matcher is not None:
        matcher_params = replace(matcher_params, algorithm=matcher)
        matcher_params.validate()

    timings: dict[str, float] = {}

    def staged(stage, fn, *args, **kwargs):
        start = time.perf_counter()
        try:
            result = fn(*args, **kwargs)
        except Exception as exc:
            raise PipelineError(stage, exc) from exc
        timings[stage] = round((time.perf_counter() - start) * 1000.0, 3)
        return result

    disparity: DisparityMap = staged("stereo", match, left, right, matcher_params)
    cloud: OrganizedPointCloud = staged(
        "reconstruction",
        triangulate,
        disparity,
        config.camera,
        config.pipeline.z_max if config.pipeline.z_max > 0 else None,
    )
    normal_map = staged(
        "normals",
        estimate_normals,
        cloud,
        config.pipeline.normal_window_radius,
        config.pipeline.normal_method,
        config.camera,
    )
    labels = staged(
        "segmentation", segment_by_normals, cloud, normal_map, config.traversability.alpha_r
    )
    gravity_cam = gravity_from_tilt(config.camera.tilt_theta).in_camera(config.pipeline.rotation)
    planes = staged("plane_fit", fit_all_planes, cloud, labels, gravity_cam)
    terrain: TerrainClassification = staged(
        "classification",
        classify_terrain,
        cloud,
        normal_map.valid,
        labels,
        planes,
        gravity_cam,
        config.traversability,
    )

    if out_dir is not None and dumps:
        staged(
            "artifacts",
            _write_artifacts,
            Path(out_dir),
            frame_id,
            dumps,
            left,
            disparity,
            normal_map,
            labels,
            terrain,
            cloud,
        )

    result = FrameResult(
        frame_id=frame_id,
        width=width,
        height=height,
        timings_ms=timings,
        valid_fraction=valid_fraction(cloud),
        accepted=terrain.quality.accepted,
        reject_reason=terrain.quality.reason,
        class_histogram=class_histogram(terrain.class_map),
        dominant=_dominant_summary(terrain.dominant, terrain),
    )
    logger.info(
        "frame %s: accepted=%s valid=%.3f segments=%d",
        frame_id,
        result.accepted,
        result.valid_fraction,
        labels.segment_count,
    )
    return result


def _write_artifacts(
    out_dir: Path,
    frame_id: str,
    dumps: tuple[str, ...],
    left: np.ndarray,
    disparity: DisparityMap,
    normal_map,
    labels,
    terrain: TerrainClassification,
    cloud: OrganizedPointCloud,
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = out_dir / frame_id
    overlay = report.render_overlay(terrain.class_map, left)

    if "disparity" in dumps:
        imgio.write_gray16(f"{stem}_disparity16.png", encode_disparity16(disparity))
        imgio.write_gray8(f"{stem}_disparity.png", report.visualize_disparity(disparity))
    if "normals" in dumps:
        imgio.write_rgb(f"{stem}_normals.png", report.visualize_normals(normal_map))
    if "labels" in dumps:
        imgio.write_rgb(f"{stem}_labels.png", report.visualize_labels(labels))
        Path(f"{stem}_segment_sizes.txt").write_text(report.segment_sizes_text(labels))
    if "overlay" in dumps:
        imgio.write_rgb(f"{stem}_overlay.png", overlay)
    if "ply" in dumps:
        write_ply(f"{stem}_cloud.ply", cloud, overlay)
    if "report" in dumps:
        Path(f"{stem}_segments.txt").write_text(report.segment_table_text(terrain.segments))
        report.save_frame_figure(
            f"{stem}_report.png",
            left,
            report.visualize_disparity(disparity),
            report.visualize_labels(labels),
            overlay,
            class_histogram(terrain.class_map),
            title=frame_id,
        )


def discover_pairs(directory: str | Path) -> list[tuple[str, Path, Path]]:
    """Find ``<index>_left.<ext>`` / ``<index>_right.<ext>`` pairs, in
    numeric index order."""
    directory = Path(directory)
    pairs = []
    for entry in sorted(directory.iterdir()):
        m = _PAIR_PATTERN.match(entry.name)
        if not m:
            continue
        index, ext = m.groups()
        right = directory / f"{index}_right.{ext}"
        if right.exists():
            pairs.append((int(index), index, entry, right))
    pairs.sort(key=lambda item: item[0])
    return [(index, left, right) for _, index, left, right in pairs]


def run_sequence(
    directory: str | Path,
    config: Config,
    out_dir: str | Path | None = None,
    dumps: tuple[str, ...] = (),
    matcher: str | None = None,
) -> list[dict]:
    """Process every pair in a directory, skipping frames that error.

    Returns one record per frame: a FrameResult record, or
    ``{"frame_id", "error"}`` for unreadable/failed frames. Rejected frames
    are normal results. Writes ``summary.jsonl`` under ``out_dir``.
    """
    pairs = discover_pairs(directory)
    if not pairs:
        raise FileNotFoundError(f"no '<index>_left.<ext>' stereo pairs found in {directory}")

    records: list[dict] = []
    for frame_id, left_path, right_path in pairs:
        try:
            left = imgio.read_gray(left_path)
            right = imgio.read_gray(right_path)
            result = run_frame(
                left, right, config, out_dir=out_dir, dumps=dumps,
                matcher=matcher, frame_id=frame_id,
            )
            records.append(result.to_record())
        except Exception as exc:
            logger.warning("frame %s: failed (%s), continuing", frame_id, exc)
            records.append({"frame_id": frame_id, "error": str(exc)})

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report.write_summary(out / "summary.jsonl", records)
    return records
