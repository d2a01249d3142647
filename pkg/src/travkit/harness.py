"""Synthetic stereo scenes with analytic ground truth.

A scene is a set of textured planar patches, each owning a disjoint
rectangular footprint in the left image. Everything downstream of the
images (disparity, normals, segment masks, classes) follows analytically
from the patch planes, so a rendered scene is an exact oracle for the
whole pipeline.

Rendering: the left image is seeded value noise per patch; the right image
resamples the left along each row by the true (real-valued) disparity seen
from the right camera, so the pair is photometrically consistent at the
true correspondence.

Truth classes mark pixels the stereo rig cannot measure as unknown:
uncovered pixels, pixels whose corresponding right-image column falls
outside the sensor (u - d < 0), and disparities below the resolvable
floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import (
    CameraIntrinsics,
    Config,
    MatcherParams,
    PipelineParams,
    TraversabilityParams,
    parse_kv_text,
)
from .normals import NormalMap
from .reconstruct import OrganizedPointCloud, triangulate
from .segmentation import UNLABELED, SegmentLabels
from .stereo import DisparityMap
from .traversability import (
    CLASS_NAMES,
    TraversabilityClass,
    gravity_from_tilt,
    min_inliers,
)


@dataclass(frozen=True)
class PlanePatch:
    """One textured planar patch: plane n.P + offset = 0 in camera frame,
    anchored to the half-open left-image footprint (v0, v1, u0, u1)."""

    normal: tuple[float, float, float]
    offset: float
    region: tuple[int, int, int, int]
    texture_seed: int = 0

    @property
    def unit_normal(self) -> np.ndarray:
        vec = np.asarray(self.normal, dtype=np.float64)
        return vec / np.linalg.norm(vec)


@dataclass(frozen=True)
class SceneSpec:
    """Analytic scene description: camera plus disjoint planar patches."""

    width: int
    height: int
    camera: CameraIntrinsics
    patches: tuple[PlanePatch, ...]
    min_truth_disparity: float = 1.0

    def __post_init__(self):
        covered = np.zeros((self.height, self.width), dtype=bool)
        for patch in self.patches:
            v0, v1, u0, u1 = patch.region
            if not (0 <= v0 < v1 <= self.height and 0 <= u0 < u1 <= self.width):
                raise ValueError(f"patch region {patch.region} outside {self.height}x{self.width}")
            if covered[v0:v1, u0:u1].any():
                raise ValueError("patch footprints overlap")
            covered[v0:v1, u0:u1] = True


@dataclass
class SceneTruth:
    """Analytic per-pixel ground truth for a rendered scene."""

    disparity: np.ndarray        # (H, W) float64, NaN where uncovered
    normals: NormalMap           # camera-facing patch normals
    labels: SegmentLabels        # patch index per covered pixel
    classes: np.ndarray          # (H, W) uint8 TraversabilityClass values
    visible: np.ndarray          # (H, W) bool: measurable by the stereo rig
    patch_classes: dict[int, TraversabilityClass]

    def disparity_map(self, max_disparity: int) -> DisparityMap:
        return DisparityMap(self.disparity.astype(np.float32), max_disparity)


def _ray_grid(width: int, height: int, cam: CameraIntrinsics) -> np.ndarray:
    """Unnormalized viewing rays ((u-Up)/f, (v-Vp)/f, 1) per pixel."""
    rays = np.empty((height, width, 3), dtype=np.float64)
    rays[..., 0] = (np.arange(width)[None, :] - cam.principal_point_u) / cam.focal
    rays[..., 1] = (np.arange(height)[:, None] - cam.principal_point_v) / cam.focal
    rays[..., 2] = 1.0
    return rays


def _patch_depth(patch: PlanePatch, rays: np.ndarray, origin_x: float = 0.0) -> np.ndarray:
    """Depth of the patch plane along each ray from (origin_x, 0, 0)."""
    normal = patch.unit_normal
    denom = rays @ normal
    numer = -(patch.offset + normal[0] * origin_x)
    with np.errstate(divide="ignore", invalid="ignore"):
        depth = numer / denom
    depth[np.abs(denom) < 1e-12] = np.inf
    return depth


_NOISE_SPACING = 3.0


def _lattice_hash(seed: int, iy: np.ndarray, ix: np.ndarray) -> np.ndarray:
    """Deterministic uniform [0, 1) value per integer lattice point."""
    seed_term = np.uint64((seed * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF)
    z = (
        ix.astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
        + iy.astype(np.uint64) * np.uint64(0xBF58476D1CE4E5B9)
        + seed_term
    )
    z ^= z >> np.uint64(30)
    z *= np.uint64(0xBF58476D1CE4E5B9)
    z ^= z >> np.uint64(27)
    z *= np.uint64(0x94D049BB133111EB)
    z ^= z >> np.uint64(31)
    return z.astype(np.float64) / float(2**64)


def _texture_at(seed: int, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Continuous seeded value-noise texture evaluated at (possibly
    fractional) left-image coordinates.

    Both views sample this same analytic field, so the stereo pair is
    photometrically consistent at the true correspondence without any
    resampling blur.
    """
    fy = np.asarray(ys, dtype=np.float64) / _NOISE_SPACING
    fx = np.asarray(xs, dtype=np.float64) / _NOISE_SPACING
    y0 = np.floor(fy).astype(np.int64)
    x0 = np.floor(fx).astype(np.int64)
    ty = fy - y0
    tx = fx - x0
    # Offset keeps lattice indices positive for the uint64 hash.
    y0 += 1 << 16
    x0 += 1 << 16
    a = _lattice_hash(seed, y0, x0)
    b = _lattice_hash(seed, y0, x0 + 1)
    c = _lattice_hash(seed, y0 + 1, x0)
    d = _lattice_hash(seed, y0 + 1, x0 + 1)
    value = a * (1 - ty) * (1 - tx) + b * (1 - ty) * tx + c * ty * (1 - tx) + d * ty * tx
    return 25.0 + value * 205.0


def truth_disparity(spec: SceneSpec) -> np.ndarray:
    """Real-valued disparity of every covered pixel; NaN where uncovered.

    Raises when a patch lies behind (or edge-on to) the camera anywhere in
    its footprint.
    """
    cam = spec.camera
    rays = _ray_grid(spec.width, spec.height, cam)
    disparity = np.full((spec.height, spec.width), np.nan)
    for index, patch in enumerate(spec.patches):
        v0, v1, u0, u1 = patch.region
        depth = _patch_depth(patch, rays[v0:v1, u0:u1])
        if not np.all(np.isfinite(depth)) or np.any(depth <= 0):
            raise ValueError(f"patch {index} lies behind the camera inside its footprint")
        disparity[v0:v1, u0:u1] = cam.focal * cam.baseline / depth
    return disparity


def _truth_fields(spec: SceneSpec) -> tuple[np.ndarray, NormalMap, SegmentLabels, np.ndarray]:
    """Disparity, camera-facing normals, patch labels and visibility mask."""
    disparity = truth_disparity(spec)
    rays = _ray_grid(spec.width, spec.height, spec.camera)
    vectors = np.zeros((spec.height, spec.width, 3))
    labels = np.full((spec.height, spec.width), UNLABELED, dtype=np.int32)
    for index, patch in enumerate(spec.patches):
        v0, v1, u0, u1 = patch.region
        normal = patch.unit_normal
        facing = rays[v0:v1, u0:u1] @ normal
        sign = np.where(facing > 0, -1.0, 1.0)
        vectors[v0:v1, u0:u1] = sign[..., None] * normal
        labels[v0:v1, u0:u1] = index
    covered = labels != UNLABELED
    cols = np.arange(spec.width)[None, :]
    with np.errstate(invalid="ignore"):
        visible = (
            covered
            & (disparity >= spec.min_truth_disparity)
            & (cols - disparity >= 0)
        )
    normal_map = NormalMap(vectors=vectors, valid=covered)
    segment_labels = SegmentLabels(labels=labels, segment_count=len(spec.patches))
    return disparity, normal_map, segment_labels, visible


def scene_truth(spec: SceneSpec, params: TraversabilityParams) -> SceneTruth:
    """Full analytic ground truth, including per-patch traversability.

    Classes replicate the downstream analysis on exact planes: slope
    thresholds against gravity, dominant-plane selection over visible
    pixel counts, step demotion against the dominant plane, and undecided
    for undersized patches. With no qualifying dominant plane, every
    visible pixel is undecided (the frame would be skipped).
    """
    disparity, normal_map, segment_labels, visible = _truth_fields(spec)
    cam = spec.camera
    gravity_cam = gravity_from_tilt(cam.tilt_theta).in_camera()
    rays = _ray_grid(spec.width, spec.height, cam)
    threshold = min_inliers(spec.width, spec.height, params.min_inlier_ratio)

    counts: list[int] = []
    centroids: list[np.ndarray | None] = []
    slopes: list[float] = []
    oriented: list[tuple[np.ndarray, float]] = []  # gravity-oriented (normal, offset)
    for index, patch in enumerate(spec.patches):
        mask = (segment_labels.labels == index) & visible
        counts.append(int(mask.sum()))
        normal = patch.unit_normal
        offset = patch.offset
        if float(normal @ gravity_cam) > 0:
            normal, offset = -normal, -offset
        oriented.append((normal, offset))
        slopes.append(math.acos(float(np.clip(-(normal @ gravity_cam), -1.0, 1.0))))
        if counts[-1]:
            depth = _patch_depth(patch, rays)[mask]
            centroids.append((rays[mask] * depth[:, None]).mean(axis=0))
        else:
            centroids.append(None)

    def slope_class(slope: float) -> TraversabilityClass:
        if slope <= params.alpha_max:
            return TraversabilityClass.TRAVERSABLE
        if slope <= params.alpha_semi:
            return TraversabilityClass.SEMI_TRAVERSABLE
        return TraversabilityClass.NON_TRAVERSABLE

    base = [slope_class(s) for s in slopes]
    dominant_idx: int | None = None
    for index in range(len(spec.patches)):
        if base[index] != TraversabilityClass.TRAVERSABLE or counts[index] < threshold:
            continue
        centroid = centroids[index]
        if centroid is None or float(centroid @ gravity_cam) <= 0:
            continue
        if dominant_idx is None or counts[index] > counts[dominant_idx]:
            dominant_idx = index

    patch_classes: dict[int, TraversabilityClass] = {}
    for index in range(len(spec.patches)):
        cls = base[index]
        if dominant_idx is not None and cls in (
            TraversabilityClass.TRAVERSABLE,
            TraversabilityClass.SEMI_TRAVERSABLE,
        ):
            dom_normal, dom_offset = oriented[dominant_idx]
            centroid = centroids[index]
            if centroid is not None:
                distance = abs(float(dom_normal @ centroid) + dom_offset)
                if distance > params.h_max:
                    cls = TraversabilityClass.NON_TRAVERSABLE
        if counts[index] < threshold or dominant_idx is None:
            cls = TraversabilityClass.UNDECIDED
        patch_classes[index] = cls

    classes = np.full((spec.height, spec.width), TraversabilityClass.UNKNOWN.value, dtype=np.uint8)
    for index in range(len(spec.patches)):
        mask = (segment_labels.labels == index) & visible
        classes[mask] = patch_classes[index].value

    return SceneTruth(
        disparity=disparity,
        normals=normal_map,
        labels=segment_labels,
        classes=classes,
        visible=visible,
        patch_classes=patch_classes,
    )


def render_scene(
    spec: SceneSpec, params: TraversabilityParams | None = None
) -> tuple[np.ndarray, np.ndarray, SceneTruth]:
    """Render the stereo pair and compute the scene truth.

    Returns (left, right, truth) with uint8 images. Uncovered pixels are
    black in both views.
    """
    truth = scene_truth(spec, params if params is not None else TraversabilityParams())
    cam = spec.camera
    height, width = spec.height, spec.width

    left = np.zeros((height, width), dtype=np.float64)
    rows_grid = np.arange(height)[:, None] * np.ones((1, width))
    cols_grid = np.ones((height, 1)) * np.arange(width)[None, :]
    for index, patch in enumerate(spec.patches):
        v0, v1, u0, u1 = patch.region
        sub_rows = rows_grid[v0:v1, u0:u1]
        sub_cols = cols_grid[v0:v1, u0:u1]
        left[v0:v1, u0:u1] = _texture_at(patch.texture_seed, sub_rows, sub_cols)

    # Right view: per pixel, the nearest patch whose 3D point projects back
    # into that patch's left-image footprint; the texture is then evaluated
    # at the (fractional) left-image position u + d along the shared row.
    rays = _ray_grid(width, height, cam)
    best_depth = np.full((height, width), np.inf)
    right = np.zeros((height, width), dtype=np.float64)
    for patch in spec.patches:
        v0, v1, u0, u1 = patch.region
        depth = _patch_depth(patch, rays, origin_x=cam.baseline)
        disparity = cam.focal * cam.baseline / depth
        u_in_left = cols_grid + disparity
        rows_ok = np.zeros((height, width), dtype=bool)
        rows_ok[v0:v1, :] = True
        candidate = (
            rows_ok
            & (depth > 0)
            & (u_in_left >= u0)
            & (u_in_left <= u1 - 1)
            & (depth < best_depth)
        )
        best_depth[candidate] = depth[candidate]
        right[candidate] = _texture_at(
            patch.texture_seed, rows_grid[candidate], u_in_left[candidate]
        )

    return (
        np.clip(np.rint(left), 0, 255).astype(np.uint8),
        np.clip(np.rint(right), 0, 255).astype(np.uint8),
        truth,
    )


def truth_cloud(spec: SceneSpec) -> OrganizedPointCloud:
    """Triangulated cloud of the exact truth disparity (isolates geometry
    from matcher quantization). Keeps float64 disparities for precision."""
    disparity = truth_disparity(spec)
    dmap = DisparityMap(disparity, max_disparity=int(np.nanmax(disparity)) + 1)
    return triangulate(dmap, spec.camera)


@dataclass
class ScoreReport:
    """Confusion counts over the five classes, truth-unknown excluded."""

    confusion: np.ndarray  # (5, 5) int64, rows = truth, cols = predicted
    recall: dict[str, float] = field(default_factory=dict)
    precision: dict[str, float] = field(default_factory=dict)


def score(result_classes: np.ndarray, truth_classes: np.ndarray) -> ScoreReport:
    """Per-class precision/recall of a predicted class map against truth.

    Pixels whose truth is unknown are excluded entirely.
    """
    if result_classes.shape != truth_classes.shape:
        raise ValueError(
            f"class map shapes differ: {result_classes.shape} vs {truth_classes.shape}"
        )
    keep = truth_classes != TraversabilityClass.UNKNOWN.value
    n = len(TraversabilityClass)
    flat = truth_classes[keep].astype(np.int64) * n + result_classes[keep].astype(np.int64)
    confusion = np.bincount(flat, minlength=n * n).reshape(n, n)
    report = ScoreReport(confusion=confusion)
    for cls in TraversabilityClass:
        name = CLASS_NAMES[cls]
        row = confusion[cls.value].sum()
        col = confusion[:, cls.value].sum()
        report.recall[name] = float(confusion[cls.value, cls.value] / row) if row else float("nan")
        report.precision[name] = float(confusion[cls.value, cls.value] / col) if col else float("nan")
    return report


# ---------------------------------------------------------------------------
# Scene serialization (same flat key = value format as config files).

def scene_to_text(spec: SceneSpec) -> str:
    cam = spec.camera
    lines = [
        "# travkit synthetic scene",
        f"image_width = {spec.width}",
        f"image_height = {spec.height}",
        f"focal = {cam.focal}",
        f"principal_point_u = {cam.principal_point_u}",
        f"principal_point_v = {cam.principal_point_v}",
        f"baseline = {cam.baseline}",
        f"tilt_theta = {cam.tilt_theta}",
        f"min_truth_disparity = {spec.min_truth_disparity}",
        f"patch_count = {len(spec.patches)}",
    ]
    for i, patch in enumerate(spec.patches):
        lines.append(f"patch{i}_normal = " + ",".join(repr(x) for x in patch.normal))
        lines.append(f"patch{i}_offset = {patch.offset!r}")
        lines.append(f"patch{i}_region = " + ",".join(str(x) for x in patch.region))
        lines.append(f"patch{i}_seed = {patch.texture_seed}")
    return "\n".join(lines) + "\n"


def scene_from_text(text: str) -> SceneSpec:
    values = parse_kv_text(text)
    camera = CameraIntrinsics(
        focal=float(values["focal"]),
        principal_point_u=float(values["principal_point_u"]),
        principal_point_v=float(values["principal_point_v"]),
        baseline=float(values["baseline"]),
        tilt_theta=float(values.get("tilt_theta", "0")),
    )
    patches = []
    for i in range(int(values["patch_count"])):
        normal = tuple(float(x) for x in values[f"patch{i}_normal"].split(","))
        region = tuple(int(x) for x in values[f"patch{i}_region"].split(","))
        patches.append(
            PlanePatch(
                normal=normal,  # type: ignore[arg-type]
                offset=float(values[f"patch{i}_offset"]),
                region=region,  # type: ignore[arg-type]
                texture_seed=int(values[f"patch{i}_seed"]),
            )
        )
    return SceneSpec(
        width=int(values["image_width"]),
        height=int(values["image_height"]),
        camera=camera,
        patches=tuple(patches),
        min_truth_disparity=float(values.get("min_truth_disparity", "1.0")),
    )


# ---------------------------------------------------------------------------
# Preset scenes.
#
# The rig is deliberately short-range and wide-baseline: the disparity
# gradient of a plane is baseline * cos(slope) / (cos(slope) * cam_height +
# sin(slope) * base_depth) per image row (focal-independent), and keeping it
# well above the 1 px quantization step is what makes integer matching
# reconstruct tilted surfaces faithfully. Scene bands are separated by
# uncovered gap rows wider than the normal-estimation window, so estimated
# normals never mix two patches.

RIG_WIDTH = 320
RIG_HEIGHT = 240
RIG_CAMERA = CameraIntrinsics(
    focal=150.0, principal_point_u=160.0, principal_point_v=120.0, baseline=0.9
)
RIG_CAMERA_HEIGHT = 1.0  # meters above the floor

_FLOOR_ROWS = (156, 204)
_RAMP_ROWS = (84, 144)
_RAMP_BASE_DEPTH = 2.0


def rig_config(
    h_max: float = 0.3,
    alpha_r: float = math.radians(15.0),
    alpha_max: float = math.radians(30.0),
    alpha_semi: float = math.radians(45.0),
    max_disparity: int = 80,
) -> Config:
    """Pipeline configuration matched to the preset rig."""
    return Config(
        camera=RIG_CAMERA,
        traversability=TraversabilityParams(
            alpha_r=alpha_r,
            alpha_max=alpha_max,
            alpha_semi=alpha_semi,
            h_max=h_max,
        ),
        matcher=MatcherParams(algorithm="acso", max_disparity=max_disparity, block_radius=3),
        pipeline=PipelineParams(),
    ).validate()


def _floor_patch(rows: tuple[int, int] = _FLOOR_ROWS, seed: int = 11) -> PlanePatch:
    # Floor plane Y = camera height: normal (0,-1,0), offset = height.
    return PlanePatch(
        normal=(0.0, -1.0, 0.0),
        offset=RIG_CAMERA_HEIGHT,
        region=(*rows, 0, RIG_WIDTH),
        texture_seed=seed,
    )


def _wall_patch(depth: float, rows: tuple[int, int], seed: int = 23) -> PlanePatch:
    return PlanePatch(
        normal=(0.0, 0.0, 1.0), offset=-depth, region=(*rows, 0, RIG_WIDTH), texture_seed=seed
    )


def _ramp_patch(angle: float, base_depth: float, rows: tuple[int, int], seed: int = 37) -> PlanePatch:
    """Plane tilted ``angle`` rad from horizontal, rising away from the
    camera through the floor line at ``base_depth``."""
    normal = (0.0, -math.cos(angle), -math.sin(angle))
    offset = math.cos(angle) * RIG_CAMERA_HEIGHT + math.sin(angle) * base_depth
    return PlanePatch(normal=normal, offset=offset, region=(*rows, 0, RIG_WIDTH), texture_seed=seed)


def scene_constant_shift(shift: float, seed: int = 5) -> SceneSpec:
    """Fronto-parallel plane whose disparity is exactly ``shift`` everywhere."""
    depth = RIG_CAMERA.focal * RIG_CAMERA.baseline / shift
    patch = PlanePatch(
        normal=(0.0, 0.0, 1.0), offset=-depth, region=(0, RIG_HEIGHT, 0, RIG_WIDTH), texture_seed=seed
    )
    return SceneSpec(RIG_WIDTH, RIG_HEIGHT, RIG_CAMERA, (patch,), min_truth_disparity=0.5)


def scene_floor() -> SceneSpec:
    return SceneSpec(RIG_WIDTH, RIG_HEIGHT, RIG_CAMERA, (_floor_patch(),))


def scene_floor_wall() -> SceneSpec:
    """Floor in front of a large vertical wall, separated by a gap band."""
    return SceneSpec(
        RIG_WIDTH, RIG_HEIGHT, RIG_CAMERA, (_floor_patch(), _wall_patch(4.0, (0, 132)))
    )


def scene_ramp(angle: float) -> SceneSpec:
    """Floor in front, a ramp band at ``angle`` rad behind a gap."""
    return SceneSpec(
        RIG_WIDTH,
        RIG_HEIGHT,
        RIG_CAMERA,
        (_floor_patch(), _ramp_patch(angle, _RAMP_BASE_DEPTH, _RAMP_ROWS)),
    )


def scene_step(step_height: float) -> SceneSpec:
    """Floor plus a raised platform (floor + ``step_height``) behind a gap.

    The platform is parallel to the floor, so its centroid's perpendicular
    distance to the floor plane is exactly ``step_height``.
    """
    platform = PlanePatch(
        normal=(0.0, -1.0, 0.0),
        offset=RIG_CAMERA_HEIGHT - step_height,
        region=(126, 148, 0, RIG_WIDTH),
        texture_seed=41,
    )
    return SceneSpec(RIG_WIDTH, RIG_HEIGHT, RIG_CAMERA, (_floor_patch((162, 204)), platform))


def scene_two_plane() -> SceneSpec:
    """Floor and wall meeting at a sharp fold; footprints touch."""
    depth = 3.0
    fold = int(
        RIG_CAMERA.principal_point_v + RIG_CAMERA.focal * RIG_CAMERA_HEIGHT / depth
    )
    return SceneSpec(
        RIG_WIDTH,
        RIG_HEIGHT,
        RIG_CAMERA,
        (_floor_patch((fold, 208)), _wall_patch(depth, (130, fold))),
    )


def scene_ceiling() -> SceneSpec:
    """Level plane above the camera only: traversable by slope but never a
    valid ground plane, so the frame is rejected."""
    patch = PlanePatch(
        normal=(0.0, -1.0, 0.0),
        offset=-RIG_CAMERA_HEIGHT,
        region=(36, 108, 0, RIG_WIDTH),
        texture_seed=53,
    )
    return SceneSpec(RIG_WIDTH, RIG_HEIGHT, RIG_CAMERA, (patch,))


def preset_scene(name: str) -> tuple[SceneSpec, Config]:
    """Named preset scenes with a matching pipeline configuration."""
    presets = {
        "floor": (scene_floor, {"h_max": 5.0}),
        "floor_wall": (scene_floor_wall, {"h_max": 5.0}),
        "ramp_ok": (lambda: scene_ramp(math.radians(20.0)), {"h_max": 5.0}),
        "ramp_steep": (lambda: scene_ramp(math.radians(60.0)), {"h_max": 5.0}),
        "step": (lambda: scene_step(0.6), {"h_max": 0.3}),
        "two_plane": (scene_two_plane, {"h_max": 5.0}),
        "ceiling": (scene_ceiling, {"h_max": 5.0}),
    }
    if name not in presets:
        raise KeyError(f"unknown preset scene {name!r}; choose from {sorted(presets)}")
    builder, overrides = presets[name]
    return builder(), rig_config(**overrides)
