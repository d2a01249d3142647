"""Tunable parameters of the pipeline and their validation.

Configuration lives in a flat ``key = value`` text file. Every key can be
overridden by an environment variable (``TRAVKIT_<KEY>``) or a CLI flag of
the same name; precedence is file < environment < CLI.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ENV_PREFIX = "TRAVKIT_"

HALF_PI = math.pi / 2.0

# Rotation taking camera-frame coordinates (X right, Y down, Z forward) to
# the level reference frame in which untilted gravity is (0, 0, -1).
# Maps camera "down" (+Y) onto the reference "down" (-Z).
DEFAULT_CAM_TO_GRAVITY = (1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0)


class ConfigError(ValueError):
    """Raised for unparseable config text or an invalid parameter value.

    ``key`` names the offending parameter (or None for file-level errors).
    """

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        prefix = []
        if key is not None:
            prefix.append(f"key '{key}'")
        if line is not None:
            prefix.append(f"line {line}")
        if prefix:
            message = f"{', '.join(prefix)}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Rectified-camera geometry. Focal and principal point in pixels,
    baseline in meters, tilt (pitch below horizontal) in radians."""

    focal: float
    principal_point_u: float
    principal_point_v: float
    baseline: float
    tilt_theta: float = 0.0

    def validate(self) -> None:
        if not self.focal > 0:
            raise ConfigError("focal length must be > 0", key="focal")
        if not self.baseline > 0:
            raise ConfigError("baseline must be > 0", key="baseline")
        if self.principal_point_u < 0:
            raise ConfigError("principal point must be non-negative", key="principal_point_u")
        if self.principal_point_v < 0:
            raise ConfigError("principal point must be non-negative", key="principal_point_v")
        if not abs(self.tilt_theta) < HALF_PI:
            raise ConfigError("tilt must satisfy |tilt| < pi/2", key="tilt_theta")

    def validate_for_image(self, width: int, height: int) -> None:
        """Image-size dependent checks, run once the frame size is known."""
        if not 0 <= self.principal_point_u < width:
            raise ConfigError(
                f"principal point u={self.principal_point_u} outside image width {width}",
                key="principal_point_u",
            )
        if not 0 <= self.principal_point_v < height:
            raise ConfigError(
                f"principal point v={self.principal_point_v} outside image height {height}",
                key="principal_point_v",
            )


@dataclass(frozen=True)
class TraversabilityParams:
    """Vehicle kinematic limits and classifier thresholds (radians/meters)."""

    alpha_r: float = math.radians(10.0)
    alpha_max: float = math.radians(30.0)
    alpha_semi: float = math.radians(45.0)
    h_max: float = 0.30
    min_inlier_ratio: float = 0.02
    quality_min_ratio: float = 0.10

    def validate(self) -> None:
        if not 0 < self.alpha_r < HALF_PI:
            raise ConfigError("roughness angle must be in (0, pi/2)", key="alpha_r")
        if not 0 < self.alpha_max < HALF_PI:
            raise ConfigError("max slope must be in (0, pi/2)", key="alpha_max")
        if not self.alpha_max < self.alpha_semi < HALF_PI:
            raise ConfigError(
                "semi-traversable bound must satisfy alpha_max < alpha_semi < pi/2",
                key="alpha_semi",
            )
        if not self.h_max > 0:
            raise ConfigError("max step must be > 0", key="h_max")
        if not 0 < self.min_inlier_ratio < 1:
            raise ConfigError("min inlier ratio must be in (0, 1)", key="min_inlier_ratio")
        if not 0 <= self.quality_min_ratio < 1:
            raise ConfigError("quality ratio must be in [0, 1)", key="quality_min_ratio")


@dataclass(frozen=True)
class MatcherParams:
    """Stereo matcher selection and tuning."""

    algorithm: str = "acso"  # "bb" (block based) or "acso" (2-pass scanline)
    max_disparity: int = 64
    block_radius: int = 3
    lr_consistency_tol: int = 1
    smoothness_p1: float = 12.0
    smoothness_p2: float = 64.0

    def validate(self) -> None:
        if self.algorithm not in ("bb", "acso"):
            raise ConfigError("algorithm must be 'bb' or 'acso'", key="algorithm")
        if self.max_disparity < 1:
            raise ConfigError("max disparity must be >= 1", key="max_disparity")
        if self.block_radius < 1:
            raise ConfigError("block radius must be >= 1", key="block_radius")
        if self.lr_consistency_tol < 0:
            raise ConfigError("LR tolerance must be >= 0", key="lr_consistency_tol")
        if not 0 < self.smoothness_p1:
            raise ConfigError("smoothness p1 must be > 0", key="smoothness_p1")
        if not self.smoothness_p1 <= self.smoothness_p2:
            raise ConfigError("smoothness p2 must be >= p1", key="smoothness_p2")


@dataclass(frozen=True)
class PipelineParams:
    """Stage options that are not camera, vehicle or matcher parameters."""

    normal_method: str = "covariance"  # covariance | gradient | depth_change
    normal_window_radius: int = 5
    z_max: float = 0.0  # 0 disables the far-range cutoff
    cam_to_gravity: tuple[float, ...] = DEFAULT_CAM_TO_GRAVITY

    def validate(self) -> None:
        if self.normal_method not in ("covariance", "gradient", "depth_change"):
            raise ConfigError(
                "normal method must be covariance, gradient or depth_change",
                key="normal_method",
            )
        if self.normal_window_radius < 1:
            raise ConfigError("normal window radius must be >= 1", key="normal_window_radius")
        if self.z_max < 0:
            raise ConfigError("z_max must be >= 0 (0 disables)", key="z_max")
        mat = self.rotation
        if not np.allclose(mat @ mat.T, np.eye(3), atol=1e-9) or not math.isclose(
            float(np.linalg.det(mat)), 1.0, abs_tol=1e-9
        ):
            raise ConfigError("cam_to_gravity must be a proper rotation (9 values)", key="cam_to_gravity")

    @property
    def rotation(self) -> np.ndarray:
        """Camera-to-gravity-frame rotation as a 3x3 matrix."""
        return np.asarray(self.cam_to_gravity, dtype=float).reshape(3, 3)


@dataclass(frozen=True)
class Config:
    """Validated, immutable bundle of every pipeline parameter."""

    camera: CameraIntrinsics
    traversability: TraversabilityParams = field(default_factory=TraversabilityParams)
    matcher: MatcherParams = field(default_factory=MatcherParams)
    pipeline: PipelineParams = field(default_factory=PipelineParams)

    def validate(self) -> "Config":
        self.camera.validate()
        self.traversability.validate()
        self.matcher.validate()
        self.pipeline.validate()
        return self


_FLOAT_KEYS = {
    "focal", "principal_point_u", "principal_point_v", "baseline", "tilt_theta",
    "alpha_r", "alpha_max", "alpha_semi", "h_max", "min_inlier_ratio",
    "quality_min_ratio", "smoothness_p1", "smoothness_p2", "z_max",
}
_INT_KEYS = {"max_disparity", "block_radius", "lr_consistency_tol", "normal_window_radius"}
_STR_KEYS = {"algorithm", "normal_method"}
_VEC_KEYS = {"cam_to_gravity"}

KNOWN_KEYS: tuple[str, ...] = tuple(sorted(_FLOAT_KEYS | _INT_KEYS | _STR_KEYS | _VEC_KEYS))

REQUIRED_KEYS: tuple[str, ...] = ("focal", "principal_point_u", "principal_point_v", "baseline")

_CAMERA_KEYS = ("focal", "principal_point_u", "principal_point_v", "baseline", "tilt_theta")
_TRAV_KEYS = ("alpha_r", "alpha_max", "alpha_semi", "h_max", "min_inlier_ratio", "quality_min_ratio")
_MATCHER_KEYS = (
    "algorithm", "max_disparity", "block_radius", "lr_consistency_tol",
    "smoothness_p1", "smoothness_p2",
)
_PIPELINE_KEYS = ("normal_method", "normal_window_radius", "z_max", "cam_to_gravity")


def parse_kv_text(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` lines; '#' starts a comment.

    Raises ConfigError with the line number on malformed lines or
    duplicated keys.
    """
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", line=lineno)
        if key in values:
            raise ConfigError("duplicate key", key=key, line=lineno)
        if not value:
            raise ConfigError("empty value", key=key, line=lineno)
        values[key] = value
    return values


def _coerce(key: str, raw: str):
    try:
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _INT_KEYS:
            return int(raw)
        if key in _VEC_KEYS:
            parts = tuple(float(p) for p in raw.replace(",", " ").split())
            if len(parts) != 9:
                raise ValueError("expected 9 numbers")
            return parts
        return raw
    except ValueError as exc:
        raise ConfigError(f"cannot parse value {raw!r}: {exc}", key=key) from None


def config_from_mapping(values: dict[str, str]) -> Config:
    """Build and validate a Config from raw string key/values."""
    unknown = sorted(set(values) - set(KNOWN_KEYS))
    if unknown:
        raise ConfigError("unknown parameter", key=unknown[0])
    missing = [key for key in REQUIRED_KEYS if key not in values]
    if missing:
        raise ConfigError("required parameter missing", key=missing[0])

    typed = {key: _coerce(key, raw) for key, raw in values.items()}
    # The semi-traversable bound defaults to 1.5x the max slope when not given.
    if "alpha_semi" not in typed and "alpha_max" in typed:
        typed["alpha_semi"] = 1.5 * typed["alpha_max"]

    def pick(keys: tuple[str, ...]) -> dict:
        return {key: typed[key] for key in keys if key in typed}

    config = Config(
        camera=CameraIntrinsics(**pick(_CAMERA_KEYS)),
        traversability=TraversabilityParams(**pick(_TRAV_KEYS)),
        matcher=MatcherParams(**pick(_MATCHER_KEYS)),
        pipeline=PipelineParams(**pick(_PIPELINE_KEYS)),
    )
    return config.validate()


def env_overrides(environ=None) -> dict[str, str]:
    """Collect TRAVKIT_* environment overrides for known keys."""
    environ = os.environ if environ is None else environ
    found = {}
    for key in KNOWN_KEYS:
        value = environ.get(ENV_PREFIX + key.upper())
        if value is not None:
            found[key] = value
    return found


def load_config(
    source: str | Path,
    overrides: dict[str, str] | None = None,
    use_env: bool = True,
) -> Config:
    """Load a config file, applying environment and explicit overrides.

    ``source`` may be a path or raw config text. ``overrides`` (typically
    from CLI flags) win over the environment, which wins over the file.
    """
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and "=" not in source):
        text = Path(source).read_text()
    else:
        text = str(source)
    values = parse_kv_text(text)
    if use_env:
        values.update(env_overrides())
    if overrides:
        for key, value in overrides.items():
            if key not in KNOWN_KEYS:
                raise ConfigError("unknown parameter", key=key)
            values[key] = str(value)
    return config_from_mapping(values)


def default_config_text(camera: CameraIntrinsics) -> str:
    """Render a canonical config document for the given camera."""
    defaults = Config(camera=camera)
    lines = [
        "# travkit configuration (flat key = value)",
        "",
        "# camera (pixels / meters / radians)",
        f"focal = {camera.focal}",
        f"principal_point_u = {camera.principal_point_u}",
        f"principal_point_v = {camera.principal_point_v}",
        f"baseline = {camera.baseline}",
        f"tilt_theta = {camera.tilt_theta}",
        "",
        "# vehicle limits and classifier thresholds",
        f"alpha_r = {defaults.traversability.alpha_r}",
        f"alpha_max = {defaults.traversability.alpha_max}",
        f"alpha_semi = {defaults.traversability.alpha_semi}",
        f"h_max = {defaults.traversability.h_max}",
        f"min_inlier_ratio = {defaults.traversability.min_inlier_ratio}",
        f"quality_min_ratio = {defaults.traversability.quality_min_ratio}",
        "",
        "# stereo matcher",
        f"algorithm = {defaults.matcher.algorithm}",
        f"max_disparity = {defaults.matcher.max_disparity}",
        f"block_radius = {defaults.matcher.block_radius}",
        f"lr_consistency_tol = {defaults.matcher.lr_consistency_tol}",
        f"smoothness_p1 = {defaults.matcher.smoothness_p1}",
        f"smoothness_p2 = {defaults.matcher.smoothness_p2}",
        "",
        "# surface normals / reconstruction",
        f"normal_method = {defaults.pipeline.normal_method}",
        f"normal_window_radius = {defaults.pipeline.normal_window_radius}",
        f"z_max = {defaults.pipeline.z_max}",
        "cam_to_gravity = " + ",".join(str(v) for v in defaults.pipeline.cam_to_gravity),
        "",
    ]
    return "\n".join(lines)
