"""Pipeline configuration: every tunable with its published default.

Configs round-trip through a flat ``key = value`` text file so experiment
settings stay reviewable.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass


class ConfigError(ValueError):
    """Invalid configuration value or file."""


@dataclass
class PipelineConfig:
    # depth-based 2D proposal filtering
    eps_delta: float = 0.5  # m, background split threshold per proposal
    eps_min: float = 0.02  # m, smallest plausible proposal cross-section
    eps_max: float = 1.0  # m, largest plausible proposal cross-section
    depth_percentile_clamp: bool = False
    depth_percentile_low: float = 1.0
    depth_percentile_high: float = 99.0
    # supporting plane
    eps_p: float = 0.005  # m, plane inlier distance
    ransac_iterations: int = 10000
    top_k_planes: int = 5
    keyframe_interval: int = 10
    ransac_window: int = 11
    ransac_score_stride: int = 2
    plane_distinct_angle_deg: float = 10.0
    plane_distinct_offset: float = 0.05
    plane_group_angle_deg: float = 10.0
    plane_group_offset: float = 0.05
    # fusion matching
    eps_i: float = 0.05  # color distance threshold
    eps_z: float = 0.01  # m, warped-depth agreement threshold
    # ranking
    tau: float = 10.0
    eps_rank: float = 0.25
    # clustering and boxes
    dbscan_eps: float = 0.02  # m
    dbscan_min_pts: int = 10
    min_box_volume: float = 1e-6  # m^3
    # run control
    downsample: int = 1  # 1 or 2
    seed: int = 0
    nms_overlap: float = 0.10  # debug display only

    def validate(self):
        positive = (
            "eps_delta", "eps_min", "eps_max", "eps_p", "eps_i", "eps_z",
            "eps_rank", "tau", "dbscan_eps", "min_box_volume",
            "plane_distinct_angle_deg", "plane_distinct_offset",
            "plane_group_angle_deg", "plane_group_offset",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("ransac_iterations", "top_k_planes", "keyframe_interval",
                     "ransac_window", "ransac_score_stride", "dbscan_min_pts"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.eps_min >= self.eps_max:
            raise ConfigError("eps_min must be below eps_max")
        if self.downsample not in (1, 2):
            raise ConfigError("downsample must be 1 or 2")
        if not (0 <= self.depth_percentile_low < self.depth_percentile_high <= 100):
            raise ConfigError("bad depth percentile range")
        if not (0 <= self.nms_overlap <= 1):
            raise ConfigError("nms_overlap must be in [0, 1]")
        return self

    @property
    def percentiles(self) -> tuple[float, float] | None:
        if self.depth_percentile_clamp:
            return (self.depth_percentile_low, self.depth_percentile_high)
        return None

    def to_file(self, path: str):
        with open(path, "w") as fh:
            for f in dataclasses.fields(self):
                fh.write(f"{f.name} = {_format_value(getattr(self, f.name))}\n")

    @classmethod
    def from_file(cls, path: str) -> "PipelineConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        values = {}
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                key, _, raw = line.partition("=")
                key = key.strip()
                if key not in fields:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                values[key] = _parse_value(fields[key].type, raw.strip(),
                                           f"{path}:{lineno}")
        return cls(**values).validate()

    def updated(self, **overrides) -> "PipelineConfig":
        cfg = dataclasses.replace(self, **overrides)
        cfg.validate()
        return cfg


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(typ: str, raw: str, where: str):
    try:
        if typ == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {typ}") from exc
    raise ConfigError(f"{where}: unsupported config type {typ}")
