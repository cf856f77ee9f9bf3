"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored.  Every key is optional and
falls back to the default below; unknown or repeated keys are errors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .geom import CameraIntrinsics, MotionVelocity, StereoRigConfig
from .simgen import DEFAULT_GRIDS, SWEEP_VARIABLES, SweepSpec
from .stereo import SGMParams

MOTION_KEYS = ("w1", "w2", "w3", "d1", "d2", "d3")


class ConfigError(ValueError):
    """Parse or validation failure; ``line`` is 1-based or ``None`` for whole-file problems."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = f"{source or '<config>'}:{line}: " if line else f"{source or '<config>'}: "
        super().__init__(where + message)


def _grid(values: str) -> tuple:
    out = tuple(float(x) for x in values.split(",") if x.strip())
    if not out:
        raise ValueError("empty grid")
    return out


@dataclass(frozen=True)
class RunConfig:
    # intrinsics
    fx: float = 810.0
    fy: float = 810.0
    cu: float = 450.0
    cv: float = 450.0
    width: int = 900
    n_rows: int = 900
    # rig
    half_baseline: float = 0.5
    readout_ratio: float = 0.8
    # motion per frame interval (rad, scene units)
    w1: float = 0.0
    w2: float = 0.0
    w3: float = 0.0
    d1: float = 0.0
    d2: float = 0.0
    d3: float = 0.0
    # experiments
    noise_sigma: float = 1e-3
    noise_units: str = "normalized"
    trials: int = 300
    seed: int = 0
    point_count: int = 100
    z_min: float = 4.0
    z_max: float = 12.0
    translation_speed: float = 0.3
    rotation_speed: float = 0.4
    rotation_model: str = "exact"
    grid_noise: tuple = DEFAULT_GRIDS["noise"]
    grid_translation_speed: tuple = DEFAULT_GRIDS["translation_speed"]
    grid_rotation_speed: tuple = DEFAULT_GRIDS["rotation_speed"]
    grid_readout_ratio: tuple = DEFAULT_GRIDS["readout_ratio"]
    grid_baseline: tuple = DEFAULT_GRIDS["baseline"]
    # robust estimation
    ransac_threshold: float = 1.0
    ransac_max_iters: int = 5000
    # stereo matching
    p1: int = 10
    p2: int = 120
    d_max: int = 128
    sgm_paths: int = 8
    # synthesis and correction
    frame: int = 1
    scene_seed: int = 0
    fill_holes: bool = True

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(self.fx, self.fy, self.cu, self.cv, self.width, self.n_rows)

    @property
    def rig(self) -> StereoRigConfig:
        return StereoRigConfig(self.half_baseline, self.readout_ratio, self.n_rows)

    @property
    def motion(self) -> MotionVelocity:
        return MotionVelocity((self.w1, self.w2, self.w3), (self.d1, self.d2, self.d3))

    @property
    def sgm(self) -> SGMParams:
        return SGMParams(self.p1, self.p2, self.d_max, self.sgm_paths)

    def sweep(self, variable: str) -> SweepSpec:
        if variable not in SWEEP_VARIABLES:
            raise ConfigError(f"unknown sweep {variable!r}; choose from {', '.join(SWEEP_VARIABLES)}")
        return SweepSpec(
            variable=variable,
            values=getattr(self, f"grid_{variable}"),
            trials=self.trials,
            seed=self.seed,
            intrinsics=self.intrinsics,
            half_baseline=self.half_baseline,
            readout_ratio=self.readout_ratio,
            translation_speed=self.translation_speed,
            rotation_speed=self.rotation_speed,
            noise=self.noise_sigma,
            noise_units=self.noise_units,
            point_count=self.point_count,
            z_min=self.z_min,
            z_max=self.z_max,
            rotation_model=self.rotation_model,
        )

    def with_motion(self, motion: MotionVelocity) -> "RunConfig":
        vals = dict(zip(MOTION_KEYS, [*map(float, motion.w), *map(float, motion.d)]))
        return replace(self, **vals)


_FIELDS = {f.name: f for f in fields(RunConfig)}
_DEFAULTS = RunConfig()


def _convert(key: str, text: str):
    default = getattr(_DEFAULTS, key)
    if isinstance(default, bool):
        low = text.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ValueError(f"expected true/false, got {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        v = float(text)
        if not math.isfinite(v):
            raise ValueError("value must be finite")
        return v
    if isinstance(default, tuple):
        return _grid(text)
    return text


# per-key checks: (predicate, message)
_CHECKS = {
    "fx": (lambda v: v > 0, "must be positive"),
    "fy": (lambda v: v > 0, "must be positive"),
    "width": (lambda v: v >= 5, "must be >= 5"),
    "n_rows": (lambda v: v >= 5, "must be >= 5"),
    "half_baseline": (lambda v: v > 0, "must be positive"),
    "readout_ratio": (lambda v: 0 < v <= 1, "must lie in (0, 1]"),
    "noise_sigma": (lambda v: v >= 0, "must be >= 0"),
    "noise_units": (lambda v: v in ("normalized", "pixel"), "must be 'normalized' or 'pixel'"),
    "trials": (lambda v: v >= 1, "must be >= 1"),
    "point_count": (lambda v: v >= 18, "must be >= 18"),
    "z_min": (lambda v: v > 0, "must be positive"),
    "translation_speed": (lambda v: v >= 0, "must be >= 0"),
    "rotation_speed": (lambda v: v >= 0, "must be >= 0"),
    "rotation_model": (lambda v: v in ("exact", "linearized"), "must be 'exact' or 'linearized'"),
    "ransac_threshold": (lambda v: v > 0, "must be positive"),
    "ransac_max_iters": (lambda v: v >= 1, "must be >= 1"),
    "p1": (lambda v: v > 0, "must be positive"),
    "d_max": (lambda v: v >= 1, "must be >= 1"),
    "sgm_paths": (lambda v: v in (2, 4, 8), "must be 2, 4 or 8"),
    "frame": (lambda v: v in (1, 2, 3, 4), "must be 1, 2, 3 or 4"),
    "grid_readout_ratio": (lambda v: all(0 < x <= 1 for x in v), "values must lie in (0, 1]"),
    "grid_baseline": (lambda v: all(x > 0 for x in v), "values must be positive"),
    "grid_noise": (lambda v: all(x >= 0 for x in v), "values must be >= 0"),
}

# checks spanning two keys, reported at the line of the second
_CROSS = (
    ("z_min", "z_max", lambda a, b: b >= a, "z_max must be >= z_min"),
    ("p1", "p2", lambda a, b: b > a, "p2 must exceed p1"),
    ("n_rows", "cu", lambda a, b: 0 <= b <= a, "cu must lie within [0, n_rows]"),
    ("width", "cv", lambda a, b: 0 <= b <= a, "cv must lie within [0, width]"),
)


def parse_config(text: str, source: str | None = None, allowed=None) -> RunConfig:
    """Parse config text; ``allowed`` restricts the accepted keys."""
    values: dict = {}
    lines: dict = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", n, source)
        key, _, val = (p.strip() for p in line.partition("="))
        if key not in _FIELDS or (allowed is not None and key not in allowed):
            raise ConfigError(f"unknown key {key!r}", n, source)
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[key]})", n, source)
        if not val:
            raise ConfigError(f"missing value for {key!r}", n, source)
        try:
            values[key] = _convert(key, val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", n, source) from None
        lines[key] = n
        check = _CHECKS.get(key)
        if check and not check[0](values[key]):
            raise ConfigError(f"{key} {check[1]}", n, source)
    cfg = replace(_DEFAULTS, **values)
    for k1, k2, ok, msg in _CROSS:
        if not ok(getattr(cfg, k1), getattr(cfg, k2)):
            line = max(lines.get(k1, 0), lines.get(k2, 0)) or None
            raise ConfigError(msg, line, source)
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    """All keys in declaration order; floats use ``repr`` so parsing restores them exactly."""
    out = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            s = "true" if v else "false"
        elif isinstance(v, tuple):
            s = ", ".join(repr(float(x)) for x in v)
        elif isinstance(v, float):
            s = repr(v)
        else:
            s = str(v)
        out.append(f"{f.name} = {s}")
    return "\n".join(out) + "\n"


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from None
    return parse_config(text, str(path))


def load_motion(path) -> MotionVelocity:
    """Read a motion file: the ``w1..w3``, ``d1..d3`` keys of the config format."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read motion file: {exc.strerror}", None, str(path)) from None
    return parse_config(text, str(path), allowed=MOTION_KEYS).motion


def motion_text(motion: MotionVelocity, header: str = "") -> str:
    lines = [f"# {h}" for h in header.splitlines()]
    vals = np.concatenate([motion.w, motion.d])
    lines += [f"{k} = {float(v)!r}" for k, v in zip(MOTION_KEYS, vals)]
    return "\n".join(lines) + "\n"


def parse_scene(text: str, source: str | None = None):
    """Scene description: ``background = <gray>`` and one line per quad::

        quad = ox oy oz ; sx sy sz ; tx ty tz ; <checker|noise> <cell> [seed [low high]]

    The quad is ``origin + s*edge_s + t*edge_t`` for ``s, t`` in [0, 1].
    """
    from .rectify import PlaneScene, Quad, Texture

    quads = []
    background = 0.0
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = (p.strip() for p in line.partition("="))
        if not sep:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", n, source)
        try:
            if key == "background":
                background = float(val)
            elif key == "quad":
                parts = [p.split() for p in val.split(";")]
                if len(parts) != 4 or any(len(p) != 3 for p in parts[:3]) or not 2 <= len(parts[3]) <= 5:
                    raise ValueError("expected three 3-vectors and a texture spec separated by ';'")
                o, es, et = (np.array([float(x) for x in p]) for p in parts[:3])
                tex = parts[3]
                kw = {"kind": tex[0], "cell": float(tex[1])}
                if len(tex) >= 3:
                    kw["seed"] = int(tex[2])
                if len(tex) == 5:
                    kw["low"], kw["high"] = float(tex[3]), float(tex[4])
                elif len(tex) == 4:
                    raise ValueError("texture intensity range needs both low and high")
                quads.append(Quad(o, es, et, Texture(**kw)))
            else:
                raise ConfigError(f"unknown key {key!r}", n, source)
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad {key}: {exc}", n, source) from None
    if not quads:
        raise ConfigError("scene has no quads", None, source)
    return PlaneScene(tuple(quads), background)


def load_scene(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scene file: {exc.strerror}", None, str(path)) from None
    return parse_scene(text, str(path))
