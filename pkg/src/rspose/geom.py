"""Camera models, per-row rolling-shutter poses and projection.

Pixel convention: a pixel is ``[u, v, 1]`` with ``u`` the scanline (row) index
and ``v`` the column.  Camera axis 0 maps to rows, axis 1 to columns.  The rig
baseline lies along camera axis 1 so the stereo pair is horizontally displaced
and disparity runs along image columns.

Poses are world-to-camera: a world point ``X`` lands in camera coordinates as
``R X + T``.  ``RowPose.w`` is the rotation vector of ``R`` and ``RowPose.d``
is ``T``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

BASELINE_AXIS = 1

# fixed-point projection settings
RS_TOL = 1e-6
RS_MAX_ITER = 50


class ProjectionError(ValueError):
    """Point cannot be projected (behind the camera or no convergence)."""


class Frame(enum.Enum):
    FIRST = 0
    SECOND = 1


class Side(enum.Enum):
    LEFT = "L"
    RIGHT = "R"

    @property
    def sign(self) -> int:
        return 1 if self is Side.LEFT else -1


@dataclass(frozen=True)
class FrameId:
    """One of the four images I1..I4."""

    frame: Frame
    side: Side

    @property
    def index(self) -> int:
        """1-based image number: I1 first/left, I2 first/right, I3, I4."""
        return 1 + (0 if self.side is Side.LEFT else 1) + 2 * self.frame.value

    @classmethod
    def from_index(cls, i: int) -> "FrameId":
        if i not in (1, 2, 3, 4):
            raise ValueError(f"image index must be 1..4, got {i}")
        return cls(Frame((i - 1) // 2), Side.LEFT if i % 2 == 1 else Side.RIGHT)


I1 = FrameId(Frame.FIRST, Side.LEFT)
I2 = FrameId(Frame.FIRST, Side.RIGHT)
I3 = FrameId(Frame.SECOND, Side.LEFT)
I4 = FrameId(Frame.SECOND, Side.RIGHT)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cu: float
    cv: float
    width: int
    n_rows: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.n_rows < 2 or self.width < 2:
            raise ValueError("image must be at least 2x2")
        if not (0 <= self.cu <= self.n_rows and 0 <= self.cv <= self.width):
            raise ValueError("principal point outside the image")

    @classmethod
    def square(cls, size: int, f: float) -> "CameraIntrinsics":
        """Square image with the principal point at the centre."""
        return cls(f, f, size / 2.0, size / 2.0, size, size)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cu], [0.0, self.fy, self.cv], [0.0, 0.0, 1.0]])

    @property
    def inverse(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cu / self.fx],
                [0.0, 1.0 / self.fy, -self.cv / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )

    def normalize(self, uv: np.ndarray) -> np.ndarray:
        """Pixels ``(..., 2)`` to normalized image coordinates ``(..., 2)``."""
        uv = np.asarray(uv, dtype=float)
        return np.stack([(uv[..., 0] - self.cu) / self.fx, (uv[..., 1] - self.cv) / self.fy], axis=-1)

    def denormalize(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        return np.stack([xy[..., 0] * self.fx + self.cu, xy[..., 1] * self.fy + self.cv], axis=-1)


@dataclass(frozen=True)
class StereoRigConfig:
    """Rig geometry and timing.

    ``half_baseline`` is b; the optical centres are 2b apart.  ``row_rate``
    h = readout_ratio / n_rows is the fraction of a frame interval per row.
    """

    half_baseline: float
    readout_ratio: float
    n_rows: int

    def __post_init__(self):
        if not self.half_baseline > 0:
            raise ValueError("half_baseline must be positive")
        if not 0 < self.readout_ratio <= 1:
            raise ValueError("readout_ratio must lie in (0, 1]")
        if self.n_rows < 2:
            raise ValueError("n_rows must be >= 2")

    @property
    def row_rate(self) -> float:
        return self.readout_ratio / self.n_rows

    @property
    def baseline(self) -> np.ndarray:
        b = np.zeros(3)
        b[BASELINE_AXIS] = self.half_baseline
        return b

    def offset(self, side: Side) -> np.ndarray:
        return side.sign * self.baseline

    def time_coefficient(self, frame: Frame, u):
        """k = h*u on the first frame, 1 + h*u on the second."""
        return frame.value + self.row_rate * np.asarray(u, dtype=float)


@dataclass(frozen=True)
class MotionVelocity:
    """Constant velocity over one frame interval: rotation ``w`` (rad), translation ``d``."""

    w: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).reshape(3)
        d = np.asarray(self.d, dtype=float).reshape(3)
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(d))):
            raise ValueError("motion must be finite")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "d", d)

    @classmethod
    def zero(cls) -> "MotionVelocity":
        return cls(np.zeros(3), np.zeros(3))

    def scaled(self, s: float) -> "MotionVelocity":
        return MotionVelocity(self.w, s * self.d)

    @property
    def is_zero(self) -> bool:
        return not (np.any(self.w) or np.any(self.d))


@dataclass(frozen=True)
class RowPose:
    w: np.ndarray
    d: np.ndarray


def skew(v) -> np.ndarray:
    """Cross-product matrix: ``skew(v) @ x == np.cross(v, x)``."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def small_rotation(w) -> np.ndarray:
    """First-order rotation ``I + [w]x``.  Not orthonormal."""
    return np.eye(3) + skew(w)


def rodrigues(w) -> np.ndarray:
    """Exact rotation matrix of a rotation vector (batched over leading axes)."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w, axis=-1)[..., None, None]
    W = skew(w)
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.where(theta > 1e-8, np.sin(theta) / theta, 1.0 - theta**2 / 6.0)
        b = np.where(theta > 1e-8, (1.0 - np.cos(theta)) / theta**2, 0.5 - theta**2 / 24.0)
    return np.eye(3) + a * W + b * (W @ W)


def rotation_matrix(w, model: str = "linearized") -> np.ndarray:
    if model == "linearized":
        return small_rotation(w)
    if model == "exact":
        return rodrigues(w)
    raise ValueError(f"unknown rotation model {model!r}")


def row_pose(rig: StereoRigConfig, fid: FrameId, u, motion: MotionVelocity) -> RowPose:
    """Pose of scanline ``u`` of image ``fid`` under constant velocity.

    Accepts fractional and array-valued ``u``; array input yields ``(n, 3)``
    fields.
    """
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0) or np.any(u_arr >= rig.n_rows):
        raise ValueError(f"row outside [0, {rig.n_rows})")
    k = rig.time_coefficient(fid.frame, u_arr)[..., None]
    return RowPose(w=k * motion.w, d=k * motion.d + rig.offset(fid.side))


def _camera_points(pose_w, pose_d, X, model):
    R = rotation_matrix(pose_w, model)
    return np.einsum("...ij,...j->...i", R, X) + pose_d


def project_gs(K: CameraIntrinsics, pose: RowPose, X, model: str = "linearized"):
    """Pinhole projection of ``X`` (``(3,)`` or ``(n, 3)``) under one pose.

    Returns ``(uv, depth)``; depth is the camera-frame third coordinate.
    """
    P = _camera_points(pose.w, pose.d, np.asarray(X, dtype=float), model)
    z = P[..., 2]
    if np.any(z <= 0):
        raise ProjectionError("point behind camera")
    uv = np.stack([K.fx * P[..., 0] / z + K.cu, K.fy * P[..., 1] / z + K.cv], axis=-1)
    return uv, z


def _rs_fixed_point(K, rig, frame, offset, motion, X, model, seed_u):
    """Vectorized row fixed-point; returns (uv, z, converged)."""
    u = seed_u.copy()
    converged = np.zeros(u.shape, dtype=bool)
    h = rig.row_rate
    for _ in range(RS_MAX_ITER):
        k = frame.value + h * u
        P = _camera_points(k[:, None] * motion.w, k[:, None] * motion.d + offset, X, model)
        z = P[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u_new = K.fx * P[:, 0] / z + K.cu
        step = np.abs(u_new - u)
        u = u_new
        converged = step < RS_TOL
        if np.all(converged | ~np.isfinite(u)):
            break
    k = frame.value + h * u
    P = _camera_points(k[:, None] * motion.w, k[:, None] * motion.d + offset, X, model)
    z = P[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = np.stack([K.fx * P[:, 0] / z + K.cu, K.fy * P[:, 1] / z + K.cv], axis=-1)
    converged &= np.abs(uv[:, 0] - u) < RS_TOL
    converged &= z > 0
    return uv, z, converged


def project_rs_many(K, rig, fid, motion, X, model="linearized"):
    """Rolling-shutter projection of ``(n, 3)`` points without raising.

    Returns ``(uv, depth, ok)``; ``ok`` is false where the row fixed point did
    not converge or the point is behind the camera.  Rows outside the sensor
    are left to the caller.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    offset = rig.offset(fid.side)
    # seed with the GS projection at the frame's first-row pose
    k0 = float(fid.frame.value)
    P0 = _camera_points(k0 * motion.w, k0 * motion.d + offset, X, model)
    with np.errstate(divide="ignore", invalid="ignore"):
        seed = K.fx * P0[:, 0] / P0[:, 2] + K.cu
    seed = np.where(np.isfinite(seed), seed, K.cu)
    return _rs_fixed_point(K, rig, fid.frame, offset, motion, X, model, seed)


def project_rs(K, rig, fid, motion, X, model="linearized"):
    """Rolling-shutter projection of a single point.

    The returned pixel satisfies the fixed-point condition: its row is the
    row whose pose produced it.
    """
    uv, z, ok = project_rs_many(K, rig, fid, motion, np.asarray(X, dtype=float)[None], model)
    if z[0] <= 0:
        raise ProjectionError("point behind camera")
    if not ok[0]:
        raise ProjectionError("rolling-shutter row did not converge")
    return uv[0], float(z[0])
