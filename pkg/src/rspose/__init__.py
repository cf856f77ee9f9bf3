"""Relative pose, depth and image correction for stereo rolling-shutter rigs."""
from .geom import I1, I2, I3, I4, CameraIntrinsics, FrameId, MotionVelocity, Side, StereoRigConfig, row_pose
from .solver import Correspondences, MotionEstimate, ransac_solve, solve_gs8pt, solve_relative_pose

__version__ = "0.1.0"

__all__ = [
    "I1",
    "I2",
    "I3",
    "I4",
    "CameraIntrinsics",
    "FrameId",
    "MotionVelocity",
    "Side",
    "StereoRigConfig",
    "row_pose",
    "Correspondences",
    "MotionEstimate",
    "solve_relative_pose",
    "solve_gs8pt",
    "ransac_solve",
]
