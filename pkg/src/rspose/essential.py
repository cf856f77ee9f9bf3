"""Row-pair essential matrices of the stereo rolling-shutter rig.

For a temporal match on one side (I1->I3 or I2->I4) observed on rows
``u_a`` (first frame) and ``u_b`` (second frame), the relative pose between
the two scanlines is ``R_ab = I + a[w]x`` and
``T_ab = d(u_b) - R_ab d(u_a)`` with ``a = k_b - k_a``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import poly
from .geom import Frame, MotionVelocity, Side, StereoRigConfig, row_pose, skew, small_rotation, FrameId


@dataclass(frozen=True)
class RowPairCoefficients:
    k_a: float
    k_b: float

    @property
    def a(self):
        return self.k_b - self.k_a

    @classmethod
    def for_rows(cls, rig: StereoRigConfig, u_a, u_b) -> "RowPairCoefficients":
        return cls(rig.time_coefficient(Frame.FIRST, u_a), rig.time_coefficient(Frame.SECOND, u_b))


@dataclass(frozen=True)
class EssentialMatrixRS:
    matrix: np.ndarray
    side: Side
    u_a: float
    u_b: float


def essential_exact(rig, motion: MotionVelocity, side: Side, u_a, u_b) -> EssentialMatrixRS:
    """``[T_ab]x R_ab`` built directly from the two row poses."""
    pa = row_pose(rig, FrameId(Frame.FIRST, side), u_a, motion)
    pb = row_pose(rig, FrameId(Frame.SECOND, side), u_b, motion)
    a = RowPairCoefficients.for_rows(rig, u_a, u_b).a
    R_ab = small_rotation(a * motion.w)
    T_ab = pb.d - R_ab @ pa.d
    return EssentialMatrixRS(skew(T_ab) @ R_ab, side, u_a, u_b)


def essential_expanded(rig, motion, side, u_a, u_b, include_s_terms: bool = True) -> EssentialMatrixRS:
    """Term-by-term regrouped form.

    With ``include_s_terms=False`` the only third-order term,
    ``a^2 k_a [[w]x d]x [w]x``, is left out.  Array-valued rows give a
    ``(n, 3, 3)`` stack.
    """
    c = RowPairCoefficients.for_rows(rig, u_a, u_b)
    a = np.asarray(c.a, dtype=float)[..., None, None]
    k = np.asarray(c.k_a, dtype=float)[..., None, None]
    s = side.sign
    w, d, b = motion.w, motion.d, rig.baseline
    W = skew(w)
    wb = skew(W @ b)
    wd = skew(W @ d)
    E = a * skew(d) - s * a * wb + a**2 * (skew(d) @ W) - a * k * wd - s * a**2 * (wb @ W)
    if include_s_terms:
        E = E - a**2 * k * (wd @ W)
    return EssentialMatrixRS(E, side, u_a, u_b)


def essential_poly(rig: StereoRigConfig, side: Side, u_a, u_b):
    """Exact row-pair essential matrix as a 3x3 nest of polynomials in (d, w).

    ``u_a``/``u_b`` may be arrays; coefficients then carry one entry per pair.
    """
    c = RowPairCoefficients.for_rows(rig, u_a, u_b)
    k_a, k_b, a = c.k_a, c.k_b, c.a
    d = poly.vec("d1", "d2", "d3")
    w = poly.vec("w1", "w2", "w3")
    b = poly.vec(*(side.sign * rig.baseline))
    W = poly.skew(w)
    eye = [[poly.Poly.const(float(i == j)) for j in range(3)] for i in range(3)]
    R = poly.matadd(eye, W, 1.0, a)
    d_a = [d[i] * k_a + b[i] for i in range(3)]
    d_b = [d[i] * k_b + b[i] for i in range(3)]
    T = [d_b[i] - sum((R[i][j] * d_a[j] for j in range(3)), poly.Poly()) for i in range(3)]
    return poly.matmul(poly.skew(T), R)


def epipolar_residual(E, x_a, x_b):
    """Algebraic residual ``x_b^T E x_a``; points are normalized ``(..., 2)`` or homogeneous."""
    E = getattr(E, "matrix", E)
    xa = _homog(x_a)
    xb = _homog(x_b)
    return np.einsum("...i,...ij,...j->...", xb, E, xa)


def sampson_distance(E, x_a, x_b):
    """First-order geometric error; ``inf`` where the gradient vanishes."""
    E = getattr(E, "matrix", E)
    xa = _homog(x_a)
    xb = _homog(x_b)
    Ea = np.einsum("...ij,...j->...i", E, xa)
    Eb = np.einsum("...ji,...j->...i", E, xb)
    num = np.einsum("...i,...i->...", xb, Ea) ** 2
    den = Ea[..., 0] ** 2 + Ea[..., 1] ** 2 + Eb[..., 0] ** 2 + Eb[..., 1] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)
    return out if np.ndim(out) else float(out)


def _homog(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] == 3:
        return x
    return np.concatenate([x, np.ones(x.shape[:-1] + (1,))], axis=-1)
