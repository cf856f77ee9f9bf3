"""Textured-plane renderer, rolling-shutter synthesis and depth-based correction.

Images follow the row-first pixel convention of :mod:`rspose.geom`: pixel
``(r, c)`` sits at ``u = r``, ``v = c``, and the camera ray through it is
``K^-1 [u, v, 1]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geom import (
    CameraIntrinsics,
    FrameId,
    MotionVelocity,
    Frame,
    RowPose,
    Side,
    StereoRigConfig,
    project_rs_many,
    rotation_matrix,
    row_pose,
)
from .solver import Correspondences
from .stereo import INVALID

MIN_SPLAT_WEIGHT = 1e-6


@dataclass(frozen=True)
class Texture:
    """Procedural texture over a quad, addressed in scene units.

    ``kind="checker"`` alternates ``low``/``high`` every ``cell`` units;
    ``kind="noise"`` draws one uniform value per ``cell`` and interpolates
    bilinearly between them.
    """

    kind: str = "noise"
    cell: float = 0.05
    seed: int = 0
    low: float = 30.0
    high: float = 225.0

    def __post_init__(self):
        if self.kind not in ("checker", "noise"):
            raise ValueError(f"unknown texture kind {self.kind!r}")
        if self.cell <= 0:
            raise ValueError("texture cell must be positive")

    def texels(self, width: float, height: float):
        """Texel array and texel pitch covering a ``width x height`` quad."""
        if self.kind == "checker":
            # 8 texels per cell keeps the edges sharp under bilinear lookup
            pitch = self.cell / 8.0
            n_s = int(np.ceil(width / pitch)) + 2
            n_t = int(np.ceil(height / pitch)) + 2
            i, j = np.indices((n_s, n_t))
            parity = ((i * pitch + pitch / 2) // self.cell + (j * pitch + pitch / 2) // self.cell) % 2
            return np.where(parity == 0, self.high, self.low).astype(float), pitch
        pitch = self.cell
        n_s = int(np.ceil(width / pitch)) + 2
        n_t = int(np.ceil(height / pitch)) + 2
        rng = np.random.default_rng(self.seed)
        return rng.uniform(self.low, self.high, size=(n_s, n_t)), pitch


@dataclass(frozen=True)
class Quad:
    """Parallelogram ``origin + s*edge_s + t*edge_t`` with ``s, t`` in [0, 1]."""

    origin: np.ndarray
    edge_s: np.ndarray
    edge_t: np.ndarray
    texture: Texture = Texture()

    def __post_init__(self):
        for name in ("origin", "edge_s", "edge_t"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3))
        if np.linalg.norm(np.cross(self.edge_s, self.edge_t)) <= 0:
            raise ValueError("quad edges are parallel")


@dataclass(frozen=True)
class PlaneScene:
    quads: tuple = ()
    background: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "quads", tuple(self.quads))


def default_scene(seed: int = 0) -> PlaneScene:
    """A back wall, a floor and three boxes' worth of facing planes.

    Sized for the 900x900, f = 1384.6 camera; everything lies at depth 4 to
    11 in front of the rig.
    """
    s = seed
    return PlaneScene(
        quads=(
            Quad((-6.0, -7.0, 11.0), (12.0, 0.0, 0.0), (0.0, 14.0, 0.0), Texture("noise", 0.06, s + 1, 20.0, 170.0)),
            Quad((1.6, -7.0, 3.0), (0.0, 0.0, 8.0), (0.0, 14.0, 0.0), Texture("noise", 0.05, s + 2, 60.0, 140.0)),
            Quad((-1.2, -1.9, 5.0), (1.6, 0.0, 0.0), (0.0, 1.4, 0.0), Texture("checker", 0.2)),
            Quad((-0.4, 0.4, 4.2), (1.5, 0.0, 0.3), (0.0, 1.3, 0.5), Texture("noise", 0.03, s + 3, 110.0, 255.0)),
            Quad((-2.2, -0.6, 7.5), (1.2, 0.0, 0.0), (0.0, 2.2, 0.0), Texture("noise", 0.04, s + 4, 0.0, 255.0)),
        ),
        background=90.0,
    )


def _pose_matrices(poses_w, poses_d, model):
    R = rotation_matrix(np.asarray(poses_w, float), model)
    return R, np.asarray(poses_d, float)


def _raycast(scene: PlaneScene, K: CameraIntrinsics, R_rows, T_rows):
    """Intensity and camera depth of every pixel; row ``r`` uses pose ``(R_rows[r], T_rows[r])``."""
    H, W = K.n_rows, K.width
    u, v = np.meshgrid(np.arange(H, dtype=float), np.arange(W, dtype=float), indexing="ij")
    ray_cam = np.stack([(u - K.cu) / K.fx, (v - K.cv) / K.fy, np.ones_like(u)], axis=-1)
    Rt = np.swapaxes(R_rows, -1, -2)  # (H, 3, 3)
    centre = -np.einsum("rij,rj->ri", Rt, T_rows)  # (H, 3)
    ray = np.einsum("rij,rcj->rci", Rt, ray_cam)
    C = centre[:, None, :]
    image = np.full((H, W), float(scene.background))
    depth = np.full((H, W), np.inf)
    for q in scene.quads:
        n = np.cross(q.edge_s, q.edge_t)
        denom = ray @ n
        # rays parallel to the plane give non-finite t and are rejected below
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((q.origin - C) @ n) / denom
            hit = C + t[..., None] * ray - q.origin
            G = np.array([[q.edge_s @ q.edge_s, q.edge_s @ q.edge_t], [q.edge_s @ q.edge_t, q.edge_t @ q.edge_t]])
            rhs = np.stack([hit @ q.edge_s, hit @ q.edge_t], axis=-1)
            st = rhs @ np.linalg.inv(G).T
        s, tt = st[..., 0], st[..., 1]
        inside = np.isfinite(t) & (t > 0) & (s >= 0) & (s <= 1) & (tt >= 0) & (tt <= 1)
        # the ray has unit camera z, so the ray parameter is the camera depth
        closer = inside & (t < depth)
        if not closer.any():
            continue
        len_s, len_t = np.linalg.norm(q.edge_s), np.linalg.norm(q.edge_t)
        tex, pitch = q.texture.texels(len_s, len_t)
        image[closer] = _bilinear(tex, s[closer] * len_s / pitch, tt[closer] * len_t / pitch)
        depth[closer] = t[closer]
    depth = np.where(np.isfinite(depth), depth, INVALID)
    return image, depth


def _bilinear(tex, x, y):
    x = np.clip(x, 0, tex.shape[0] - 1.000001)
    y = np.clip(y, 0, tex.shape[1] - 1.000001)
    x0 = np.floor(x).astype(int)
    y0 = np.floor(y).astype(int)
    fx, fy = x - x0, y - y0
    return (
        tex[x0, y0] * (1 - fx) * (1 - fy)
        + tex[x0 + 1, y0] * fx * (1 - fy)
        + tex[x0, y0 + 1] * (1 - fx) * fy
        + tex[x0 + 1, y0 + 1] * fx * fy
    )


def _to_gray(img):
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def render_gs(scene: PlaneScene, K: CameraIntrinsics, pose: RowPose, model: str = "exact", return_depth: bool = False):
    """Global-shutter render at one pose.  With ``return_depth`` also the camera-z map (``INVALID`` on background)."""
    R, T = _pose_matrices(pose.w, pose.d, model)
    H = K.n_rows
    img, depth = _raycast(scene, K, np.broadcast_to(R, (H, 3, 3)), np.broadcast_to(T, (H, 3)))
    return (_to_gray(img), depth) if return_depth else _to_gray(img)


def frame_poses(rig: StereoRigConfig, fid: FrameId, motion: MotionVelocity, model: str = "exact"):
    """Per-row rotation matrices ``(N, 3, 3)`` and translations ``(N, 3)`` of one image."""
    pose = row_pose(rig, fid, np.arange(rig.n_rows, dtype=float), motion)
    return _pose_matrices(pose.w, pose.d, model)


def synthesize_rs(
    scene: PlaneScene,
    K: CameraIntrinsics,
    rig: StereoRigConfig,
    fid: FrameId,
    motion: MotionVelocity,
    model: str = "exact",
    return_depth: bool = False,
):
    """Rolling-shutter image: row ``r`` is row ``r`` of the render at that row's pose.

    Each row is ray-cast only once, directly at its own pose, which is
    equivalent to cutting it out of a full render.
    """
    _check_rig(K, rig)
    R, T = frame_poses(rig, fid, motion, model)
    img, depth = _raycast(scene, K, R, T)
    return (_to_gray(img), depth) if return_depth else _to_gray(img)


def reference_pose(rig: StereoRigConfig, fid: FrameId, motion: MotionVelocity) -> RowPose:
    """The first-row pose of image ``fid``, the target of the correction."""
    return row_pose(rig, fid, 0.0, motion)


def _check_rig(K, rig):
    if K.n_rows != rig.n_rows:
        raise ValueError(f"intrinsics have {K.n_rows} rows but the rig has {rig.n_rows}")


def correction_targets(depth, K, rig, fid, motion, model: str = "exact"):
    """Where each source pixel lands in the first-row view, and its depth there.

    Returns ``(u', v', z')`` arrays shaped like ``depth``; entries with
    invalid depth are NaN.
    """
    _check_rig(K, rig)
    depth = np.asarray(depth, float)
    H, W = depth.shape
    if (H, W) != (K.n_rows, K.width):
        raise ValueError(f"depth is {H}x{W}, camera is {K.n_rows}x{K.width}")
    R, T = frame_poses(rig, fid, motion, model)
    p0 = reference_pose(rig, fid, motion)
    R0, T0 = _pose_matrices(p0.w, p0.d, model)
    u, v = np.meshgrid(np.arange(H, dtype=float), np.arange(W, dtype=float), indexing="ij")
    ray = np.stack([(u - K.cu) / K.fx, (v - K.cv) / K.fy, np.ones_like(u)], axis=-1)
    lam = np.where(depth > 0, depth, np.nan)
    cam = lam[..., None] * ray - T[:, None, :]
    X = np.einsum("rji,rcj->rci", R, cam)  # R_u^T applied per row
    Y = X @ R0.T + T0
    z = Y[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uu = K.fx * Y[..., 0] / z + K.cu
        vv = K.fy * Y[..., 1] / z + K.cv
    bad = ~(z > 0)
    uu[bad] = np.nan
    vv[bad] = np.nan
    return uu, vv, np.where(bad, np.nan, z)


def backproject_rs(uv, depth_values, K: CameraIntrinsics, rig: StereoRigConfig, fid: FrameId, motion, model="exact"):
    """World points behind pixels ``uv`` ``(n, 2)`` with camera depths ``depth_values`` at their own row poses."""
    uv = np.atleast_2d(np.asarray(uv, float))
    pose = row_pose(rig, fid, uv[:, 0], motion)
    R, T = _pose_matrices(pose.w, pose.d, model)
    ray = np.stack([(uv[:, 0] - K.cu) / K.fx, (uv[:, 1] - K.cv) / K.fy, np.ones(len(uv))], axis=-1)
    cam = np.asarray(depth_values, float)[:, None] * ray - T
    return np.einsum("nji,nj->ni", R, cam)


def render_correspondences(K, rig, motion, depths: dict, count_per_side: int, rng, model="exact", depth_tol=0.01):
    """Ground-truth temporal matches from rendered depth maps.

    ``depths`` maps image index (1..4) to its depth map.  Pixels of the
    first-frame image are back-projected and reprojected into the
    second-frame image of the same side; a match is kept when the point
    lands on the sensor and agrees with the depth rendered there (so it is
    not occluded).  Returns ``(left, right)`` with up to ``count_per_side``
    matches each.
    """
    out = []
    for side in (Side.LEFT, Side.RIGHT):
        fa, fb = FrameId(Frame.FIRST, side), FrameId(Frame.SECOND, side)
        da, db = np.asarray(depths[fa.index]), np.asarray(depths[fb.index])
        rr, cc = np.nonzero(da > 0)
        # oversample to survive occlusion and border losses
        order = rng.permutation(len(rr))[: 20 * count_per_side]
        uv_a = np.stack([rr[order], cc[order]], axis=-1).astype(float)
        X = backproject_rs(uv_a, da[rr[order], cc[order]], K, rig, fa, motion, model)
        uv_b, z, ok = project_rs_many(K, rig, fb, motion, X, model)
        ri = np.rint(uv_b[:, 0])
        ci = np.rint(uv_b[:, 1])
        ok &= (ri >= 0) & (ri < K.n_rows) & (ci >= 0) & (ci < K.width)
        idx = np.nonzero(ok)[0]
        seen = db[ri[idx].astype(int), ci[idx].astype(int)]
        idx = idx[np.abs(seen - z[idx]) <= depth_tol * z[idx]][:count_per_side]
        out.append(Correspondences(side, uv_a[idx], uv_b[idx]))
    return out[0], out[1]


def correct_image(
    img,
    depth,
    K: CameraIntrinsics,
    rig: StereoRigConfig,
    fid: FrameId,
    motion: MotionVelocity,
    model: str = "exact",
    z_tolerance: float = 0.03,
):
    """Forward-warp a rolling-shutter image to the first-row pose of its frame.

    Every pixel with valid depth is back-projected at its own row pose and
    reprojected at the first-row pose, then splatted bilinearly onto its
    four neighbours.  A splat counts toward a target only if its depth is
    within ``z_tolerance`` (relative) of the nearest splat there.  Returns
    the corrected image and the validity mask.
    """
    img = np.asarray(img)
    if img.shape != np.shape(depth):
        raise ValueError(f"image {img.shape} and depth {np.shape(depth)} differ in size")
    H, W = img.shape
    uu, vv, zz = correction_targets(depth, K, rig, fid, motion, model)
    src = np.isfinite(uu) & np.isfinite(vv)
    u, v, z = uu[src], vv[src], zz[src]
    val = img[src].astype(float)
    u0 = np.floor(u).astype(np.int64)
    v0 = np.floor(v).astype(np.int64)
    fu, fv = u - u0, v - v0
    tgt, wts, zs, vals = [], [], [], []
    for du, dv, w in ((0, 0, (1 - fu) * (1 - fv)), (1, 0, fu * (1 - fv)), (0, 1, (1 - fu) * fv), (1, 1, fu * fv)):
        tu, tv = u0 + du, v0 + dv
        ok = (tu >= 0) & (tu < H) & (tv >= 0) & (tv < W) & (w >= MIN_SPLAT_WEIGHT)
        tgt.append(tu[ok] * W + tv[ok])
        wts.append(w[ok])
        zs.append(z[ok])
        vals.append(val[ok])
    tgt = np.concatenate(tgt)
    wts = np.concatenate(wts)
    zs = np.concatenate(zs)
    vals = np.concatenate(vals)
    zmin = np.full(H * W, np.inf)
    np.minimum.at(zmin, tgt, zs)
    keep = zs <= zmin[tgt] * (1.0 + z_tolerance)
    wsum = np.bincount(tgt[keep], weights=wts[keep], minlength=H * W)
    acc = np.bincount(tgt[keep], weights=wts[keep] * vals[keep], minlength=H * W)
    mask = wsum >= MIN_SPLAT_WEIGHT
    out = np.zeros(H * W)
    out[mask] = acc[mask] / wsum[mask]
    return _to_gray(out.reshape(H, W)), mask.reshape(H, W)


def fill_holes(img, mask, radius: int = 1):
    """One pass of median filling for cracks left by forward warping.

    Invalid pixels with at least 3 valid neighbours in the
    ``(2 radius + 1)^2`` window take the median of those neighbours.
    Returns the filled image and the updated mask.
    """
    img = np.asarray(img)
    mask = np.asarray(mask, bool)
    if img.shape != mask.shape:
        raise ValueError("image and mask differ in size")
    H, W = img.shape
    pad_v = np.pad(np.where(mask, img.astype(float), np.nan), radius, constant_values=np.nan)
    stack = [
        pad_v[radius + dy : radius + dy + H, radius + dx : radius + dx + W]
        for dy in range(-radius, radius + 1)
        for dx in range(-radius, radius + 1)
        if dy or dx
    ]
    nb = np.stack(stack, axis=-1)
    count = np.sum(np.isfinite(nb), axis=-1)
    todo = ~mask & (count >= 3)
    out = img.copy()
    if todo.any():
        out[todo] = _to_gray(np.nanmedian(nb[todo], axis=-1))
    return out, mask | todo


def overlay_diff(img_a, img_b, mask=None):
    """RGB composite: red = |A - B|, green = A, blue = B; outside ``mask`` all zero."""
    a = np.asarray(img_a)
    b = np.asarray(img_b)
    if a.shape != b.shape:
        raise ValueError(f"image sizes differ: {a.shape} vs {b.shape}")
    diff = np.abs(a.astype(np.int16) - b.astype(np.int16)).astype(np.uint8)
    rgb = np.stack([diff, a.astype(np.uint8), b.astype(np.uint8)], axis=-1)
    if mask is not None:
        rgb = np.where(np.asarray(mask, bool)[..., None], rgb, 0).astype(np.uint8)
    return rgb


def photometric_rmse(img_a, img_b, mask=None) -> float:
    a = np.asarray(img_a, float)
    b = np.asarray(img_b, float)
    m = np.ones(a.shape, bool) if mask is None else np.asarray(mask, bool)
    if not m.any():
        return float("nan")
    return float(np.sqrt(np.mean((a[m] - b[m]) ** 2)))


@dataclass(frozen=True)
class CorrectionSummary:
    rmse_before: float
    rmse_after: float
    valid_fraction: float
    extra: dict = field(default_factory=dict)

    @property
    def reduction(self) -> float:
        return 1.0 - self.rmse_after / self.rmse_before if self.rmse_before > 0 else 0.0


def summarize_correction(rs_img, corrected, mask, reference) -> CorrectionSummary:
    """RMSE of the RS and corrected images against the GS reference over ``mask``."""
    return CorrectionSummary(
        rmse_before=photometric_rmse(rs_img, reference, mask),
        rmse_after=photometric_rmse(corrected, reference, mask),
        valid_fraction=float(np.mean(mask)),
    )


__all__ = [
    "Texture",
    "Quad",
    "PlaneScene",
    "default_scene",
    "render_gs",
    "synthesize_rs",
    "frame_poses",
    "reference_pose",
    "correction_targets",
    "backproject_rs",
    "render_correspondences",
    "correct_image",
    "fill_holes",
    "overlay_diff",
    "photometric_rmse",
    "CorrectionSummary",
    "summarize_correction",
]
