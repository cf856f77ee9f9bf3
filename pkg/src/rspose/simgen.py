"""Synthetic scenes, rolling-shutter matches, error metrics and parameter sweeps."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geom import (
    I1,
    I2,
    I3,
    I4,
    CameraIntrinsics,
    MotionVelocity,
    Side,
    StereoRigConfig,
    project_rs_many,
    rodrigues,
)
from .solver import Correspondences, solve_gs8pt, solve_relative_pose

log = logging.getLogger(__name__)


class InsufficientSceneError(RuntimeError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    """Points uniform in the slab ``z_min <= z <= z_max`` of the rig's initial view frustum.

    ``lateral_extent`` scales the frustum relative to the image (1.0 = image border).
    """

    seed: int = 0
    point_count: int = 100
    z_min: float = 4.0
    z_max: float = 12.0
    lateral_extent: float = 0.9

    def __post_init__(self):
        if not self.z_min > 0 or self.z_max < self.z_min:
            raise ValueError("need 0 < z_min <= z_max")
        if self.point_count < 18:
            raise ValueError("point_count must be >= 18")


def generate_scene(cfg: SceneConfig, K: CameraIntrinsics, rng=None) -> np.ndarray:
    """``(n, 3)`` world points seen from the baseline centre at time zero."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    n = cfg.point_count
    z = rng.uniform(cfg.z_min, cfg.z_max, n)
    e = cfg.lateral_extent
    u = K.cu + e * rng.uniform(-K.cu, K.n_rows - K.cu, n)
    v = K.cv + e * rng.uniform(-K.cv, K.width - K.cv, n)
    xy = K.normalize(np.column_stack([u, v]))
    return np.column_stack([xy * z[:, None], z])


def _on_image(K, uv):
    return (uv[:, 0] >= 0) & (uv[:, 0] < K.n_rows) & (uv[:, 1] >= 0) & (uv[:, 1] < K.width)


def _project_second_linearized(K, rig, side, motion, P_a, u_a):
    """Second-frame projection composed through the linearized row-pair pose.

    Camera points of the first frame are carried to the second by
    ``R_ab P_a + T_ab`` with ``R_ab = I + a[w]x`` -- the model under which the
    row-pair essential matrix is exact.
    """
    b = side.sign * rig.baseline
    h = rig.row_rate
    k_a = h * u_a
    d_a = k_a[:, None] * motion.d + b

    u = u_a.copy()
    ok = np.zeros(len(u), dtype=bool)
    for _ in range(50):
        k_b = 1.0 + h * u
        a = k_b - k_a
        P_b = P_a + a[:, None] * np.cross(motion.w, P_a) + (k_b[:, None] * motion.d + b) - (
            d_a + a[:, None] * np.cross(motion.w, d_a)
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            u_new = K.fx * P_b[:, 0] / P_b[:, 2] + K.cu
        ok = np.abs(u_new - u) < 1e-9
        u = u_new
        if np.all(ok | ~np.isfinite(u)):
            break
    k_b = 1.0 + h * u
    a = k_b - k_a
    P_b = P_a + a[:, None] * np.cross(motion.w, P_a) + (k_b[:, None] * motion.d + b) - (
        d_a + a[:, None] * np.cross(motion.w, d_a)
    )
    z = P_b[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = np.column_stack([K.fx * P_b[:, 0] / z + K.cu, K.fy * P_b[:, 1] / z + K.cv])
    ok &= z > 0
    return uv, z, ok


def project_frames(points, rig, K, motion, rotation_model="exact"):
    """Project world points into I1..I4.  Returns dict ``index -> (uv, depth, ok)``."""
    out = {}
    for side, (fa, fb) in ((Side.LEFT, (I1, I3)), (Side.RIGHT, (I2, I4))):
        if rotation_model == "linearized":
            uv_a, z_a, ok_a = project_rs_many(K, rig, fa, motion, points, "linearized")
            P_a = np.column_stack([K.normalize(uv_a) * z_a[:, None], z_a])
            uv_b, z_b, ok_b = _project_second_linearized(K, rig, side, motion, P_a, uv_a[:, 0])
        elif rotation_model == "exact":
            uv_a, z_a, ok_a = project_rs_many(K, rig, fa, motion, points, "exact")
            uv_b, z_b, ok_b = project_rs_many(K, rig, fb, motion, points, "exact")
        else:
            raise ValueError(f"unknown rotation model {rotation_model!r}")
        out[fa.index] = (uv_a, z_a, ok_a & _on_image(K, uv_a))
        out[fb.index] = (uv_b, z_b, ok_b & _on_image(K, uv_b))
    return out


def generate_correspondences(points, rig, K, motion, rotation_model="exact", min_per_side=9):
    """Temporal matches I1->I3 and I2->I4 of the points visible in all four images."""
    proj = project_frames(points, rig, K, motion, rotation_model)
    keep = proj[1][2] & proj[2][2] & proj[3][2] & proj[4][2]
    n = int(keep.sum())
    if n < min_per_side:
        raise InsufficientSceneError(f"only {n} points visible in all four images")
    left = Correspondences(Side.LEFT, proj[1][0][keep], proj[3][0][keep])
    right = Correspondences(Side.RIGHT, proj[2][0][keep], proj[4][0][keep])
    return left, right


def snap_to_truncated(corrs: Correspondences, rig, K, motion, iters: int = 60) -> Correspondences:
    """Move each second-frame point onto the truncated-model epipolar line of its row pair.

    The closest point on the line ``E_trunc(u_a, u_b) x_a`` is taken and the
    row ``u_b`` re-solved until the pair is self-consistent.  Used to build
    data satisfying the lifted linear system exactly.
    """
    from .essential import essential_expanded

    x_a = K.normalize(corrs.uv_a)
    x_b = K.normalize(corrs.uv_b).copy()
    out = np.empty_like(x_b)
    for i in range(len(x_a)):
        xa = np.append(x_a[i], 1.0)
        xb = x_b[i].copy()
        for _ in range(iters):
            u_b = xb[0] * K.fx + K.cu
            E = essential_expanded(rig, motion, corrs.side, corrs.uv_a[i, 0], u_b, include_s_terms=False).matrix
            line = E @ xa
            n2 = line[0] ** 2 + line[1] ** 2
            r = line[0] * xb[0] + line[1] * xb[1] + line[2]
            xb_new = xb - r * line[:2] / n2
            done = np.max(np.abs(xb_new - xb)) < 1e-16
            xb = xb_new
            if done:
                break
        out[i] = xb
    return Correspondences(corrs.side, corrs.uv_a, K.denormalize(out))


def add_noise(corrs: Correspondences, sigma: float, K: CameraIntrinsics, units="normalized", rng=None, seed=None):
    """i.i.d. Gaussian perturbation of both endpoints of every match."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return corrs
    rng = np.random.default_rng(seed) if rng is None else rng
    if units == "normalized":
        scale = np.array([K.fx, K.fy]) * sigma
    elif units == "pixel":
        scale = np.array([sigma, sigma])
    else:
        raise ValueError(f"unknown noise units {units!r}")
    na = rng.standard_normal(corrs.uv_a.shape) * scale
    nb = rng.standard_normal(corrs.uv_b.shape) * scale
    return Correspondences(corrs.side, corrs.uv_a + na, corrs.uv_b + nb)


def translation_error(d_est, d_gt) -> float:
    """Angle between translation directions (radians)."""
    d_est = np.asarray(d_est, dtype=float)
    d_gt = np.asarray(d_gt, dtype=float)
    ne, ng = np.linalg.norm(d_est), np.linalg.norm(d_gt)
    if ne == 0 or ng == 0:
        raise ValueError("translation direction undefined for a zero vector")
    # atan2 form of acos(d_est.d_gt / |d_est||d_gt|); exact at 0 and pi
    return math.atan2(float(np.linalg.norm(np.cross(d_est, d_gt))), float(d_est @ d_gt))


def project_to_rotation(R, tol: float = 0.1) -> np.ndarray:
    """Nearest rotation matrix; rejects inputs further than ``tol`` (Frobenius) from SO(3)."""
    R = np.asarray(R, dtype=float)
    U, _, Vt = np.linalg.svd(R)
    Q = U @ np.diag([1.0, 1.0, np.linalg.det(U @ Vt)]) @ Vt
    if np.linalg.norm(Q - R) > tol:
        raise ValueError("matrix is too far from a rotation")
    return Q


def rotation_error(R_est, R_gt) -> float:
    """Geodesic angle between two rotations (radians)."""
    R_est = project_to_rotation(R_est)
    R_gt = project_to_rotation(R_gt)
    Q = R_est @ R_gt.T
    # same angle as acos((tr Q - 1) / 2) without its loss of precision near 0
    sin_part = 0.5 * math.sqrt((Q[2, 1] - Q[1, 2]) ** 2 + (Q[0, 2] - Q[2, 0]) ** 2 + (Q[1, 0] - Q[0, 1]) ** 2)
    return math.atan2(sin_part, (np.trace(Q) - 1.0) / 2.0)


# ---------------------------------------------------------------------------
# parameter sweeps

SWEEP_VARIABLES = ("noise", "translation_speed", "rotation_speed", "readout_ratio", "baseline")

DEFAULT_GRIDS = {
    "noise": (0.0, 2.5e-4, 5e-4, 7.5e-4, 1e-3, 1.25e-3, 1.5e-3, 1.75e-3, 2e-3),
    "translation_speed": (0.1, 0.2, 0.3, 0.4, 0.5),
    "rotation_speed": (0.2, 0.4, 0.6, 0.8, 1.0),
    "readout_ratio": (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0),
    "baseline": (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0),
}

CSV_HEADER = ["sweep_var", "value", "solver", "mean_eT_rad", "mean_eR_rad", "trials", "failures"]


@dataclass(frozen=True)
class SweepSpec:
    """One experiment: vary ``variable`` over ``values``, everything else fixed.

    ``rotation_speed`` is given in degrees per frame interval, ``baseline`` is
    the half baseline b.
    """

    variable: str
    values: tuple = ()
    trials: int = 300
    seed: int = 0
    intrinsics: CameraIntrinsics = CameraIntrinsics.square(900, 810.0)
    half_baseline: float = 0.5
    readout_ratio: float = 0.8
    translation_speed: float = 0.3
    rotation_speed: float = 0.4
    noise: float = 1e-3
    noise_units: str = "normalized"
    point_count: int = 100
    z_min: float = 4.0
    z_max: float = 12.0
    rotation_model: str = "exact"

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ValueError(f"unknown sweep variable {self.variable!r}")
        if not self.values:
            object.__setattr__(self, "values", tuple(DEFAULT_GRIDS[self.variable]))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.trials < 1:
            raise ValueError("trials must be >= 1")

    def at(self, value: float) -> "SweepSpec":
        """The fixed parameters with the swept one set to ``value``."""
        field_name = {"baseline": "half_baseline"}.get(self.variable, self.variable)
        return replace(self, **{field_name: value})


@dataclass
class SweepPoint:
    value: float
    errors: dict = field(default_factory=dict)  # solver -> (n, 2) array of (eT, eR)
    failures: dict = field(default_factory=dict)

    def mean(self, solver: str):
        e = self.errors[solver]
        if len(e) == 0:
            return float("nan"), float("nan")
        return float(np.mean(e[:, 0])), float(np.mean(e[:, 1]))


def random_motion(rng, translation_speed: float, rotation_speed_deg: float) -> MotionVelocity:
    """Random directions with the given magnitudes."""
    d = rng.standard_normal(3)
    w = rng.standard_normal(3)
    d *= translation_speed / np.linalg.norm(d)
    w *= np.deg2rad(rotation_speed_deg) / np.linalg.norm(w)
    return MotionVelocity(w, d)


def run_trial(p: SweepSpec, rng):
    """One repetition; returns ``{solver: (eT, eR) or None}``."""
    K = p.intrinsics
    rig = StereoRigConfig(p.half_baseline, p.readout_ratio, K.n_rows)
    motion = random_motion(rng, p.translation_speed, p.rotation_speed)
    scene = SceneConfig(point_count=p.point_count, z_min=p.z_min, z_max=p.z_max)
    pts = generate_scene(scene, K, rng)
    left, right = generate_correspondences(pts, rig, K, motion, p.rotation_model)
    left = add_noise(left, p.noise, K, p.noise_units, rng=rng)
    right = add_noise(right, p.noise, K, p.noise_units, rng=rng)
    R_gt = rodrigues(motion.w)
    out = {}
    try:
        est = solve_relative_pose(left, right, rig, K)
        out["RS"] = (translation_error(est.d_direction, motion.d), rotation_error(est.rotation, R_gt))
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        log.debug("RS trial failed: %s", exc)
        out["RS"] = None
    try:
        R, t, _ = solve_gs8pt(left, K)
        out["GS"] = (translation_error(t, motion.d), rotation_error(R, R_gt))
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        log.debug("GS trial failed: %s", exc)
        out["GS"] = None
    return out


def run_sweep(spec: SweepSpec, progress=None) -> list[SweepPoint]:
    """Run every grid value; trial streams are keyed by (seed, grid index, trial)."""
    points = []
    for gi, value in enumerate(spec.values):
        p = spec.at(value)
        sp = SweepPoint(value)
        collected = {"RS": [], "GS": []}
        fails = {"RS": 0, "GS": 0}
        for t in range(spec.trials):
            rng = np.random.default_rng([spec.seed, gi, t])
            try:
                res = run_trial(p, rng)
            except InsufficientSceneError:
                res = {"RS": None, "GS": None}
            for solver, r in res.items():
                if r is None:
                    fails[solver] += 1
                else:
                    collected[solver].append(r)
        for solver in collected:
            sp.errors[solver] = np.array(collected[solver]).reshape(-1, 2)
            sp.failures[solver] = fails[solver]
        points.append(sp)
        if progress:
            progress(spec.variable, value)
    return points


def sweep_rows(spec: SweepSpec, points: list[SweepPoint]):
    for sp in points:
        for solver in ("RS", "GS"):
            eT, eR = sp.mean(solver)
            yield [spec.variable, repr(sp.value), solver, repr(eT), repr(eR), str(spec.trials), str(sp.failures[solver])]


def sweep_csv(spec: SweepSpec, points: list[SweepPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in sweep_rows(spec, points):
        w.writerow(row)
    return buf.getvalue()


def read_sweep_csv(text: str) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    for r in rows:
        for k in ("value", "mean_eT_rad", "mean_eR_rad"):
            r[k] = float(r[k])
        r["trials"] = int(r["trials"])
        r["failures"] = int(r["failures"])
    return rows


def sweep_svg(spec: SweepSpec, points: list[SweepPoint], width: int = 640, height: int = 320) -> str:
    """Two side-by-side polyline panels (eT, eR) per solver.  Plain SVG, no styling contract."""
    colors = {"RS": "#c0392b", "GS": "#2c3e50"}
    xs = np.array([sp.value for sp in points])
    panel_w = width // 2
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">']
    for pi, label in enumerate(("e_T (rad)", "e_R (rad)")):
        x0 = pi * panel_w + 40
        vals = {s: np.array([sp.mean(s)[pi] for sp in points]) for s in colors}
        finite = np.concatenate([v[np.isfinite(v)] for v in vals.values()] + [np.zeros(1)])
        ymax = float(finite.max()) or 1.0
        xr = (xs.min(), xs.max() if xs.max() > xs.min() else xs.min() + 1)
        parts.append(
            f'<text x="{x0}" y="16" font-size="12">{spec.variable} vs {label}</text>'
            f'<rect x="{x0}" y="24" width="{panel_w - 60}" height="{height - 60}" fill="none" stroke="#999"/>'
        )
        for solver, v in vals.items():
            pts = []
            for x, y in zip(xs, v):
                if not np.isfinite(y):
                    continue
                px = x0 + (x - xr[0]) / (xr[1] - xr[0]) * (panel_w - 60)
                py = 24 + (height - 60) * (1 - y / ymax)
                pts.append(f"{px:.1f},{py:.1f}")
            parts.append(f'<polyline fill="none" stroke="{colors[solver]}" points="{" ".join(pts)}"/>')
        parts.append(f'<text x="{x0}" y="{height - 20}" font-size="10">max {ymax:.3g}</text>')
    parts.append('<text x="10" y="%d" font-size="10" fill="#c0392b">RS</text>' % (height - 6))
    parts.append('<text x="40" y="%d" font-size="10" fill="#2c3e50">GS</text>' % (height - 6))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
