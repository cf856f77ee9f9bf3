"""Linear 18-point relative pose solver for a stereo rolling-shutter rig.

The epipolar constraint of every temporal match is a polynomial in the six
motion unknowns.  Dropping its third-order part and treating each remaining
monomial as an independent unknown gives one linear equation per match in
the 19-entry lifted vector ``BASIS``.  Nine matches per side determine the
lifted vector up to scale.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from . import poly
from .essential import essential_poly, sampson_distance
from .geom import CameraIntrinsics, MotionVelocity, Side, StereoRigConfig, rodrigues, skew

log = logging.getLogger(__name__)

MIN_PER_SIDE = 9
DEGENERACY_RATIO = 10.0
# singular values below this fraction of the largest count as exact zeros
NULL_TOL = 1e-9

# lifted unknowns in the order d, the two baseline-coupled rotations, the
# nine d_i*w_j products (row-major in i), then the rotation quadratics
BASIS = (
    ("d1", "d2", "d3", "w1", "w3")
    + tuple(f"d{i}w{j}" for i in (1, 2, 3) for j in (1, 2, 3))
    + ("w1w1", "w1w2", "w1w3", "w2w3", "w3w3")
)
BASIS_EXPONENTS = [poly.monomial_from_name(n) for n in BASIS]
_COL = {n: i for i, n in enumerate(BASIS)}

# third-order monomials left out of the linear system
S_TERMS = tuple(
    sorted(
    poly.monomial_name((i, j, k, p, q, r))
    for i, j, k in [(1, 0, 0), (0, 1, 0), (0, 0, 1)]
    for p, q, r in [(2, 0, 0), (0, 2, 0), (0, 0, 2), (1, 1, 0), (1, 0, 1), (0, 1, 1)]
    # d_c * w_c^2 never occurs: [[w]x d]x [w]x = w (w x d)^T
    if not ((i, j, k) == (p // 2, q // 2, r // 2) and 2 in (p, q, r))
    )
)


class InsufficientDataError(ValueError):
    pass


class DegenerateConfigurationError(RuntimeError):
    pass


class ExtractionError(RuntimeError):
    pass


@dataclass(frozen=True)
class Correspondences:
    """Temporal matches on one side: ``uv_a`` in the first frame, ``uv_b`` in the second.

    Pixel coordinates ``(n, 2)`` as ``(row, column)``.
    """

    side: Side
    uv_a: np.ndarray
    uv_b: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.uv_a, dtype=float))
        b = np.atleast_2d(np.asarray(self.uv_b, dtype=float))
        if a.shape != b.shape or a.shape[-1] != 2:
            raise ValueError("uv_a and uv_b must both be (n, 2)")
        object.__setattr__(self, "uv_a", a)
        object.__setattr__(self, "uv_b", b)

    def __len__(self):
        return len(self.uv_a)

    def subset(self, idx) -> "Correspondences":
        return Correspondences(self.side, self.uv_a[idx], self.uv_b[idx])


CORR_CSV_HEADER = ["side", "u_a", "v_a", "u_b", "v_b"]


def correspondences_csv(left: Correspondences, right: Correspondences) -> str:
    """``side,u_a,v_a,u_b,v_b`` rows, left side first."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CORR_CSV_HEADER)
    for c in (left, right):
        for a, b in zip(c.uv_a, c.uv_b):
            w.writerow([c.side.value, repr(float(a[0])), repr(float(a[1])), repr(float(b[0])), repr(float(b[1]))])
    return buf.getvalue()


def parse_correspondences_csv(text: str):
    """Inverse of :func:`correspondences_csv`; returns ``(left, right)``.

    Raises ``ValueError`` naming the offending line.
    """
    rows = {Side.LEFT: [], Side.RIGHT: []}
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != CORR_CSV_HEADER:
        raise ValueError(f"line 1: expected header {','.join(CORR_CSV_HEADER)}")
    for n, rec in enumerate(reader, start=2):
        if not rec or not "".join(rec).strip():
            continue
        if len(rec) != 5:
            raise ValueError(f"line {n}: expected 5 fields, got {len(rec)}")
        try:
            side = Side(rec[0].strip())
            vals = [float(x) for x in rec[1:]]
        except ValueError:
            raise ValueError(f"line {n}: side must be L or R followed by four numbers") from None
        if not all(np.isfinite(vals)):
            raise ValueError(f"line {n}: non-finite coordinate")
        rows[side].append(vals)
    out = []
    for side in (Side.LEFT, Side.RIGHT):
        a = np.array(rows[side], dtype=float).reshape(-1, 4)
        out.append(Correspondences(side, a[:, :2].reshape(-1, 2), a[:, 2:].reshape(-1, 2)))
    return out[0], out[1]


@dataclass(frozen=True)
class NormalizedCorrespondences:
    """K^-1-normalized coordinates plus the raw scanline indices used for timing."""

    side: Side
    x_a: np.ndarray
    x_b: np.ndarray
    u_a: np.ndarray
    u_b: np.ndarray

    def __len__(self):
        return len(self.x_a)


@dataclass
class MotionEstimate:
    w: np.ndarray
    d_direction: np.ndarray
    d_scale_status: str
    sigma_smallest: float = float("nan")
    sigma_second: float = float("nan")
    d_metric: np.ndarray | None = None
    extraction_status: str = "ok"
    inliers: dict = field(default_factory=dict)

    @property
    def rotation(self) -> np.ndarray:
        return rodrigues(self.w)

    @property
    def motion(self) -> MotionVelocity:
        d = self.d_metric if self.d_metric is not None else self.d_direction
        return MotionVelocity(self.w, d)


def lift(motion: MotionVelocity) -> np.ndarray:
    """Evaluate the 19 retained monomials at a motion."""
    return np.array([poly.evaluate_monomial(e, motion.d, motion.w) for e in BASIS_EXPONENTS])


def normalize_correspondences(K: CameraIntrinsics, corrs: Correspondences) -> NormalizedCorrespondences:
    if np.linalg.det(K.matrix) == 0:
        raise ValueError("singular intrinsics")
    return NormalizedCorrespondences(
        corrs.side,
        K.normalize(corrs.uv_a),
        K.normalize(corrs.uv_b),
        corrs.uv_a[:, 0].copy(),
        corrs.uv_b[:, 0].copy(),
    )


def residual_poly(nc: NormalizedCorrespondences, rig: StereoRigConfig) -> poly.Poly:
    """Epipolar residual of every match as one polynomial with array coefficients."""
    E = essential_poly(rig, nc.side, nc.u_a, nc.u_b)
    n = len(nc)
    xa = [nc.x_a[:, 0], nc.x_a[:, 1], np.ones(n)]
    xb = [nc.x_b[:, 0], nc.x_b[:, 1], np.ones(n)]
    return poly.bilinear(xb, E, xa)


def design_rows(nc: NormalizedCorrespondences, rig: StereoRigConfig) -> np.ndarray:
    """``(n, 19)`` coefficients of the truncated residual in ``BASIS`` order."""
    r = residual_poly(nc, rig)
    n = len(nc)
    out = np.zeros((n, len(BASIS)))
    for col, e in enumerate(BASIS_EXPONENTS):
        out[:, col] = np.broadcast_to(r.coefficient(e), (n,))
    return out


def build_design_row(x_a, x_b, u_a: float, u_b: float, side: Side, rig: StereoRigConfig) -> np.ndarray:
    nc = NormalizedCorrespondences(
        side, np.atleast_2d(x_a), np.atleast_2d(x_b), np.atleast_1d(float(u_a)), np.atleast_1d(float(u_b))
    )
    return design_rows(nc, rig)[0]


def assemble_design_matrix(left: Correspondences, right: Correspondences, rig, K) -> np.ndarray:
    """Stack the left-side rows above the right-side rows."""
    if len(left) < MIN_PER_SIDE or len(right) < MIN_PER_SIDE:
        raise InsufficientDataError(
            f"need ≥{MIN_PER_SIDE} per side, got {len(left)} left and {len(right)} right"
        )
    return np.vstack(
        [
            design_rows(normalize_correspondences(K, left), rig),
            design_rows(normalize_correspondences(K, right), rig),
        ]
    )


def solve_linear(A: np.ndarray, degeneracy_ratio: float = DEGENERACY_RATIO, null_tol: float = NULL_TOL):
    """Right singular vector of the smallest singular value.

    Returns ``(X, (sigma_min, sigma_second))``.  The sign is fixed so the
    largest-magnitude translation entry is positive.  The system is declared
    degenerate when the two smallest singular values are within
    ``degeneracy_ratio`` of each other while both sit at the numerical zero
    level (``null_tol`` relative to the largest), i.e. the null space of
    noise-free data is more than one-dimensional.  Noisy data never trips the
    check; the ratio is reported either way.
    """
    A = np.asarray(A, dtype=float)
    if A.shape[0] < 2 * MIN_PER_SIDE:
        raise InsufficientDataError(f"need ≥{2 * MIN_PER_SIDE} rows, got {A.shape[0]}")
    _, S, Vt = np.linalg.svd(A, full_matrices=A.shape[0] < A.shape[1])
    X = Vt[-1]
    if A.shape[0] < A.shape[1]:
        # 18 rows: the 19th singular value is structurally zero
        sig_min, sig_next = 0.0, S[-1]
    else:
        sig_min, sig_next = S[-1], S[-2]
    diag = (float(sig_min), float(sig_next))
    if sig_next <= null_tol * S[0] and sig_next < degeneracy_ratio * max(sig_min, null_tol * S[0]):
        raise DegenerateConfigurationError(
            f"null space is not one-dimensional (sigma {sig_next:.3g} vs {sig_min:.3g})"
        )
    i = int(np.argmax(np.abs(X[:3])))
    if X[i] < 0:
        X = -X
    return X, diag


def _quadratic_block(w):
    w1, w2, w3 = w
    return np.array([w1 * w1, w1 * w2, w1 * w3, w2 * w3, w3 * w3])


def extract_motion(X, scale_tol: float = 0.5) -> MotionEstimate:
    """Recover rotation and translation from a lifted vector known up to scale.

    The product block ``d_i w_j`` is rank one, so ``w`` follows from it and
    the translation block without knowing the scale.  The scale (and the sign
    of the vector) then comes from the baseline-coupled entries ``w1, w3``
    and the rotation quadratics, which are ``s*w`` and ``s*w*w``.
    """
    X = np.asarray(X, dtype=float)
    if X.shape != (len(BASIS),):
        raise ValueError(f"lifted vector must have {len(BASIS)} entries")
    norm = np.linalg.norm(X)
    if norm == 0:
        raise ExtractionError("zero lifted vector")
    X = X / norm
    Xd = X[0:3]
    if np.linalg.norm(Xd) < 1e-9:
        raise ExtractionError("translation block vanishes; direction undefined")
    XE = X[5:14].reshape(3, 3)
    Xlin = X[[3, 4]]
    Xquad = X[14:19]

    w = XE.T @ Xd / (Xd @ Xd)
    # alternate between the overall scale and w, using every block
    s = 0.0
    for _ in range(3):
        g = np.concatenate([w[[0, 2]], _quadratic_block(w)])
        gg = g @ g
        s = float(g @ np.concatenate([Xlin, Xquad]) / gg) if gg > 0 else 0.0
        w = _refine_rotation(Xd, XE, Xlin, s)

    status = "ok"
    sign = 1.0
    if s < 0:
        sign, s = -1.0, -s
    if s == 0:
        status = "unreliable"
    d_dir = sign * Xd / np.linalg.norm(Xd)

    model = s * np.concatenate([w[[0, 2]], _quadratic_block(w)])
    resid = np.linalg.norm(sign * np.concatenate([Xlin, Xquad]) - model)
    ref = np.linalg.norm(model)
    metric = s > 0 and resid <= scale_tol * ref
    return MotionEstimate(
        w=w,
        d_direction=d_dir,
        d_scale_status="metric" if metric else "directionOnly",
        d_metric=sign * Xd / s if metric else None,
        extraction_status=status,
    )


def _refine_rotation(Xd, XE, Xlin, s):
    """Least-squares w from ``XE = Xd w^T`` and ``Xlin = s (w1, w3)``."""
    rows = [np.kron(Xd[:, None], np.eye(3))]  # vec(XE) row-major = Xd_i * w_j
    rhs = [XE.reshape(-1)]
    if s != 0:
        L = np.zeros((2, 3))
        L[0, 0] = s
        L[1, 2] = s
        rows.append(L)
        rhs.append(Xlin)
    M = np.vstack(rows)
    return np.linalg.lstsq(M, np.concatenate(rhs), rcond=None)[0]


def triangulate_depths(R, t, x_a, x_b):
    """Depths ``(z_a, z_b)`` of matches under ``z_b x_b = z_a R x_a + t``.

    ``R`` and ``t`` may be per-match stacks ``(n, 3, 3)`` / ``(n, 3)``.
    """
    n = len(x_a)
    xa = np.column_stack([x_a, np.ones(n)])
    xb = np.column_stack([x_b, np.ones(n)])
    R = np.broadcast_to(R, (n, 3, 3))
    Rxa = np.einsum("nij,nj->ni", R, xa)
    t = np.broadcast_to(t, (n, 3))
    # normal equations of [Rxa, -xb] [z_a, z_b]^T = -t
    m11 = np.einsum("ni,ni->n", Rxa, Rxa)
    m12 = -np.einsum("ni,ni->n", Rxa, xb)
    m22 = np.einsum("ni,ni->n", xb, xb)
    r1 = -np.einsum("ni,ni->n", Rxa, t)
    r2 = np.einsum("ni,ni->n", xb, t)
    det = m11 * m22 - m12 * m12
    with np.errstate(divide="ignore", invalid="ignore"):
        za = (m22 * r1 - m12 * r2) / det
        zb = (m11 * r2 - m12 * r1) / det
    return za, zb


def row_pair_poses(rig, nc: NormalizedCorrespondences, motion: MotionVelocity):
    """Per-match relative pose ``(R_ab, T_ab)`` between the observing scanlines."""
    k_a = rig.row_rate * nc.u_a
    k_b = 1.0 + rig.row_rate * nc.u_b
    a = (k_b - k_a)[:, None, None]
    R = np.eye(3) + a * skew(motion.w)
    b = nc.side.sign * rig.baseline
    d_a = k_a[:, None] * motion.d + b
    d_b = k_b[:, None] * motion.d + b
    T = d_b - np.einsum("nij,nj->ni", R, d_a)
    return R, T


def cheirality_count(rig, sides, motion: MotionVelocity) -> int:
    """Number of matches triangulating in front of both scanlines."""
    total = 0
    for nc in sides:
        R, T = row_pair_poses(rig, nc, motion)
        za, zb = triangulate_depths(R, T, nc.x_a, nc.x_b)
        total += int(np.sum((za > 0) & (zb > 0)))
    return total


def solve_relative_pose(left: Correspondences, right: Correspondences, rig, K) -> MotionEstimate:
    """Normalize, build the lifted system, take its null vector and extract the motion.

    The translation sign is settled by cheirality over all matches; when it
    overrides the sign implied by the lifted entries the metric scale is
    dropped.
    """
    A = assemble_design_matrix(left, right, rig, K)
    X, (s_min, s_next) = solve_linear(A)
    est = extract_motion(X)
    est.sigma_smallest, est.sigma_second = s_min, s_next
    sides = [normalize_correspondences(K, left), normalize_correspondences(K, right)]
    d = est.d_metric if est.d_metric is not None else est.d_direction
    n_pos = cheirality_count(rig, sides, MotionVelocity(est.w, d))
    n_neg = cheirality_count(rig, sides, MotionVelocity(est.w, -d))
    if n_neg > n_pos:
        log.debug("cheirality flips translation (%d vs %d)", n_neg, n_pos)
        est.d_direction = -est.d_direction
        est.d_metric = None
        est.d_scale_status = "directionOnly"
    return est


# ---------------------------------------------------------------------------
# global-shutter baseline


def _hartley_normalization(x):
    c = x.mean(axis=0)
    s = np.sqrt(2.0) / np.mean(np.linalg.norm(x - c, axis=1))
    return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])


def essential_8pt(x_a, x_b):
    """Normalized 8-point estimate of E with ``x_b^T E x_a = 0``.

    Returns ``(E, sigma_ratio)``; the ratio of the two smallest singular values
    of the data matrix flags degenerate (e.g. planar) configurations.
    """
    Ta = _hartley_normalization(x_a)
    Tb = _hartley_normalization(x_b)
    xa = np.column_stack([x_a, np.ones(len(x_a))]) @ Ta.T
    xb = np.column_stack([x_b, np.ones(len(x_b))]) @ Tb.T
    M = np.einsum("ni,nj->nij", xb, xa).reshape(len(xa), 9)
    _, S, Vt = np.linalg.svd(M, full_matrices=len(xa) < 9)
    E = Vt[-1].reshape(3, 3)
    ratio = S[7] / S[8] if len(S) > 8 and S[8] > 0 else np.inf
    # equal singular values only hold in the original coordinates, so
    # project onto the essential manifold after undoing the normalization
    E = Tb.T @ E @ Ta
    U, _, Vt2 = np.linalg.svd(E)
    E = U @ np.diag([1.0, 1.0, 0.0]) @ Vt2
    return E / np.linalg.norm(E), ratio


def decompose_essential(E):
    U, _, Vt = np.linalg.svd(E)
    if np.linalg.det(U) < 0:
        U = -U
    if np.linalg.det(Vt) < 0:
        Vt = -Vt
    W = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    t = U[:, 2]
    R1 = U @ W @ Vt
    R2 = U @ W.T @ Vt
    return [(R1, t), (R1, -t), (R2, t), (R2, -t)]


def solve_gs8pt(corrs: Correspondences, K: CameraIntrinsics):
    """Classical global-shutter relative pose from one side's temporal matches.

    Returns ``(R, t, diagnostics)`` with ``x_b ~ R x_a + t`` and unit ``t``.
    """
    if len(corrs) < 8:
        raise InsufficientDataError(f"need ≥8 matches, got {len(corrs)}")
    x_a = K.normalize(corrs.uv_a)
    x_b = K.normalize(corrs.uv_b)
    E, ratio = essential_8pt(x_a, x_b)
    best, best_count = None, -1
    for R, t in decompose_essential(E):
        za, zb = triangulate_depths(R, t, x_a, x_b)
        count = int(np.sum((za > 0) & (zb > 0)))
        if count > best_count:
            best, best_count = (R, t), count
    if best_count <= 0:
        raise DegenerateConfigurationError("no decomposition puts points in front of both views")
    R, t = best
    return R, t / np.linalg.norm(t), {"sigma_ratio": float(ratio), "cheirality": best_count}


# ---------------------------------------------------------------------------
# robust estimation


def side_sampson(rig, nc: NormalizedCorrespondences, motion: MotionVelocity) -> np.ndarray:
    """Squared Sampson distance of each match to its own row-pair truncated E."""
    from .essential import essential_expanded

    E = essential_expanded(rig, motion, nc.side, nc.u_a, nc.u_b, include_s_terms=False).matrix
    return sampson_distance(E, nc.x_a, nc.x_b)


@dataclass
class RansacResult:
    estimate: MotionEstimate
    inliers_left: np.ndarray
    inliers_right: np.ndarray
    iterations: int


def ransac_solve(
    left: Correspondences,
    right: Correspondences,
    rig,
    K: CameraIntrinsics,
    threshold: float = 1.0,
    max_iters: int = 5000,
    seed: int = 0,
    confidence: float = 0.999,
) -> RansacResult:
    """RANSAC over 9+9 minimal samples scored by per-side Sampson distance.

    ``threshold`` is in pixels.  Every iteration draws from its own random
    stream derived from ``(seed, iteration)``, so the result does not depend
    on evaluation order; ties go to the lowest iteration.  The best consensus
    set is re-solved with all its matches.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    if len(left) < MIN_PER_SIDE or len(right) < MIN_PER_SIDE:
        raise InsufficientDataError(
            f"need ≥{MIN_PER_SIDE} per side, got {len(left)} left and {len(right)} right"
        )
    nl, nr = normalize_correspondences(K, left), normalize_correspondences(K, right)
    rows_l, rows_r = design_rows(nl, rig), design_rows(nr, rig)
    f = np.sqrt(K.fx * K.fy)
    thr2 = (threshold / f) ** 2

    best_count, best_masks, best_iter = -1, None, -1
    needed = max_iters
    it = 0
    while it < min(needed, max_iters):
        rng = np.random.default_rng([seed, it])
        il = rng.choice(len(left), MIN_PER_SIDE, replace=False)
        ir = rng.choice(len(right), MIN_PER_SIDE, replace=False)
        it += 1
        try:
            X, _ = solve_linear(np.vstack([rows_l[il], rows_r[ir]]))
            est = extract_motion(X)
        except (DegenerateConfigurationError, ExtractionError):
            continue
        m = MotionVelocity(est.w, est.d_metric if est.d_metric is not None else est.d_direction)
        ml = side_sampson(rig, nl, m) <= thr2
        mr = side_sampson(rig, nr, m) <= thr2
        if ml.sum() < MIN_PER_SIDE or mr.sum() < MIN_PER_SIDE:
            continue
        count = int(ml.sum() + mr.sum())
        if count > best_count:
            best_count, best_masks, best_iter = count, (ml, mr), it - 1
            eps = min(ml.mean(), mr.mean())
            p_good = eps ** (2 * MIN_PER_SIDE)
            if p_good >= 1.0:
                needed = it
            elif p_good > 0:
                needed = int(np.ceil(np.log(1 - confidence) / np.log1p(-p_good)))
    if best_masks is None:
        raise DegenerateConfigurationError("no model reached 9+9 inliers")
    ml, mr = best_masks
    est = solve_relative_pose(left.subset(ml), right.subset(mr), rig, K)
    est.inliers = {"left": int(ml.sum()), "right": int(mr.sum()), "best_iteration": best_iter}
    log.debug("ransac: %d iterations, %d+%d inliers", it, ml.sum(), mr.sum())
    return RansacResult(est, ml, mr, it)
