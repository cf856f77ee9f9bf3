"""Semi-global matching on census costs.

Images are ``(rows, cols)`` uint8 arrays; disparity runs along columns with
the right-image match of left pixel ``x`` at ``x - d``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

INVALID = -1.0
CENSUS_BITS = 24

PATHS_8 = ((0, 1), (0, -1), (1, 0), (-1, 0), (1, 1), (1, -1), (-1, 1), (-1, -1))
PATHS_4 = PATHS_8[:4]


@dataclass(frozen=True)
class SGMParams:
    p1: int = 10
    p2: int = 120
    d_max: int = 128
    paths: int = 8
    lr_tolerance: float = 1.0

    def __post_init__(self):
        if not (0 < self.p1 < self.p2):
            raise ValueError("need 0 < p1 < p2")
        if self.d_max < 1:
            raise ValueError("d_max must be >= 1")
        if self.paths not in (2, 4, 8):
            raise ValueError("paths must be 2, 4 or 8")


def census_transform(img: np.ndarray, window: int = 5):
    """Neighbour-less-than-centre bit masks.

    Returns ``(codes, valid)``: ``uint32`` codes with ``window**2 - 1`` bits in
    raster order of the neighbours, and a mask that is false on the border
    band where the window does not fit.
    """
    img = np.asarray(img)
    if window % 2 != 1 or window < 3:
        raise ValueError("window must be odd and >= 3")
    r = window // 2
    H, W = img.shape
    if H < window or W < window:
        raise ValueError(f"image {H}x{W} smaller than the {window}x{window} census window")
    f = img.astype(np.int16)
    codes = np.zeros((H, W), dtype=np.uint32)
    centre = f[r : H - r, r : W - r]
    bit = 0
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if dy == 0 and dx == 0:
                continue
            nb = f[r + dy : H - r + dy, r + dx : W - r + dx]
            codes[r : H - r, r : W - r] |= (nb < centre).astype(np.uint32) << np.uint32(bit)
            bit += 1
    valid = np.zeros((H, W), dtype=bool)
    valid[r : H - r, r : W - r] = True
    return codes, valid


def _popcount32(x: np.ndarray) -> np.ndarray:
    x = x - ((x >> 1) & 0x55555555)
    x = (x & 0x33333333) + ((x >> 2) & 0x33333333)
    x = (x + (x >> 4)) & 0x0F0F0F0F
    return ((x * 0x01010101) & 0xFFFFFFFF) >> 24


def cost_volume(left: np.ndarray, right: np.ndarray, d_max: int, window: int = 5) -> np.ndarray:
    """Hamming distance of census codes, ``(rows, cols, d_max + 1)`` uint16.

    Lookups that fall off the right image or onto an invalid census pixel
    get the maximum cost.
    """
    left = np.asarray(left)
    right = np.asarray(right)
    if left.shape != right.shape:
        raise ValueError(f"image sizes differ: {left.shape} vs {right.shape}")
    cl, vl = census_transform(left, window)
    cr, vr = census_transform(right, window)
    cmax = window * window - 1
    H, W = left.shape
    vol = np.full((H, W, d_max + 1), cmax, dtype=np.uint16)
    for d in range(d_max + 1):
        if d >= W:
            break
        x = (cl[:, d:] ^ cr[:, : W - d]).astype(np.uint64)
        c = _popcount32(x).astype(np.uint16)
        ok = vl[:, d:] & vr[:, : W - d]
        vol[:, d:, d] = np.where(ok, c, cmax)
    return vol


@njit(cache=True)
def _aggregate_path(C, dy, dx, p1, p2, out):
    H, W, D = C.shape
    prev = np.zeros((W, D), dtype=np.int32)
    cur = np.zeros((W, D), dtype=np.int32)
    prev_min = np.zeros(W, dtype=np.int32)
    cur_min = np.zeros(W, dtype=np.int32)
    y0 = 0 if dy >= 0 else H - 1
    ystep = 1 if dy >= 0 else -1
    x0 = 0 if dx >= 0 else W - 1
    xstep = 1 if dx >= 0 else -1
    for iy in range(H):
        y = y0 + ystep * iy
        for ix in range(W):
            x = x0 + xstep * ix
            # predecessor along the path
            if dy == 0:
                px = x - dx
                has = 0 <= px < W and ix > 0
                src = cur
            else:
                px = x - dx
                has = iy > 0 and 0 <= px < W
                src = prev
            if not has:
                m = 1 << 30
                for d in range(D):
                    v = np.int32(C[y, x, d])
                    cur[x, d] = v
                    if v < m:
                        m = v
                cur_min[x] = m
            else:
                pm = prev_min[px] if dy != 0 else cur_min[px]
                m = 1 << 30
                for d in range(D):
                    best = src[px, d]
                    if d > 0:
                        t = src[px, d - 1] + p1
                        if t < best:
                            best = t
                    if d < D - 1:
                        t = src[px, d + 1] + p1
                        if t < best:
                            best = t
                    t = pm + p2
                    if t < best:
                        best = t
                    v = np.int32(C[y, x, d]) + best - pm
                    cur[x, d] = v
                    if v < m:
                        m = v
                cur_min[x] = m
            for d in range(D):
                out[y, x, d] += cur[x, d]
        if dy != 0:
            for x in range(W):
                prev_min[x] = cur_min[x]
                for d in range(D):
                    prev[x, d] = cur[x, d]


def path_cost(volume: np.ndarray, direction, p1: int, p2: int) -> np.ndarray:
    """Single-direction aggregation ``L_r`` (int32)."""
    out = np.zeros(volume.shape, dtype=np.int32)
    _aggregate_path(np.ascontiguousarray(volume), int(direction[0]), int(direction[1]), int(p1), int(p2), out)
    return out


def aggregate_costs(volume: np.ndarray, p1: int = 10, p2: int = 120, paths: int = 8) -> np.ndarray:
    """Sum of the SGM path recurrences over 2 (horizontal), 4 or 8 directions."""
    if not (0 < p1 < p2):
        raise ValueError("need 0 < p1 < p2")
    dirs = {2: PATHS_4[:2], 4: PATHS_4, 8: PATHS_8}.get(paths)
    if dirs is None:
        raise ValueError("paths must be 2, 4 or 8")
    vol = np.ascontiguousarray(volume)
    out = np.zeros(vol.shape, dtype=np.int32)
    # each direction adds into out; integer sums are order-independent
    for dy, dx in dirs:
        _aggregate_path(vol, dy, dx, int(p1), int(p2), out)
    return out


def _subpixel(S, d):
    """Parabola vertex offset through (d-1, d, d+1); zero at the range ends."""
    H, W, D = S.shape
    yy, xx = np.indices((H, W))
    inner = (d > 0) & (d < D - 1)
    dm = np.clip(d - 1, 0, D - 1)
    dp = np.clip(d + 1, 0, D - 1)
    c0 = S[yy, xx, d].astype(float)
    cm = S[yy, xx, dm].astype(float)
    cp = S[yy, xx, dp].astype(float)
    den = cm - 2 * c0 + cp
    with np.errstate(divide="ignore", invalid="ignore"):
        off = np.where(inner & (den > 0), 0.5 * (cm - cp) / den, 0.0)
    return np.clip(off, -0.5, 0.5)


def disparity_wta(aggregated: np.ndarray, lr_tolerance: float = 1.0, valid: np.ndarray | None = None) -> np.ndarray:
    """Winner-take-all disparity with parabola refinement and a left-right check.

    The right-view disparity is read from the same volume along
    ``S[y, x + d, d]``.  Pixels failing the check, or outside ``valid``,
    are ``INVALID``.
    """
    S = aggregated
    H, W, D = S.shape
    dl = np.argmin(S, axis=2)
    # right view: cost of right pixel xr at disparity d is S[y, xr + d, d]
    big = np.iinfo(np.int64).max
    R = np.full((H, W, D), big, dtype=np.int64)
    for d in range(D):
        if d < W:
            R[:, : W - d, d] = S[:, d:, d]
    dr = np.argmin(R, axis=2)
    xs = np.arange(W)[None, :]
    xr = xs - dl
    inside = xr >= 0
    dr_at = np.take_along_axis(dr, np.clip(xr, 0, W - 1), axis=1)
    ok = inside & (np.abs(dl - dr_at) <= lr_tolerance)
    if valid is not None:
        ok &= valid
    disp = dl + _subpixel(S, dl)
    return np.where(ok, disp, INVALID)


def compute_disparity(left: np.ndarray, right: np.ndarray, params: SGMParams = SGMParams(), window: int = 5):
    """Full pipeline: census, cost volume, aggregation, WTA with LR check.

    Columns ``< d_max`` cannot see their full disparity range in the right
    image and are reported ``INVALID``.
    """
    vol = cost_volume(left, right, params.d_max, window)
    S = aggregate_costs(vol, params.p1, params.p2, params.paths)
    _, valid = census_transform(left, window)
    valid = valid.copy()
    valid[:, : params.d_max] = False
    return disparity_wta(S, params.lr_tolerance, valid)


def disparity_to_depth(disp: np.ndarray, focal: float, half_baseline: float) -> np.ndarray:
    """``depth = focal * 2b / disparity``; non-positive or invalid disparity maps to ``INVALID``.

    ``focal`` is the column focal length (the axis disparity is measured on).
    """
    disp = np.asarray(disp, dtype=float)
    ok = disp > 0
    with np.errstate(divide="ignore"):
        return np.where(ok, focal * 2.0 * half_baseline / np.where(ok, disp, 1.0), INVALID)
